#include "ccconv/serialize.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ccconv/errors.hpp"

namespace ccconv {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("cct1: truncated stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("cct1: truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void write_cct1(std::ostream& os, const Shape& shape, std::span<const float> data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw IoError("cct1: shape/payload mismatch");
  os.write("CCT1", 4);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put_u64(os, static_cast<std::uint64_t>(d));
  for (float v : data) put_f32(os, v);
}

std::pair<Shape, std::vector<float>> read_cct1(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CCT1", 4) != 0) throw IoError("cct1: bad magic");
  std::uint32_t version = get_u32(is);
  if (version != 1) throw IoError("cct1: unsupported version " + std::to_string(version));
  std::uint32_t ndims = get_u32(is);
  if (ndims > 16) throw IoError("cct1: implausible rank " + std::to_string(ndims));
  Shape shape(ndims);
  for (auto& d : shape) d = static_cast<std::int64_t>(get_u64(is));
  std::int64_t n = shape_numel(shape);
  std::vector<float> data(static_cast<std::size_t>(n));
  for (auto& v : data) v = get_f32(is);
  return {shape, std::move(data)};
}

void save_cct1(const std::string& path, const Shape& shape, std::span<const float> data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  write_cct1(os, shape, data);
  if (!os) throw IoError("write failed: " + path);
}

std::pair<Shape, std::vector<float>> load_cct1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  return read_cct1(is);
}

void save_cckp(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write("CCKP", 4);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_cct1(os, t.shape, t.data);
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<NamedTensor> load_cckp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CCKP", 4) != 0) throw IoError("cckp: bad magic in " + path);
  std::uint32_t version = get_u32(is);
  if (version != 1) throw IoError("cckp: unsupported version " + std::to_string(version));
  std::uint32_t count = get_u32(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = get_u32(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw IoError("cckp: truncated name in " + path);
    auto [shape, data] = read_cct1(is);
    out.push_back({std::move(name), std::move(shape), std::move(data)});
  }
  return out;
}

}  // namespace ccconv
