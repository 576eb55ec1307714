#include "ccconv/image_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ccconv/errors.hpp"

namespace ccconv {

namespace {

// Skips whitespace and '#' comment lines, then reads one integer token.
int next_int(std::istream& is) {
  while (true) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v;
  if (!(is >> v)) throw IoError("image parse error: expected integer");
  return v;
}

}  // namespace

Tensor<float> load_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + path);
  char p, kind;
  is.get(p);
  is.get(kind);
  if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
    throw IoError("unsupported image format in " + path + " (PGM P2/P5 or PPM P3/P6 only)");
  const bool color = kind == '3' || kind == '6';
  const bool binary = kind == '5' || kind == '6';
  const std::int64_t w = next_int(is);
  const std::int64_t h = next_int(is);
  const int maxval = next_int(is);
  if (maxval <= 0 || maxval > 65535) throw IoError("bad maxval in " + path);
  const std::int64_t channels = color ? 3 : 1;

  Tensor<float> img = Tensor<float>::zeros({1, channels, h, w});
  auto px = img.data_mut();
  const std::int64_t count = h * w * channels;
  if (binary) {
    is.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<std::size_t>(count * bytes));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw IoError("truncated image: " + path);
    for (std::int64_t i = 0; i < count; ++i) {
      int v = bytes == 1 ? buf[static_cast<std::size_t>(i)]
                         : (buf[static_cast<std::size_t>(2 * i)] << 8) |
                               buf[static_cast<std::size_t>(2 * i + 1)];
      // interleaved -> planar
      const std::int64_t pixel = i / channels, ch = i % channels;
      px[ch * h * w + pixel] = static_cast<float>(v) / static_cast<float>(maxval);
    }
  } else {
    for (std::int64_t i = 0; i < count; ++i) {
      const int v = next_int(is);
      const std::int64_t pixel = i / channels, ch = i % channels;
      px[ch * h * w + pixel] = static_cast<float>(v) / static_cast<float>(maxval);
    }
  }
  return img;
}

namespace {

void write_pgm_bytes(const std::string& path, const float* data, std::int64_t h, std::int64_t w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      float v = std::clamp(data[i * w + j], 0.0f, 1.0f);
      row[static_cast<std::size_t>(j)] = static_cast<unsigned char>(v * 255.0f + 0.5f);
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace

void save_pgm(const std::string& path, const Tensor<float>& image) {
  const std::size_t rank = image.ndim();
  if (rank != 2 && !(rank == 4 && image.dim(0) == 1 && image.dim(1) == 1))
    throw ShapeError("save_pgm: expected [H,W] or [1,1,H,W], got " + shape_str(image.shape()));
  const std::int64_t h = image.dim(rank - 2), w = image.dim(rank - 1);
  write_pgm_bytes(path, image.data().data(), h, w);
}

void save_pgm_normalized(const std::string& path, const Tensor<float>& image) {
  const std::size_t rank = image.ndim();
  const std::int64_t h = image.dim(rank - 2), w = image.dim(rank - 1);
  auto p = image.data();
  float lo = p[0], hi = p[0];
  for (auto v : p) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float range = std::max(hi - lo, 1e-12f);
  std::vector<float> norm(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) norm[i] = (p[i] - lo) / range;
  write_pgm_bytes(path, norm.data(), h, w);
}

}  // namespace ccconv
