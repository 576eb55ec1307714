#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ccconv/tensor.hpp"

namespace ccconv {

// CCT1 container: magic "CCT1", u32 version=1, u32 ndims, ndims x u64 dims,
// f32 payload. Everything little-endian.
void write_cct1(std::ostream& os, const Shape& shape, std::span<const float> data);
std::pair<Shape, std::vector<float>> read_cct1(std::istream& is);

void save_cct1(const std::string& path, const Shape& shape, std::span<const float> data);
std::pair<Shape, std::vector<float>> load_cct1(const std::string& path);

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  if constexpr (std::is_same_v<T, float>) {
    save_cct1(path, t.shape(), t.data());
  } else {
    std::vector<float> tmp(t.data().begin(), t.data().end());
    save_cct1(path, t.shape(), tmp);
  }
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  auto [shape, data] = load_cct1(path);
  std::vector<T> buf(data.begin(), data.end());
  return Tensor<T>::from_data(shape, std::move(buf));
}

// CCKP checkpoint: magic "CCKP", u32 version=1, u32 tensor count, then per
// tensor {u32 name length, UTF-8 name, embedded CCT1 record}.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

void save_cckp(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_cckp(const std::string& path);

}  // namespace ccconv
