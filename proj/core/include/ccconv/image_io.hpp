#pragma once

#include <string>

#include "ccconv/tensor.hpp"

namespace ccconv {

// PGM (P2/P5) and PPM (P3/P6) readers/writers. Pixels map to floats in
// [0,1]; tensors are [1,C,H,W] with C=1 for PGM, 3 for PPM.
Tensor<float> load_image(const std::string& path);

// Writes a single-channel [H,W] or [1,1,H,W] map as binary PGM (P5),
// clamping values to [0,1].
void save_pgm(const std::string& path, const Tensor<float>& image);

// Min-max normalizes before writing; use for kernel visualizations.
void save_pgm_normalized(const std::string& path, const Tensor<float>& image);

}  // namespace ccconv
