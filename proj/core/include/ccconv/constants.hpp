#pragma once

namespace ccconv::constants {

// Negative slope shared by every LeakyReLU in the library.
inline constexpr double kLeakySlope = 0.01;

// Gradient checks: central differences in float64.
inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckRelTol = 1e-4;

// Cross-execution-mode agreement tolerances.
inline constexpr double kChunkedModeTol = 1e-6;
inline constexpr double kRationalModeTol = 1e-5;

// Last internal-net stage keeps its weights small so the bias term
// dominates the initial output variance.
inline constexpr double kLastStageWeightScale = 0.1;

}  // namespace ccconv::constants
