#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccconv/rational.hpp"
#include "ccconv/rng.hpp"

namespace ccconv {

enum class BoundaryPolicy { Replicate, Zero, Reflect };

std::string boundary_name(BoundaryPolicy p);
BoundaryPolicy boundary_from_name(const std::string& name);

// Per-axis scale factor: exact rational k/l or plain float.
struct AxisScale {
  std::optional<Rational> rational;
  double value = 1.0;

  static AxisScale from_rational(Rational r);
  static AxisScale from_float(double s);
  bool is_rational() const { return rational.has_value(); }
};

// Parses "k/l" as a rational scale, anything else as a float.
AxisScale parse_axis_scale(const std::string& text);

// Scale factors plus explicit output size for both axes.
struct ScaleSpec {
  AxisScale sh, sw;
  std::int64_t out_h = 0, out_w = 0;

  // Applies the default output-size rule ceil(s * in_size).
  static ScaleSpec with_default_out(AxisScale sh, AxisScale sw, std::int64_t in_h,
                                    std::int64_t in_w);
  static ScaleSpec exact(AxisScale sh, AxisScale sw, std::int64_t out_h, std::int64_t out_w);
  static ScaleSpec uniform_float(double s, std::int64_t in_h, std::int64_t in_w);

  void validate() const;
};

std::int64_t default_out_size(std::int64_t in_size, double s);
std::int64_t default_out_size(std::int64_t in_size, const Rational& s);
std::int64_t default_out_size(std::int64_t in_size, const AxisScale& s);

// Continuous input-space coordinates of every output pixel along one axis.
// coords[n] = n/s + (in-1)/2 - (out-1)/(2s). Rational scales keep an exact
// representation next to the float one.
struct AxisGrid {
  AxisScale scale;
  std::int64_t in_size = 0;
  std::int64_t out_size = 0;
  std::vector<double> coords;
  std::vector<Rational> coords_exact;  // nonempty iff scale is rational

  bool exact() const { return !coords_exact.empty(); }
};

struct ProjectedGrid {
  AxisGrid v, h;  // vertical (rows) then horizontal (cols)

  std::int64_t out_h() const { return v.out_size; }
  std::int64_t out_w() const { return h.out_size; }
  // Row-major [2,H',W'] buffer: plane 0 vertical coords, plane 1 horizontal.
  std::vector<double> coords_tensor() const;
};

AxisGrid projected_axis_grid(std::int64_t in_size, const AxisScale& scale, std::int64_t out_size);
ProjectedGrid projected_grid(std::int64_t in_h, std::int64_t in_w, const ScaleSpec& spec);

// Maps an out-of-range index into [0, size) per policy. For Zero the index
// is clamped and valid is set false so the reader can mask the tap.
std::int64_t resolve_index(std::int64_t m, std::int64_t size, BoundaryPolicy policy, bool& valid);

// Neighbor window along one axis: k consecutive integers
// {floor(g)-ceil(k/2)+1, ..., floor(g)+floor(k/2)}.
std::int64_t window_start(double g, std::int64_t support);
std::int64_t window_start_exact(const Rational& g, std::int64_t support);

// Boundary-resolved neighbor indices and pre-clamp signed distances for a
// full 2D grid. Window index k = a*kw + b walks the window row-major.
struct IndexPlan {
  std::int64_t support_h = 0, support_w = 0;
  std::int64_t out_h = 0, out_w = 0;
  std::int64_t in_h = 0, in_w = 0;
  BoundaryPolicy boundary = BoundaryPolicy::Replicate;
  std::vector<std::int32_t> indices;  // [K,2,H',W']
  std::vector<double> distances;      // [K,2,H',W'], g - m, pre-clamp
  std::vector<float> zero_mask;       // [K,H',W'], only for Zero policy

  std::int64_t k_count() const { return support_h * support_w; }
  bool has_mask() const { return !zero_mask.empty(); }
};

IndexPlan index_plan(const ProjectedGrid& grid, std::int64_t support_h, std::int64_t support_w,
                     BoundaryPolicy boundary);

// Number of distinct (dv, dh) distance pairs over all grid points and taps;
// equals K exactly when the grid collapses to a single phase.
std::int64_t unique_distance_count(const IndexPlan& plan);

// Closest fraction k/l with l <= max_den; ties prefer smaller denominator,
// then smaller numerator.
Rational project_to_rational(double s, int max_den);

// One layer of a sampled scale chain.
struct ChainLayer {
  Rational sh, sw;
  std::int64_t out_h = 0, out_w = 0;
};

// Draws per-axis scales from Normal(mean_scale, sd) projected to rationals,
// then replaces one uniformly chosen layer per axis so the product equals
// `target` exactly. Output sizes: ceil(cumulative product * in_size) for
// intermediate layers, in_size * target (exact) for the last.
std::vector<ChainLayer> sample_scale_chain(int n_layers, const Rational& target,
                                           double mean_scale, double sd, int max_den,
                                           std::array<std::int64_t, 2> in_size, Rng& rng);

// Output sizes for externally chosen per-axis scales, same chaining rule.
std::vector<ChainLayer> chain_output_shapes(const std::vector<std::array<Rational, 2>>& scales,
                                            const Rational& target,
                                            std::array<std::int64_t, 2> in_size);

std::string chain_to_json(const std::vector<ChainLayer>& chain);
std::vector<ChainLayer> chain_from_json(const std::string& text);

}  // namespace ccconv
