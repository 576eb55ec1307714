#include "ccconv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include <json.hpp>

#include "ccconv/errors.hpp"

namespace ccconv {

std::string boundary_name(BoundaryPolicy p) {
  switch (p) {
    case BoundaryPolicy::Replicate: return "replicate";
    case BoundaryPolicy::Zero: return "zero";
    case BoundaryPolicy::Reflect: return "reflect";
  }
  return "replicate";
}

BoundaryPolicy boundary_from_name(const std::string& name) {
  if (name == "replicate") return BoundaryPolicy::Replicate;
  if (name == "zero") return BoundaryPolicy::Zero;
  if (name == "reflect") return BoundaryPolicy::Reflect;
  throw SpecError("unknown boundary policy: " + name);
}

AxisScale AxisScale::from_rational(Rational r) {
  if (!r.positive()) throw SpecError("scale must be positive, got " + r.str());
  AxisScale s;
  s.rational = r;
  s.value = r.value();
  return s;
}

AxisScale AxisScale::from_float(double v) {
  if (!(v > 0.0)) throw SpecError("scale must be positive, got " + std::to_string(v));
  AxisScale s;
  s.value = v;
  return s;
}

AxisScale parse_axis_scale(const std::string& text) {
  auto slash = text.find('/');
  if (slash != std::string::npos) {
    std::int64_t num = std::stoll(text.substr(0, slash));
    std::int64_t den = std::stoll(text.substr(slash + 1));
    return AxisScale::from_rational(Rational(num, den));
  }
  return AxisScale::from_float(std::stod(text));
}

std::int64_t default_out_size(std::int64_t in_size, double s) {
  if (in_size < 1) throw SpecError("in_size must be >= 1");
  if (!(s > 0.0)) throw SpecError("scale must be positive");
  return static_cast<std::int64_t>(std::ceil(s * static_cast<double>(in_size)));
}

std::int64_t default_out_size(std::int64_t in_size, const Rational& s) {
  if (in_size < 1) throw SpecError("in_size must be >= 1");
  if (!s.positive()) throw SpecError("scale must be positive");
  return ceil_mul_div(s.num, in_size, s.den);
}

std::int64_t default_out_size(std::int64_t in_size, const AxisScale& s) {
  return s.is_rational() ? default_out_size(in_size, *s.rational)
                         : default_out_size(in_size, s.value);
}

ScaleSpec ScaleSpec::with_default_out(AxisScale sh, AxisScale sw, std::int64_t in_h,
                                      std::int64_t in_w) {
  ScaleSpec spec;
  spec.sh = sh;
  spec.sw = sw;
  spec.out_h = default_out_size(in_h, sh);
  spec.out_w = default_out_size(in_w, sw);
  return spec;
}

ScaleSpec ScaleSpec::exact(AxisScale sh, AxisScale sw, std::int64_t out_h, std::int64_t out_w) {
  ScaleSpec spec;
  spec.sh = sh;
  spec.sw = sw;
  spec.out_h = out_h;
  spec.out_w = out_w;
  spec.validate();
  return spec;
}

ScaleSpec ScaleSpec::uniform_float(double s, std::int64_t in_h, std::int64_t in_w) {
  return with_default_out(AxisScale::from_float(s), AxisScale::from_float(s), in_h, in_w);
}

void ScaleSpec::validate() const {
  if (out_h < 1 || out_w < 1)
    throw SpecError("invalid scale spec: out size " + std::to_string(out_h) + "x" +
                    std::to_string(out_w) + " must be >= 1");
}

AxisGrid projected_axis_grid(std::int64_t in_size, const AxisScale& scale, std::int64_t out_size) {
  if (in_size < 1) throw SpecError("projected_axis_grid: in_size must be >= 1");
  if (out_size < 1) throw SpecError("projected_axis_grid: out_size must be >= 1");
  AxisGrid g;
  g.scale = scale;
  g.in_size = in_size;
  g.out_size = out_size;
  g.coords.resize(static_cast<std::size_t>(out_size));
  if (scale.is_rational()) {
    const std::int64_t k = scale.rational->num;
    const std::int64_t l = scale.rational->den;
    g.coords_exact.reserve(static_cast<std::size_t>(out_size));
    for (std::int64_t n = 0; n < out_size; ++n) {
      Rational r(2 * n * l + k * (in_size - 1) - l * (out_size - 1), 2 * k);
      g.coords_exact.push_back(r);
      g.coords[static_cast<std::size_t>(n)] = r.value();
    }
  } else {
    const double s = scale.value;
    for (std::int64_t n = 0; n < out_size; ++n) {
      g.coords[static_cast<std::size_t>(n)] = static_cast<double>(n) / s +
                                              0.5 * static_cast<double>(in_size - 1) -
                                              static_cast<double>(out_size - 1) / (2.0 * s);
    }
  }
  return g;
}

ProjectedGrid projected_grid(std::int64_t in_h, std::int64_t in_w, const ScaleSpec& spec) {
  spec.validate();
  ProjectedGrid g;
  g.v = projected_axis_grid(in_h, spec.sh, spec.out_h);
  g.h = projected_axis_grid(in_w, spec.sw, spec.out_w);
  return g;
}

std::vector<double> ProjectedGrid::coords_tensor() const {
  const std::int64_t ho = out_h(), wo = out_w();
  std::vector<double> out(static_cast<std::size_t>(2 * ho * wo));
  for (std::int64_t i = 0; i < ho; ++i)
    for (std::int64_t j = 0; j < wo; ++j) {
      out[static_cast<std::size_t>(i * wo + j)] = v.coords[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(ho * wo + i * wo + j)] = h.coords[static_cast<std::size_t>(j)];
    }
  return out;
}

std::int64_t resolve_index(std::int64_t m, std::int64_t size, BoundaryPolicy policy, bool& valid) {
  valid = true;
  if (m >= 0 && m < size) return m;
  switch (policy) {
    case BoundaryPolicy::Replicate:
      return std::clamp<std::int64_t>(m, 0, size - 1);
    case BoundaryPolicy::Zero:
      valid = false;
      return std::clamp<std::int64_t>(m, 0, size - 1);
    case BoundaryPolicy::Reflect:
      // half-sample symmetric: -1 -> 0, size -> size-1
      while (m < 0 || m >= size) {
        if (m < 0) m = -1 - m;
        if (m >= size) m = 2 * size - 1 - m;
      }
      return m;
  }
  return 0;
}

std::int64_t window_start(double g, std::int64_t support) {
  std::int64_t base = static_cast<std::int64_t>(std::floor(g));
  return base - (support + 1) / 2 + 1;
}

std::int64_t window_start_exact(const Rational& g, std::int64_t support) {
  return g.floor() - (support + 1) / 2 + 1;
}

IndexPlan index_plan(const ProjectedGrid& grid, std::int64_t support_h, std::int64_t support_w,
                     BoundaryPolicy boundary) {
  if (support_h < 1 || support_w < 1) throw SpecError("index_plan: support must be >= 1");
  IndexPlan plan;
  plan.support_h = support_h;
  plan.support_w = support_w;
  plan.out_h = grid.out_h();
  plan.out_w = grid.out_w();
  plan.in_h = grid.v.in_size;
  plan.in_w = grid.h.in_size;
  plan.boundary = boundary;

  struct AxisWindows {
    std::vector<std::int32_t> idx;   // [out, k]
    std::vector<double> dist;        // [out, k]
    std::vector<bool> valid;         // [out, k]
  };
  auto build_axis = [&](const AxisGrid& ag, std::int64_t support) {
    AxisWindows w;
    const std::int64_t out = ag.out_size;
    w.idx.resize(static_cast<std::size_t>(out * support));
    w.dist.resize(static_cast<std::size_t>(out * support));
    w.valid.resize(static_cast<std::size_t>(out * support));
    for (std::int64_t n = 0; n < out; ++n) {
      std::int64_t start = ag.exact()
                               ? window_start_exact(ag.coords_exact[static_cast<std::size_t>(n)],
                                                    support)
                               : window_start(ag.coords[static_cast<std::size_t>(n)], support);
      for (std::int64_t a = 0; a < support; ++a) {
        std::int64_t m = start + a;
        bool ok = true;
        std::int64_t resolved = resolve_index(m, ag.in_size, boundary, ok);
        std::size_t at = static_cast<std::size_t>(n * support + a);
        w.idx[at] = static_cast<std::int32_t>(resolved);
        w.dist[at] = ag.coords[static_cast<std::size_t>(n)] - static_cast<double>(m);
        w.valid[at] = ok;
      }
    }
    return w;
  };
  AxisWindows wv = build_axis(grid.v, support_h);
  AxisWindows wh = build_axis(grid.h, support_w);

  const std::int64_t K = support_h * support_w;
  const std::int64_t plane = plan.out_h * plan.out_w;
  plan.indices.resize(static_cast<std::size_t>(K * 2 * plane));
  plan.distances.resize(static_cast<std::size_t>(K * 2 * plane));
  bool any_invalid = false;
  std::vector<float> mask;
  if (boundary == BoundaryPolicy::Zero) mask.assign(static_cast<std::size_t>(K * plane), 1.0f);

  for (std::int64_t a = 0; a < support_h; ++a)
    for (std::int64_t b = 0; b < support_w; ++b) {
      const std::int64_t k = a * support_w + b;
      std::int32_t* row_idx = plan.indices.data() + (k * 2 + 0) * plane;
      std::int32_t* col_idx = plan.indices.data() + (k * 2 + 1) * plane;
      double* row_dist = plan.distances.data() + (k * 2 + 0) * plane;
      double* col_dist = plan.distances.data() + (k * 2 + 1) * plane;
      for (std::int64_t i = 0; i < plan.out_h; ++i) {
        const std::size_t va = static_cast<std::size_t>(i * support_h + a);
        for (std::int64_t j = 0; j < plan.out_w; ++j) {
          const std::size_t hb = static_cast<std::size_t>(j * support_w + b);
          const std::int64_t p = i * plan.out_w + j;
          row_idx[p] = wv.idx[va];
          col_idx[p] = wh.idx[hb];
          row_dist[p] = wv.dist[va];
          col_dist[p] = wh.dist[hb];
          if (!mask.empty() && (!wv.valid[va] || !wh.valid[hb])) {
            mask[static_cast<std::size_t>(k * plane + p)] = 0.0f;
            any_invalid = true;
          }
        }
      }
    }
  if (!mask.empty() && any_invalid) plan.zero_mask = std::move(mask);
  return plan;
}

std::int64_t unique_distance_count(const IndexPlan& plan) {
  std::set<std::pair<double, double>> seen;
  const std::int64_t K = plan.k_count();
  const std::int64_t plane = plan.out_h * plan.out_w;
  for (std::int64_t k = 0; k < K; ++k) {
    const double* dv = plan.distances.data() + (k * 2 + 0) * plane;
    const double* dh = plan.distances.data() + (k * 2 + 1) * plane;
    for (std::int64_t p = 0; p < plane; ++p) seen.insert({dv[p], dh[p]});
  }
  return static_cast<std::int64_t>(seen.size());
}

Rational project_to_rational(double s, int max_den) {
  if (!(s > 0.0)) throw SpecError("project_to_rational: scale must be positive");
  if (max_den < 1) throw SpecError("project_to_rational: max_den must be >= 1");
  std::int64_t best_num = 1, best_den = 1;
  double best_err = std::abs(s - 1.0);
  bool first = true;
  for (std::int64_t den = 1; den <= max_den; ++den) {
    std::int64_t lo = static_cast<std::int64_t>(std::floor(s * static_cast<double>(den)));
    for (std::int64_t num = std::max<std::int64_t>(1, lo); num <= lo + 1; ++num) {
      double err = std::abs(s - static_cast<double>(num) / static_cast<double>(den));
      if (first || err < best_err) {
        first = false;
        best_err = err;
        best_num = num;
        best_den = den;
      }
    }
  }
  return Rational(best_num, best_den);
}

std::vector<ChainLayer> chain_output_shapes(const std::vector<std::array<Rational, 2>>& scales,
                                            const Rational& target,
                                            std::array<std::int64_t, 2> in_size) {
  const std::size_t n = scales.size();
  std::vector<ChainLayer> chain(n);
  std::array<Rational, 2> cum = {Rational::from_int(1), Rational::from_int(1)};
  for (std::size_t i = 0; i < n; ++i) {
    chain[i].sh = scales[i][0];
    chain[i].sw = scales[i][1];
    for (int axis = 0; axis < 2; ++axis) {
      cum[axis] = cum[axis] * scales[i][axis];
      std::int64_t out;
      if (i + 1 == n) {
        Rational exact_out = Rational::from_int(in_size[axis]) * target;
        if (!exact_out.is_integer())
          throw SpecError("scale chain: final size " + exact_out.str() + " is not an integer");
        out = exact_out.num;
      } else {
        out = ceil_mul_div(cum[axis].num, in_size[axis], cum[axis].den);
      }
      if (out < 1) throw SpecError("scale chain: infeasible intermediate size");
      if (axis == 0)
        chain[i].out_h = out;
      else
        chain[i].out_w = out;
    }
  }
  for (int axis = 0; axis < 2; ++axis)
    if (cum[axis] != target)
      throw SpecError("scale chain: product " + cum[axis].str() + " != target " + target.str());
  return chain;
}

std::vector<ChainLayer> sample_scale_chain(int n_layers, const Rational& target,
                                           double mean_scale, double sd, int max_den,
                                           std::array<std::int64_t, 2> in_size, Rng& rng) {
  if (n_layers < 1) throw SpecError("sample_scale_chain: n_layers must be >= 1");
  if (!target.positive()) throw SpecError("sample_scale_chain: target must be positive");

  constexpr int kMaxRetries = 100;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    std::vector<std::array<Rational, 2>> scales(static_cast<std::size_t>(n_layers));
    bool ok = true;
    for (int axis = 0; axis < 2 && ok; ++axis) {
      std::vector<Rational> drawn(static_cast<std::size_t>(n_layers));
      for (int i = 0; i < n_layers; ++i) {
        double s = rng.normal(mean_scale, sd);
        if (!(s > 0.0)) {
          ok = false;
          break;
        }
        drawn[static_cast<std::size_t>(i)] = project_to_rational(s, max_den);
      }
      if (!ok) break;
      std::int64_t j = rng.uniform_int(0, n_layers - 1);
      Rational rest = Rational::from_int(1);
      for (int i = 0; i < n_layers; ++i)
        if (i != j) rest = rest * drawn[static_cast<std::size_t>(i)];
      Rational corrected = target / rest;
      if (!corrected.positive()) {
        ok = false;
        break;
      }
      drawn[static_cast<std::size_t>(j)] = corrected;
      for (int i = 0; i < n_layers; ++i) scales[static_cast<std::size_t>(i)][axis] = drawn[static_cast<std::size_t>(i)];
    }
    if (!ok) continue;
    try {
      return chain_output_shapes(scales, target, in_size);
    } catch (const SpecError&) {
      continue;
    }
  }
  throw SpecError("sample_scale_chain: no feasible chain after retries");
}

std::string chain_to_json(const std::vector<ChainLayer>& chain) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : chain) {
    layers.push_back({{"sh", {l.sh.num, l.sh.den}},
                      {"sw", {l.sw.num, l.sw.den}},
                      {"out", {l.out_h, l.out_w}}});
  }
  nlohmann::json doc;
  doc["layers"] = layers;
  return doc.dump(2);
}

std::vector<ChainLayer> chain_from_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  std::vector<ChainLayer> chain;
  for (const auto& l : doc.at("layers")) {
    ChainLayer c;
    c.sh = Rational(l.at("sh")[0].get<std::int64_t>(), l.at("sh")[1].get<std::int64_t>());
    c.sw = Rational(l.at("sw")[0].get<std::int64_t>(), l.at("sw")[1].get<std::int64_t>());
    c.out_h = l.at("out")[0].get<std::int64_t>();
    c.out_w = l.at("out")[1].get<std::int64_t>();
    chain.push_back(c);
  }
  return chain;
}

}  // namespace ccconv
