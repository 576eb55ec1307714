#include "ccconv/cc_layer.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ccconv/serialize.hpp"

namespace ccconv {

std::string exec_mode_name(ExecMode m) {
  switch (m) {
    case ExecMode::Standard: return "standard";
    case ExecMode::Chunked: return "chunked";
    case ExecMode::RationalFast: return "rational_fast";
  }
  return "standard";
}

ExecMode exec_mode_from_name(const std::string& name) {
  if (name == "standard") return ExecMode::Standard;
  if (name == "chunked") return ExecMode::Chunked;
  if (name == "rational_fast") return ExecMode::RationalFast;
  throw SpecError("unknown execution mode: " + name);
}

void CCLayerConfig::validate() const {
  if (c_in < 1 || c_out < 1) throw SpecError("cc layer: channel counts must be >= 1");
  if (support_h < 1 || support_w < 1) throw SpecError("cc layer: support must be >= 1");
  if (chunk_h < 1 || chunk_w < 1) throw SpecError("cc layer: chunk dims must be >= 1");
}

template <typename T>
void CCLayer<T>::dump_trace(const Tensor<T>& input, const ScaleSpec& spec,
                            const std::string& dir) const {
  check_input(input);
  spec.validate();
  std::filesystem::create_directories(dir);
  ProjectedGrid grid = projected_grid(input.dim(2), input.dim(3), spec);
  IndexPlan plan = index_plan(grid, config.support_h, config.support_w, config.boundary);

  const Shape kd_shape = {plan.k_count(), 2, plan.out_h, plan.out_w};
  std::vector<float> dist(plan.distances.begin(), plan.distances.end());
  save_cct1(dir + "/distances.cct1", kd_shape, dist);
  std::vector<float> idx(plan.indices.begin(), plan.indices.end());
  save_cct1(dir + "/indices.cct1", kd_shape, idx);

  Tensor<T> offsets = detail::net_offsets<T>(grid, plan, config.input_mode);
  Tensor<T> weights = internal_net_weights(net, offsets, config.c_in, config.c_out,
                                           config.k_count(), static_cast<GradTape<T>*>(nullptr));
  save_tensor(dir + "/weights.cct1", weights);
}

namespace {

nlohmann::json config_to_json(const CCLayerConfig& c) {
  nlohmann::json j;
  j["c_in"] = c.c_in;
  j["c_out"] = c.c_out;
  j["support"] = {c.support_h, c.support_w};
  j["boundary"] = boundary_name(c.boundary);
  j["mode"] = exec_mode_name(c.mode);
  j["chunk"] = {c.chunk_h, c.chunk_w};
  j["input_mode"] = input_mode_name(c.input_mode);
  return j;
}

CCLayerConfig config_from_json(const nlohmann::json& j) {
  CCLayerConfig c;
  c.c_in = j.at("c_in").get<std::int64_t>();
  c.c_out = j.at("c_out").get<std::int64_t>();
  c.support_h = j.at("support")[0].get<std::int64_t>();
  c.support_w = j.at("support")[1].get<std::int64_t>();
  c.boundary = boundary_from_name(j.at("boundary").get<std::string>());
  c.mode = exec_mode_from_name(j.at("mode").get<std::string>());
  c.chunk_h = j.at("chunk")[0].get<std::int64_t>();
  c.chunk_w = j.at("chunk")[1].get<std::int64_t>();
  c.input_mode = input_mode_from_name(j.at("input_mode").get<std::string>());
  c.validate();
  return c;
}

}  // namespace

template <typename T>
void save_cc_layer(const std::string& dir, const CCLayer<T>& layer) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir + "/config.json");
  if (!os) throw IoError("cannot open for write: " + dir + "/config.json");
  os << config_to_json(layer.config).dump(2) << "\n";
  save_internal_net(dir + "/params.cckp", layer.net);
}

template <typename T>
CCLayer<T> load_cc_layer(const std::string& dir) {
  std::ifstream is(dir + "/config.json");
  if (!is) throw IoError("cannot open for read: " + dir + "/config.json");
  nlohmann::json j = nlohmann::json::parse(is);
  CCLayer<T> layer;
  layer.config = config_from_json(j);
  layer.net = load_internal_net<T>(dir + "/params.cckp");
  return layer;
}

template void CCLayer<float>::dump_trace(const Tensor<float>&, const ScaleSpec&,
                                         const std::string&) const;
template void CCLayer<double>::dump_trace(const Tensor<double>&, const ScaleSpec&,
                                          const std::string&) const;
template void save_cc_layer<float>(const std::string&, const CCLayer<float>&);
template void save_cc_layer<double>(const std::string&, const CCLayer<double>&);
template CCLayer<float> load_cc_layer<float>(const std::string&);
template CCLayer<double> load_cc_layer<double>(const std::string&);

}  // namespace ccconv
