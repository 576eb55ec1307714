#include "ccconv/internal_net.hpp"

#include <fstream>

#include <json.hpp>

#include "ccconv/serialize.hpp"

namespace ccconv {

std::string input_mode_name(InputMode m) {
  return m == InputMode::Distances ? "distances" : "grid_direct";
}

InputMode input_mode_from_name(const std::string& name) {
  if (name == "distances") return InputMode::Distances;
  if (name == "grid_direct") return InputMode::GridDirect;
  throw SpecError("unknown input mode: " + name);
}

template <typename T>
void save_internal_net(const std::string& path, const InternalNetParams<T>& net) {
  std::vector<NamedTensor> tensors;
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    const auto& s = net.stages[i];
    NamedTensor w;
    w.name = "stage" + std::to_string(i) + ".weight";
    w.shape = s.weight.shape();
    w.data.assign(s.weight.data().begin(), s.weight.data().end());
    tensors.push_back(std::move(w));
    NamedTensor b;
    b.name = "stage" + std::to_string(i) + ".bias";
    b.shape = s.bias.shape();
    b.data.assign(s.bias.data().begin(), s.bias.data().end());
    tensors.push_back(std::move(b));
  }
  save_cckp(path, tensors);

  nlohmann::json meta;
  meta["input_mode"] = input_mode_name(net.input_mode);
  meta["widths"] = net.widths();
  meta["slope"] = static_cast<double>(net.slope);
  std::ofstream os(path + ".json");
  if (!os) throw IoError("cannot open for write: " + path + ".json");
  os << meta.dump(2) << "\n";
}

template <typename T>
InternalNetParams<T> load_internal_net(const std::string& path) {
  auto tensors = load_cckp(path);
  std::ifstream is(path + ".json");
  if (!is) throw IoError("cannot open for read: " + path + ".json");
  nlohmann::json meta = nlohmann::json::parse(is);

  InternalNetParams<T> net;
  net.input_mode = input_mode_from_name(meta.at("input_mode").get<std::string>());
  net.slope = static_cast<T>(meta.at("slope").get<double>());
  const std::size_t n_stages = tensors.size() / 2;
  for (std::size_t i = 0; i < n_stages; ++i) {
    auto find = [&](const std::string& name) -> const NamedTensor& {
      for (const auto& t : tensors)
        if (t.name == name) return t;
      throw IoError("checkpoint missing tensor " + name + " in " + path);
    };
    const auto& w = find("stage" + std::to_string(i) + ".weight");
    const auto& b = find("stage" + std::to_string(i) + ".bias");
    typename InternalNetParams<T>::Stage stage;
    stage.weight = Tensor<T>::from_data(w.shape, std::vector<T>(w.data.begin(), w.data.end()), true);
    stage.bias = Tensor<T>::from_data(b.shape, std::vector<T>(b.data.begin(), b.data.end()), true);
    net.stages.push_back(std::move(stage));
  }
  if (net.stages.empty()) throw IoError("checkpoint has no stages: " + path);
  return net;
}

template void save_internal_net<float>(const std::string&, const InternalNetParams<float>&);
template void save_internal_net<double>(const std::string&, const InternalNetParams<double>&);
template InternalNetParams<float> load_internal_net<float>(const std::string&);
template InternalNetParams<double> load_internal_net<double>(const std::string&);

}  // namespace ccconv
