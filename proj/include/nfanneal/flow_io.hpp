#ifndef NFANNEAL_FLOW_IO_HPP
#define NFANNEAL_FLOW_IO_HPP

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "nfanneal/errors.hpp"
#include "nfanneal/flow.hpp"

namespace nfanneal {

inline constexpr const char* kCheckpointFormat = "nfanneal-flow";
inline constexpr int kCheckpointVersion = 1;

/// JSON record of a flow. Doubles are written with round-trip precision, so
/// load(save(model)) reproduces every parameter bit for bit.
inline nlohmann::json checkpoint_to_json(const FlowModel& model) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["dim"] = model.dim();
  j["layers"] = model.num_layers();
  j["hidden_width"] = model.layers().front().scale.hidden_width();
  auto& parities = j["parities"] = nlohmann::json::array();
  for (const auto& layer : model.layers()) {
    parities.push_back(layer.parity == MaskParity::kPassFirst ? "first" : "second");
  }
  const auto& p = model.parameters();
  j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
  return j;
}

inline FlowModel checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != kCheckpointFormat) {
    throw InputError("not a flow checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + j.at("version").dump());
  }
  std::vector<MaskParity> parities;
  for (const auto& p : j.at("parities")) {
    const auto s = p.get<std::string>();
    if (s == "first") {
      parities.push_back(MaskParity::kPassFirst);
    } else if (s == "second") {
      parities.push_back(MaskParity::kPassSecond);
    } else {
      throw InputError("unknown mask parity '" + s + "'");
    }
  }
  if (parities.size() != j.at("layers").get<std::size_t>()) {
    throw InputError("checkpoint layer count does not match its parity list");
  }
  FlowModel model(j.at("dim").get<std::size_t>(), parities);
  if (j.at("hidden_width").get<std::size_t>() != model.layers().front().scale.hidden_width()) {
    throw InputError("checkpoint hidden width does not match the architecture");
  }
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != model.parameter_count()) {
    throw InputError("checkpoint has " + std::to_string(params.size()) + " parameters, expected " +
                     std::to_string(model.parameter_count()));
  }
  model.parameters() = Eigen::Map<const Eigen::VectorXd>(params.data(), params.size());
  return model;
}

inline void save_checkpoint(const FlowModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model).dump() << '\n';
}

inline FlowModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read checkpoint " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace nfanneal

#endif  // NFANNEAL_FLOW_IO_HPP
