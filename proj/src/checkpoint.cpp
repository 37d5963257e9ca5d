#include "remeanflow/checkpoint.hpp"

#include <fstream>

#include "remeanflow/util.hpp"

namespace rmf {

using nlohmann::json;

void save_checkpoint(const std::string& path, const MlpModel& model,
                     const json& metadata) {
  model.validate();
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["layer_sizes"] = model.layer_sizes;
  doc["activation"] = activation_name(model.activation);
  json weights = json::array();
  json biases = json::array();
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    weights.push_back(model.weights[i].values);
    biases.push_back(model.biases[i].values);
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  doc["metadata"] = metadata;
  std::ofstream out(path);
  if (!out) fail("save_checkpoint: cannot open '" + path + "'");
  out << doc.dump(1) << "\n";
  if (!out) fail("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("load_checkpoint: cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    fail("load_checkpoint: parse error in '" + path + "': " + e.what());
  }
  if (!doc.contains("format_version") ||
      doc["format_version"].get<int>() != kCheckpointFormatVersion)
    fail("load_checkpoint: unsupported format version in '" + path + "'");

  Checkpoint ckpt;
  MlpModel& m = ckpt.model;
  m.layer_sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
  m.activation = activation_from_name(doc.at("activation").get<std::string>());
  const json& ws = doc.at("weights");
  const json& bs = doc.at("biases");
  if (ws.size() + 1 != m.layer_sizes.size() || bs.size() != ws.size())
    fail("load_checkpoint: layer count mismatch in '" + path + "'");
  for (std::size_t i = 0; i < ws.size(); ++i) {
    Tensor w({m.layer_sizes[i + 1], m.layer_sizes[i]},
             ws[i].get<std::vector<double>>());
    Tensor b({m.layer_sizes[i + 1]}, bs[i].get<std::vector<double>>());
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  m.validate();
  ckpt.metadata = doc.value("metadata", json::object());
  return ckpt;
}

}  // namespace rmf
