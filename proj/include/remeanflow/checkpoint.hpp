#pragma once

#include <string>

#include "json.hpp"
#include "remeanflow/mlp.hpp"

namespace rmf {

inline constexpr int kCheckpointFormatVersion = 1;

// Self-describing model checkpoint: layer sizes, activation name, flat
// weight/bias arrays in layer order, a format-version field and an opaque
// metadata block. Doubles survive a save/load round trip bit-exactly.
void save_checkpoint(const std::string& path, const MlpModel& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct Checkpoint {
  MlpModel model;
  nlohmann::json metadata;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace rmf
