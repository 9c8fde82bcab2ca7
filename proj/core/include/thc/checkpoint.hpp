#pragma once

#include <string>

#include "thc/train.hpp"

namespace thc {

struct LoadedCheckpoint {
  ThcModel model;
  TrainConfig config;
  int input_size = 0;
};

// Versioned text container: config header plus every parameter tensor in
// declaration order at 17 significant digits. save(load(p)) is
// byte-identical to the original file.
void save_checkpoint(const ThcModel& model, const TrainConfig& config,
                     const std::string& path);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace thc
