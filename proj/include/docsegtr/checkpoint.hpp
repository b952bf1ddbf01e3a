#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "docsegtr/model.hpp"
#include "docsegtr/training.hpp"

namespace docsegtr {

/// "DSGT" checkpoint: named tensors stored as 32-bit little-endian
/// floats. Each double-precision array is written as three float32
/// entries (name, name@mid, name@lo) whose sum reconstructs the doubles
/// exactly, so training resumes bit-for-bit.
struct CheckpointEntry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Builds a checkpoint from the model (and optimizer state when given);
/// embeds the run config as the "__config__" entry.
Checkpoint checkpoint_from_model(Model& model, const OptimizerState* opt = nullptr);

/// Loads parameters into a model of matching architecture. Missing or
/// extra parameter names raise ConfigError listing them. When `opt` is
/// given, optimizer velocity and iteration are restored too.
void load_into_model(const Checkpoint& ckpt, Model& model, OptimizerState* opt = nullptr);

/// Reads the embedded run config of a checkpoint.
RunConfig config_from_checkpoint(const Checkpoint& ckpt);

}  // namespace docsegtr
