#pragma once

#include <string>

#include "coastal/model/model.hpp"

namespace coastal::model {

/// Self-describing checkpoint: magic, JSON header (config, seed, iteration,
/// parameter names/shapes), then the named float32 blobs in registry order.
/// save -> load is bitwise exact.
void save_checkpoint(const std::string& path, const Params<float>& params, int64_t iteration);

struct Checkpoint {
    Params<float> params;
    int64_t iteration = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace coastal::model
