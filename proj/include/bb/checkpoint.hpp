#pragma once

#include <string>

#include "bb/model.hpp"

namespace bb {

/// Binary checkpoint: magic, format version, the architecture as JSON, then
/// named double-array records (weights, biases, quantizer state). Load
/// rebuilds the model from the embedded architecture and restores every
/// record; the result is bit-identical to the saved model.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace bb
