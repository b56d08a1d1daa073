#ifndef REPCOUNT_CHECKPOINT_HPP
#define REPCOUNT_CHECKPOINT_HPP

#include <string>

#include "repcount/model.hpp"

namespace repcount {

// On-disk format: one line of JSON — {"config": model config, "tensors":
// name → {"offset", "shape"}} — terminated by '\n', followed by every
// parameter as little-endian 32-bit floats in parameter creation order.
// Offsets are relative to the first byte after the header line. Files are
// canonical: save → load → save is byte-identical.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace repcount

#endif
