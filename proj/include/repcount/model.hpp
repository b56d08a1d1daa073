#ifndef REPCOUNT_MODEL_HPP
#define REPCOUNT_MODEL_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "repcount/sequence.hpp"
#include "repcount/tape.hpp"
#include "repcount/tensor.hpp"

namespace repcount {

struct ModelConfig {
  int L = 64;       // frames after resampling
  int D_in = 16;    // input feature dimension
  int d_model = 512;
  int heads = 4;
  std::vector<int> scales = {1, 4, 8};
  int fusion_channels = 32;
  int head_hidden = 512;
  int encoder_layers = 1;

  int head_dim() const { return d_model / heads; }
  void validate() const;
};

// Named trainable tensors in a fixed creation order (the checkpoint blob
// order and the optimizer state order both follow it).
struct ModelParams {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& find(const std::string& name);
  const Tensor& find(const std::string& name) const;
  int64_t total_elems() const;

  // uniform in ±1/√fan_in per weight, zeros for biases, ones for norm gains
  static ModelParams init(const ModelConfig& cfg, uint64_t seed);
};

// name → shape for every parameter of a config, in creation order; init
// draws from it and the checkpoint loader validates against it
std::vector<std::pair<std::string, std::vector<int>>> param_shapes(const ModelConfig& cfg);

// Forward pass built on the tape.
//   E  [L×d_model]  frame embeddings consumed by the segment losses
//                   (taken before the encoder refinement)
//   p  [L×1]        predicted density column
// param_ids aligns 1:1 with params.items.
struct ForwardNodes {
  Tape::NodeId E = -1;
  Tape::NodeId p = -1;
  std::vector<Tape::NodeId> param_ids;
  // every rectifier pre-activation, in forward order; the gradient harness
  // uses these to keep finite-difference probes away from the kinks
  std::vector<Tape::NodeId> relu_pre;
};

ForwardNodes model_forward(Tape& t, const ModelParams& params, const ModelConfig& cfg,
                           const Tensor& features, bool params_require_grad);

// Σ p_i — the predicted (real-valued) count
double count_readout(const DensityMap& p);

DensityMap density_from_node(const Tape& t, Tape::NodeId p);

}  // namespace repcount

#endif
