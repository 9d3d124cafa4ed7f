#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sppr/tensor.hpp"

namespace sppr {

enum class OutputHead { kSigmoidScalar, kLinearScalar, kBinarySoftmax };

const char* to_string(OutputHead head);

struct LstmStackConfig {
  std::size_t num_layers = 1;
  std::size_t cells = 1;
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  OutputHead head = OutputHead::kLinearScalar;

  /// Throws std::invalid_argument on zero sizes or a head/output_dim mismatch.
  void validate() const;
  bool operator==(const LstmStackConfig&) const = default;
};

// Network presets from the architecture table. `width_scale` shrinks the cell
// count (rounded, at least 1) for desk-scale runs; 1.0 reproduces the table.
LstmStackConfig releaser_config(std::size_t noise_dim, double width_scale = 1.0,
                                OutputHead head = OutputHead::kSigmoidScalar);
LstmStackConfig adversary_config(double width_scale = 1.0);
LstmStackConfig utility_config(double width_scale = 1.0);
LstmStackConfig attacker_config(double width_scale = 1.0);

/// Fused gate weights: rows are [input ; hidden], column blocks are
/// [input gate | forget gate | cell candidate | output gate].
struct LstmLayerParams {
  Tensor weight;  // [(in + H) x 4H]
  Tensor bias;    // [1 x 4H]
};

struct ModelParams {
  LstmStackConfig config;
  std::vector<LstmLayerParams> layers;
  Tensor head_weight;  // [H x out]
  Tensor head_bias;    // [1 x out]

  /// Flat list in checkpoint order: layer0.weight, layer0.bias, ..., head.weight, head.bias.
  std::vector<Tensor> tensors() const;
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::size_t parameter_count() const;

  void set_tracked(bool tracked);
  void zero_grad();
  /// Deep copy with the given tracking flag.
  ModelParams clone(bool tracked) const;
  /// FNV-1a over the raw bytes of all values, for frozen-parameter checks.
  std::uint64_t checksum() const;
};

/// Glorot-uniform weights, forget-gate bias 1, other biases 0.
ModelParams init_params(const LstmStackConfig& config, std::uint64_t seed);

struct LayerState {
  Tensor h;  // [B x H]
  Tensor c;  // [B x H]
};

struct LstmState {
  std::vector<LayerState> layers;

  static LstmState zeros(const LstmStackConfig& config, std::size_t batch);
};

/// One LSTM step of a single layer. Returns the new hidden state and updates
/// `state` in place.
Tensor lstm_cell_step(const Tensor& x, LayerState& state,
                      const LstmLayerParams& params);

/// A sequence as per-step [B x d] tensors.
using Sequence = std::vector<Tensor>;

/// Runs the stack causally over `steps` and applies the head per step.
Sequence stack_forward(const Sequence& steps, const ModelParams& params);

/// Convenience form over a rank-3 [B x T x d] tensor, returning [B x T x out].
Tensor stack_forward(const Tensor& sequence, const ModelParams& params);

/// Splits a rank-3 [B x T x d] (or rank-2 [B x T], read as d = 1) tensor into
/// per-step [B x d] slices; gradients flow back into `sequence`.
Sequence split_steps(const Tensor& sequence);

}  // namespace sppr
