#include "sppr/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace sppr {

const char* to_string(OutputHead head) {
  switch (head) {
    case OutputHead::kSigmoidScalar: return "sigmoid-scalar";
    case OutputHead::kLinearScalar: return "linear-scalar";
    case OutputHead::kBinarySoftmax: return "binary-softmax";
  }
  return "unknown";
}

void LstmStackConfig::validate() const {
  if (num_layers == 0 || cells == 0 || input_dim == 0 || output_dim == 0) {
    throw std::invalid_argument("LstmStackConfig: all sizes must be positive");
  }
  const std::size_t expected = head == OutputHead::kBinarySoftmax ? 2 : 1;
  if (output_dim != expected) {
    throw std::invalid_argument(std::string("LstmStackConfig: head ") +
                                to_string(head) + " requires output_dim " +
                                std::to_string(expected));
  }
}

namespace {

std::size_t scaled(std::size_t cells, double width_scale) {
  if (!(width_scale > 0.0)) throw std::invalid_argument("width_scale must be > 0");
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(cells) * width_scale)));
}

}  // namespace

LstmStackConfig releaser_config(std::size_t noise_dim, double width_scale,
                                OutputHead head) {
  return {4, scaled(64, width_scale), 2 + noise_dim,
          head == OutputHead::kBinarySoftmax ? 2u : 1u, head};
}

LstmStackConfig adversary_config(double width_scale) {
  return {2, scaled(32, width_scale), 1, 2, OutputHead::kBinarySoftmax};
}

LstmStackConfig utility_config(double width_scale) {
  return {3, scaled(48, width_scale), 1, 1, OutputHead::kLinearScalar};
}

LstmStackConfig attacker_config(double width_scale) {
  return {3, scaled(32, width_scale), 1, 2, OutputHead::kBinarySoftmax};
}

// ---------------------------------------------------------------------------

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  out.reserve(2 * layers.size() + 2);
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  out.push_back(head_weight);
  out.push_back(head_bias);
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back("layer" + std::to_string(i) + ".weight", layers[i].weight);
    out.emplace_back("layer" + std::to_string(i) + ".bias", layers[i].bias);
  }
  out.emplace_back("head.weight", head_weight);
  out.emplace_back("head.bias", head_bias);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

void ModelParams::set_tracked(bool tracked) {
  for (auto& t : tensors()) t.set_tracked(tracked);
}

void ModelParams::zero_grad() {
  for (auto& t : tensors()) t.zero_grad();
}

ModelParams ModelParams::clone(bool tracked) const {
  ModelParams out;
  out.config = config;
  for (const auto& l : layers) {
    out.layers.push_back({l.weight.clone(tracked), l.bias.clone(tracked)});
  }
  out.head_weight = head_weight.clone(tracked);
  out.head_bias = head_bias.clone(tracked);
  return out;
}

std::uint64_t ModelParams::checksum() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& t : tensors()) {
    for (double v : t.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

ModelParams init_params(const LstmStackConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = dist(rng);
    return Tensor::from({fan_in, fan_out}, std::move(w), true);
  };

  ModelParams params;
  params.config = config;
  const std::size_t h = config.cells;
  for (std::size_t layer = 0; layer < config.num_layers; ++layer) {
    const std::size_t in = layer == 0 ? config.input_dim : h;
    LstmLayerParams lp;
    lp.weight = glorot(in + h, 4 * h);
    std::vector<double> bias(4 * h, 0.0);
    std::fill(bias.begin() + static_cast<std::ptrdiff_t>(h),
              bias.begin() + static_cast<std::ptrdiff_t>(2 * h), 1.0);
    lp.bias = Tensor::from({1, 4 * h}, std::move(bias), true);
    params.layers.push_back(std::move(lp));
  }
  params.head_weight = glorot(h, config.output_dim);
  params.head_bias = Tensor::zeros({1, config.output_dim}, true);
  return params;
}

LstmState LstmState::zeros(const LstmStackConfig& config, std::size_t batch) {
  LstmState state;
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    state.layers.push_back({Tensor::zeros({batch, config.cells}),
                            Tensor::zeros({batch, config.cells})});
  }
  return state;
}

Tensor lstm_cell_step(const Tensor& x, LayerState& state,
                      const LstmLayerParams& params) {
  const std::size_t h = state.h.dim(1);
  if (x.rank() != 2 || x.dim(0) != state.h.dim(0) ||
      x.dim(1) + h != params.weight.dim(0)) {
    throw ShapeError("lstm_cell_step: input " + shape_string(x.shape()) +
                     " with hidden " + shape_string(state.h.shape()) +
                     " does not match weight " +
                     shape_string(params.weight.shape()));
  }
  Tensor pre = affine(concat({x, state.h}), params.weight, params.bias);
  Tensor hc = lstm_gates(pre, state.c);
  state.h = slice(hc, 0, h);
  state.c = slice(hc, h, 2 * h);
  return state.h;
}

Sequence stack_forward(const Sequence& steps, const ModelParams& params) {
  const auto& cfg = params.config;
  if (steps.empty()) return {};
  const std::size_t batch = steps.front().dim(0);
  for (const auto& s : steps) {
    for (double v : s.values()) {
      if (!std::isfinite(v)) {
        throw DomainError("stack_forward: non-finite input value");
      }
    }
  }
  LstmState state = LstmState::zeros(cfg, batch);
  Sequence outputs;
  outputs.reserve(steps.size());
  for (const auto& x : steps) {
    Tensor h = x;
    for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
      h = lstm_cell_step(h, state.layers[layer], params.layers[layer]);
    }
    Tensor logits = affine(h, params.head_weight, params.head_bias);
    switch (cfg.head) {
      case OutputHead::kSigmoidScalar: outputs.push_back(sigmoid(logits)); break;
      case OutputHead::kLinearScalar: outputs.push_back(logits); break;
      case OutputHead::kBinarySoftmax: outputs.push_back(softmax(logits)); break;
    }
  }
  return outputs;
}

Sequence split_steps(const Tensor& sequence) {
  if (sequence.rank() == 2) {
    Sequence out;
    for (std::size_t t = 0; t < sequence.dim(1); ++t) {
      out.push_back(slice(sequence, t, t + 1));
    }
    return out;
  }
  if (sequence.rank() != 3) {
    throw ShapeError("split_steps: expected rank 2 or 3, got " +
                     shape_string(sequence.shape()));
  }
  const std::size_t b = sequence.dim(0), steps = sequence.dim(1),
                    d = sequence.dim(2);
  Tensor flat = reshape(sequence, {b, steps * d});
  Sequence out;
  for (std::size_t t = 0; t < steps; ++t) {
    out.push_back(slice(flat, t * d, (t + 1) * d));
  }
  return out;
}

Tensor stack_forward(const Tensor& sequence, const ModelParams& params) {
  Sequence outs = stack_forward(split_steps(sequence), params);
  const std::size_t b = sequence.dim(0), steps = outs.size();
  return reshape(concat(outs), {b, steps, params.config.output_dim});
}

}  // namespace sppr
