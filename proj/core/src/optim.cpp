#include "sppr/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sppr {

void rmsprop_step(Tensor& param, RmspropState& state) {
  if (!param.has_grad()) {
    throw GraphError("rmsprop_step: parameter of shape " +
                     shape_string(param.shape()) + " has no gradient");
  }
  if (state.mean_square.size() != param.size()) {
    throw ShapeError("rmsprop_step: state holds " +
                     std::to_string(state.mean_square.size()) +
                     " entries for parameter of shape " +
                     shape_string(param.shape()));
  }
  const auto& h = state.hyper;
  auto grad = param.grad();
  auto w = param.mutable_values();
  auto& s = state.mean_square;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double g = grad[i];
    s[i] = h.decay * s[i] + (1.0 - h.decay) * g * g;
    w[i] -= h.learning_rate * g / (std::sqrt(s[i]) + h.epsilon);
  }
}

Rmsprop::Rmsprop(std::span<const Tensor> params, RmspropHyper hyper) {
  states_.reserve(params.size());
  for (const auto& p : params) states_.emplace_back(p.size(), hyper);
}

void Rmsprop::step(std::span<Tensor> params) {
  if (params.size() != states_.size()) {
    throw std::invalid_argument("Rmsprop::step: " + std::to_string(params.size()) +
                                " parameters for " + std::to_string(states_.size()) +
                                " states");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    rmsprop_step(params[i], states_[i]);
    params[i].zero_grad();
  }
}

Tensor l2_penalty(std::span<const Tensor> params, double beta) {
  if (beta < 0.0) throw std::invalid_argument("l2_penalty: beta must be >= 0");
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  if (total == 0 || beta == 0.0) return Tensor::scalar(0.0);
  const double factor = beta / (2.0 * static_cast<double>(total));
  Tensor acc;
  for (const auto& p : params) {
    Tensor term = sum(square(p));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, factor);
}

}  // namespace sppr
