#pragma once

#include <span>
#include <vector>

#include "sppr/tensor.hpp"

namespace sppr {

struct RmspropHyper {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
};

/// Running average of squared gradients for one parameter tensor.
struct RmspropState {
  std::vector<double> mean_square;
  RmspropHyper hyper;

  RmspropState() = default;
  RmspropState(std::size_t size, RmspropHyper h) : mean_square(size, 0.0), hyper(h) {}
};

/// s <- rho*s + (1-rho)*g^2 ; w <- w - lr*g/(sqrt(s)+eps). Throws if the
/// parameter has no gradient or the state does not match its size.
void rmsprop_step(Tensor& param, RmspropState& state);

/// One RmspropState per parameter tensor, stepped together.
class Rmsprop {
 public:
  Rmsprop() = default;
  Rmsprop(std::span<const Tensor> params, RmspropHyper hyper);

  /// Applies rmsprop_step to every parameter, then zeroes their gradients.
  void step(std::span<Tensor> params);

  const std::vector<RmspropState>& states() const { return states_; }

 private:
  std::vector<RmspropState> states_;
};

/// beta * sum_i ||w_i||^2 / (2 * N) with N the total element count; tracked
/// whenever any parameter is, so its gradient is beta * w / N.
Tensor l2_penalty(std::span<const Tensor> params, double beta);

}  // namespace sppr
