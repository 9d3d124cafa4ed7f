#pragma once

#include "sppr/tensor.hpp"

namespace sppr {

/// Probabilities are clamped into [kProbFloor, 1 - kProbFloor] before logs.
inline constexpr double kProbFloor = 1e-7;

/// Mean squared reconstruction error over all B*T entries of [B x T] inputs.
Tensor utility_loss(const Tensor& y, const Tensor& y_hat);

/// Per-step cross-entropy in nats, averaged over B*T. `probs` is [B x T x 2],
/// `labels` is [B x T] holding 0 or 1.
Tensor adversary_loss(const Tensor& probs, const Tensor& labels);

/// Sum over steps of the batch-averaged entropy (nats) of the per-step
/// predictive distribution in `probs` [B x T x 2].
Tensor entropy_sum(const Tensor& probs);

/// utility_loss - (lambda / T) * entropy_sum.
Tensor releaser_loss(const Tensor& y, const Tensor& y_hat, const Tensor& probs,
                     double lambda);

/// T * ln 2 - entropy_sum(probs): upper bound on the directed information
/// from the private attribute to the adversary's estimate, in nats.
double di_upper_bound(const Tensor& probs);

/// Scalars from one evaluation of the three losses.
struct LossBundle {
  double utility = 0.0;
  double adversary = 0.0;
  double entropy = 0.0;
  double releaser = 0.0;
  double lambda = 0.0;
  double di_bound = 0.0;
};

}  // namespace sppr
