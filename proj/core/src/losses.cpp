#include "sppr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sppr {

namespace {

void require_probs(const char* op, const Tensor& probs) {
  if (probs.rank() != 3 || probs.dim(2) != 2) {
    throw ShapeError(std::string(op) + ": expected [B x T x 2] probabilities, got " +
                     shape_string(probs.shape()));
  }
}

}  // namespace

Tensor utility_loss(const Tensor& y, const Tensor& y_hat) {
  if (y.shape() != y_hat.shape()) {
    throw ShapeError("utility_loss: y " + shape_string(y.shape()) +
                     " and y_hat " + shape_string(y_hat.shape()) + " differ");
  }
  return mean(square(sub(y, y_hat)));
}

Tensor adversary_loss(const Tensor& probs, const Tensor& labels) {
  require_probs("adversary_loss", probs);
  const std::size_t b = probs.dim(0), t = probs.dim(1);
  if (labels.shape() != Shape{b, t}) {
    throw ShapeError("adversary_loss: labels " + shape_string(labels.shape()) +
                     " do not match probabilities " + shape_string(probs.shape()));
  }
  std::vector<double> onehot(b * t * 2, 0.0);
  auto lv = labels.values();
  for (std::size_t i = 0; i < b * t; ++i) {
    if (lv[i] != 0.0 && lv[i] != 1.0) {
      throw std::invalid_argument("adversary_loss: label " + std::to_string(lv[i]) +
                                  " is not binary");
    }
    onehot[2 * i + static_cast<std::size_t>(lv[i])] = 1.0;
  }
  Tensor picked = mul(log(clamp(probs, kProbFloor, 1.0 - kProbFloor)),
                      Tensor::from(probs.shape(), std::move(onehot)));
  return scale(sum(picked), -1.0 / static_cast<double>(b * t));
}

Tensor entropy_sum(const Tensor& probs) {
  require_probs("entropy_sum", probs);
  Tensor p = clamp(probs, kProbFloor, 1.0 - kProbFloor);
  return scale(sum(mul(p, log(p))), -1.0 / static_cast<double>(probs.dim(0)));
}

Tensor releaser_loss(const Tensor& y, const Tensor& y_hat, const Tensor& probs,
                     double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("releaser_loss: lambda must be >= 0");
  Tensor distortion = utility_loss(y, y_hat);
  if (lambda == 0.0) return distortion;
  const double steps = static_cast<double>(probs.dim(1));
  return sub(distortion, scale(entropy_sum(probs), lambda / steps));
}

double di_upper_bound(const Tensor& probs) {
  require_probs("di_upper_bound", probs);
  const double steps = static_cast<double>(probs.dim(1));
  const double bound = steps * std::numbers::ln2 - entropy_sum(probs.detach()).item();
  return std::clamp(bound, 0.0, steps * std::numbers::ln2);
}

}  // namespace sppr
