#include "sppr/mechanism.hpp"

#include <stdexcept>

namespace sppr {

namespace {

constexpr double kProbabilitySlack = 1e-9;

void check_probabilities(const char* op, const Tensor& y, const Tensor& q) {
  if (y.shape() != q.shape()) {
    throw ShapeError(std::string(op) + ": y " + shape_string(y.shape()) +
                     " and q " + shape_string(q.shape()) + " differ");
  }
  for (double v : q.values()) {
    if (!(v >= -kProbabilitySlack && v <= 1.0 + kProbabilitySlack)) {
      throw std::invalid_argument(std::string(op) + ": mask value " +
                                  std::to_string(v) + " outside [0, 1]");
    }
  }
}

template <typename MaskFn>
ReleaseOutput masked(const Tensor& y, const Tensor& q, ReleaseMode mode,
                     MaskFn&& mask_of) {
  auto qv = q.values();
  auto yv = y.values();
  std::vector<double> mask(qv.size()), z(qv.size());
  for (std::size_t i = 0; i < qv.size(); ++i) {
    mask[i] = mask_of(qv[i]);
    z[i] = yv[i] * mask[i];
  }
  return {q.detach(), Tensor::from(q.shape(), std::move(mask)),
          Tensor::from(q.shape(), std::move(z)), mode};
}

}  // namespace

const char* to_string(ReleaseMode mode) {
  switch (mode) {
    case ReleaseMode::kSoftTrain: return "soft";
    case ReleaseMode::kHard: return "hard";
    case ReleaseMode::kMultiplicative: return "multiplicative";
    case ReleaseMode::kStochastic: return "stochastic";
  }
  return "unknown";
}

ReleaseMode parse_release_mode(const std::string& name) {
  if (name == "soft") return ReleaseMode::kSoftTrain;
  if (name == "hard") return ReleaseMode::kHard;
  if (name == "multiplicative") return ReleaseMode::kMultiplicative;
  if (name == "stochastic") return ReleaseMode::kStochastic;
  throw std::invalid_argument("unknown release mode '" + name + "'");
}

ReleaseOutput soft_mask_apply(const Tensor& y, const Tensor& q) {
  check_probabilities("soft_mask_apply", y, q);
  return {q, q, mul(y, q), ReleaseMode::kSoftTrain};
}

ReleaseOutput hard_threshold(const Tensor& y, const Tensor& q, double tau) {
  check_probabilities("hard_threshold", y, q);
  return masked(y, q, ReleaseMode::kHard,
                [tau](double p) { return p >= tau ? 1.0 : 0.0; });
}

ReleaseOutput soft_nonzero_threshold(const Tensor& y, const Tensor& q,
                                     double tau) {
  check_probabilities("soft_nonzero_threshold", y, q);
  return masked(y, q, ReleaseMode::kMultiplicative,
                [tau](double p) { return p >= tau ? p : 0.0; });
}

ReleaseOutput stochastic_release(const Tensor& y, const Tensor& q,
                                 std::mt19937_64& rng) {
  check_probabilities("stochastic_release", y, q);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return masked(y, q, ReleaseMode::kStochastic,
                [&](double p) { return unit(rng) < p ? 1.0 : 0.0; });
}

ReleaseOutput release(const Tensor& y, const Tensor& q, ReleaseMode mode,
                      double tau, std::mt19937_64& rng) {
  switch (mode) {
    case ReleaseMode::kSoftTrain: return soft_mask_apply(y.detach(), q.detach());
    case ReleaseMode::kHard: return hard_threshold(y, q, tau);
    case ReleaseMode::kMultiplicative: return soft_nonzero_threshold(y, q, tau);
    case ReleaseMode::kStochastic: return stochastic_release(y, q, rng);
  }
  throw std::invalid_argument("release: unknown mode");
}

double released_rate(const Tensor& mask) {
  if (mask.rank() != 2) {
    throw ShapeError("released_rate: expected [B x T] mask, got " +
                     shape_string(mask.shape()));
  }
  std::size_t nonzero = 0;
  for (double v : mask.values()) nonzero += (v != 0.0);
  return static_cast<double>(nonzero) / static_cast<double>(mask.dim(0));
}

}  // namespace sppr
