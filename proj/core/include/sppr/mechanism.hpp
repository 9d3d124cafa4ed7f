#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "sppr/tensor.hpp"

namespace sppr {

enum class ReleaseMode { kSoftTrain, kHard, kMultiplicative, kStochastic };

const char* to_string(ReleaseMode mode);
ReleaseMode parse_release_mode(const std::string& name);

/// Result of masking consumption y [B x T] with release probabilities q.
/// Invariant: z == y * mask elementwise.
struct ReleaseOutput {
  Tensor q;
  Tensor mask;
  Tensor z;
  ReleaseMode mode = ReleaseMode::kSoftTrain;
};

inline constexpr double kDefaultThreshold = 0.5;

/// z = y * q. Differentiable through both operands.
ReleaseOutput soft_mask_apply(const Tensor& y, const Tensor& q);

/// 0-1 mask: release where q >= tau (ties release).
ReleaseOutput hard_threshold(const Tensor& y, const Tensor& q, double tau);

/// Zero / non-zero mask: keep q where q >= tau, zero elsewhere.
ReleaseOutput soft_nonzero_threshold(const Tensor& y, const Tensor& q, double tau);

/// Independent Bernoulli(q) release per slot.
ReleaseOutput stochastic_release(const Tensor& y, const Tensor& q,
                                 std::mt19937_64& rng);

/// Test-time dispatcher over the three deployable modes.
ReleaseOutput release(const Tensor& y, const Tensor& q, ReleaseMode mode,
                      double tau, std::mt19937_64& rng);

/// Mean count of non-zero mask entries per row of a [B x T] mask.
double released_rate(const Tensor& mask);

}  // namespace sppr
