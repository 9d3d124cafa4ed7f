#pragma once

#include <cstdint>

#include "sppr/tensor.hpp"

namespace sppr {

/// Fractions of pooled samples: c_ij = share of all samples of class i
/// (1 = vacant/0-label, 2 = occupied/1-label) predicted as class j.
struct ConfusionMatrix {
  double c11 = 0.0;
  double c12 = 0.0;
  double c21 = 0.0;
  double c22 = 0.0;
};

/// Pools every entry of two equally shaped binary tensors.
ConfusionMatrix confusion_matrix(const Tensor& predictions, const Tensor& labels);

/// Mean of the two per-class recalls. Throws if a class is absent.
double balanced_accuracy(const ConfusionMatrix& cm);
double balanced_accuracy(const Tensor& predictions, const Tensor& labels);

/// sum_n ||y_n - y_hat_n||_2 / sum_n ||y_n||_2 over rows of [N x T] inputs.
double ne2(const Tensor& y, const Tensor& y_hat);

struct KsgOptions {
  std::size_t k = 4;
  /// Replace every coordinate by its (average) rank first. Makes the estimate
  /// exactly invariant under strictly monotone coordinate-wise transforms.
  bool rank_transform = true;
};

inline constexpr std::size_t kLeakageNeighbors = 4;

/// Kraskov-Stoegbauer-Grassberger estimator (first variant, max-norm) of
/// I(X;Z) in nats for paired rows of x [N x Dx] and z [N x Dz]. Not clamped.
double ksg_mi(const Tensor& x, const Tensor& z, const KsgOptions& options = {});

/// Leakage of binary sequences x [N x T] through released z [N x T]:
/// per-coordinate standardization of both spaces, Uniform(0, 1e-6) jitter on
/// the x side, then ksg_mi on raw distances with k = 4. Clamped at 0.
double leakage_estimate(const Tensor& x, const Tensor& z, std::uint64_t seed,
                        std::size_t k = kLeakageNeighbors);

}  // namespace sppr
