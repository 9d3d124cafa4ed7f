#include "sppr/metrics.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <limits>
#include <span>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace sppr {

ConfusionMatrix confusion_matrix(const Tensor& predictions, const Tensor& labels) {
  if (predictions.shape() != labels.shape()) {
    throw ShapeError("confusion_matrix: predictions " +
                     shape_string(predictions.shape()) + " and labels " +
                     shape_string(labels.shape()) + " differ");
  }
  auto p = predictions.values();
  auto l = labels.values();
  double counts[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < p.size(); ++i) {
    if ((p[i] != 0.0 && p[i] != 1.0) || (l[i] != 0.0 && l[i] != 1.0)) {
      throw std::invalid_argument("confusion_matrix: values must be 0 or 1");
    }
    counts[static_cast<int>(l[i])][static_cast<int>(p[i])] += 1.0;
  }
  const double n = static_cast<double>(p.size());
  return {counts[0][0] / n, counts[0][1] / n, counts[1][0] / n, counts[1][1] / n};
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  const double class1 = cm.c11 + cm.c12;
  const double class2 = cm.c21 + cm.c22;
  if (class1 <= 0.0 || class2 <= 0.0) {
    throw std::invalid_argument("balanced_accuracy: undefined when a class is absent");
  }
  return 0.5 * (cm.c11 / class1 + cm.c22 / class2);
}

double balanced_accuracy(const Tensor& predictions, const Tensor& labels) {
  return balanced_accuracy(confusion_matrix(predictions, labels));
}

double ne2(const Tensor& y, const Tensor& y_hat) {
  if (y.shape() != y_hat.shape() || y.rank() != 2) {
    throw ShapeError("ne2: y " + shape_string(y.shape()) + " and y_hat " +
                     shape_string(y_hat.shape()) + " must be equal [N x T]");
  }
  const std::size_t rows = y.dim(0), cols = y.dim(1);
  auto a = y.values();
  auto b = y_hat.values();
  double num = 0.0, den = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double err = 0.0, norm = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = a[r * cols + c] - b[r * cols + c];
      err += d * d;
      norm += a[r * cols + c] * a[r * cols + c];
    }
    num += std::sqrt(err);
    den += std::sqrt(norm);
  }
  if (den == 0.0) throw std::invalid_argument("ne2: reference signal is identically zero");
  return num / den;
}

namespace {

// Column-wise average ranks (1-based) of a row-major [N x D] array.
std::vector<double> rank_columns(std::span<const double> values, std::size_t rows,
                                 std::size_t cols) {
  std::vector<double> out(values.size());
  std::vector<std::size_t> order(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return values[a * cols + c] < values[b * cols + c];
    });
    std::size_t i = 0;
    while (i < rows) {
      std::size_t j = i;
      while (j + 1 < rows &&
             values[order[j + 1] * cols + c] == values[order[i] * cols + c]) {
        ++j;
      }
      const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) out[order[k] * cols + c] = rank;
      i = j + 1;
    }
  }
  return out;
}

double max_norm(const double* a, const double* b, std::size_t dims) {
  double d = 0.0;
  for (std::size_t i = 0; i < dims; ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

double ksg_mi(const Tensor& x, const Tensor& z, const KsgOptions& options) {
  if (x.rank() != 2 || z.rank() != 2 || x.dim(0) != z.dim(0)) {
    throw ShapeError("ksg_mi: x " + shape_string(x.shape()) + " and z " +
                     shape_string(z.shape()) + " must be paired [N x D] arrays");
  }
  const std::size_t n = x.dim(0), dx = x.dim(1), dz = z.dim(1);
  const std::size_t k = options.k;
  if (k < 1 || n <= k) {
    throw std::invalid_argument("ksg_mi: need N > k >= 1 (N=" + std::to_string(n) +
                                ", k=" + std::to_string(k) + ")");
  }
  std::vector<double> xs(x.values().begin(), x.values().end());
  std::vector<double> zs(z.values().begin(), z.values().end());
  if (options.rank_transform) {
    xs = rank_columns(xs, n, dx);
    zs = rank_columns(zs, n, dz);
  }

  std::vector<double> dist_x(n), dist_z(n), joint(n);
  double digamma_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dist_x[j] = max_norm(&xs[i * dx], &xs[j * dx], dx);
      dist_z[j] = max_norm(&zs[i * dz], &zs[j * dz], dz);
      joint[j] = std::max(dist_x[j], dist_z[j]);
    }
    joint[i] = std::numeric_limits<double>::infinity();
    std::nth_element(joint.begin(), joint.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     joint.end());
    const double eps = joint[k - 1];
    if (!(eps > 0.0)) {
      throw std::invalid_argument(
          "ksg_mi: duplicate joint samples (zero neighbour distance); add a small jitter");
    }
    std::size_t nx = 0, nz = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      nx += dist_x[j] < eps;
      nz += dist_z[j] < eps;
    }
    digamma_sum += boost::math::digamma(static_cast<double>(nx + 1)) +
                   boost::math::digamma(static_cast<double>(nz + 1));
  }
  return boost::math::digamma(static_cast<double>(k)) +
         boost::math::digamma(static_cast<double>(n)) -
         digamma_sum / static_cast<double>(n);
}

namespace {

std::vector<double> standardize_columns(std::span<const double> values,
                                        std::size_t rows, std::size_t cols) {
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t c = 0; c < cols; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mu += values[r * cols + c];
    mu /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = values[r * cols + c] - mu;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
      out[r * cols + c] = sd > 0.0 ? (values[r * cols + c] - mu) / sd : 0.0;
    }
  }
  return out;
}

}  // namespace

double leakage_estimate(const Tensor& x, const Tensor& z, std::uint64_t seed,
                        std::size_t k) {
  if (x.rank() != 2 || z.rank() != 2 || x.dim(0) != z.dim(0)) {
    throw ShapeError("leakage_estimate: x " + shape_string(x.shape()) + " and z " +
                     shape_string(z.shape()) + " must be paired [N x T] arrays");
  }
  const std::size_t n = x.dim(0);
  auto xs = standardize_columns(x.values(), n, x.dim(1));
  auto zs = standardize_columns(z.values(), n, z.dim(1));
  // A release that never varies carries no information; the estimator would
  // only return rounding noise around zero.
  if (std::all_of(zs.begin(), zs.end(), [](double v) { return v == 0.0; })) return 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.0, 1e-6);
  for (auto& v : xs) v += jitter(rng);
  const double mi = ksg_mi(Tensor::from(x.shape(), std::move(xs)),
                           Tensor::from(z.shape(), std::move(zs)),
                           KsgOptions{k, false});
  return std::max(0.0, mi);
}

}  // namespace sppr
