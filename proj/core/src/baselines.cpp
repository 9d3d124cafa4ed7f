#include "sppr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sppr {

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Half-sample symmetric reflection: ... x1 x0 | x0 x1 ... x(n-1) | x(n-1) ...
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  if (k >= static_cast<std::ptrdiff_t>(n)) k = period - 1 - k;
  return static_cast<std::size_t>(k);
}

void require_rows(const char* op, const Tensor& y) {
  if (y.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected [N x T], got " + shape_string(y.shape()));
  }
}

}  // namespace

double FirFilter::magnitude_response(double frequency) const {
  const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(coefficients.size() / 2);
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < coefficients.size(); ++n) {
    const double phase = -2.0 * std::numbers::pi * frequency *
                         static_cast<double>(static_cast<std::ptrdiff_t>(n) - center);
    acc += coefficients[n] * std::polar(1.0, phase);
  }
  return std::abs(acc);
}

FirFilter fir_lowpass_design(std::size_t decimation, std::size_t steps) {
  if (decimation == 0) throw std::invalid_argument("fir_lowpass_design: d must be >= 1");
  if (steps % decimation != 0) {
    throw std::invalid_argument("fir_lowpass_design: d=" + std::to_string(decimation) +
                                " does not divide T=" + std::to_string(steps));
  }
  FirFilter f;
  f.decimation = decimation;
  f.cutoff = 0.5 / static_cast<double>(decimation);
  const std::size_t half = 4 * decimation;
  const std::size_t taps = 2 * half + 1;
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
  f.coefficients.resize(taps);
  for (std::size_t n = 0; n < taps; ++n) {
    const double offset = static_cast<double>(n) - static_cast<double>(half);
    const double r = offset / static_cast<double>(half);
    const double window =
        std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    f.coefficients[n] = 2.0 * f.cutoff * sinc(2.0 * f.cutoff * offset) * window;
  }
  const double dc = std::accumulate(f.coefficients.begin(), f.coefficients.end(), 0.0);
  for (auto& c : f.coefficients) c /= dc;
  return f;
}

std::vector<double> fir_apply(const FirFilter& filter, std::span<const double> signal) {
  const std::size_t n = signal.size();
  const auto half = static_cast<std::ptrdiff_t>(filter.coefficients.size() / 2);
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < filter.coefficients.size(); ++k) {
      const std::ptrdiff_t idx =
          static_cast<std::ptrdiff_t>(t) + half - static_cast<std::ptrdiff_t>(k);
      acc += filter.coefficients[k] * signal[reflect(idx, n)];
    }
    out[t] = acc;
  }
  return out;
}

std::vector<double> uniform_downsample(std::span<const double> y, std::size_t decimation) {
  const FirFilter filter = fir_lowpass_design(decimation, y.size());
  std::vector<double> filtered = fir_apply(filter, y);
  std::vector<double> z(y.size(), 0.0);
  for (std::size_t t = 0; t < y.size(); t += decimation) z[t] = filtered[t];
  return z;
}

ReleaseOutput uniform_downsample(const Tensor& y, std::size_t decimation) {
  require_rows("uniform_downsample", y);
  const std::size_t rows = y.dim(0), steps = y.dim(1);
  const FirFilter filter = fir_lowpass_design(decimation, steps);
  std::vector<double> z(rows * steps, 0.0), mask(rows * steps, 0.0);
  auto yv = y.values();
  for (std::size_t r = 0; r < rows; ++r) {
    auto filtered = fir_apply(filter, yv.subspan(r * steps, steps));
    for (std::size_t t = 0; t < steps; t += decimation) {
      z[r * steps + t] = filtered[t];
      mask[r * steps + t] = 1.0;
    }
  }
  Tensor m = Tensor::from(y.shape(), std::move(mask));
  return {m, m, Tensor::from(y.shape(), std::move(z)), ReleaseMode::kHard};
}

namespace {

std::vector<std::size_t> pick_slots(std::size_t steps, double rate, std::mt19937_64& rng) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw std::invalid_argument("random_downsample: rate must lie in (0, 1]");
  }
  const auto keep = static_cast<std::size_t>(std::lround(rate * static_cast<double>(steps)));
  std::vector<std::size_t> slots(steps);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, steps - 1);
    std::swap(slots[i], slots[pick(rng)]);
  }
  slots.resize(keep);
  return slots;
}

}  // namespace

std::vector<double> random_downsample(std::span<const double> y, double rate,
                                      std::mt19937_64& rng) {
  std::vector<double> z(y.size(), 0.0);
  for (auto t : pick_slots(y.size(), rate, rng)) z[t] = y[t];
  return z;
}

ReleaseOutput random_downsample(const Tensor& y, double rate, std::mt19937_64& rng) {
  require_rows("random_downsample", y);
  const std::size_t rows = y.dim(0), steps = y.dim(1);
  std::vector<double> z(rows * steps, 0.0), mask(rows * steps, 0.0);
  auto yv = y.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto t : pick_slots(steps, rate, rng)) {
      z[r * steps + t] = yv[r * steps + t];
      mask[r * steps + t] = 1.0;
    }
  }
  Tensor m = Tensor::from(y.shape(), std::move(mask));
  return {m, m, Tensor::from(y.shape(), std::move(z)), ReleaseMode::kHard};
}

}  // namespace sppr
