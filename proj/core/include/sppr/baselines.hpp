#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sppr/mechanism.hpp"
#include "sppr/tensor.hpp"

namespace sppr {

/// Linear-phase lowpass FIR (odd length, symmetric taps, unit DC gain).
struct FirFilter {
  std::vector<double> coefficients;
  double cutoff = 0.5;  // cycles per sample; 0.5 is Nyquist
  std::size_t decimation = 1;

  /// |H(f)| at normalized frequency f (cycles per sample).
  double magnitude_response(double frequency) const;
};

inline constexpr double kKaiserBeta = 5.0;

/// Kaiser-windowed sinc with cutoff 1/(2d), 8d+1 taps, unit DC gain. `d` must
/// divide `steps`. d = 1 yields the identity filter.
FirFilter fir_lowpass_design(std::size_t decimation, std::size_t steps = 24);

/// Convolves with the filter using half-sample symmetric edge extension.
std::vector<double> fir_apply(const FirFilter& filter, std::span<const double> signal);

/// Anti-aliased decimation kept at full length: filtered values at slots
/// 0, d, 2d, ... and zeros elsewhere.
std::vector<double> uniform_downsample(std::span<const double> y, std::size_t decimation);
/// Row-wise over a [N x T] tensor; the mask marks the retained slots.
ReleaseOutput uniform_downsample(const Tensor& y, std::size_t decimation);

/// Keeps y at round(rate * T) distinct uniformly chosen slots, zeros elsewhere.
std::vector<double> random_downsample(std::span<const double> y, double rate,
                                      std::mt19937_64& rng);
ReleaseOutput random_downsample(const Tensor& y, double rate, std::mt19937_64& rng);

}  // namespace sppr
