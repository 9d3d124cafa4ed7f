#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sppr/tensor.hpp"

namespace sppr {

/// Malformed or unusable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Aggregate consumption of one household with per-sample occupancy.
struct RawSeries {
  std::string household_id;
  std::vector<std::int64_t> timestamps;  // epoch seconds, strictly increasing
  std::vector<double> power_w;
  std::vector<int> occupancy;  // 0 or 1

  std::size_t size() const { return timestamps.size(); }
};

struct LoadedSeries {
  RawSeries series;
  std::size_t dropped_rows = 0;  // rows with an empty power field
};

/// Reads `timestamp,power_w,occupancy` CSV. The household id defaults to the
/// file stem.
LoadedSeries load_csv(const std::filesystem::path& path);
LoadedSeries parse_csv(std::string_view text, std::string household_id);

/// Writes the ingestion format; values are printed round-trip exact.
void write_csv(const std::filesystem::path& path, const RawSeries& series);

/// Writes to `path`.tmp then renames over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);
std::string format_csv(const RawSeries& series);

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::size_t kStepsPerDay = 24;

/// Hour-bucket mean of power and majority occupancy (ties count as occupied).
/// Empty buckets are dropped.
RawSeries resample_hourly(const RawSeries& raw);

enum class Split : std::uint8_t { kTrain, kValidation, kTest };

const char* to_string(Split split);

struct NormalizationStats {
  double mean = 0.0;
  double stddev = 1.0;

  double normalize(double watts) const { return (watts - mean) / stddev; }
  double denormalize(double value) const { return value * stddev + mean; }
};

/// N daily windows of T hourly steps, stored row-major.
struct WindowedDataset {
  std::size_t steps = kStepsPerDay;
  std::vector<double> consumption;  // [N x T], watts unless `normalized`
  std::vector<double> occupancy;    // [N x T], 0 or 1
  std::vector<std::int64_t> day_start;
  std::vector<std::uint32_t> household;  // index into household_ids
  std::vector<std::string> household_ids;
  std::vector<Split> split;  // empty until split()
  NormalizationStats stats;
  bool normalized = false;

  std::size_t size() const { return day_start.size(); }
  std::vector<std::size_t> indices(Split which) const;

  /// Rows of consumption / occupancy as [rows x T] tensors.
  Tensor consumption_rows(std::span<const std::size_t> rows) const;
  Tensor occupancy_rows(std::span<const std::size_t> rows) const;

  /// Appends another dataset's windows (same T, both unsplit and unnormalized).
  void append(const WindowedDataset& other);
};

/// Midnight-aligned, non-overlapping daily windows; incomplete days dropped.
/// `utc_offset_s` shifts the day boundary to local midnight.
WindowedDataset window_daily(const RawSeries& hourly, std::int64_t utc_offset_s = 0);

enum class SplitScope { kPooled, kPerHousehold };

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// 85:15 train-pool/test, then 10% of the pool to validation; test and
/// validation counts round down.
SplitCounts split_counts(std::size_t n);

WindowedDataset split(const WindowedDataset& dataset, std::uint64_t seed,
                      SplitScope scope = SplitScope::kPooled);

/// Standardizes consumption with mean and population std of the train split.
WindowedDataset normalize(const WindowedDataset& dataset);

/// Inverse of normalize() on a [N x T] tensor of consumption values.
Tensor denormalize(const Tensor& values, const NormalizationStats& stats);

// Synthetic households -------------------------------------------------------

struct SyntheticProfile {
  double stay_vacant = 0.85;
  double stay_occupied = 0.85;
  double time_of_day_amplitude = 0.1;
  double base_load_w = 100.0;
  double appliance_median_w = 400.0;
  double appliance_log_sigma = 0.5;
  double noise_sigma_w = 30.0;
  std::int64_t start_timestamp = 1338508800;  // 2012-06-01T00:00:00Z
};

/// Probability of entering / leaving the occupied state at hour-of-day `hour`.
double synthetic_enter_probability(const SyntheticProfile& profile, int hour);
double synthetic_leave_probability(const SyntheticProfile& profile, int hour);

/// Hourly series of `n_days` days from a time-of-day modulated two-state
/// occupancy chain and an occupancy-driven load model.
RawSeries synthesize_series(std::size_t n_days, std::uint64_t seed,
                            const SyntheticProfile& profile = {});

WindowedDataset synthesize_dataset(std::size_t n_days, std::uint64_t seed,
                                   const SyntheticProfile& profile = {});

}  // namespace sppr
