#include "sppr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace sppr {

namespace {

constexpr std::string_view kHeader = "timestamp,power_w,occupancy";

[[noreturn]] void fail_line(std::size_t line, const std::string& why) {
  throw DataError("line " + std::to_string(line) + ": " + why);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    fail_line(line, std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

LoadedSeries parse_csv(std::string_view text, std::string household_id) {
  LoadedSeries out;
  out.series.household_id = std::move(household_id);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kHeader) {
        fail_line(line_no, "expected header '" + std::string(kHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;

    std::string_view fields[3];
    std::size_t start = 0, count = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (count == 3) fail_line(line_no, "expected 3 fields");
        fields[count++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (count != 3) fail_line(line_no, "expected 3 fields");

    const auto ts = parse_number<std::int64_t>(fields[0], line_no, "timestamp");
    const auto occ = parse_number<int>(fields[2], line_no, "occupancy");
    if (occ != 0 && occ != 1) {
      fail_line(line_no, "occupancy must be 0 or 1, got " + std::to_string(occ));
    }
    if (fields[1].empty()) {
      ++out.dropped_rows;
      continue;
    }
    const auto power = parse_number<double>(fields[1], line_no, "power_w");
    if (!std::isfinite(power) || power < 0.0) {
      fail_line(line_no, "power_w must be a finite non-negative number");
    }
    auto& s = out.series;
    if (!s.timestamps.empty() && ts <= s.timestamps.back()) {
      fail_line(line_no, "timestamps must be strictly increasing");
    }
    s.timestamps.push_back(ts);
    s.power_w.push_back(power);
    s.occupancy.push_back(occ);
  }
  if (!header_seen) throw DataError("line 1: missing header");
  return out;
}

LoadedSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_csv(buf.str(), path.stem().string());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_csv(const RawSeries& series) {
  std::string out(kHeader);
  out += '\n';
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    auto r = std::to_chars(buf, buf + sizeof(buf), series.timestamps[i]);
    out.append(buf, r.ptr);
    out += ',';
    r = std::to_chars(buf, buf + sizeof(buf), series.power_w[i]);
    out.append(buf, r.ptr);
    out += ',';
    out += series.occupancy[i] ? '1' : '0';
    out += '\n';
  }
  return out;
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move '" + tmp.string() + "' into place");
  }
}

void write_csv(const std::filesystem::path& path, const RawSeries& series) {
  write_text_atomic(path, format_csv(series));
}

RawSeries resample_hourly(const RawSeries& raw) {
  if (raw.size() == 0) throw DataError("resample_hourly: empty series");
  RawSeries out;
  out.household_id = raw.household_id;
  std::size_t i = 0;
  while (i < raw.size()) {
    const std::int64_t bucket = floor_div(raw.timestamps[i], kSecondsPerHour);
    double total = 0.0;
    std::size_t count = 0, occupied = 0;
    for (; i < raw.size() && floor_div(raw.timestamps[i], kSecondsPerHour) == bucket; ++i) {
      total += raw.power_w[i];
      occupied += static_cast<std::size_t>(raw.occupancy[i]);
      ++count;
    }
    out.timestamps.push_back(bucket * kSecondsPerHour);
    out.power_w.push_back(total / static_cast<double>(count));
    out.occupancy.push_back(2 * occupied >= count ? 1 : 0);
  }
  return out;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "unknown";
}

std::vector<std::size_t> WindowedDataset::indices(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) out.push_back(i);
  }
  return out;
}

namespace {

Tensor gather_rows(const std::vector<double>& data, std::size_t steps,
                   std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size() * steps);
  for (auto r : rows) {
    out.insert(out.end(), data.begin() + static_cast<std::ptrdiff_t>(r * steps),
               data.begin() + static_cast<std::ptrdiff_t>((r + 1) * steps));
  }
  return Tensor::from({rows.size(), steps}, std::move(out));
}

}  // namespace

Tensor WindowedDataset::consumption_rows(std::span<const std::size_t> rows) const {
  return gather_rows(consumption, steps, rows);
}

Tensor WindowedDataset::occupancy_rows(std::span<const std::size_t> rows) const {
  return gather_rows(occupancy, steps, rows);
}

void WindowedDataset::append(const WindowedDataset& other) {
  if (other.steps != steps) throw DataError("append: window lengths differ");
  if (normalized || other.normalized || !split.empty() || !other.split.empty()) {
    throw DataError("append: datasets must be unsplit and unnormalized");
  }
  const auto offset = static_cast<std::uint32_t>(household_ids.size());
  household_ids.insert(household_ids.end(), other.household_ids.begin(),
                       other.household_ids.end());
  consumption.insert(consumption.end(), other.consumption.begin(), other.consumption.end());
  occupancy.insert(occupancy.end(), other.occupancy.begin(), other.occupancy.end());
  day_start.insert(day_start.end(), other.day_start.begin(), other.day_start.end());
  for (auto h : other.household) household.push_back(h + offset);
}

WindowedDataset window_daily(const RawSeries& hourly, std::int64_t utc_offset_s) {
  WindowedDataset out;
  out.household_ids.push_back(hourly.household_id);
  std::size_t i = 0;
  while (i < hourly.size()) {
    const std::int64_t local = hourly.timestamps[i] + utc_offset_s;
    if (local % kSecondsPerHour != 0) {
      throw DataError("window_daily: timestamp " +
                      std::to_string(hourly.timestamps[i]) + " is not on an hour");
    }
    const std::int64_t day = floor_div(local, kSecondsPerDay);
    const std::int64_t day_begin = day * kSecondsPerDay;
    std::size_t j = i;
    bool complete = true;
    for (std::size_t h = 0; h < kStepsPerDay; ++h, ++j) {
      if (j >= hourly.size() ||
          hourly.timestamps[j] + utc_offset_s !=
              day_begin + static_cast<std::int64_t>(h) * kSecondsPerHour) {
        complete = false;
        break;
      }
    }
    if (complete) {
      for (std::size_t h = 0; h < kStepsPerDay; ++h) {
        out.consumption.push_back(hourly.power_w[i + h]);
        out.occupancy.push_back(hourly.occupancy[i + h]);
      }
      out.day_start.push_back(day_begin - utc_offset_s);
      out.household.push_back(0);
      i += kStepsPerDay;
    } else {
      // skip to the first sample of the next day
      while (i < hourly.size() &&
             floor_div(hourly.timestamps[i] + utc_offset_s, kSecondsPerDay) == day) {
        ++i;
      }
    }
  }
  return out;
}

SplitCounts split_counts(std::size_t n) {
  SplitCounts c;
  c.test = (n * 15) / 100;
  const std::size_t pool = n - c.test;
  c.validation = pool / 10;
  c.train = pool - c.validation;
  return c;
}

WindowedDataset split(const WindowedDataset& dataset, std::uint64_t seed,
                      SplitScope scope) {
  if (dataset.size() < 20) {
    throw DataError("split: need at least 20 sequences, have " +
                    std::to_string(dataset.size()));
  }
  WindowedDataset out = dataset;
  out.split.assign(dataset.size(), Split::kTrain);
  std::mt19937_64 rng(seed);

  auto assign = [&](std::vector<std::size_t> members) {
    std::shuffle(members.begin(), members.end(), rng);
    const SplitCounts c = split_counts(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      Split tag = Split::kTrain;
      if (k < c.test) {
        tag = Split::kTest;
      } else if (k < c.test + c.validation) {
        tag = Split::kValidation;
      }
      out.split[members[k]] = tag;
    }
  };

  if (scope == SplitScope::kPooled) {
    std::vector<std::size_t> all(dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    assign(std::move(all));
  } else {
    std::map<std::uint32_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      groups[dataset.household[i]].push_back(i);
    }
    for (auto& [_, members] : groups) assign(std::move(members));
  }
  return out;
}

WindowedDataset normalize(const WindowedDataset& dataset) {
  if (dataset.split.empty()) throw DataError("normalize: dataset has not been split");
  if (dataset.normalized) throw DataError("normalize: dataset is already normalized");
  const auto train = dataset.indices(Split::kTrain);
  const std::size_t t = dataset.steps;
  double total = 0.0;
  for (auto r : train) {
    for (std::size_t s = 0; s < t; ++s) total += dataset.consumption[r * t + s];
  }
  const double n = static_cast<double>(train.size() * t);
  const double mu = total / n;
  double var = 0.0;
  for (auto r : train) {
    for (std::size_t s = 0; s < t; ++s) {
      const double d = dataset.consumption[r * t + s] - mu;
      var += d * d;
    }
  }
  const double sigma = std::sqrt(var / n);
  if (!(sigma > 0.0)) throw DataError("normalize: train consumption has zero variance");

  WindowedDataset out = dataset;
  out.stats = {mu, sigma};
  for (auto& v : out.consumption) v = out.stats.normalize(v);
  out.normalized = true;
  return out;
}

Tensor denormalize(const Tensor& values, const NormalizationStats& stats) {
  std::vector<double> out(values.values().begin(), values.values().end());
  for (auto& v : out) v = stats.denormalize(v);
  return Tensor::from(values.shape(), std::move(out));
}

// ---------------------------------------------------------------------------

namespace {

double time_of_day_modulation(int hour) {
  // peaks at 07:00 and 19:00, troughs at 01:00 and 13:00
  return std::cos(2.0 * std::numbers::pi * (hour - 7) / 12.0);
}

}  // namespace

double synthetic_enter_probability(const SyntheticProfile& p, int hour) {
  return (1.0 - p.stay_vacant) * (1.0 + p.time_of_day_amplitude * time_of_day_modulation(hour));
}

double synthetic_leave_probability(const SyntheticProfile& p, int hour) {
  return (1.0 - p.stay_occupied) * (1.0 - p.time_of_day_amplitude * time_of_day_modulation(hour));
}

RawSeries synthesize_series(std::size_t n_days, std::uint64_t seed,
                            const SyntheticProfile& profile) {
  if (n_days < 20) {
    throw DataError("synthesize: need at least 20 days, got " + std::to_string(n_days));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::lognormal_distribution<double> appliance(std::log(profile.appliance_median_w),
                                                profile.appliance_log_sigma);
  std::normal_distribution<double> noise(0.0, profile.noise_sigma_w);

  RawSeries out;
  out.household_id = "synthetic-" + std::to_string(seed);
  const std::size_t hours = n_days * kStepsPerDay;
  out.timestamps.reserve(hours);
  out.power_w.reserve(hours);
  out.occupancy.reserve(hours);

  int state = unit(rng) < 0.5 ? 1 : 0;
  for (std::size_t k = 0; k < hours; ++k) {
    const int hour = static_cast<int>(k % kStepsPerDay);
    if (k > 0) {
      const double u = unit(rng);
      if (state == 0) {
        state = u < synthetic_enter_probability(profile, hour) ? 1 : 0;
      } else {
        state = u < synthetic_leave_probability(profile, hour) ? 0 : 1;
      }
    }
    double power = profile.base_load_w + noise(rng);
    if (state == 1) power += appliance(rng);
    out.timestamps.push_back(profile.start_timestamp +
                             static_cast<std::int64_t>(k) * kSecondsPerHour);
    out.power_w.push_back(std::max(0.0, power));
    out.occupancy.push_back(state);
  }
  return out;
}

WindowedDataset synthesize_dataset(std::size_t n_days, std::uint64_t seed,
                                   const SyntheticProfile& profile) {
  return window_daily(synthesize_series(n_days, seed, profile));
}

}  // namespace sppr
