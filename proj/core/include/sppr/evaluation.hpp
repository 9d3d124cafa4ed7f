#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sppr/checkpoint.hpp"
#include "sppr/data.hpp"
#include "sppr/mechanism.hpp"
#include "sppr/metrics.hpp"
#include "sppr/trainer.hpp"

namespace sppr {

/// One row of the trade-off tables. `achieved_mse` is the per-step squared
/// error in normalized units; `ne2` uses de-normalized watts.
struct TradeoffPoint {
  double lambda = 0.0;
  double ne2 = 0.0;
  double balanced_accuracy = 0.0;
  double samples_per_day = 0.0;
  double ksg_mi_nats = 0.0;
  double achieved_mse = 0.0;
  std::string mode;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok" or "failed: <reason>"

  bool ok() const { return status == "ok"; }
};

struct EvalOptions {
  SupervisedConfig attacker{};
  SupervisedConfig utility{};
  double width_scale = 1.0;
  std::size_t random_repeats = 5;
  std::size_t ksg_k = kLeakageNeighbors;
  std::uint64_t seed = 1;
};

/// Released sequences for every row of a dataset, in normalized units.
struct ReleasedData {
  Tensor z;     // [N x T]
  Tensor mask;  // [N x T], 0 or 1
};

/// How the evaluation obtains y_hat from the released data.
enum class Reconstruction { kUtilityNetwork, kIdentity };

/// Networks named "releaser", "adversary" and, unless additive, "utility".
Checkpoint system_checkpoint(const TrainedSystem& system);
/// Inverse of system_checkpoint() for networks shaped by `config`.
TrainedSystem system_from_checkpoint(const Checkpoint& checkpoint, const TrainerConfig& config);

/// Applies a trained releaser to all rows with test-time thresholding
/// (additive systems ignore `mode` and release y + n).
ReleasedData sanitize_all(const TrainedSystem& system, const WindowedDataset& dataset,
                          ReleaseMode mode, double tau, std::uint64_t seed);

/// Trains a fresh attacker (and utility network) on released train rows with
/// validation early stopping, then scores the test rows.
TradeoffPoint evaluate_release(const WindowedDataset& dataset, const ReleasedData& released,
                               Reconstruction reconstruction, const EvalOptions& options);

TradeoffPoint evaluate_system(const TrainedSystem& system, const WindowedDataset& dataset,
                              ReleaseMode mode, double tau, const EvalOptions& options);
TradeoffPoint evaluate_uniform(const WindowedDataset& dataset, std::size_t decimation,
                               const EvalOptions& options);
/// Mean over `options.random_repeats` independent slot draws.
TradeoffPoint evaluate_random(const WindowedDataset& dataset, double rate,
                              const EvalOptions& options);
/// Unmodified consumption released (attacker ceiling).
TradeoffPoint evaluate_raw(const WindowedDataset& dataset, const EvalOptions& options);

struct SweepConfig {
  TrainerConfig trainer{};
  std::vector<double> lambdas;
  std::vector<std::uint64_t> seeds{1};
  ReleaseMode test_mode = ReleaseMode::kHard;
  bool uniform_baselines = false;
  std::vector<std::size_t> decimations{2, 3, 4, 6, 8, 12};
  std::vector<double> random_rates;
  EvalOptions eval{};
  std::size_t jobs = 1;
  /// Optional checkpoint directory; empty disables per-point checkpoints.
  std::filesystem::path checkpoint_dir;
};

/// Trains and evaluates every (lambda, seed) pair plus requested baselines.
/// Output order depends only on the configuration, not on `jobs`. Failed
/// points are returned with a failed status instead of aborting the sweep.
std::vector<TradeoffPoint> tradeoff_sweep(const WindowedDataset& dataset,
                                          const SweepConfig& config);

inline constexpr const char* kResultsHeader =
    "lambda,ne2,balanced_accuracy,avg_samples_per_day,ksg_mi_nats,achieved_mse,mode,seed";
inline constexpr const char* kHistoryHeader = "iteration,L_U,L_A,L_R,entropy_sum";

/// Shortest round-trip decimal form.
std::string format_double(double value);

/// Successful points only, exact header.
std::string format_results_csv(const std::vector<TradeoffPoint>& points);
/// mode,lambda,seed,status for every point.
std::string format_status_csv(const std::vector<TradeoffPoint>& points);
std::string format_history_csv(const std::vector<HistoryEntry>& history);

/// results.csv, status.csv and plotdata_{tradeoff,rate,mi}.csv in `dir`.
void write_sweep_outputs(const std::filesystem::path& dir,
                         const std::vector<TradeoffPoint>& points);

}  // namespace sppr
