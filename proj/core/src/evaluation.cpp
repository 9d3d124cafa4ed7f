#include "sppr/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "sppr/baselines.hpp"

namespace sppr {

namespace {

constexpr std::uint64_t kAttackerStream = 11;
constexpr std::uint64_t kUtilityStream = 12;
constexpr std::uint64_t kLeakageStream = 13;
constexpr std::uint64_t kRandomStream = 100;

std::vector<std::size_t> all_rows(const WindowedDataset& ds) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

Tensor gather_rows(const Tensor& data, const std::vector<std::size_t>& rows) {
  const std::size_t cols = data.dim(1);
  auto v = data.values();
  std::vector<double> out;
  out.reserve(rows.size() * cols);
  for (auto r : rows) {
    auto row = v.subspan(r * cols, cols);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::from({rows.size(), cols}, std::move(out));
}

SupervisedConfig reseeded(SupervisedConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

std::string system_mode_name(const TrainedSystem& system, ReleaseMode mode) {
  std::string name = to_string(system.config.mode);
  if (system.config.mode != SanitizerMode::kAdditive &&
      mode != test_release_mode(system.config.mode)) {
    name += std::string("+") + to_string(mode);
  }
  return name;
}

}  // namespace

Checkpoint system_checkpoint(const TrainedSystem& system) {
  Checkpoint ckpt{to_checkpoint("releaser", system.releaser),
                  to_checkpoint("adversary", system.adversary)};
  if (!system.utility.layers.empty()) ckpt.push_back(to_checkpoint("utility", system.utility));
  return ckpt;
}

TrainedSystem system_from_checkpoint(const Checkpoint& checkpoint, const TrainerConfig& config) {
  auto require = [&](const char* name) -> const CheckpointNetwork& {
    const CheckpointNetwork* net = find_network(checkpoint, name);
    if (net == nullptr) throw CheckpointError(std::string("checkpoint has no network \"") + name + "\"");
    return *net;
  };
  TrainedSystem system;
  system.config = config;
  system.releaser = params_from_checkpoint(require("releaser"), config.releaser_net());
  system.adversary = params_from_checkpoint(require("adversary"), config.adversary_net());
  if (config.mode != SanitizerMode::kAdditive) {
    system.utility = params_from_checkpoint(require("utility"), config.utility_net());
  }
  return system;
}

ReleasedData sanitize_all(const TrainedSystem& system, const WindowedDataset& dataset,
                          ReleaseMode mode, double tau, std::uint64_t seed) {
  const auto rows = all_rows(dataset);
  std::mt19937_64 rng(seed);
  Tensor y = dataset.consumption_rows(rows);
  Tensor x = dataset.occupancy_rows(rows);
  Tensor u = seed_noise(rows.size(), dataset.steps, system.config.noise_dim, rng);
  ModelParams releaser = system.releaser.clone(false);
  Tensor out = releaser_output(releaser, y, x, u);
  if (system.config.mode == SanitizerMode::kAdditive) {
    return {add(y, out), Tensor::full(y.shape(), 1.0)};
  }
  ReleaseOutput r = release(y, out, mode, tau, rng);
  return {r.z.detach(), r.mask.detach()};
}

TradeoffPoint evaluate_release(const WindowedDataset& dataset, const ReleasedData& released,
                               Reconstruction reconstruction, const EvalOptions& options) {
  if (!dataset.normalized) {
    throw std::invalid_argument("evaluate_release: dataset must be split and normalized");
  }
  const auto train_rows = dataset.indices(Split::kTrain);
  const auto val_rows = dataset.indices(Split::kValidation);
  const auto test_rows = dataset.indices(Split::kTest);
  if (train_rows.empty() || val_rows.empty() || test_rows.empty()) {
    throw std::invalid_argument("evaluate_release: every split must be non-empty");
  }
  const Tensor z_tr = gather_rows(released.z, train_rows);
  const Tensor z_val = gather_rows(released.z, val_rows);
  const Tensor z_te = gather_rows(released.z, test_rows);
  const Tensor x_tr = dataset.occupancy_rows(train_rows);
  const Tensor x_val = dataset.occupancy_rows(val_rows);
  const Tensor x_te = dataset.occupancy_rows(test_rows);
  const Tensor y_te = dataset.consumption_rows(test_rows);

  TradeoffPoint point;
  const ModelParams attacker =
      train_attacker(z_tr, x_tr, z_val, x_val, attacker_config(options.width_scale),
                     reseeded(options.attacker, derive_seed(options.seed, kAttackerStream)));
  point.balanced_accuracy = balanced_accuracy(predict_labels(attacker, z_te), x_te);

  Tensor y_hat = z_te;
  if (reconstruction == Reconstruction::kUtilityNetwork) {
    const ModelParams utility = train_utility(
        z_tr, dataset.consumption_rows(train_rows), z_val, dataset.consumption_rows(val_rows),
        utility_config(options.width_scale),
        reseeded(options.utility, derive_seed(options.seed, kUtilityStream)));
    y_hat = utility_reconstruction(utility, z_te);
  }
  point.achieved_mse = utility_loss(y_te, y_hat).item();
  point.ne2 = ne2(denormalize(y_te, dataset.stats), denormalize(y_hat, dataset.stats));
  point.samples_per_day = released_rate(gather_rows(released.mask, test_rows));
  point.ksg_mi_nats =
      leakage_estimate(x_te, z_te, derive_seed(options.seed, kLeakageStream), options.ksg_k);
  point.seed = options.seed;
  return point;
}

TradeoffPoint evaluate_system(const TrainedSystem& system, const WindowedDataset& dataset,
                              ReleaseMode mode, double tau, const EvalOptions& options) {
  const ReleasedData released = sanitize_all(system, dataset, mode, tau, options.seed);
  const auto recon = system.config.mode == SanitizerMode::kAdditive
                         ? Reconstruction::kIdentity
                         : Reconstruction::kUtilityNetwork;
  TradeoffPoint point = evaluate_release(dataset, released, recon, options);
  point.lambda = system.config.lambda;
  point.mode = system_mode_name(system, mode);
  return point;
}

TradeoffPoint evaluate_uniform(const WindowedDataset& dataset, std::size_t decimation,
                               const EvalOptions& options) {
  ReleaseOutput r = uniform_downsample(dataset.consumption_rows(all_rows(dataset)), decimation);
  TradeoffPoint point =
      evaluate_release(dataset, {r.z, r.mask}, Reconstruction::kUtilityNetwork, options);
  point.mode = "uniform-d" + std::to_string(decimation);
  return point;
}

TradeoffPoint evaluate_random(const WindowedDataset& dataset, double rate,
                              const EvalOptions& options) {
  if (options.random_repeats == 0) {
    throw std::invalid_argument("evaluate_random: random_repeats must be >= 1");
  }
  const Tensor y = dataset.consumption_rows(all_rows(dataset));
  TradeoffPoint mean;
  for (std::size_t rep = 0; rep < options.random_repeats; ++rep) {
    EvalOptions opts = options;
    opts.seed = derive_seed(options.seed, kRandomStream + rep);
    std::mt19937_64 rng(opts.seed);
    ReleaseOutput r = random_downsample(y, rate, rng);
    TradeoffPoint p =
        evaluate_release(dataset, {r.z, r.mask}, Reconstruction::kUtilityNetwork, opts);
    mean.ne2 += p.ne2;
    mean.balanced_accuracy += p.balanced_accuracy;
    mean.samples_per_day += p.samples_per_day;
    mean.ksg_mi_nats += p.ksg_mi_nats;
    mean.achieved_mse += p.achieved_mse;
  }
  const double n = static_cast<double>(options.random_repeats);
  mean.ne2 /= n;
  mean.balanced_accuracy /= n;
  mean.samples_per_day /= n;
  mean.ksg_mi_nats /= n;
  mean.achieved_mse /= n;
  mean.mode = "random-r" + format_double(rate);
  mean.seed = options.seed;
  return mean;
}

TradeoffPoint evaluate_raw(const WindowedDataset& dataset, const EvalOptions& options) {
  const Tensor y = dataset.consumption_rows(all_rows(dataset));
  TradeoffPoint point = evaluate_release(dataset, {y, Tensor::full(y.shape(), 1.0)},
                                         Reconstruction::kIdentity, options);
  point.mode = "raw";
  return point;
}

// ---------------------------------------------------------------------------

namespace {

struct SweepJob {
  enum Kind { kSmart, kUniform, kRandom } kind;
  double lambda = 0.0;
  std::size_t decimation = 0;
  double rate = 0.0;
  std::uint64_t seed = 0;
};

TradeoffPoint run_job(const WindowedDataset& dataset, const SweepConfig& config,
                      const SweepJob& job) {
  EvalOptions eval = config.eval;
  eval.seed = derive_seed(config.eval.seed, job.seed);
  eval.width_scale = config.trainer.width_scale;
  switch (job.kind) {
    case SweepJob::kSmart: {
      TrainerConfig tc = config.trainer;
      tc.lambda = job.lambda;
      tc.seed = job.seed;
      TrainedSystem system = train(dataset, tc);
      if (!config.checkpoint_dir.empty()) {
        save_checkpoint(config.checkpoint_dir / ("lambda" + format_double(job.lambda) +
                                                 "_seed" + std::to_string(job.seed) + ".sppr"),
                        system_checkpoint(system));
      }
      return evaluate_system(system, dataset, config.test_mode, tc.tau, eval);
    }
    case SweepJob::kUniform:
      return evaluate_uniform(dataset, job.decimation, eval);
    case SweepJob::kRandom:
      return evaluate_random(dataset, job.rate, eval);
  }
  throw std::logic_error("run_job: unknown job kind");
}

std::string job_mode(const SweepConfig& config, const SweepJob& job) {
  switch (job.kind) {
    case SweepJob::kSmart: {
      std::string name = to_string(config.trainer.mode);
      if (config.trainer.mode != SanitizerMode::kAdditive &&
          config.test_mode != test_release_mode(config.trainer.mode)) {
        name += std::string("+") + to_string(config.test_mode);
      }
      return name;
    }
    case SweepJob::kUniform: return "uniform-d" + std::to_string(job.decimation);
    case SweepJob::kRandom: return "random-r" + format_double(job.rate);
  }
  return "unknown";
}

}  // namespace

std::vector<TradeoffPoint> tradeoff_sweep(const WindowedDataset& dataset,
                                          const SweepConfig& config) {
  if (config.lambdas.empty()) throw std::invalid_argument("tradeoff_sweep: empty lambda list");
  if (config.seeds.empty()) throw std::invalid_argument("tradeoff_sweep: empty seed list");
  config.trainer.validate();

  std::vector<SweepJob> jobs;
  for (auto seed : config.seeds) {
    for (double lambda : config.lambdas) {
      jobs.push_back({SweepJob::kSmart, lambda, 0, 0.0, seed});
    }
    if (config.uniform_baselines) {
      for (auto d : config.decimations) jobs.push_back({SweepJob::kUniform, 0.0, d, 0.0, seed});
    }
    for (double r : config.random_rates) jobs.push_back({SweepJob::kRandom, 0.0, 0, r, seed});
  }

  std::vector<TradeoffPoint> points(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        points[i] = run_job(dataset, config, jobs[i]);
      } catch (const std::exception& e) {
        points[i] = TradeoffPoint{};
        points[i].status = std::string("failed: ") + e.what();
      }
      points[i].lambda = jobs[i].lambda;
      points[i].seed = jobs[i].seed;
      points[i].mode = job_mode(config, jobs[i]);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.jobs, 1, jobs.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return points;
}

// ---------------------------------------------------------------------------

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_results_csv(const std::vector<TradeoffPoint>& points) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& p : points) {
    if (!p.ok()) continue;
    out += format_double(p.lambda) + "," + format_double(p.ne2) + "," +
           format_double(p.balanced_accuracy) + "," + format_double(p.samples_per_day) + "," +
           format_double(p.ksg_mi_nats) + "," + format_double(p.achieved_mse) + "," + p.mode +
           "," + std::to_string(p.seed) + "\n";
  }
  return out;
}

std::string format_status_csv(const std::vector<TradeoffPoint>& points) {
  std::string out = "mode,lambda,seed,status\n";
  for (const auto& p : points) {
    std::string status = p.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out += p.mode + "," + format_double(p.lambda) + "," + std::to_string(p.seed) + "," +
           status + "\n";
  }
  return out;
}

std::string format_history_csv(const std::vector<HistoryEntry>& history) {
  std::string out = std::string(kHistoryHeader) + "\n";
  for (const auto& h : history) {
    out += std::to_string(h.iteration) + "," + format_double(h.utility_loss) + "," +
           format_double(h.adversary_loss) + "," + format_double(h.releaser_loss) + "," +
           format_double(h.entropy_sum) + "\n";
  }
  return out;
}

void write_sweep_outputs(const std::filesystem::path& dir,
                         const std::vector<TradeoffPoint>& points) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "results.csv", format_results_csv(points));
  write_text_atomic(dir / "status.csv", format_status_csv(points));

  auto plot = [&](const char* file, const char* x_name, const char* y_name, auto x_of,
                  auto y_of) {
    std::string out = std::string("mode,lambda,seed,") + x_name + "," + y_name + "\n";
    for (const auto& p : points) {
      if (!p.ok()) continue;
      out += p.mode + "," + format_double(p.lambda) + "," + std::to_string(p.seed) + "," +
             format_double(x_of(p)) + "," + format_double(y_of(p)) + "\n";
    }
    write_text_atomic(dir / file, out);
  };
  auto ne2_of = [](const TradeoffPoint& p) { return p.ne2; };
  auto ba_of = [](const TradeoffPoint& p) { return p.balanced_accuracy; };
  plot("plotdata_tradeoff.csv", "ne2", "balanced_accuracy", ne2_of, ba_of);
  plot("plotdata_rate.csv", "avg_samples_per_day", "balanced_accuracy",
       [](const TradeoffPoint& p) { return p.samples_per_day; }, ba_of);
  plot("plotdata_mi.csv", "ne2", "ksg_mi_nats", ne2_of,
       [](const TradeoffPoint& p) { return p.ksg_mi_nats; });
}

}  // namespace sppr
