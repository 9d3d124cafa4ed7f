#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "sppr/baselines.hpp"
#include "sppr/checkpoint.hpp"
#include "sppr/evaluation.hpp"

namespace sppr::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Same stream the evaluation module uses for its leakage jitter.
constexpr std::uint64_t kLeakageStream = 13;

constexpr const char* kSubcommands[] = {"train", "sweep", "eval", "baseline", "mi", "synth-data"};

// Config files hold bare `key = value` lines; CLI11 wants them under the
// subcommand's section, so every item is re-parented on the way in.
class FlatConfig : public CLI::ConfigBase {
 public:
  explicit FlatConfig(std::string section) : section_(std::move(section)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigBase::from_config(input);
    for (auto& item : items) {
      if (!item.parents.empty()) {
        throw CLI::ConfigError("config keys must be flat; found section '" +
                               item.parents.front() + "'");
      }
      item.parents.push_back(section_);
    }
    return items;
  }

 private:
  std::string section_;
};

struct DataOptions {
  std::string data;
  std::size_t synth_days = 400;
  std::uint64_t data_seed = 1;
  std::int64_t utc_offset = 0;
  bool per_household = false;
};

struct Settings {
  DataOptions data;
  std::string out;
  std::uint64_t seed = 1;

  TrainerConfig trainer;
  std::string sanitizer = "smart";

  EvalOptions eval;
  std::size_t attacker_iterations = SupervisedConfig{}.max_iterations;
  std::size_t utility_iterations = SupervisedConfig{}.max_iterations;
  std::size_t eval_batch = SupervisedConfig{}.batch_size;
  std::size_t eval_patience = SupervisedConfig{}.patience;

  // sweep
  std::vector<double> lambdas;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> baselines;
  std::vector<std::size_t> decimations{2, 3, 4, 6, 8, 12};
  std::vector<double> random_rates;
  std::string test_mode = "hard";
  std::size_t jobs = 1;
  bool save_checkpoints = false;

  // eval / mi
  std::string checkpoint;
  std::string eval_sanitizer = "auto";

  // baseline
  std::string kind = "uniform";
  std::size_t decimation = 4;
  double rate = 0.25;

  // synth-data
  std::size_t n_days = 400;
};

void add_shared(CLI::App* sub, Settings& s, bool needs_data) {
  if (needs_data) {
    sub->add_option("--data", s.data.data,
                    "Input: 'synth', an ingestion CSV, or a directory of CSVs (one per household)")
        ->required();
    sub->add_option("--synth-days", s.data.synth_days, "Days generated when --data synth");
    sub->add_option("--data-seed", s.data.data_seed, "Seed for synthetic data and the split");
    sub->add_option("--utc-offset", s.data.utc_offset, "Seconds added to UTC to find local midnight");
    sub->add_flag("--per-household-split", s.data.per_household,
                  "Split 85:15 within each household instead of pooled");
  }
  sub->add_option("--out", s.out, "Output directory")->required();
  sub->add_option("--seed", s.seed, "Base seed for training and evaluation");
}

void add_trainer(CLI::App* sub, Settings& s) {
  auto& t = s.trainer;
  sub->add_option("--mode", s.sanitizer, "Sanitizer: smart, smart-multiplicative or additive")
      ->check(CLI::IsMember({"smart", "smart-multiplicative", "additive"}));
  sub->add_option("--iterations", t.iterations, "Outer training iterations");
  sub->add_option("--batch-size", t.batch_size, "Minibatch size B");
  sub->add_option("--adversary-steps", t.adversary_steps, "Adversary updates per iteration k");
  sub->add_option("--noise-dim", t.noise_dim, "Seed noise dimension m");
  sub->add_option("--beta", t.beta, "Ridge weight on releaser parameters");
  sub->add_option("--learning-rate", t.optimizer.learning_rate, "RMSprop learning rate");
  sub->add_option("--rms-decay", t.optimizer.decay, "RMSprop decay");
  sub->add_option("--rms-epsilon", t.optimizer.epsilon, "RMSprop epsilon");
  sub->add_option("--width-scale", t.width_scale, "Multiplier on every network's cell count");
  sub->add_option("--tau", t.tau, "Test-time release threshold");
  sub->add_flag("!--no-early-stopping", t.early_stopping,
                "Run every iteration instead of stopping on a stalled validation releaser loss");
  sub->add_option("--patience", t.patience, "Early-stopping patience in iterations");
  sub->add_option("--min-improvement", t.min_improvement, "Smallest loss drop that resets patience");
  sub->add_option("--validate-every", t.validation_every, "Iterations between validation checks");
}

void add_eval(CLI::App* sub, Settings& s) {
  sub->add_option("--attacker-iterations", s.attacker_iterations,
                  "Iteration cap for the evaluation attacker");
  sub->add_option("--utility-iterations", s.utility_iterations,
                  "Iteration cap for the evaluation utility network");
  sub->add_option("--eval-batch-size", s.eval_batch, "Minibatch size for evaluation networks");
  sub->add_option("--eval-patience", s.eval_patience, "Early-stopping patience for evaluation networks");
  sub->add_option("--random-repeats", s.eval.random_repeats,
                  "Independent draws averaged per random baseline");
  sub->add_option("--ksg-k", s.eval.ksg_k, "Neighbours for the KSG leakage estimate");
}

EvalOptions eval_options(const Settings& s, double width_scale) {
  EvalOptions e = s.eval;
  e.seed = s.seed;
  e.width_scale = width_scale;
  e.attacker.max_iterations = s.attacker_iterations;
  e.utility.max_iterations = s.utility_iterations;
  e.attacker.batch_size = e.utility.batch_size = s.eval_batch;
  e.attacker.patience = e.utility.patience = s.eval_patience;
  return e;
}

WindowedDataset load_dataset(const DataOptions& o, std::ostream& out) {
  WindowedDataset windows;
  if (o.data == "synth") {
    windows = synthesize_dataset(o.synth_days, o.data_seed);
  } else {
    const fs::path path(o.data);
    if (!fs::exists(path)) throw DataError("data path '" + o.data + "' does not exist");
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw DataError("no .csv files in '" + o.data + "'");
    } else {
      files.push_back(path);
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      LoadedSeries loaded = load_csv(files[i]);
      if (loaded.dropped_rows > 0) {
        out << files[i].string() << ": dropped " << loaded.dropped_rows
            << " rows with an empty power field\n";
      }
      WindowedDataset w = window_daily(resample_hourly(loaded.series), o.utc_offset);
      if (i == 0) {
        windows = std::move(w);
      } else {
        windows.append(w);
      }
    }
  }
  const auto scope = o.per_household ? SplitScope::kPerHousehold : SplitScope::kPooled;
  WindowedDataset ready = normalize(split(windows, o.data_seed, scope));
  const SplitCounts c{ready.indices(Split::kTrain).size(),
                      ready.indices(Split::kValidation).size(),
                      ready.indices(Split::kTest).size()};
  out << "data: " << ready.size() << " days (train " << c.train << ", validation "
      << c.validation << ", test " << c.test << ")\n";
  return ready;
}

TrainerConfig trainer_config(const Settings& s) {
  TrainerConfig t = s.trainer;
  t.mode = parse_sanitizer_mode(s.sanitizer);
  t.seed = s.seed;
  t.validate();
  return t;
}

std::string crc_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  in.seekg(-4, std::ios::end);
  unsigned char b[4] = {};
  in.read(reinterpret_cast<char*>(b), 4);
  const std::uint32_t crc = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t{b[3]} << 24);
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return buf;
}

json point_json(const TradeoffPoint& p) {
  json j;
  j["mode"] = p.mode;
  j["lambda"] = p.lambda;
  j["seed"] = p.seed;
  j["ne2"] = p.ne2;
  j["balanced_accuracy"] = p.balanced_accuracy;
  j["avg_samples_per_day"] = p.samples_per_day;
  j["ksg_mi_nats"] = p.ksg_mi_nats;
  j["achieved_mse"] = p.achieved_mse;
  return j;
}

void print_point(std::ostream& out, const TradeoffPoint& p) {
  out << "mode: " << p.mode << "\n"
      << "balanced_accuracy: " << format_double(p.balanced_accuracy) << "\n"
      << "ne2: " << format_double(p.ne2) << "\n"
      << "avg_samples_per_day: " << format_double(p.samples_per_day) << "\n"
      << "ksg_mi_nats: " << format_double(p.ksg_mi_nats) << "\n";
}

void write_json(const fs::path& path, const json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

// A checkpoint without a utility network came from an additive system.
TrainedSystem restore_system(const Settings& s, TrainerConfig config) {
  const Checkpoint ckpt = load_checkpoint(s.checkpoint);
  if (s.eval_sanitizer == "auto") {
    config.mode = find_network(ckpt, "utility") ? SanitizerMode::kSmart : SanitizerMode::kAdditive;
  } else {
    config.mode = parse_sanitizer_mode(s.eval_sanitizer);
  }
  return system_from_checkpoint(ckpt, config);
}

// ---------------------------------------------------------------------------

int cmd_train(const Settings& s, std::ostream& out) {
  const TrainerConfig config = trainer_config(s);
  const WindowedDataset data = load_dataset(s.data, out);
  TrainedSystem system = train(data, config);

  const fs::path dir(s.out);
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.sppr", system_checkpoint(system));
  write_text_atomic(dir / "history.csv", format_history_csv(system.history));

  const HistoryEntry& last = system.history.back();
  out << "iterations: " << system.history.size() << (system.stopped_early ? " (early stop)" : "")
      << "\n"
      << "L_U: " << format_double(last.utility_loss) << "\n"
      << "L_A: " << format_double(last.adversary_loss) << "\n"
      << "entropy_sum: " << format_double(last.entropy_sum) << "\n"
      << "checkpoint: " << (dir / "checkpoint.sppr").string() << " crc32 "
      << crc_hex(dir / "checkpoint.sppr") << "\n";
  return kExitOk;
}

int cmd_sweep(const Settings& s, std::ostream& out, std::ostream& err) {
  SweepConfig sweep;
  sweep.trainer = trainer_config(s);
  sweep.lambdas = s.lambdas;
  sweep.seeds = s.seeds;
  sweep.test_mode = parse_release_mode(s.test_mode);
  sweep.decimations = s.decimations;
  sweep.jobs = s.jobs;
  sweep.eval = eval_options(s, sweep.trainer.width_scale);
  for (const auto& b : s.baselines) {
    if (b == "uniform") sweep.uniform_baselines = true;
    if (b == "random") {
      sweep.random_rates = s.random_rates;
      if (sweep.random_rates.empty()) {
        for (auto d : s.decimations) sweep.random_rates.push_back(1.0 / static_cast<double>(d));
      }
    }
  }
  for (auto d : sweep.decimations) fir_lowpass_design(d);
  for (double r : sweep.random_rates) {
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("random rate must be in (0, 1]");
  }

  const WindowedDataset data = load_dataset(s.data, out);
  const fs::path dir(s.out);
  fs::create_directories(dir);
  if (s.save_checkpoints) {
    sweep.checkpoint_dir = dir / "checkpoints";
    fs::create_directories(sweep.checkpoint_dir);
  }
  const auto points = tradeoff_sweep(data, sweep);
  write_sweep_outputs(dir, points);

  std::size_t ok = 0;
  for (const auto& p : points) {
    if (p.ok()) {
      ++ok;
    } else {
      err << p.mode << " lambda=" << format_double(p.lambda) << " seed=" << p.seed << ": "
          << p.status << "\n";
    }
  }
  out << ok << " of " << points.size() << " points succeeded; results in "
      << (dir / "results.csv").string() << "\n";
  return ok > 0 ? kExitOk : kExitError;
}

int cmd_eval(const Settings& s, std::ostream& out) {
  TrainerConfig config = trainer_config(s);
  const TrainedSystem system = restore_system(s, config);
  const WindowedDataset data = load_dataset(s.data, out);
  const ReleaseMode mode = parse_release_mode(s.test_mode);
  TradeoffPoint p = evaluate_system(system, data, mode, config.tau,
                                    eval_options(s, config.width_scale));

  const fs::path dir(s.out);
  fs::create_directories(dir);
  json j = point_json(p);
  j["release_mode"] = s.test_mode;
  j["tau"] = config.tau;
  j["checkpoint"] = s.checkpoint;
  write_json(dir / "eval.json", j);
  print_point(out, p);
  return kExitOk;
}

int cmd_baseline(const Settings& s, std::ostream& out) {
  const EvalOptions eval = eval_options(s, s.trainer.width_scale);
  if (s.kind == "uniform") fir_lowpass_design(s.decimation);
  if (s.kind == "random" && !(s.rate > 0.0 && s.rate <= 1.0)) {
    throw std::invalid_argument("--rate must be in (0, 1]");
  }
  const WindowedDataset data = load_dataset(s.data, out);
  TradeoffPoint p;
  if (s.kind == "uniform") {
    p = evaluate_uniform(data, s.decimation, eval);
  } else if (s.kind == "random") {
    p = evaluate_random(data, s.rate, eval);
  } else {
    p = evaluate_raw(data, eval);
  }
  const fs::path dir(s.out);
  fs::create_directories(dir);
  write_json(dir / "baseline.json", point_json(p));
  print_point(out, p);
  return kExitOk;
}

int cmd_mi(const Settings& s, std::ostream& out) {
  std::optional<TrainedSystem> system;
  TrainerConfig config = trainer_config(s);
  if (!s.checkpoint.empty()) system = restore_system(s, config);
  const WindowedDataset data = load_dataset(s.data, out);
  const auto rows = data.indices(Split::kTest);

  Tensor z;
  std::string source = "raw";
  if (system) {
    const ReleasedData released =
        sanitize_all(*system, data, parse_release_mode(s.test_mode), config.tau, s.seed);
    std::vector<double> v;
    auto all = released.z.values();
    for (auto r : rows) v.insert(v.end(), all.begin() + r * data.steps, all.begin() + (r + 1) * data.steps);
    z = Tensor::from({rows.size(), data.steps}, std::move(v));
    source = s.checkpoint;
  } else {
    z = data.consumption_rows(rows);
  }
  const double mi = leakage_estimate(data.occupancy_rows(rows), z, derive_seed(s.seed, kLeakageStream),
                                     s.eval.ksg_k);
  const fs::path dir(s.out);
  fs::create_directories(dir);
  json j;
  j["source"] = source;
  j["rows"] = rows.size();
  j["k"] = s.eval.ksg_k;
  j["ksg_mi_nats"] = mi;
  write_json(dir / "mi.json", j);
  out << "ksg_mi_nats: " << format_double(mi) << "\n";
  return kExitOk;
}

int cmd_synth_data(const Settings& s, std::ostream& out) {
  if (s.n_days < 20) throw DataError("--n-days must be at least 20");
  RawSeries series = synthesize_series(s.n_days, s.seed);
  const fs::path dir(s.out);
  fs::create_directories(dir);
  write_csv(dir / "synthetic.csv", series);
  out << "wrote " << series.size() << " hourly rows to " << (dir / "synthetic.csv").string()
      << "\n";
  return kExitOk;
}

std::string subcommand_of(const std::vector<std::string>& args) {
  for (const auto& a : args) {
    for (const char* name : kSubcommands) {
      if (a == name) return a;
    }
  }
  return "";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Settings s;
  CLI::App app{"Privacy-preserving smart-meter data release"};
  app.name("sppr");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Flat 'key = value' file; flags on the command line win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<FlatConfig>(subcommand_of(args)));

  auto make = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->option_defaults()->always_capture_default();
    sub->allow_config_extras(CLI::config_extras_mode::error);
    sub->footer("Also accepts --config <file>: one 'key = value' per line using the long flag "
                "names above, '#' starts a comment. Command-line flags override the file.");
    return sub;
  };

  CLI::App* train_cmd = make("train", "Train releaser, utility and adversary networks");
  add_shared(train_cmd, s, true);
  train_cmd->add_option("--lambda", s.trainer.lambda, "Privacy weight");
  add_trainer(train_cmd, s);

  CLI::App* sweep_cmd = make("sweep", "Train and evaluate a grid of privacy weights and seeds");
  add_shared(sweep_cmd, s, true);
  add_trainer(sweep_cmd, s);
  add_eval(sweep_cmd, s);
  sweep_cmd->add_option("--lambdas", s.lambdas, "Comma-separated privacy weights")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--seeds", s.seeds, "Comma-separated training seeds")->delimiter(',');
  sweep_cmd->add_option("--baselines", s.baselines, "Comma-separated: uniform, random")
      ->delimiter(',')
      ->check(CLI::IsMember({"uniform", "random"}));
  sweep_cmd->add_option("--decimations", s.decimations, "Uniform decimation factors")
      ->delimiter(',');
  sweep_cmd->add_option("--random-rates", s.random_rates,
                        "Random baseline keep fractions (default 1/d per decimation)")
      ->delimiter(',');
  sweep_cmd->add_option("--test-mode", s.test_mode, "Release at test time: hard, multiplicative or stochastic")
      ->check(CLI::IsMember({"hard", "multiplicative", "stochastic"}));
  sweep_cmd->add_option("--jobs", s.jobs, "Points evaluated concurrently");
  sweep_cmd->add_flag("--save-checkpoints", s.save_checkpoints,
                      "Write one checkpoint per trained point under <out>/checkpoints");

  CLI::App* eval_cmd = make("eval", "Evaluate a trained checkpoint on the test split");
  add_shared(eval_cmd, s, true);
  eval_cmd->add_option("--checkpoint", s.checkpoint, "Checkpoint written by train or sweep")
      ->required();
  eval_cmd->add_option("--mode,--release-mode", s.test_mode,
                       "Release at test time: hard, multiplicative or stochastic")
      ->check(CLI::IsMember({"hard", "multiplicative", "stochastic"}));
  eval_cmd->add_option("--sanitizer", s.eval_sanitizer,
                       "Sanitizer the checkpoint was trained with; auto reads it from the file")
      ->check(CLI::IsMember({"auto", "smart", "smart-multiplicative", "additive"}));
  eval_cmd->add_option("--tau", s.trainer.tau, "Release threshold");
  eval_cmd->add_option("--width-scale", s.trainer.width_scale, "Width the checkpoint was trained at");
  eval_cmd->add_option("--noise-dim", s.trainer.noise_dim, "Noise dimension the checkpoint was trained with");
  add_eval(eval_cmd, s);

  CLI::App* base_cmd = make("baseline", "Evaluate a uniform, random or raw release");
  add_shared(base_cmd, s, true);
  base_cmd->add_option("--kind", s.kind, "uniform, random or raw")
      ->check(CLI::IsMember({"uniform", "random", "raw"}));
  base_cmd->add_option("--decimation", s.decimation, "Uniform decimation factor d (divides 24)");
  base_cmd->add_option("--rate", s.rate, "Random keep fraction");
  base_cmd->add_option("--width-scale", s.trainer.width_scale, "Width of the evaluation networks");
  add_eval(base_cmd, s);

  CLI::App* mi_cmd = make("mi", "KSG leakage between occupancy and released test rows");
  add_shared(mi_cmd, s, true);
  mi_cmd->add_option("--checkpoint", s.checkpoint, "Releaser checkpoint; omit to measure raw data");
  mi_cmd->add_option("--mode,--release-mode", s.test_mode, "hard, multiplicative or stochastic")
      ->check(CLI::IsMember({"hard", "multiplicative", "stochastic"}));
  mi_cmd->add_option("--sanitizer", s.eval_sanitizer, "Sanitizer of the checkpoint; auto detects")
      ->check(CLI::IsMember({"auto", "smart", "smart-multiplicative", "additive"}));
  mi_cmd->add_option("--tau", s.trainer.tau, "Release threshold");
  mi_cmd->add_option("--width-scale", s.trainer.width_scale, "Width the checkpoint was trained at");
  mi_cmd->add_option("--noise-dim", s.trainer.noise_dim, "Noise dimension of the checkpoint");
  mi_cmd->add_option("--ksg-k", s.eval.ksg_k, "Neighbours for the KSG estimate");

  CLI::App* synth_cmd = make("synth-data", "Write a synthetic household in the ingestion CSV format");
  add_shared(synth_cmd, s, false);
  synth_cmd->add_option("--n-days", s.n_days, "Days to generate (at least 20)");

  std::vector<const char*> argv{"sppr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitError;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(s, out);
    if (sweep_cmd->parsed()) return cmd_sweep(s, out, err);
    if (eval_cmd->parsed()) return cmd_eval(s, out);
    if (base_cmd->parsed()) return cmd_baseline(s, out);
    if (mi_cmd->parsed()) return cmd_mi(s, out);
    if (synth_cmd->parsed()) return cmd_synth_data(s, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace sppr::cli
