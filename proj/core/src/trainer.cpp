#include "sppr/trainer.hpp"

#include "sppr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sppr {

namespace {

constexpr double kDivergenceThreshold = 1e6;

// Seed streams
constexpr std::uint64_t kReleaserInit = 1;
constexpr std::uint64_t kAdversaryInit = 2;
constexpr std::uint64_t kUtilityInit = 3;
constexpr std::uint64_t kSamplerStream = 4;
constexpr std::uint64_t kNoiseStream = 5;
constexpr std::uint64_t kValidationNoise = 6;

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

const char* to_string(SanitizerMode mode) {
  switch (mode) {
    case SanitizerMode::kSmart: return "smart";
    case SanitizerMode::kSmartMultiplicative: return "smart-multiplicative";
    case SanitizerMode::kAdditive: return "additive";
  }
  return "unknown";
}

SanitizerMode parse_sanitizer_mode(const std::string& name) {
  if (name == "smart") return SanitizerMode::kSmart;
  if (name == "smart-multiplicative") return SanitizerMode::kSmartMultiplicative;
  if (name == "additive") return SanitizerMode::kAdditive;
  throw std::invalid_argument("unknown sanitizer mode '" + name + "'");
}

ReleaseMode test_release_mode(SanitizerMode mode) {
  return mode == SanitizerMode::kSmartMultiplicative ? ReleaseMode::kMultiplicative
                                                     : ReleaseMode::kHard;
}

LstmStackConfig TrainerConfig::releaser_net() const {
  return releaser_config(noise_dim, width_scale,
                         mode == SanitizerMode::kAdditive ? OutputHead::kLinearScalar
                                                          : OutputHead::kSigmoidScalar);
}
LstmStackConfig TrainerConfig::adversary_net() const { return adversary_config(width_scale); }
LstmStackConfig TrainerConfig::utility_net() const { return utility_config(width_scale); }
LstmStackConfig TrainerConfig::attacker_net() const { return attacker_config(width_scale); }

void TrainerConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainerConfig: ") + what);
  };
  require(batch_size >= 1, "B must be >= 1");
  require(adversary_steps >= 1, "k must be >= 1");
  require(noise_dim >= 1, "m must be >= 1");
  require(beta >= 0.0, "beta must be >= 0");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(iterations >= 1, "iterations must be >= 1");
  require(tau >= 0.0 && tau < 1.0, "tau must lie in [0, 1)");
  require(width_scale > 0.0, "width_scale must be > 0");
  require(optimizer.learning_rate > 0.0, "learning rate must be > 0");
  require(optimizer.decay > 0.0 && optimizer.decay < 1.0, "decay must lie in (0, 1)");
  require(optimizer.epsilon > 0.0, "epsilon must be > 0");
  require(validation_every >= 1, "validation_every must be >= 1");
}

// ---------------------------------------------------------------------------

MinibatchSampler::MinibatchSampler(std::vector<std::size_t> pool, std::uint64_t seed)
    : pool_(std::move(pool)), rng_(seed) {
  if (pool_.empty()) throw std::invalid_argument("MinibatchSampler: empty pool");
  std::shuffle(pool_.begin(), pool_.end(), rng_);
}

std::vector<std::size_t> MinibatchSampler::next(std::size_t batch_size) {
  if (batch_size > pool_.size()) {
    throw std::invalid_argument("sample_minibatch: B=" + std::to_string(batch_size) +
                                " exceeds the " + std::to_string(pool_.size()) +
                                " available sequences");
  }
  if (cursor_ + batch_size > pool_.size()) {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
    cursor_ = 0;
  }
  std::vector<std::size_t> rows(pool_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                pool_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size));
  cursor_ += batch_size;
  return rows;
}

Tensor seed_noise(std::size_t rows, std::size_t steps, std::size_t noise_dim,
                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> u(rows * steps * noise_dim);
  for (auto& v : u) v = unit(rng);
  return Tensor::from({rows, steps, noise_dim}, std::move(u));
}

SequenceBatch sample_minibatch(const WindowedDataset& dataset,
                               MinibatchSampler& sampler, std::size_t batch_size,
                               std::size_t noise_dim, std::mt19937_64& rng) {
  if (dataset.size() == 0) throw std::invalid_argument("sample_minibatch: empty dataset");
  SequenceBatch batch;
  batch.rows = sampler.next(batch_size);
  batch.y = dataset.consumption_rows(batch.rows);
  batch.x = dataset.occupancy_rows(batch.rows);
  batch.u = seed_noise(batch_size, dataset.steps, noise_dim, rng);
  return batch;
}

// ---------------------------------------------------------------------------

Sequence releaser_inputs(const Tensor& y, const Tensor& x, const Tensor& u) {
  const std::size_t b = y.dim(0), steps = y.dim(1), m = u.dim(2);
  if (x.shape() != y.shape() || u.dim(0) != b || u.dim(1) != steps) {
    throw ShapeError("releaser_inputs: y " + shape_string(y.shape()) + ", x " +
                     shape_string(x.shape()) + ", u " + shape_string(u.shape()));
  }
  auto yv = y.values(), xv = x.values(), uv = u.values();
  const std::size_t width = 2 + m;
  Sequence steps_out;
  steps_out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> in(b * width);
    for (std::size_t r = 0; r < b; ++r) {
      double* row = in.data() + r * width;
      row[0] = xv[r * steps + t];
      row[1] = yv[r * steps + t];
      std::copy_n(uv.data() + (r * steps + t) * m, m, row + 2);
    }
    steps_out.push_back(Tensor::from({b, width}, std::move(in)));
  }
  return steps_out;
}

Tensor releaser_output(const ModelParams& releaser, const Tensor& y, const Tensor& x,
                       const Tensor& u) {
  return concat(stack_forward(releaser_inputs(y, x, u), releaser));
}

Tensor training_release(SanitizerMode mode, const Tensor& y, const Tensor& releaser_out) {
  if (mode == SanitizerMode::kAdditive) return add(y, releaser_out);
  return soft_mask_apply(y, releaser_out).z;
}

Tensor classifier_probs(const ModelParams& classifier, const Tensor& z) {
  Sequence outs = stack_forward(split_steps(z), classifier);
  return reshape(concat(outs), {z.dim(0), z.dim(1), 2});
}

Tensor utility_reconstruction(const ModelParams& utility, const Tensor& z) {
  return concat(stack_forward(split_steps(z), utility));
}

// ---------------------------------------------------------------------------

AdversarialTrainer::AdversarialTrainer(const WindowedDataset& dataset, TrainerConfig config)
    : dataset_(dataset),
      config_(std::move(config)),
      sampler_((config_.validate(), dataset.indices(Split::kTrain)),
               derive_seed(config_.seed, kSamplerStream)),
      noise_rng_(derive_seed(config_.seed, kNoiseStream)) {
  if (!dataset_.normalized) {
    throw std::invalid_argument("AdversarialTrainer: dataset must be split and normalized");
  }
  system_.config = config_;
  system_.releaser = init_params(config_.releaser_net(), derive_seed(config_.seed, kReleaserInit));
  system_.adversary =
      init_params(config_.adversary_net(), derive_seed(config_.seed, kAdversaryInit));
  releaser_opt_ = Rmsprop(system_.releaser.tensors(), config_.optimizer);
  adversary_opt_ = Rmsprop(system_.adversary.tensors(), config_.optimizer);
  if (config_.mode != SanitizerMode::kAdditive) {
    system_.utility = init_params(config_.utility_net(), derive_seed(config_.seed, kUtilityInit));
    utility_opt_ = Rmsprop(system_.utility.tensors(), config_.optimizer);
  }
}

void AdversarialTrainer::check_finite(double value, const char* what) const {
  if (!std::isfinite(value) || std::abs(value) > kDivergenceThreshold) {
    throw DivergenceError(std::string(what) + " diverged (" + std::to_string(value) +
                              ") at iteration " + std::to_string(iteration_),
                          iteration_);
  }
}

double AdversarialTrainer::adversary_inner_steps() {
  system_.releaser.set_tracked(false);
  if (!system_.utility.layers.empty()) system_.utility.set_tracked(false);
  system_.adversary.set_tracked(true);
  double total = 0.0;
  for (std::size_t step = 0; step < config_.adversary_steps; ++step) {
    SequenceBatch batch = sample_minibatch(dataset_, sampler_, config_.batch_size,
                                           config_.noise_dim, noise_rng_);
    Tensor out = releaser_output(system_.releaser, batch.y, batch.x, batch.u);
    Tensor z = training_release(config_.mode, batch.y, out);
    Tensor loss = adversary_loss(classifier_probs(system_.adversary, z), batch.x);
    check_finite(loss.item(), "adversary loss");
    backward(loss);
    auto params = system_.adversary.tensors();
    adversary_opt_.step(params);
    total += loss.item();
  }
  return total / static_cast<double>(config_.adversary_steps);
}

HistoryEntry AdversarialTrainer::outer_step() {
  HistoryEntry entry;
  entry.iteration = iteration_;
  SequenceBatch batch = sample_minibatch(dataset_, sampler_, config_.batch_size,
                                         config_.noise_dim, noise_rng_);
  const bool additive = config_.mode == SanitizerMode::kAdditive;
  system_.adversary.set_tracked(false);

  // The releaser does not change between the two phases, so one forward pass
  // serves both: the utility phase sees it detached.
  system_.releaser.set_tracked(true);
  Tensor out = releaser_output(system_.releaser, batch.y, batch.x, batch.u);
  Tensor z = training_release(config_.mode, batch.y, out);

  if (!additive) {
    system_.utility.set_tracked(true);
    Tensor loss = utility_loss(batch.y, utility_reconstruction(system_.utility, z.detach()));
    check_finite(loss.item(), "utility loss");
    backward(loss);
    auto params = system_.utility.tensors();
    utility_opt_.step(params);
    entry.utility_loss = loss.item();
    system_.utility.set_tracked(false);
  }

  Tensor y_hat = additive ? z : utility_reconstruction(system_.utility, z);
  Tensor probs = classifier_probs(system_.adversary, z);
  Tensor loss = releaser_loss(batch.y, y_hat, probs, config_.lambda);
  const auto theta = system_.releaser.tensors();
  Tensor objective = add(loss, l2_penalty(theta, config_.beta));
  check_finite(objective.item(), "releaser loss");
  backward(objective);
  auto params = system_.releaser.tensors();
  releaser_opt_.step(params);
  system_.releaser.set_tracked(false);

  entry.releaser_loss = loss.item();
  entry.entropy_sum = entropy_sum(probs.detach()).item();
  if (additive) entry.utility_loss = utility_loss(batch.y, y_hat.detach()).item();
  return entry;
}

LossBundle AdversarialTrainer::validation_losses() {
  const auto rows = dataset_.indices(Split::kValidation);
  if (rows.empty()) throw std::invalid_argument("validation_losses: no validation split");
  system_.releaser.set_tracked(false);
  system_.adversary.set_tracked(false);
  if (!system_.utility.layers.empty()) system_.utility.set_tracked(false);
  std::mt19937_64 rng(derive_seed(config_.seed, kValidationNoise));
  Tensor y = dataset_.consumption_rows(rows);
  Tensor x = dataset_.occupancy_rows(rows);
  Tensor u = seed_noise(rows.size(), dataset_.steps, config_.noise_dim, rng);
  Tensor z = training_release(config_.mode, y, releaser_output(system_.releaser, y, x, u));
  Tensor y_hat = config_.mode == SanitizerMode::kAdditive
                     ? z
                     : utility_reconstruction(system_.utility, z);
  Tensor probs = classifier_probs(system_.adversary, z);
  LossBundle b;
  b.lambda = config_.lambda;
  b.utility = utility_loss(y, y_hat).item();
  b.adversary = adversary_loss(probs, x).item();
  b.entropy = entropy_sum(probs).item();
  b.releaser = releaser_loss(y, y_hat, probs, config_.lambda).item();
  b.di_bound = di_upper_bound(probs);
  return b;
}

TrainedSystem AdversarialTrainer::run() {
  double best = std::numeric_limits<double>::infinity();
  std::size_t last_improvement = 0;
  const bool can_validate = !dataset_.indices(Split::kValidation).empty();
  while (iteration_ < config_.iterations) {
    const double adversary = adversary_inner_steps();
    HistoryEntry entry = outer_step();
    entry.adversary_loss = adversary;
    system_.history.push_back(entry);
    ++iteration_;

    if (config_.early_stopping && can_validate && iteration_ % config_.validation_every == 0) {
      const double v = validation_losses().releaser;
      if (v < best - config_.min_improvement) {
        best = v;
        last_improvement = iteration_;
      } else if (iteration_ - last_improvement >= config_.patience) {
        system_.stopped_early = true;
        break;
      }
    }
  }
  system_.releaser.set_tracked(false);
  system_.adversary.set_tracked(false);
  if (!system_.utility.layers.empty()) system_.utility.set_tracked(false);
  return system_;
}

TrainedSystem train(const WindowedDataset& dataset, const TrainerConfig& config) {
  if (dataset.steps != kStepsPerDay) {
    throw std::invalid_argument("train: expected daily windows of T=24, got T=" +
                                std::to_string(dataset.steps));
  }
  AdversarialTrainer trainer(dataset, config);
  return trainer.run();
}

// ---------------------------------------------------------------------------

namespace {

Tensor gather(const Tensor& data, std::span<const std::size_t> rows) {
  const std::size_t cols = data.dim(1);
  auto v = data.values();
  std::vector<double> out;
  out.reserve(rows.size() * cols);
  for (auto r : rows) {
    out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(r * cols),
               v.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
  return Tensor::from({rows.size(), cols}, std::move(out));
}

// Generic supervised loop. `loss_of(net, z, target)` returns a tracked scalar;
// `score_of(net)` returns a validation score where larger is better.
template <typename LossFn, typename ScoreFn>
ModelParams fit(const Tensor& z_train, const Tensor& target_train,
                const LstmStackConfig& net, const SupervisedConfig& cfg,
                LossFn loss_of, ScoreFn score_of) {
  if (z_train.shape() != target_train.shape() || z_train.rank() != 2) {
    throw ShapeError("fit: released " + shape_string(z_train.shape()) + " and target " +
                     shape_string(target_train.shape()) + " must match [N x T]");
  }
  ModelParams params = init_params(net, derive_seed(cfg.seed, kReleaserInit));
  Rmsprop opt(params.tensors(), cfg.optimizer);
  std::vector<std::size_t> pool(z_train.dim(0));
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  MinibatchSampler sampler(pool, derive_seed(cfg.seed, kSamplerStream));
  const std::size_t batch = std::min(cfg.batch_size, pool.size());

  params.set_tracked(false);
  ModelParams best = params.clone(false);
  double best_score = score_of(params);
  std::size_t last_improvement = 0;
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    params.set_tracked(true);
    auto rows = sampler.next(batch);
    Tensor loss = loss_of(params, gather(z_train, rows), gather(target_train, rows));
    if (!std::isfinite(loss.item())) {
      throw DivergenceError("supervised loss diverged at iteration " + std::to_string(it), it);
    }
    backward(loss);
    auto tensors = params.tensors();
    opt.step(tensors);
    if (it % cfg.validate_every == 0 || it == cfg.max_iterations) {
      params.set_tracked(false);
      const double score = score_of(params);
      if (score > best_score) {
        best_score = score;
        best = params.clone(false);
        last_improvement = it;
      } else if (it - last_improvement >= cfg.patience) {
        break;
      }
    }
  }
  return best;
}

}  // namespace

Tensor predict_labels(const ModelParams& classifier, const Tensor& z) {
  Tensor probs = classifier_probs(classifier, z);
  auto p = probs.values();
  std::vector<double> labels(z.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = p[2 * i + 1] > 0.5 ? 1.0 : 0.0;
  return Tensor::from(z.shape(), std::move(labels));
}

ModelParams train_attacker(const Tensor& z_train, const Tensor& x_train, const Tensor& z_val,
                           const Tensor& x_val, const LstmStackConfig& net,
                           const SupervisedConfig& cfg) {
  auto loss_of = [](const ModelParams& p, const Tensor& z, const Tensor& x) {
    return adversary_loss(classifier_probs(p, z), x);
  };
  auto score_of = [&](const ModelParams& p) {
    try {
      return balanced_accuracy(predict_labels(p, z_val), x_val);
    } catch (const std::invalid_argument&) {
      return -adversary_loss(classifier_probs(p, z_val), x_val).item();
    }
  };
  return fit(z_train, x_train, net, cfg, loss_of, score_of);
}

ModelParams train_utility(const Tensor& z_train, const Tensor& y_train, const Tensor& z_val,
                          const Tensor& y_val, const LstmStackConfig& net,
                          const SupervisedConfig& cfg) {
  auto loss_of = [](const ModelParams& p, const Tensor& z, const Tensor& y) {
    return utility_loss(y, utility_reconstruction(p, z));
  };
  auto score_of = [&](const ModelParams& p) {
    return -utility_loss(y_val, utility_reconstruction(p, z_val)).item();
  };
  return fit(z_train, y_train, net, cfg, loss_of, score_of);
}

}  // namespace sppr
