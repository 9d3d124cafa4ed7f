#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sppr/data.hpp"
#include "sppr/lstm.hpp"
#include "sppr/losses.hpp"
#include "sppr/mechanism.hpp"
#include "sppr/optim.hpp"

namespace sppr {

/// Training diverged (non-finite or exploding loss).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Independent 64-bit stream seed derived from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

enum class SanitizerMode { kSmart, kSmartMultiplicative, kAdditive };

const char* to_string(SanitizerMode mode);
SanitizerMode parse_sanitizer_mode(const std::string& name);

/// Test-time release used for a sanitizer mode (additive has no mask).
ReleaseMode test_release_mode(SanitizerMode mode);

struct TrainerConfig {
  std::size_t batch_size = 128;    // B
  std::size_t adversary_steps = 4;  // k
  std::size_t noise_dim = 8;       // m
  double beta = 1.5;               // ridge weight on releaser parameters
  double lambda = 1.0;             // privacy-utility trade-off
  std::size_t iterations = 3000;
  std::uint64_t seed = 1;
  double tau = kDefaultThreshold;
  SanitizerMode mode = SanitizerMode::kSmart;
  double width_scale = 1.0;
  RmspropHyper optimizer{};

  bool early_stopping = true;
  std::size_t patience = 200;       // iterations without sufficient improvement
  double min_improvement = 1e-4;    // on validation releaser loss
  std::size_t validation_every = 50;

  LstmStackConfig releaser_net() const;
  LstmStackConfig adversary_net() const;
  LstmStackConfig utility_net() const;
  LstmStackConfig attacker_net() const;

  void validate() const;
};

/// One minibatch of windows: y, x are [B x T]; u is [B x T x m].
struct SequenceBatch {
  Tensor y;
  Tensor x;
  Tensor u;
  std::vector<std::size_t> rows;
};

/// Epoch-shuffled sampling without replacement from a fixed pool of rows.
class MinibatchSampler {
 public:
  MinibatchSampler(std::vector<std::size_t> pool, std::uint64_t seed);

  std::vector<std::size_t> next(std::size_t batch_size);

 private:
  std::vector<std::size_t> pool_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

/// Draws B rows from the sampler and fresh Uniform[0,1] seed noise.
SequenceBatch sample_minibatch(const WindowedDataset& dataset,
                               MinibatchSampler& sampler, std::size_t batch_size,
                               std::size_t noise_dim, std::mt19937_64& rng);

/// Uniform[0,1] noise of shape [rows x T x m].
Tensor seed_noise(std::size_t rows, std::size_t steps, std::size_t noise_dim,
                  std::mt19937_64& rng);

struct HistoryEntry {
  std::size_t iteration = 0;
  double utility_loss = 0.0;
  double adversary_loss = 0.0;
  double releaser_loss = 0.0;
  double entropy_sum = 0.0;
};

struct TrainedSystem {
  TrainerConfig config;
  ModelParams releaser;
  ModelParams utility;  // unused (empty) in additive mode
  ModelParams adversary;
  std::optional<ModelParams> attacker;
  std::vector<HistoryEntry> history;
  bool stopped_early = false;
};

// Forward pieces shared by training and evaluation -------------------------

/// Per-step releaser inputs concat(x_t, y_t, u_t).
Sequence releaser_inputs(const Tensor& y, const Tensor& x, const Tensor& u);

/// Releaser output as [B x T]: soft mask q (smart modes) or perturbation n
/// (additive mode).
Tensor releaser_output(const ModelParams& releaser, const Tensor& y,
                       const Tensor& x, const Tensor& u);

/// Released data used during training: y * q, or y + n in additive mode.
Tensor training_release(SanitizerMode mode, const Tensor& y, const Tensor& releaser_out);

/// Adversary / attacker distribution over labels as [B x T x 2].
Tensor classifier_probs(const ModelParams& classifier, const Tensor& z);

/// Utility reconstruction as [B x T].
Tensor utility_reconstruction(const ModelParams& utility, const Tensor& z);

/// Algorithm driver: alternates k adversary updates with one utility update
/// and one releaser update per iteration.
class AdversarialTrainer {
 public:
  AdversarialTrainer(const WindowedDataset& dataset, TrainerConfig config);

  /// k RMSprop updates of the adversary against the frozen releaser.
  double adversary_inner_steps();

  /// Utility then releaser update on one fresh minibatch; adversary frozen.
  HistoryEntry outer_step();

  /// Releaser loss plus its parts on the validation split, soft mask.
  LossBundle validation_losses();

  /// Full schedule with optional early stopping.
  TrainedSystem run();

  const TrainedSystem& system() const { return system_; }
  TrainedSystem& system() { return system_; }
  std::size_t iteration() const { return iteration_; }

 private:
  void check_finite(double value, const char* what) const;

  const WindowedDataset& dataset_;
  TrainerConfig config_;
  TrainedSystem system_;
  Rmsprop releaser_opt_, utility_opt_, adversary_opt_;
  MinibatchSampler sampler_;
  std::mt19937_64 noise_rng_;
  std::size_t iteration_ = 0;
};

/// Requires a split, normalized dataset with T = 24 windows.
TrainedSystem train(const WindowedDataset& dataset, const TrainerConfig& config);

// Post-hoc networks ----------------------------------------------------------

struct SupervisedConfig {
  std::size_t batch_size = 128;
  std::size_t max_iterations = 1000;
  std::size_t validate_every = 50;
  std::size_t patience = 300;
  std::uint64_t seed = 1;
  RmspropHyper optimizer{};
};

/// Attacker on released sequences: cross-entropy training with early stopping
/// on validation balanced accuracy. Returns the best validation snapshot.
ModelParams train_attacker(const Tensor& z_train, const Tensor& x_train,
                           const Tensor& z_val, const Tensor& x_val,
                           const LstmStackConfig& net, const SupervisedConfig& cfg);

/// Utility network reconstructing y from released z; early stopping on
/// validation mean squared error.
ModelParams train_utility(const Tensor& z_train, const Tensor& y_train,
                          const Tensor& z_val, const Tensor& y_val,
                          const LstmStackConfig& net, const SupervisedConfig& cfg);

/// Hard per-step decisions (p(occupied) > 0.5) from a classifier, [N x T].
Tensor predict_labels(const ModelParams& classifier, const Tensor& z);

}  // namespace sppr
