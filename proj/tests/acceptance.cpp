// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed
// here and nowhere else.

#include <malloc.h>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "sppr/baselines.hpp"
#include "sppr/checkpoint.hpp"
#include "sppr/evaluation.hpp"
#include "support/gradcheck.hpp"

using namespace sppr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "sppr_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1 -------------------------------------------------------------------------

constexpr double kGradStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradAbsFloor = 1e-7;

Outcome gradient_correctness() {
  constexpr std::size_t kB = 2, kT = 4, kM = 2, kCells = 4;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> yv(kB * kT), xv(kB * kT);
  for (auto& v : yv) v = normal(rng);
  for (auto& v : xv) v = coin(rng);
  xv[0] = 0;
  xv[1] = 1;
  const Tensor y = Tensor::from({kB, kT}, yv), x = Tensor::from({kB, kT}, xv);
  const Tensor u = seed_noise(kB, kT, kM, rng);

  ModelParams releaser = init_params({1, kCells, 2 + kM, 1, OutputHead::kSigmoidScalar}, 11);
  ModelParams utility = init_params({1, kCells, 1, 1, OutputHead::kLinearScalar}, 12);
  ModelParams adversary = init_params({1, kCells, 1, 2, OutputHead::kBinarySoftmax}, 13);
  for (auto* p : {&releaser, &utility, &adversary}) p->set_tracked(true);
  std::vector<Tensor> all = releaser.tensors();
  for (const auto& t : utility.tensors()) all.push_back(t);
  for (const auto& t : adversary.tensors()) all.push_back(t);

  auto forward = [&](auto&& pick) {
    return [&, pick] {
      Tensor z = training_release(SanitizerMode::kSmart, y, releaser_output(releaser, y, x, u));
      return pick(z);
    };
  };
  const std::function<Tensor()> losses[] = {
      forward([&](const Tensor& z) { return utility_loss(y, utility_reconstruction(utility, z)); }),
      forward([&](const Tensor& z) { return adversary_loss(classifier_probs(adversary, z), x); }),
      forward([&](const Tensor& z) {
        return releaser_loss(y, utility_reconstruction(utility, z), classifier_probs(adversary, z),
                             1.0);
      }),
  };
  const char* names[] = {"L_U", "L_A", "L_R"};
  Outcome o{true, ""};
  for (int i = 0; i < 3; ++i) {
    auto r = testing::gradcheck(all, losses[i], kGradStep, kGradRelTol, kGradAbsFloor);
    o.pass = o.pass && r.ok();
    o.detail += std::string(i ? ", " : "") + names[i] + " " + std::to_string(r.checked) +
                " entries " + std::to_string(r.failures) + " off";
    if (!r.ok()) o.detail += " (" + r.worst_where + ")";
  }
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome loss_oracles() {
  constexpr std::size_t kB = 3, kT = 24;
  std::vector<double> uniform(kB * kT * 2, 0.5);
  const Tensor probs = Tensor::from({kB, kT, 2}, uniform);
  std::vector<double> lv(kB * kT);
  for (std::size_t i = 0; i < lv.size(); ++i) lv[i] = static_cast<double>(i % 3 == 0);
  const double la = adversary_loss(probs, Tensor::from({kB, kT}, lv)).item();
  const double h = entropy_sum(probs).item();
  const bool la_ok = std::abs(la - std::numbers::ln2) <= 1e-9;
  const bool h_ok = std::abs(h - 16.6355) <= 1e-3;

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double lo = 1e300, hi = -1e300;
  bool di_ok = true;
  for (int batch = 0; batch < 10000; ++batch) {
    std::vector<double> v(2 * kT * 2);
    for (std::size_t i = 0; i < v.size(); i += 2) {
      // Include exact 0/1 probabilities now and then.
      const double p = batch % 10 == 0 ? std::round(unit(rng)) : unit(rng);
      v[i] = 1.0 - p;
      v[i + 1] = p;
    }
    const double di = di_upper_bound(Tensor::from({2, kT, 2}, v));
    lo = std::min(lo, di);
    hi = std::max(hi, di);
    di_ok = di_ok && di >= 0.0 && di <= kT * std::numbers::ln2;
  }
  return {la_ok && h_ok && di_ok,
          "L_A(uniform) " + fmt("%.12f", la) + ", entropy_sum " + fmt("%.6f", h) +
              ", di bound range [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "]"};
}

// 3 -------------------------------------------------------------------------

Tensor gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return Tensor::from({n, 1}, std::move(v));
}

Outcome ksg_estimator() {
  const double indep = ksg_mi(gaussian(2000, 31), gaussian(2000, 32));

  constexpr double kRho = 0.9;
  const Tensor a = gaussian(5000, 33), b = gaussian(5000, 34);
  std::vector<double> zv(5000);
  for (std::size_t i = 0; i < zv.size(); ++i) {
    zv[i] = kRho * a.values()[i] + std::sqrt(1 - kRho * kRho) * b.values()[i];
  }
  const Tensor z = Tensor::from({5000, 1}, zv);
  const double corr = ksg_mi(a, z);
  const double truth = -0.5 * std::log(1 - kRho * kRho);

  std::vector<double> ea(a.values().begin(), a.values().end()), cz(zv);
  for (auto& v : ea) v = std::exp(v);
  for (auto& v : cz) v = v * v * v + 2.0 * v;
  const double moved = ksg_mi(Tensor::from({5000, 1}, ea), Tensor::from({5000, 1}, cz));
  const bool ok = std::abs(indep) <= 0.05 && std::abs(corr - 0.8304) <= 0.05 &&
                  std::abs(truth - 0.8304) <= 1e-4 && std::abs(moved - corr) <= 1e-6;
  return {ok, "independent " + fmt("%.4f", indep) + ", rho=0.9 " + fmt("%.4f", corr) +
                  " (analytic " + fmt("%.4f", truth) + "), transformed delta " +
                  fmt("%.1e", std::abs(moved - corr))};
}

// 4 -------------------------------------------------------------------------

Outcome mechanism_invariants() {
  constexpr std::size_t kB = 50, kT = 24;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> yv(kB * kT), qv(kB * kT);
  for (auto& v : yv) v = normal(rng);
  for (auto& v : qv) v = unit(rng);
  qv[3] = 0.5;  // a tie at the threshold
  const Tensor y = Tensor::from({kB, kT}, yv), q = Tensor::from({kB, kT}, qv);

  bool exact = true;
  for (auto mode : {ReleaseMode::kSoftTrain, ReleaseMode::kHard, ReleaseMode::kMultiplicative,
                    ReleaseMode::kStochastic}) {
    const ReleaseOutput r = mode == ReleaseMode::kSoftTrain ? soft_mask_apply(y, q)
                                                            : release(y, q, mode, 0.5, rng);
    for (std::size_t i = 0; i < y.size(); ++i) {
      exact = exact && r.z.values()[i] == y.values()[i] * r.mask.values()[i];
    }
  }

  // Per-slot inclusion frequency against Binomial bands.
  constexpr int kDraws = 10000;
  std::vector<double> slot_q(kT);
  for (std::size_t t = 0; t < kT; ++t) slot_q[t] = 0.02 + 0.96 * static_cast<double>(t) / (kT - 1);
  const Tensor q1 = Tensor::from({1, kT}, slot_q), ones = Tensor::full({1, kT}, 1.0);
  std::vector<double> hits(kT, 0.0);
  for (int d = 0; d < kDraws; ++d) {
    const ReleaseOutput r = stochastic_release(ones, q1, rng);
    for (std::size_t t = 0; t < kT; ++t) hits[t] += r.mask.values()[t];
  }
  double worst_sigma = 0.0;
  for (std::size_t t = 0; t < kT; ++t) {
    const double sigma = std::sqrt(slot_q[t] * (1 - slot_q[t]) / kDraws);
    worst_sigma = std::max(worst_sigma, std::abs(hits[t] / kDraws - slot_q[t]) / sigma);
  }

  bool monotone = true;
  const Tensor yt = Tensor::full({1, kT}, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(kT);
    for (auto& e : v) e = unit(rng);
    const Tensor qt = Tensor::from({1, kT}, v);
    double a = unit(rng), b = unit(rng);
    if (a > b) std::swap(a, b);
    const Tensor lo = hard_threshold(yt, qt, a).mask, hi = hard_threshold(yt, qt, b).mask;
    for (std::size_t t = 0; t < kT; ++t) monotone = monotone && hi.values()[t] <= lo.values()[t];
  }
  return {exact && worst_sigma <= 4.0 && monotone,
          std::string("z = y*mask ") + (exact ? "exact" : "VIOLATED") + " in 4 modes, worst slot " +
              fmt("%.2f", worst_sigma) + " sigma, tau monotonicity " +
              (monotone ? "holds" : "VIOLATED") + " on 1000 vectors"};
}

// 5 -------------------------------------------------------------------------

Outcome metric_oracles() {
  const double ba = balanced_accuracy(ConfusionMatrix{0.4, 0.1, 0.2, 0.3});
  const double e = ne2(Tensor::matrix({{3, 4}}), Tensor::matrix({{3, 0}}));
  const Tensor labels = Tensor::matrix({{0, 1, 1, 0, 1}, {1, 1, 0, 0, 0}});
  const double c0 = balanced_accuracy(Tensor::zeros({2, 5}), labels);
  const double c1 = balanced_accuracy(Tensor::full({2, 5}, 1.0), labels);
  const bool ok = std::abs(ba - 0.7) <= 1e-12 && std::abs(e - 0.8) <= 1e-12 && c0 == 0.5 &&
                  c1 == 0.5;
  return {ok, "BA " + fmt("%.15f", ba) + ", NE2 " + fmt("%.15f", e) + ", constant predictors " +
                  fmt("%g", c0) + " / " + fmt("%g", c1)};
}

// 6 -------------------------------------------------------------------------

Outcome training_contract() {
  const TrainerConfig defaults;
  const auto r = defaults.releaser_net(), a = defaults.adversary_net(),
             u = defaults.utility_net(), k = defaults.attacker_net();
  const bool table = defaults.batch_size == 128 && defaults.adversary_steps == 4 &&
                     defaults.noise_dim == 8 && defaults.beta == 1.5 && r.num_layers == 4 &&
                     r.cells == 64 && a.num_layers == 2 && a.cells == 32 && u.num_layers == 3 &&
                     u.cells == 48 && k.num_layers == 3 && k.cells == 32;

  const WindowedDataset data = normalize(split(synthesize_dataset(200, 6), 6));
  TrainerConfig c;
  c.width_scale = 0.25;
  c.batch_size = 32;
  c.iterations = 30;
  c.early_stopping = false;
  c.seed = 6;

  bool frozen = true;
  AdversarialTrainer t(data, c);
  auto& s = t.system();
  for (int it = 0; it < 5; ++it) {
    const auto r0 = s.releaser.checksum(), u0 = s.utility.checksum(), a0 = s.adversary.checksum();
    t.adversary_inner_steps();
    frozen = frozen && s.releaser.checksum() == r0 && s.utility.checksum() == u0 &&
             s.adversary.checksum() != a0;
    const auto a1 = s.adversary.checksum();
    t.outer_step();
    frozen = frozen && s.adversary.checksum() == a1 && s.releaser.checksum() != r0 &&
             s.utility.checksum() != u0;
  }

  const TrainedSystem x = train(data, c), y = train(data, c);
  bool same = x.releaser.checksum() == y.releaser.checksum() &&
              x.utility.checksum() == y.utility.checksum() &&
              x.adversary.checksum() == y.adversary.checksum() &&
              x.history.size() == y.history.size();
  for (std::size_t i = 0; same && i < x.history.size(); ++i) {
    same = x.history[i].releaser_loss == y.history[i].releaser_loss &&
           x.history[i].adversary_loss == y.history[i].adversary_loss;
  }
  return {table && frozen && same,
          std::string("defaults ") + (table ? "match" : "DIFFER") + ", frozen phases " +
              (frozen ? "hold" : "VIOLATED") + ", repeated run " +
              (same ? "bit-identical" : "DIFFERS")};
}

// 7 -------------------------------------------------------------------------

struct TrendConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<double> monotone_lambdas{0.0, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> extra_lambdas{};
  std::size_t days = 400;
  double width_scale = 0.5;
  std::size_t iterations = 1500;
  std::size_t batch_size = 64;
  std::size_t eval_iterations = 400;
  std::size_t random_repeats = 5;
};

constexpr double kRawFloor = 0.9;
constexpr double kMonotoneBand = 0.03;
constexpr double kRateMatch = 1.0;
constexpr double kSmartMargin = 0.03;
constexpr double kNe2Match = 0.02;
// A release with at least this many samples per day is the full release; both
// mechanisms coincide there and there is nothing to compare.
constexpr double kFullRelease = 24.0 - kRateMatch;

struct SeedResult {
  TradeoffPoint raw;
  std::map<double, TradeoffPoint> smart;
  std::map<std::size_t, TradeoffPoint> random;  // by samples per day
};

Outcome trend_reproduction(const TrendConfig& tc, std::string& log) {
  std::vector<SeedResult> results;
  for (auto seed : tc.seeds) {
    const WindowedDataset data = normalize(split(synthesize_dataset(tc.days, seed), seed));
    EvalOptions eval;
    eval.width_scale = tc.width_scale;
    eval.attacker.max_iterations = tc.eval_iterations;
    eval.utility.max_iterations = tc.eval_iterations;
    eval.random_repeats = tc.random_repeats;
    eval.seed = seed;

    SeedResult r;
    r.raw = evaluate_raw(data, eval);
    log += "  seed " + std::to_string(seed) + " raw BA " + fmt("%.3f", r.raw.balanced_accuracy) +
           "\n";

    std::set<double> lambdas(tc.monotone_lambdas.begin(), tc.monotone_lambdas.end());
    lambdas.insert(tc.extra_lambdas.begin(), tc.extra_lambdas.end());
    for (double lambda : lambdas) {
      TrainerConfig c;
      c.width_scale = tc.width_scale;
      c.iterations = tc.iterations;
      c.batch_size = tc.batch_size;
      c.early_stopping = false;
      c.lambda = lambda;
      c.seed = seed;
      const TrainedSystem s = train(data, c);
      const TradeoffPoint p = evaluate_system(s, data, ReleaseMode::kHard, c.tau, eval);
      r.smart[lambda] = p;
      log += "  seed " + std::to_string(seed) + " smart lambda " + fmt("%g", lambda) + ": BA " +
             fmt("%.3f", p.balanced_accuracy) + " NE2 " + fmt("%.3f", p.ne2) + " rate " +
             fmt("%.2f", p.samples_per_day) + " MI " + fmt("%.3f", p.ksg_mi_nats) + "\n";
    }

    auto random_at = [&](std::size_t k) -> const TradeoffPoint& {
      auto it = r.random.find(k);
      if (it == r.random.end()) {
        it = r.random.emplace(k, evaluate_random(data, static_cast<double>(k) / 24.0, eval)).first;
        log += "  seed " + std::to_string(seed) + " random " + std::to_string(k) + "/24: BA " +
               fmt("%.3f", it->second.balanced_accuracy) + " NE2 " +
               fmt("%.3f", it->second.ne2) + " MI " + fmt("%.3f", it->second.ksg_mi_nats) + "\n";
      }
      return it->second;
    };
    for (const auto& [lambda, p] : r.smart) {
      if (p.samples_per_day >= kFullRelease) continue;
      const auto k = static_cast<std::size_t>(std::clamp(std::round(p.samples_per_day), 1.0, 23.0));
      random_at(k);
      // Random NE2 falls as the rate rises; walk towards the smart NE2.
      std::size_t lo = 1, hi = 24;
      while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        (random_at(mid).ne2 > p.ne2 ? lo : hi) = mid;
      }
      random_at(lo);
    }
    results.push_back(std::move(r));
  }

  // (a) raw attacker ceiling on every seed.
  bool a_ok = true;
  for (const auto& r : results) a_ok = a_ok && r.raw.balanced_accuracy > kRawFloor;

  // (b) seed-averaged trend over the monotone grid.
  bool b_ok = true;
  std::string b_detail;
  double prev_ba = 2.0, prev_ne2 = -1.0;
  for (double lambda : tc.monotone_lambdas) {
    double ba = 0.0, e = 0.0;
    for (const auto& r : results) {
      ba += r.smart.at(lambda).balanced_accuracy;
      e += r.smart.at(lambda).ne2;
    }
    ba /= static_cast<double>(results.size());
    e /= static_cast<double>(results.size());
    b_ok = b_ok && ba <= prev_ba + kMonotoneBand && e >= prev_ne2 - kMonotoneBand;
    prev_ba = ba;
    prev_ne2 = e;
    b_detail += (b_detail.empty() ? "" : " ") + fmt("%.3f", ba) + "/" + fmt("%.3f", e);
  }

  // (c) and (d) per smart point below full release.
  std::size_t c_n = 0, c_fail = 0, d_n = 0, d_fail = 0, full = 0;
  for (const auto& r : results) {
    for (const auto& [lambda, p] : r.smart) {
      if (p.samples_per_day >= kFullRelease) {
        ++full;
        continue;
      }
      for (const auto& [k, q] : r.random) {
        if (std::abs(static_cast<double>(k) - p.samples_per_day) <= kRateMatch) {
          ++c_n;
          if (!(p.balanced_accuracy <= q.balanced_accuracy - kSmartMargin)) ++c_fail;
        }
        if (std::abs(q.ne2 - p.ne2) <= kNe2Match) {
          ++d_n;
          if (!(p.ksg_mi_nats <= q.ksg_mi_nats)) ++d_fail;
        }
      }
    }
  }
  const bool c_ok = c_n > 0 && c_fail == 0;
  const bool d_ok = d_n > 0 && d_fail == 0;
  log += "  (a) " + std::string(a_ok ? "ok" : "FAIL") + " (b) " + (b_ok ? "ok" : "FAIL") +
         " mean BA/NE2 by lambda: " + b_detail + "\n";
  log += "  (c) " + std::to_string(c_n - c_fail) + "/" + std::to_string(c_n) +
         " matched-rate pairs hold; (d) " + std::to_string(d_n - d_fail) + "/" +
         std::to_string(d_n) + " matched-NE2 pairs hold; " + std::to_string(full) +
         " smart points at full release skipped\n";
  return {a_ok && b_ok && c_ok && d_ok,
          std::string("(a) ") + (a_ok ? "ok" : "FAIL") + " (b) " + (b_ok ? "ok" : "FAIL") +
              " (c) " + std::to_string(c_n - c_fail) + "/" + std::to_string(c_n) + " (d) " +
              std::to_string(d_n - d_fail) + "/" + std::to_string(d_n)};
}

// 8 -------------------------------------------------------------------------

Outcome baseline_exactness() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 5.0);
  std::vector<double> v(20 * 24);
  for (auto& e : v) e = unit(rng);
  const Tensor y = Tensor::from({20, 24}, v);
  bool rates = true, dc = true, stop = true;
  double worst_db = -1e9;
  for (std::size_t d : {2, 3, 4, 6, 8, 12}) {
    rates = rates && released_rate(uniform_downsample(y, d).mask) == 24.0 / static_cast<double>(d);
    const FirFilter f = fir_lowpass_design(d);
    dc = dc && std::abs(std::accumulate(f.coefficients.begin(), f.coefficients.end(), 0.0) - 1.0) <=
                   1e-9;
    const double db = 20.0 * std::log10(f.magnitude_response(1.5 * f.cutoff));
    worst_db = std::max(worst_db, db);
    stop = stop && db <= -20.0;
  }
  return {rates && dc && stop, std::string("rates ") + (rates ? "exact" : "WRONG") + ", DC gain " +
                                   (dc ? "1" : "OFF") + ", worst stop-band " +
                                   fmt("%.1f", worst_db) + " dB at 1.5x cutoff"};
}

// 9 -------------------------------------------------------------------------

Outcome serialization() {
  const fs::path dir = work_dir("serialization");
  const WindowedDataset data = normalize(split(synthesize_dataset(120, 9), 9));
  TrainerConfig c;
  c.width_scale = 0.25;
  c.batch_size = 16;
  c.iterations = 5;
  c.early_stopping = false;
  const TrainedSystem s = train(data, c);
  const Checkpoint ckpt = system_checkpoint(s);
  save_checkpoint(dir / "a.sppr", ckpt);
  const Checkpoint back = load_checkpoint(dir / "a.sppr");
  const TrainedSystem restored = system_from_checkpoint(back, c);
  save_checkpoint(dir / "b.sppr", back);
  const bool round_trip = back == ckpt && slurp(dir / "a.sppr") == slurp(dir / "b.sppr") &&
                          restored.releaser.checksum() == s.releaser.checksum() &&
                          restored.utility.checksum() == s.utility.checksum() &&
                          restored.adversary.checksum() == s.adversary.checksum();

  std::string bytes = slurp(dir / "a.sppr");
  std::size_t detected = 0, tried = 0;
  for (std::size_t pos : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    std::string bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
    ++tried;
    try {
      parse_checkpoint(bad);
    } catch (const CheckpointError&) {
      ++detected;
    }
  }

  SweepConfig sweep;
  sweep.trainer = c;
  sweep.lambdas = {0.0, 1.0};
  sweep.seeds = {1, 2};
  sweep.uniform_baselines = true;
  sweep.decimations = {4};
  sweep.random_rates = {0.25};
  sweep.eval.width_scale = 0.25;
  sweep.eval.attacker.max_iterations = 20;
  sweep.eval.utility.max_iterations = 20;
  sweep.eval.random_repeats = 2;
  const std::string first = format_results_csv(tradeoff_sweep(data, sweep));
  sweep.jobs = 2;
  const std::string second = format_results_csv(tradeoff_sweep(data, sweep));
  const bool csv = first == second && std::count(first.begin(), first.end(), '\n') == 1 + 8;
  return {round_trip && detected == tried && csv,
          std::string("round trip ") + (round_trip ? "bit-exact" : "DIFFERS") + ", corruption " +
              std::to_string(detected) + "/" + std::to_string(tried) + " detected, sweep CSV " +
              (csv ? "byte-identical" : "DIFFERS")};
}

// 10 ------------------------------------------------------------------------

Outcome eco_readiness() {
  // One household, 1000 days at one-minute resolution, in the ingestion format.
  constexpr std::size_t kDays = 1000;
  constexpr std::int64_t kStart = 1338508800;  // a UTC midnight
  const fs::path dir = work_dir("eco");
  const RawSeries hourly = synthesize_series(kDays, 10);
  {
    std::ofstream out(dir / "house01.csv");
    out << "timestamp,power_w,occupancy\n";
    std::mt19937_64 rng(10);
    std::normal_distribution<double> jitter(0.0, 5.0);
    for (std::size_t h = 0; h < hourly.size(); ++h) {
      for (int minute = 0; minute < 60; ++minute) {
        out << kStart + static_cast<std::int64_t>(h) * 3600 + minute * 60 << ','
            << std::max(0.0, hourly.power_w[h] + jitter(rng)) << ',' << hourly.occupancy[h]
            << '\n';
      }
    }
  }
  const LoadedSeries loaded = load_csv(dir / "house01.csv");
  const RawSeries resampled = resample_hourly(loaded.series);
  const WindowedDataset windows = window_daily(resampled);
  const WindowedDataset parts = split(windows, 10);
  const std::size_t tr = parts.indices(Split::kTrain).size(),
                    va = parts.indices(Split::kValidation).size(),
                    te = parts.indices(Split::kTest).size();
  bool rule = true;
  for (std::size_t n = 20; n <= 5000; ++n) {
    const SplitCounts c = split_counts(n);
    rule = rule && c.test == (15 * n) / 100 && c.validation == (n - c.test) / 10 &&
           c.train + c.validation + c.test == n;
  }
  const bool ok = loaded.series.size() == kDays * 24 * 60 && resampled.size() == kDays * 24 &&
                  windows.size() == kDays && windows.steps == 24 && te == 150 && va == 85 &&
                  tr == 765 && rule;
  return {ok, std::to_string(loaded.series.size()) + " samples -> " +
                  std::to_string(resampled.size()) + " hours -> " +
                  std::to_string(windows.size()) + " windows -> test/validation/train " +
                  std::to_string(te) + "/" + std::to_string(va) + "/" + std::to_string(tr)};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);

  CLI::App app{"Acceptance criteria"};
  std::vector<int> only, known_unmet;
  bool verbose = false;
  TrendConfig trend;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--known-unmet", known_unmet,
                 "Criteria whose FAIL is still printed but does not set the exit code")
      ->delimiter(',');
  app.add_flag("--verbose", verbose, "Print the per-point log of criterion 7");
  app.add_option("--trend-seeds", trend.seeds, "Seeds for criterion 7")->delimiter(',');
  app.add_option("--trend-iterations", trend.iterations, "Training iterations for criterion 7");
  CLI11_PARSE(app, argc, argv);

  std::string trend_log;
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, gradient_correctness},
      {2, loss_oracles},
      {3, ksg_estimator},
      {4, mechanism_invariants},
      {5, metric_oracles},
      {6, training_contract},
      {7, [&] { return trend_reproduction(trend, trend_log); }},
      {8, baseline_exactness},
      {9, serialization},
      {10, eco_readiness},
  };
  int failed = 0, tolerated = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs);
    if (id == 7 && (verbose || !o.pass)) std::fputs(trend_log.c_str(), stdout);
    std::fflush(stdout);
    if (o.pass) continue;
    const bool known = std::find(known_unmet.begin(), known_unmet.end(), id) != known_unmet.end();
    (known ? tolerated : failed) += 1;
  }
  if (tolerated > 0) std::printf("%d known-unmet criterion FAIL(s) not counted\n", tolerated);
  return failed == 0 ? 0 : 1;
}
