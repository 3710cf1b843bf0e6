#pragma once

// Reference optimizers and the ablation ladder, all reporting best-so-far
// value per function evaluation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "swarmlearn/checkpoint.hpp"
#include "swarmlearn/meta_optimizer.hpp"
#include "swarmlearn/objectives.hpp"
#include "swarmlearn/optim.hpp"
#include "swarmlearn/random.hpp"

namespace swarmlearn {

/// best[e] is the lowest value seen within the first e + 1 evaluations.
struct Curve {
  std::vector<double> best;
  bool diverged = false;
  std::size_t diverged_at = 0;  // evaluation count when divergence was detected

  double final_value() const { return best.back(); }
};

namespace detail {

class CurveBuilder {
 public:
  explicit CurveBuilder(std::size_t budget) : budget_(budget) {
    if (budget < 1) throw config_error("evaluation budget must be at least 1");
    curve_.best.reserve(budget);
  }
  bool full() const { return curve_.best.size() >= budget_; }
  std::size_t evals() const { return curve_.best.size(); }
  void push(double f) {
    if (full()) return;
    const double prev = curve_.best.empty() ? std::numeric_limits<double>::infinity() : curve_.best.back();
    curve_.best.push_back(std::isfinite(f) ? std::min(prev, f) : prev);
  }
  /// Stops the run; the remaining budget repeats the best value.
  void diverge() {
    curve_.diverged = true;
    curve_.diverged_at = evals();
    const double last = curve_.best.back();
    while (!full()) curve_.best.push_back(last);
  }
  Curve take() { return std::move(curve_); }

 private:
  std::size_t budget_;
  Curve curve_;
};

inline bool diverging(double f, double f0) {
  return !std::isfinite(f) || std::abs(f) > 1e8 * (std::abs(f0) + 1.0);
}

}  // namespace detail

/// Evaluated points in order, for path plots.
using PathTrace = std::vector<Sample>;

/// x <- x - lr grad f(x); one evaluation per iterate.
inline Curve run_gd(const FunctionInstance& inst, std::vector<double> x, double lr, std::size_t budget,
                    PathTrace* trace = nullptr) {
  detail::CurveBuilder cb(budget);
  Evaluation ev = inst.evaluate(x);
  const double f0 = ev.value;
  cb.push(ev.value);
  if (trace) trace->push_back({x, ev.value});
  while (!cb.full()) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr * ev.gradient[i];
    ev = inst.evaluate(x);
    if (detail::diverging(ev.value, f0)) {
      cb.diverge();
      break;
    }
    cb.push(ev.value);
    if (trace) trace->push_back({x, ev.value});
  }
  return cb.take();
}

/// The objectives here are deterministic, so SGD is plain GD.
inline Curve run_sgd(const FunctionInstance& inst, std::vector<double> x, double lr, std::size_t budget,
                     PathTrace* trace = nullptr) {
  return run_gd(inst, std::move(x), lr, budget, trace);
}

inline Curve run_adam(const FunctionInstance& inst, std::vector<double> x, double lr, std::size_t budget,
                      AdamConfig config = {}) {
  config.lr = lr;
  detail::CurveBuilder cb(budget);
  std::vector<Matrix> params = {Matrix::column(x)};
  AdamState state = AdamState::for_shapes(params);
  Evaluation ev = inst.evaluate(params[0].data());
  const double f0 = ev.value;
  cb.push(ev.value);
  while (!cb.full()) {
    adam_update(params, {Matrix::column(ev.gradient)}, state, config);
    ev = inst.evaluate(params[0].data());
    if (detail::diverging(ev.value, f0)) {
      cb.diverge();
      break;
    }
    cb.push(ev.value);
  }
  return cb.take();
}

struct PsoConfig {
  double w_lo = 0.4, w_hi = 0.9;  // inertia, drawn per iteration
  double r_lo = 0.0, r_hi = 2.0;  // attraction coefficients, drawn per particle and iteration
};

/// Velocity-form PSO attracted toward personal and global bests, starting
/// from the given positions with zero velocity.
inline Curve run_pso(const FunctionInstance& inst, std::vector<std::vector<double>> x, std::size_t budget,
                     std::uint64_t seed, const PsoConfig& config = {}, PathTrace* trace = nullptr) {
  const std::size_t k = x.size();
  if (k < 2) throw config_error("PSO needs at least 2 particles");
  const std::size_t n = inst.dim();
  Rng rng(seed);
  std::uniform_real_distribution<double> wdist(config.w_lo, config.w_hi), rdist(config.r_lo, config.r_hi);
  detail::CurveBuilder cb(budget);
  std::vector<std::vector<double>> v(k, std::vector<double>(n, 0.0)), pbest = x;
  std::vector<double> pbest_f(k);
  std::size_t g = 0;
  for (std::size_t i = 0; i < k && !cb.full(); ++i) {
    pbest_f[i] = inst.value(x[i]);
    cb.push(pbest_f[i]);
    if (trace) trace->push_back({x[i], pbest_f[i]});
    if (pbest_f[i] < pbest_f[g]) g = i;
  }
  while (!cb.full()) {
    const double w = wdist(rng);
    const std::vector<double> gbest = pbest[g];
    for (std::size_t i = 0; i < k && !cb.full(); ++i) {
      const double r1 = rdist(rng), r2 = rdist(rng);
      for (std::size_t d = 0; d < n; ++d) {
        v[i][d] = w * v[i][d] + r1 * (pbest[i][d] - x[i][d]) + r2 * (gbest[d] - x[i][d]);
        x[i][d] += v[i][d];
      }
      const double f = inst.value(x[i]);
      cb.push(f);
      if (trace) trace->push_back({x[i], f});
      if (f < pbest_f[i]) {
        pbest_f[i] = f;
        pbest[i] = x[i];
      }
    }
    for (std::size_t i = 0; i < k; ++i)
      if (pbest_f[i] < pbest_f[g]) g = i;
  }
  return cb.take();
}

inline Curve run_pso(const FunctionInstance& inst, std::size_t k, std::size_t budget, std::uint64_t seed,
                     const PsoConfig& config = {}, PathTrace* trace = nullptr) {
  return run_pso(inst, uniform_positions(SearchSpace::box(inst.dim()), k, seed), budget, derive_seed(seed, {1}),
                 config, trace);
}

/// Learned optimizer with constant parameters until the budget is spent.
inline Curve run_meta(const FunctionInstance& inst, const MetaParams& params,
                      const std::vector<std::vector<double>>& positions, std::size_t budget) {
  detail::CurveBuilder cb(budget);
  SwarmRunner runner(inst, params.config, positions);
  const MetaParamVars vars = bind(params, nullptr);
  while (runner.record().samples.size() < budget) {
    runner.step(vars);
    runner.truncate();
  }
  for (const Sample& s : runner.record().samples) cb.push(s.f);
  return cb.take();
}

inline Curve run_meta(const FunctionInstance& inst, const MetaParams& params, std::size_t k, std::size_t budget,
                      std::uint64_t seed) {
  if (k < 1) throw config_error("a swarm needs at least one particle");
  return run_meta(inst, params, uniform_positions(SearchSpace::box(inst.dim()), k, seed), budget);
}

/// Restart r draws its start from this seed; restart 0 uses the base seed.
inline std::uint64_t restart_seed(std::uint64_t seed, std::size_t r) {
  return r == 0 ? seed : derive_seed(seed, {r});
}

/// Rejects a checkpoint whose architecture does not belong to the level.
inline void check_level(const Checkpoint& ck, AblationLevel level) {
  const AblationLevel trained = level == AblationLevel::b1 ? AblationLevel::b0 : level;
  if (ck.level != trained || !(ck.params.config.arch == architecture_for(level))) {
    throw config_error("level " + to_string(level) + " needs a checkpoint trained at level " + to_string(trained) +
                       ", got " + to_string(ck.level));
  }
}

/// B0 runs one particle; B1 runs B0 k times on budget/k evaluations each and
/// keeps the best; B2, B3 and proposed run a k-particle swarm.
inline Curve run_ablation(AblationLevel level, const Checkpoint& ck, const FunctionInstance& inst, std::size_t k,
                          std::size_t budget, std::uint64_t seed) {
  check_level(ck, level);
  if (level == AblationLevel::b0) return run_meta(inst, ck.params, 1, budget, seed);
  if (level != AblationLevel::b1) return run_meta(inst, ck.params, k, budget, seed);
  if (k < 1 || budget < k) throw config_error("B1 needs 1 <= k <= budget");
  detail::CurveBuilder cb(budget);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t share = budget / k + (r + 1 == k ? budget % k : 0);
    const Curve c = run_meta(inst, ck.params, 1, share, restart_seed(seed, r));
    for (double v : c.best) cb.push(v);
  }
  return cb.take();
}

}  // namespace swarmlearn
