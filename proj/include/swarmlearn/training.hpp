#pragma once

// Meta-training: fresh function batches each epoch, truncated unrolls of the
// swarm, regret-plus-entropy loss per window, clipped Adam updates.

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "swarmlearn/checkpoint.hpp"
#include "swarmlearn/meta_optimizer.hpp"
#include "swarmlearn/optim.hpp"
#include "swarmlearn/parallel.hpp"
#include "swarmlearn/posterior.hpp"

namespace swarmlearn {

struct TrainConfig {
  Family family = Family::quadratic;
  double alpha = 10.0;
  std::size_t n = 2;
  std::size_t k = 4;
  std::size_t iterations = 40;  // T
  std::size_t window = 20;
  std::size_t epochs = 300;
  std::size_t batch = 8;  // m
  AblationLevel level = AblationLevel::proposed;
  double lambda = 1.0;  // only the proposed level uses it
  LossConfig loss;
  AdamConfig adam;
  double clip_norm = 5.0;
  ModelConfig model;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  /// B0 runs a single particle; every other level uses k.
  std::size_t particles() const { return level == AblationLevel::b0 ? 1 : k; }
  double effective_lambda() const { return level == AblationLevel::proposed ? lambda : 0.0; }
  ModelConfig model_config() const {
    ModelConfig c = model;
    c.n = n;
    c.arch = architecture_for(level);
    return c;
  }
  void validate() const {
    if (n < 1) throw config_error("n must be at least 1");
    if (k < 1) throw config_error("k must be at least 1");
    if (iterations < 1) throw config_error("iterations must be at least 1");
    if (window < 1) throw config_error("window must be at least 1");
    if (batch < 1) throw config_error("batch must be at least 1");
    if (lambda < 0.0) throw config_error("lambda must be non-negative");
    if (loss.l2 < 0.0) throw config_error("l2 must be non-negative");
    if (loss.mc_samples < 100) throw config_error("mc_samples must be at least 100");
    if (level == AblationLevel::b1) {
      throw config_error("level B1 is not trained; it runs the B0 checkpoint with restarts");
    }
  }
};

struct TrainLogRow {
  std::size_t epoch = 0;  // 1-based
  double mean_regret = 0.0;
  double mean_entropy = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;  // pre-clipping, averaged over windows
  double wall_ms = 0.0;
  std::size_t clipped = 0;  // windows whose gradient was clipped
  std::size_t skipped = 0;  // windows whose update was skipped
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
};

namespace detail {

struct EpochStreams {
  std::vector<std::uint64_t> instance_seeds;
  std::vector<std::uint64_t> start_seeds;
};

inline EpochStreams epoch_streams(const TrainConfig& c, std::size_t epoch) {
  EpochStreams s;
  for (std::size_t q = 0; q < c.batch; ++q) {
    s.instance_seeds.push_back(derive_seed(c.seed, {1, epoch, q}));
    s.start_seeds.push_back(derive_seed(c.seed, {2, epoch, q}));
  }
  return s;
}

struct WindowResult {
  std::vector<Matrix> grads;
  double loss = 0.0;
  double regret = 0.0;
  double entropy = 0.0;
};

}  // namespace detail

/// Sums per-function gradients in increasing key order, so the result does
/// not depend on the order the batch was listed in.
inline std::vector<Matrix> merge_gradients(const std::vector<std::vector<Matrix>>& grads,
                                           const std::vector<std::uint64_t>& keys) {
  if (grads.empty() || grads.size() != keys.size()) throw shape_error("merge_gradients: need one key per gradient");
  std::vector<std::size_t> order(grads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  std::vector<Matrix> out = grads[order.front()];
  for (std::size_t o = 1; o < order.size(); ++o)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += grads[order[o]][i];
  return out;
}

/// Mean rho0-entropy over the first window of the first batch, with
/// parameters held constant.
inline double compute_h0(const TrainConfig& c, const MetaParams& params) {
  const SearchSpace space = SearchSpace::box(c.n);
  const detail::EpochStreams s = detail::epoch_streams(c, 0);
  std::vector<double> h(c.batch);
  parallel_for(c.batch, c.threads, [&](std::size_t q) {
    const FunctionInstance inst = sample_instance(c.family, space, s.instance_seeds[q], c.alpha);
    const TrajectoryRecord rec = rollout_from(inst, params, uniform_positions(space, c.particles(),
                                                                              s.start_seeds[q]),
                                              std::min(c.window, c.iterations));
    h[q] = initial_entropy(rec, space, c.loss, derive_seed(c.seed, {4, q}));
  });
  double acc = 0.0;
  for (double v : h) acc += v;
  return acc / static_cast<double>(h.size());
}

inline Checkpoint initial_checkpoint(const TrainConfig& c) {
  Checkpoint ck;
  ck.level = c.level;
  ck.family = c.family;
  ck.alpha = c.family == Family::quadratic ? 0.0 : c.alpha;
  ck.lambda = c.effective_lambda();
  ck.params = MetaParams::initialize(c.model_config(), derive_seed(c.seed, {0}));
  ck.adam = AdamState::for_shapes(ck.params.tensor_values());
  return ck;
}

using EpochCallback = std::function<void(const TrainLogRow&, const Checkpoint&)>;

/// Trains from `resume` (or a fresh initialization) up to config.epochs.
/// Seeds depend only on (seed, epoch, function index), so a resumed run
/// matches an uninterrupted one.
inline TrainResult train(const TrainConfig& c, std::optional<Checkpoint> resume = std::nullopt,
                         const EpochCallback& on_epoch = {}, bool wall_time = false) {
  c.validate();
  const SearchSpace space = SearchSpace::box(c.n);
  const ModelConfig model = c.model_config();
  TrainResult result;
  Checkpoint ck = resume ? std::move(*resume) : initial_checkpoint(c);
  if (resume) {
    if (!(ck.params.config.arch == model.arch) || ck.params.config.n != c.n ||
        ck.params.config.hidden != model.hidden) {
      throw config_error("checkpoint (level " + to_string(ck.level) + ", n = " + std::to_string(ck.params.config.n) +
                         ") does not match the training configuration (level " + to_string(c.level) +
                         ", n = " + std::to_string(c.n) + ")");
    }
    if (ck.adam.m.empty()) ck.adam = AdamState::for_shapes(ck.params.tensor_values());
  }
  const double lambda = c.effective_lambda();
  LossConfig loss_cfg = c.loss;
  loss_cfg.lambda = lambda;
  if (lambda > 0.0 && !std::isfinite(ck.h0) && ck.epoch < c.epochs) ck.h0 = compute_h0(c, ck.params);
  loss_cfg.h0 = ck.h0;

  const std::size_t windows = (c.iterations + c.window - 1) / c.window;
  for (std::size_t epoch = ck.epoch; epoch < c.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const detail::EpochStreams s = detail::epoch_streams(c, epoch);
    std::vector<FunctionInstance> instances;
    for (std::size_t q = 0; q < c.batch; ++q) {
      instances.push_back(sample_instance(c.family, space, s.instance_seeds[q], c.alpha));
    }
    std::vector<std::optional<SwarmRunner>> runners(c.batch);
    for (std::size_t q = 0; q < c.batch; ++q) {
      runners[q].emplace(instances[q], model, uniform_positions(space, c.particles(), s.start_seeds[q]));
    }

    TrainLogRow row;
    row.epoch = epoch + 1;
    std::vector<double> last_entropy(c.batch, 0.0);
    for (std::size_t w = 0; w < windows; ++w) {
      const std::size_t steps = std::min(c.window, c.iterations - w * c.window);
      std::vector<detail::WindowResult> results(c.batch);
      parallel_for(c.batch, c.threads, [&](std::size_t q) {
        ad::Tape tape;
        const MetaParamVars vars = bind(ck.params, &tape);
        SwarmRunner& runner = *runners[q];
        for (std::size_t t = 0; t < steps; ++t) runner.step(vars);
        const FunctionLoss fl =
            function_loss(runner.record(), space, loss_cfg, derive_seed(c.seed, {3, epoch, s.instance_seeds[q], w}));
        detail::WindowResult& r = results[q];
        r.grads = tape.backward(fl.total).parameters();
        r.loss = fl.total.scalar();
        r.regret = fl.regret.scalar();
        r.entropy = fl.entropy.defined() ? fl.entropy.scalar() : 0.0;
        runner.truncate();
      });

      std::vector<std::vector<Matrix>> per_function;
      double loss = 0.0;
      for (std::size_t q = 0; q < c.batch; ++q) {
        per_function.push_back(std::move(results[q].grads));
        loss += results[q].loss;
        last_entropy[q] = results[q].entropy;
      }
      std::vector<Matrix> grads = merge_gradients(per_function, s.instance_seeds);
      const double inv_m = 1.0 / static_cast<double>(c.batch);
      const std::vector<Matrix> values = ck.params.tensor_values();
      for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].size(); ++j)
          grads[i][j] = grads[i][j] * inv_m + 2.0 * c.loss.l2 * values[i][j];
      loss = loss * inv_m + c.loss.l2 * ck.params.squared_norm();

      row.grad_norm += global_norm(grads) / static_cast<double>(windows);
      row.loss += loss / static_cast<double>(windows);
      if (clip_global_norm(grads, c.clip_norm)) ++row.clipped;
      std::vector<Matrix> params = ck.params.tensor_values();
      if (adam_update(params, grads, ck.adam, c.adam)) {
        ck.params.set_tensor_values(params);
      } else {
        ++row.skipped;
      }
    }
    for (std::size_t q = 0; q < c.batch; ++q) {
      row.mean_regret += runners[q]->record().regret();
      row.mean_entropy += last_entropy[q];
    }
    row.mean_regret /= static_cast<double>(c.batch);
    row.mean_entropy /= static_cast<double>(c.batch);
    if (wall_time) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    ck.epoch = epoch + 1;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row, ck);
  }
  result.checkpoint = std::move(ck);
  return result;
}

}  // namespace swarmlearn
