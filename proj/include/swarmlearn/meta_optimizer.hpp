#pragma once

// The learned update rule: features -> intra-particle attention ->
// inter-particle attention -> coordinate-wise LSTM -> step, shared by all
// particles and all coordinates.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "swarmlearn/attention.hpp"
#include "swarmlearn/autodiff.hpp"
#include "swarmlearn/objectives.hpp"
#include "swarmlearn/swarm.hpp"

namespace swarmlearn {

inline constexpr std::array<const char*, 4> feature_names = {"gradient", "momentum", "velocity", "attraction"};

/// Switchable parts of the model. The gradient feature is always on.
struct Architecture {
  bool momentum = true;
  bool velocity = true;
  bool attraction = true;
  bool intra_attention = true;
  bool inter_attention = true;

  std::array<bool, 4> feature_mask() const { return {true, momentum, velocity, attraction}; }
  std::size_t feature_count() const { return 1 + momentum + velocity + attraction; }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Ablation ladder. B1 reuses the B0 network and only changes how it is run.
enum class AblationLevel { b0, b1, b2, b3, proposed };

inline std::string to_string(AblationLevel level) {
  switch (level) {
    case AblationLevel::b0: return "B0";
    case AblationLevel::b1: return "B1";
    case AblationLevel::b2: return "B2";
    case AblationLevel::b3: return "B3";
    case AblationLevel::proposed: return "proposed";
  }
  return "?";
}

inline AblationLevel parse_level(std::string_view s) {
  if (s == "B0" || s == "b0") return AblationLevel::b0;
  if (s == "B1" || s == "b1") return AblationLevel::b1;
  if (s == "B2" || s == "b2") return AblationLevel::b2;
  if (s == "B3" || s == "b3") return AblationLevel::b3;
  if (s == "proposed") return AblationLevel::proposed;
  throw config_error("unknown ablation level '" + std::string(s) + "'");
}

inline Architecture architecture_for(AblationLevel level) {
  switch (level) {
    case AblationLevel::b0:
    case AblationLevel::b1:
      return {false, false, false, false, false};
    case AblationLevel::b2:
      return {true, false, false, true, false};
    case AblationLevel::b3:
    case AblationLevel::proposed:
      return {true, true, true, true, true};
  }
  return {};
}

struct ModelConfig {
  std::size_t n = 2;
  std::size_t hidden = 20;
  double step_scale = 0.1;
  double gamma = 1.0;
  double length_scale = 1.0;
  SwarmConfig swarm;
  Architecture arch;
};

/// Every trainable array. The gate blocks of the LSTM weights are laid out
/// as [input | forget | output | candidate], H columns each.
struct MetaParams {
  ModelConfig config;
  Matrix intra_W;         // (n x n)
  Matrix intra_U;         // (n x n)
  Matrix intra_v;         // (n x 1)
  Matrix lstm_input;      // (1 x 4H)
  Matrix lstm_recurrent;  // (H x 4H)
  Matrix lstm_bias;       // (1 x 4H)
  Matrix step_proj;       // (H x 1) hidden -> step
  Matrix context_proj;    // (H x 1) hidden -> attention context

  static constexpr std::size_t tensor_count = 8;

  static const std::array<const char*, tensor_count>& names() {
    static const std::array<const char*, tensor_count> n = {"intra_W",   "intra_U",    "intra_v",
                                                            "lstm_input", "lstm_recurrent", "lstm_bias",
                                                            "step_proj", "context_proj"};
    return n;
  }

  std::array<Matrix*, tensor_count> tensors() {
    return {&intra_W, &intra_U, &intra_v, &lstm_input, &lstm_recurrent, &lstm_bias, &step_proj, &context_proj};
  }
  std::array<const Matrix*, tensor_count> tensors() const {
    return {&intra_W, &intra_U, &intra_v, &lstm_input, &lstm_recurrent, &lstm_bias, &step_proj, &context_proj};
  }

  std::vector<Matrix> tensor_values() const {
    std::vector<Matrix> out;
    for (const Matrix* m : tensors()) out.push_back(*m);
    return out;
  }

  void set_tensor_values(const std::vector<Matrix>& values) {
    if (values.size() != tensor_count) throw shape_error("expected " + std::to_string(tensor_count) + " tensors");
    auto ts = tensors();
    for (std::size_t i = 0; i < tensor_count; ++i) {
      if (!ts[i]->same_shape(values[i])) {
        throw shape_error(std::string("tensor ") + names()[i] + " expects " + ts[i]->shape() + ", got " +
                          values[i].shape());
      }
      *ts[i] = values[i];
    }
  }

  double squared_norm() const {
    double acc = 0.0;
    for (const Matrix* m : tensors())
      for (double v : m->data()) acc += v * v;
    return acc;
  }

  static MetaParams zeros(const ModelConfig& config) {
    const std::size_t n = config.n, h = config.hidden;
    return MetaParams{config,         Matrix(n, n),     Matrix(n, n),     Matrix(n, 1),
                      Matrix(1, 4 * h), Matrix(h, 4 * h), Matrix(1, 4 * h), Matrix(h, 1),
                      Matrix(h, 1)};
  }

  /// Weights uniform in [-0.1, 0.1], forget-gate bias 1, other biases 0.
  static MetaParams initialize(const ModelConfig& config, std::uint64_t seed) {
    MetaParams p = zeros(config);
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (Matrix* m : p.tensors()) {
      if (m == &p.lstm_bias) continue;
      for (double& v : m->data()) v = u(rng);
    }
    for (std::size_t j = 0; j < config.hidden; ++j) p.lstm_bias[config.hidden + j] = 1.0;
    return p;
  }
};

/// MetaParams as Vars: either parameters on a tape or plain constants.
struct MetaParamVars {
  IntraAttentionParams intra;
  ad::Var lstm_input, lstm_recurrent, lstm_bias, step_proj, context_proj;

  std::vector<ad::Var> all() const {
    return {intra.W, intra.U, intra.v, lstm_input, lstm_recurrent, lstm_bias, step_proj, context_proj};
  }
};

/// Registers every tensor as a tape parameter (in tensor order) or, with no
/// tape, wraps them as constants.
inline MetaParamVars bind(const MetaParams& params, ad::Tape* tape) {
  std::vector<ad::Var> v;
  for (const Matrix* m : params.tensors()) v.push_back(tape ? tape->parameter(*m) : ad::Var(*m));
  return {{v[0], v[1], v[2]}, v[3], v[4], v[5], v[6], v[7]};
}

struct LstmOutput {
  ad::Var hidden;  // (rows x H)
  ad::Var cell;    // (rows x H)
};

/// One step of an LSTM applied independently to every row: row r consumes
/// input[r] (a scalar) with state (hidden[r], cell[r]) and shares all weights.
inline LstmOutput lstm_cell(const ad::Var& input, const ad::Var& hidden, const ad::Var& cell,
                            const ad::Var& w_input, const ad::Var& w_recurrent, const ad::Var& bias) {
  const std::size_t rows = input.rows();
  const std::size_t h = hidden.cols();
  if (input.cols() != 1 || hidden.rows() != rows || !cell.value().same_shape(hidden.value()) ||
      w_input.rows() != 1 || w_input.cols() != 4 * h || w_recurrent.rows() != h || w_recurrent.cols() != 4 * h ||
      bias.rows() != 1 || bias.cols() != 4 * h) {
    throw shape_error("lstm_cell: inconsistent shapes input " + input.shape() + ", hidden " + hidden.shape() +
                      ", cell " + cell.shape() + ", weights " + w_input.shape() + " / " + w_recurrent.shape() +
                      " / " + bias.shape());
  }
  const ad::Var gates = ad::add(ad::add(ad::matmul(input, w_input), ad::matmul(hidden, w_recurrent)),
                                ad::matmul(ad::ones(rows, 1), bias));
  const ad::Var in_gate = ad::sigmoid(ad::slice_cols(gates, 0, h));
  const ad::Var forget_gate = ad::sigmoid(ad::slice_cols(gates, h, h));
  const ad::Var out_gate = ad::sigmoid(ad::slice_cols(gates, 2 * h, h));
  const ad::Var candidate = ad::tanh(ad::slice_cols(gates, 3 * h, h));
  const ad::Var next_cell = ad::add(ad::hadamard(forget_gate, cell), ad::hadamard(in_gate, candidate));
  const ad::Var next_hidden = ad::hadamard(out_gate, ad::tanh(next_cell));
  return {next_hidden, next_cell};
}

/// Attention quantities of one iteration, for interpretation.
struct StepLog {
  Matrix feature_weights;  // (k x 4), zero for disabled features
  Matrix similarity;       // Q (k x k); empty without inter-attention
  Matrix affinity;         // M (k x k); empty without inter-attention
  double trace_share = 1.0;
  double off_trace_share = 0.0;
};

struct SwarmStepResult {
  std::vector<ad::Var> steps;
  StepLog log;
};

namespace detail {

inline void require_finite(const ad::Var& v, const char* stage, std::size_t t) {
  if (!v.value().all_finite()) {
    throw numeric_error(std::string("swarm_step: non-finite values after ") + stage + " at iteration " +
                        std::to_string(t));
  }
}

inline void ensure_recurrent(ParticleState& p, std::size_t n, std::size_t hidden) {
  if (!p.recurrent.hidden.defined()) p.recurrent.hidden = ad::zeros(n, hidden);
  if (!p.recurrent.cell.defined()) p.recurrent.cell = ad::zeros(n, hidden);
}

}  // namespace detail

/// Computes the next step of every particle and advances each particle's
/// recurrent state. Positions are left for apply_steps.
inline SwarmStepResult swarm_step(SwarmState& swarm, const MetaParamVars& params, const ModelConfig& config) {
  const std::size_t k = swarm.size();
  const std::size_t n = swarm.dim();
  if (n != config.n) {
    throw shape_error("model built for n = " + std::to_string(config.n) + " applied to a " + std::to_string(n) +
                      "-dimensional swarm");
  }
  const Architecture& arch = config.arch;
  const auto mask = arch.feature_mask();
  SwarmStepResult result;
  result.log.feature_weights = Matrix(k, 4);

  std::vector<ad::Var> summaries, positions;
  summaries.reserve(k);
  positions.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    ParticleState& p = swarm.particles[i];
    detail::ensure_recurrent(p, n, config.hidden);
    const FeatureMatrix fm = compute_features(swarm, i);
    std::vector<ad::Var> cols;
    std::vector<std::size_t> slots;
    const std::array<const ad::Var*, 4> all = {&fm.gradient, &fm.momentum, &fm.velocity, &fm.attraction};
    for (std::size_t r = 0; r < 4; ++r) {
      if (!mask[r]) continue;
      cols.push_back(*all[r]);
      slots.push_back(r);
    }
    const ad::Var features = cols.size() == 1 ? cols.front() : ad::hcat(cols);
    detail::require_finite(features, "features", swarm.t);

    if (arch.intra_attention) {
      const ad::Var context = ad::matmul(p.recurrent.hidden, params.context_proj);
      const IntraAttentionResult ia = intra_attend(features, context, params.intra);
      detail::require_finite(ia.summary, "intra-attention", swarm.t);
      summaries.push_back(ia.summary);
      for (std::size_t s = 0; s < slots.size(); ++s) result.log.feature_weights(i, slots[s]) = ia.weights.value()[s];
    } else {
      const double w = 1.0 / static_cast<double>(cols.size());
      summaries.push_back(cols.size() == 1 ? features : ad::scale(row_sums(features), w));
      for (std::size_t slot : slots) result.log.feature_weights(i, slot) = w;
    }
    positions.push_back(p.x);
  }

  std::vector<ad::Var> mixed(k);
  if (arch.inter_attention) {
    const InterAttentionResult ie = inter_attend(summaries, positions, config.gamma, config.length_scale);
    detail::require_finite(ie.mixed, "inter-attention", swarm.t);
    for (std::size_t i = 0; i < k; ++i) mixed[i] = ad::column(ie.mixed, i);
    result.log.similarity = ie.similarity.value();
    result.log.affinity = ie.affinity.value();
    result.log.trace_share = trace_share(result.log.similarity, result.log.affinity, config.gamma);
    result.log.off_trace_share = off_trace_share(result.log.similarity, result.log.affinity, config.gamma);
  } else {
    mixed = summaries;
  }

  result.steps.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    ParticleState& p = swarm.particles[i];
    const LstmOutput out = lstm_cell(mixed[i], p.recurrent.hidden, p.recurrent.cell, params.lstm_input,
                                     params.lstm_recurrent, params.lstm_bias);
    const ad::Var step = ad::scale(ad::matmul(out.hidden, params.step_proj), config.step_scale);
    detail::require_finite(step, "lstm", swarm.t);
    p.recurrent = {out.hidden, out.cell};
    result.steps.push_back(step);
  }
  return result;
}

struct IterationRecord {
  Matrix positions;  // (n x k) before the step
  std::vector<double> values;
  Matrix steps;      // (n x k)
  Matrix feature_weights;
  Matrix similarity;
  Matrix affinity;
  double trace_share = 1.0;
  double off_trace_share = 0.0;
};

struct TrajectoryRecord {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<IterationRecord> iterations;
  std::vector<Sample> samples;       // every evaluation, in order
  std::vector<double> best_so_far;   // indexed by evaluation count - 1
  std::vector<TracedSample> traced;  // samples recorded since the last truncation
  std::size_t traced_offset = 0;     // index of traced.front() within samples

  /// p summed over particles and renormalized, per iteration (iterations x 4).
  Matrix normalized_feature_weights() const {
    Matrix out(iterations.size(), 4);
    for (std::size_t t = 0; t < iterations.size(); ++t) {
      const Matrix& fw = iterations[t].feature_weights;
      double total = 0.0;
      for (std::size_t i = 0; i < fw.rows(); ++i)
        for (std::size_t r = 0; r < 4; ++r) {
          out(t, r) += fw(i, r);
          total += fw(i, r);
        }
      for (std::size_t r = 0; r < 4; ++r) out(t, r) /= total;
    }
    return out;
  }

  double regret() const {
    double acc = 0.0;
    for (const Sample& s : samples) acc += s.f;
    return acc;
  }
};

/// Drives one swarm through successive iterations of the learned rule,
/// recording everything. truncate() cuts tape history between windows while
/// carrying all state forward.
class SwarmRunner {
 public:
  SwarmRunner(const FunctionInstance& inst, const ModelConfig& config,
              const std::vector<std::vector<double>>& positions)
      : inst_(inst), config_(config), swarm_(init_swarm(inst, positions, config.swarm)) {
    if (inst.dim() != config.n) {
      throw shape_error("model built for n = " + std::to_string(config.n) + " given a " +
                        std::to_string(inst.dim()) + "-dimensional objective");
    }
    record_.n = inst.dim();
    record_.k = swarm_.size();
    for (ParticleState& p : swarm_.particles) {
      detail::ensure_recurrent(p, config.n, config.hidden);
      push_sample(p);
    }
  }

  void step(const MetaParamVars& params) {
    IterationRecord it;
    const std::size_t k = swarm_.size(), n = swarm_.dim();
    it.positions = Matrix(n, k);
    for (std::size_t i = 0; i < k; ++i) {
      const ParticleState& p = swarm_.particles[i];
      for (std::size_t d = 0; d < n; ++d) it.positions(d, i) = p.x.value()[d];
      it.values.push_back(p.f.scalar());
    }
    SwarmStepResult sr = swarm_step(swarm_, params, config_);
    it.steps = Matrix(n, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t d = 0; d < n; ++d) it.steps(d, i) = sr.steps[i].value()[d];
    it.feature_weights = std::move(sr.log.feature_weights);
    it.similarity = std::move(sr.log.similarity);
    it.affinity = std::move(sr.log.affinity);
    it.trace_share = sr.log.trace_share;
    it.off_trace_share = sr.log.off_trace_share;
    apply_steps(swarm_, sr.steps, inst_);
    for (const ParticleState& p : swarm_.particles) push_sample(p);
    record_.iterations.push_back(std::move(it));
  }

  void truncate() {
    detach_state(swarm_);
    record_.traced.clear();
    record_.traced_offset = record_.samples.size();
  }

  const SwarmState& swarm() const { return swarm_; }
  const TrajectoryRecord& record() const { return record_; }
  TrajectoryRecord take_record() { return std::move(record_); }
  const FunctionInstance& instance() const { return inst_; }

 private:
  void push_sample(const ParticleState& p) {
    const double f = p.f.scalar();
    record_.samples.push_back({p.x.value().values(), f});
    record_.traced.push_back({p.x, p.f});
    const double prev = record_.best_so_far.empty() ? f : record_.best_so_far.back();
    record_.best_so_far.push_back(std::min(prev, f));
  }

  FunctionInstance inst_;
  ModelConfig config_;
  SwarmState swarm_;
  TrajectoryRecord record_;
};

/// Runs T iterations from the given starting positions with constant
/// parameters (no tape).
inline TrajectoryRecord rollout_from(const FunctionInstance& inst, const MetaParams& params,
                                     const std::vector<std::vector<double>>& positions, std::size_t iterations) {
  if (iterations < 1) throw config_error("rollout needs T >= 1");
  SwarmRunner runner(inst, params.config, positions);
  const MetaParamVars vars = bind(params, nullptr);
  for (std::size_t t = 0; t < iterations; ++t) runner.step(vars);
  TrajectoryRecord rec = runner.take_record();
  rec.traced.clear();
  return rec;
}

/// Uniform seeded start in the default box, then T iterations.
inline TrajectoryRecord rollout(const FunctionInstance& inst, const MetaParams& params, std::size_t k,
                                std::size_t iterations, std::uint64_t seed) {
  if (k < 1) throw config_error("rollout needs k >= 1");
  return rollout_from(inst, params, uniform_positions(SearchSpace::box(inst.dim()), k, seed), iterations);
}

}  // namespace swarmlearn
