#pragma once

// Per-particle bookkeeping and the four update features of each particle:
// gradient, momentum, velocity and attraction.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "swarmlearn/autodiff.hpp"
#include "swarmlearn/objectives.hpp"

namespace swarmlearn {

struct SwarmConfig {
  double momentum_decay = 0.9;    // beta
  double attraction_scale = 1.0;  // alpha in exp(-alpha d^2)
};

/// Recurrent cell state of one particle, one row per coordinate (n x H).
struct RecurrentState {
  ad::Var hidden;
  ad::Var cell;
};

struct ParticleState {
  ad::Var x;          // (n x 1)
  ad::Var f;          // (1 x 1) value at x
  ad::Var gradient;   // (n x 1) gradient at x
  ad::Var best_x;
  ad::Var best_f;
  ad::Var momentum;
  ad::Var prev_step;
  RecurrentState recurrent;

  bool evaluated() const { return f.defined() && gradient.defined(); }
};

struct Sample {
  std::vector<double> x;
  double f = 0.0;
};

/// Samples whose coordinates and values may still be on a tape.
struct TracedSample {
  ad::Var x;
  ad::Var f;
};

struct SwarmState {
  std::vector<ParticleState> particles;
  ad::Var global_best_x;
  ad::Var global_best_f;
  std::size_t t = 0;  // evaluation rounds so far; history holds k * t samples
  std::vector<Sample> history;
  SwarmConfig config;

  std::size_t size() const { return particles.size(); }
  std::size_t dim() const { return particles.empty() ? 0 : particles.front().x.rows(); }
};

/// The n x 4 feature matrix, one column per feature.
struct FeatureMatrix {
  ad::Var gradient;
  ad::Var momentum;
  ad::Var velocity;
  ad::Var attraction;
};

namespace detail {

inline void refresh_global_best(SwarmState& swarm) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < swarm.size(); ++i) {
    if (swarm.particles[i].best_f.scalar() < swarm.particles[best].best_f.scalar()) best = i;
  }
  swarm.global_best_x = swarm.particles[best].best_x;
  swarm.global_best_f = swarm.particles[best].best_f;
}

inline void check_particle(const SwarmState& swarm, std::size_t i) {
  if (i >= swarm.size()) {
    throw std::out_of_range("particle " + std::to_string(i) + " out of range for a swarm of " +
                            std::to_string(swarm.size()));
  }
  if (!swarm.particles[i].evaluated()) {
    throw std::logic_error("particle " + std::to_string(i) + " has not been evaluated");
  }
}

}  // namespace detail

/// Places particles at `positions` and performs the first evaluation round.
inline SwarmState init_swarm(const FunctionInstance& inst, const std::vector<std::vector<double>>& positions,
                             SwarmConfig config = {}) {
  if (positions.empty()) throw config_error("a swarm needs at least one particle");
  SwarmState swarm;
  swarm.config = config;
  const std::size_t n = inst.dim();
  for (const auto& p : positions) {
    ParticleState ps;
    ps.x = ad::Var(Matrix::column(p));
    const TracedEvaluation ev = evaluate(inst, ps.x);
    ps.f = ev.value;
    ps.gradient = ev.gradient;
    ps.best_x = ps.x;
    ps.best_f = ps.f;
    ps.momentum = ad::scale(ev.gradient, 1.0 - config.momentum_decay);
    ps.prev_step = ad::zeros(n, 1);
    swarm.history.push_back({p, ps.f.scalar()});
    swarm.particles.push_back(std::move(ps));
  }
  swarm.t = 1;
  detail::refresh_global_best(swarm);
  return swarm;
}

/// Uniform positions in the box, reproducible from the seed.
inline std::vector<std::vector<double>> uniform_positions(const SearchSpace& space, std::size_t k,
                                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(space.sample_uniform(rng));
  return out;
}

/// Normalized Gaussian weights over particles with strictly lower value than
/// particle i; empty when i is the best. Entry j pairs with `eligible[j]`.
struct AttractionWeights {
  std::vector<std::size_t> eligible;
  ad::Var weights;  // (1 x m)
};

inline AttractionWeights attraction_weights(const SwarmState& swarm, std::size_t i) {
  detail::check_particle(swarm, i);
  AttractionWeights out;
  const double fi = swarm.particles[i].f.scalar();
  std::vector<ad::Var> cols;
  for (std::size_t j = 0; j < swarm.size(); ++j) {
    detail::check_particle(swarm, j);
    if (swarm.particles[j].f.scalar() < fi) {
      out.eligible.push_back(j);
      cols.push_back(swarm.particles[j].x);
    }
  }
  if (out.eligible.empty()) return out;
  const ad::Var others = ad::hcat(cols);
  const ad::Var d2 = ad::pairwise_sq_dists(swarm.particles[i].x, others);
  out.weights = ad::softmax_rows(ad::scale(d2, -swarm.config.attraction_scale));
  return out;
}

inline FeatureMatrix compute_features(const SwarmState& swarm, std::size_t i) {
  detail::check_particle(swarm, i);
  const ParticleState& p = swarm.particles[i];
  FeatureMatrix s;
  s.gradient = p.gradient;
  s.momentum = p.momentum;
  s.velocity = ad::sub(p.x, p.best_x);
  const AttractionWeights aw = attraction_weights(swarm, i);
  if (aw.eligible.empty()) {
    s.attraction = ad::zeros(p.x.rows(), 1);
  } else {
    std::vector<ad::Var> cols;
    for (std::size_t j : aw.eligible) cols.push_back(swarm.particles[j].x);
    const ad::Var pull = ad::matmul(ad::hcat(cols), ad::transpose(aw.weights));
    s.attraction = ad::sub(p.x, pull);
  }
  return s;
}

/// x <- x + step for every particle, then re-evaluates and updates
/// momentum, personal and global bests, and history.
inline void apply_steps(SwarmState& swarm, const std::vector<ad::Var>& steps, const FunctionInstance& inst) {
  if (steps.size() != swarm.size()) {
    throw shape_error("got " + std::to_string(steps.size()) + " steps for " + std::to_string(swarm.size()) +
                      " particles");
  }
  const double beta = swarm.config.momentum_decay;
  for (std::size_t i = 0; i < swarm.size(); ++i) {
    ParticleState& p = swarm.particles[i];
    if (!steps[i].value().all_finite()) {
      throw numeric_error("non-finite step for particle " + std::to_string(i) + " at iteration " +
                          std::to_string(swarm.t));
    }
    p.x = ad::add(p.x, steps[i]);
    const TracedEvaluation ev = evaluate(inst, p.x);
    p.f = ev.value;
    p.gradient = ev.gradient;
    p.momentum = ad::add(ad::scale(p.momentum, beta), ad::scale(ev.gradient, 1.0 - beta));
    p.prev_step = steps[i];
    if (p.f.scalar() < p.best_f.scalar()) {
      p.best_x = p.x;
      p.best_f = p.f;
    }
    swarm.history.push_back({p.x.value().values(), p.f.scalar()});
  }
  ++swarm.t;
  detail::refresh_global_best(swarm);
}

/// Cuts every tape reference so the state can seed a fresh tape.
inline void detach_state(SwarmState& swarm) {
  for (ParticleState& p : swarm.particles) {
    for (ad::Var* v : {&p.x, &p.f, &p.gradient, &p.best_x, &p.best_f, &p.momentum, &p.prev_step,
                       &p.recurrent.hidden, &p.recurrent.cell}) {
      *v = ad::detach(*v);
    }
  }
  swarm.global_best_x = ad::detach(swarm.global_best_x);
  swarm.global_best_f = ad::detach(swarm.global_best_f);
}

}  // namespace swarmlearn
