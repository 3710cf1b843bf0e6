#pragma once

// Adam with bias correction, and global-norm gradient clipping.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "swarmlearn/errors.hpp"
#include "swarmlearn/matrix.hpp"

namespace swarmlearn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::size_t skipped = 0;  // updates refused because of non-finite gradients
  std::vector<Matrix> m, v;

  static AdamState for_shapes(const std::vector<Matrix>& params) {
    AdamState s;
    for (const Matrix& p : params) {
      s.m.emplace_back(p.rows(), p.cols());
      s.v.emplace_back(p.rows(), p.cols());
    }
    return s;
  }
};

inline bool all_finite(const std::vector<Matrix>& grads) {
  for (const Matrix& g : grads)
    if (!g.all_finite()) return false;
  return true;
}

inline double global_norm(const std::vector<Matrix>& grads) {
  double acc = 0.0;
  for (const Matrix& g : grads)
    for (double v : g.data()) acc += v * v;
  return std::sqrt(acc);
}

/// Rescales so the global norm is at most max_norm. Returns true if clipped.
inline bool clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (!(norm > max_norm)) return false;
  const double f = max_norm / norm;
  for (Matrix& g : grads)
    for (double& v : g.data()) v *= f;
  return true;
}

/// One Adam step in place. Returns false (and leaves params and moments
/// untouched) when a gradient is non-finite.
inline bool adam_update(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state,
                        const AdamConfig& config = {}) {
  if (params.size() != grads.size()) {
    throw shape_error("adam: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
                      " gradients");
  }
  if (state.m.empty() && state.v.empty()) state = AdamState::for_shapes(params);
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw shape_error("adam: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.m[i]) || !params[i].same_shape(state.v[i])) {
      throw shape_error("adam: tensor " + std::to_string(i) + " has parameter " + params[i].shape() +
                        " and gradient " + grads[i].shape());
    }
  }
  if (!all_finite(grads)) {
    ++state.skipped;
    return false;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i];
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      p[j] -= config.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.eps);
    }
  }
  return true;
}

}  // namespace swarmlearn
