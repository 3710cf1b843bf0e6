#pragma once

// Feature-level (intra-particle) and sample-level (inter-particle) attention.

#include <cstddef>
#include <vector>

#include "swarmlearn/autodiff.hpp"

namespace swarmlearn {

/// Shared across particles. W, U are (n x n), v is (n x 1).
struct IntraAttentionParams {
  ad::Var W;
  ad::Var U;
  ad::Var v;
};

struct IntraAttentionResult {
  ad::Var summary;  // c = sum_r p_r s_r, (n x 1)
  ad::Var weights;  // p, (1 x F)
};

/// Scores each feature column s_j as v^T tanh(W s_j + U context), softmaxes
/// the scores and returns the weighted sum of the columns.
inline IntraAttentionResult intra_attend(const ad::Var& features, const ad::Var& context,
                                         const IntraAttentionParams& params) {
  const std::size_t n = features.rows();
  if (context.rows() != n || context.cols() != 1) {
    throw shape_error("intra_attend: context must be (" + std::to_string(n) + "x1), got " + context.shape());
  }
  if (params.W.rows() != n || params.W.cols() != n || params.U.rows() != n || params.U.cols() != n ||
      params.v.rows() != n || params.v.cols() != 1) {
    throw shape_error("intra_attend: parameters " + params.W.shape() + ", " + params.U.shape() + ", " +
                      params.v.shape() + " do not match feature dimension " + std::to_string(n));
  }
  const std::size_t f = features.cols();
  const ad::Var ctx = ad::matmul(ad::matmul(params.U, context), ad::ones(1, f));
  const ad::Var hidden = ad::tanh(ad::add(ad::matmul(params.W, features), ctx));
  const ad::Var scores = ad::matmul(ad::transpose(params.v), hidden);
  const ad::Var p = ad::softmax_rows(scores);
  return {ad::matmul(features, ad::transpose(p)), p};
}

struct InterAttentionResult {
  ad::Var mixed;       // E, (n x k); column j is e_j
  ad::Var similarity;  // Q, column-normalized position kernel (k x k)
  ad::Var affinity;    // M, column softmax of context dot products (k x k)
};

/// e_j = gamma * sum_r m_rj q_rj c_r + c_j, with q from exp(-|x_r - x_j|^2 / (2 l)).
inline InterAttentionResult inter_attend(const ad::Var& contexts, const ad::Var& positions, double gamma,
                                         double length_scale) {
  if (contexts.cols() == 0) throw shape_error("inter_attend: needs at least one particle");
  if (contexts.rows() != positions.rows() || contexts.cols() != positions.cols()) {
    throw shape_error("inter_attend: contexts " + contexts.shape() + " and positions " + positions.shape() +
                      " disagree");
  }
  const ad::Var d2 = ad::pairwise_sq_dists(positions, positions);
  const ad::Var q = ad::softmax_columns(ad::scale(d2, -1.0 / (2.0 * length_scale)));
  const ad::Var m = ad::softmax_columns(ad::matmul(ad::transpose(contexts), contexts));
  const ad::Var mixed = ad::add(ad::scale(ad::matmul(contexts, ad::hadamard(m, q)), gamma), contexts);
  return {mixed, q, m};
}

inline InterAttentionResult inter_attend(const std::vector<ad::Var>& contexts, const std::vector<ad::Var>& positions,
                                         double gamma, double length_scale) {
  if (contexts.empty()) throw shape_error("inter_attend: needs at least one particle");
  return inter_attend(ad::hcat(contexts), ad::hcat(positions), gamma, length_scale);
}

namespace detail {

struct TraceSums {
  double trace = 0.0;
  double off = 0.0;
};

inline TraceSums trace_sums(const Matrix& q, const Matrix& m, double gamma) {
  if (!q.same_shape(m) || q.rows() != q.cols()) {
    throw shape_error("trace_share: need square matrices of equal shape, got " + q.shape() + " and " + m.shape());
  }
  TraceSums s;
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t j = 0; j < q.cols(); ++j) {
      const double v = gamma * q(i, j) * m(i, j);
      if (i == j) s.trace += v + 1.0;
      else s.off += v;
    }
  return s;
}

}  // namespace detail

/// Share of the diagonal in gamma Q.*M + I: tr(.) / sum(.).
inline double trace_share(const Matrix& q, const Matrix& m, double gamma) {
  const detail::TraceSums s = detail::trace_sums(q, m, gamma);
  return s.trace / (s.trace + s.off);
}

/// 1 - trace_share, kept accurate when the off-diagonal mass is tiny.
inline double off_trace_share(const Matrix& q, const Matrix& m, double gamma) {
  const detail::TraceSums s = detail::trace_sums(q, m, gamma);
  return s.off / (s.trace + s.off);
}

}  // namespace swarmlearn
