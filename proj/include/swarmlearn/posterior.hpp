#pragma once

// Kriging surrogate over the sampled history, Boltzmann posterior over the
// optimum's location, its Monte Carlo differential entropy, the annealing
// schedule for rho, and the regret-plus-entropy meta-loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "swarmlearn/autodiff.hpp"
#include "swarmlearn/meta_optimizer.hpp"
#include "swarmlearn/objectives.hpp"
#include "swarmlearn/random.hpp"

namespace swarmlearn {

namespace linalg {

/// Lower-triangular L with a = L L^T. Returns nullopt when a is not
/// numerically positive definite.
inline std::optional<Matrix> cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      const double* li = &l(i, 0);
      const double* lj = &l(j, 0);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      l(i, j) = s / ljj;
    }
  }
  return l;
}

/// Solves (L L^T) x = b.
inline std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  std::vector<double> z(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = z[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * z[k];
    z[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = z[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * z[k];
    z[ii] = s / l(ii, ii);
  }
  return z;
}

}  // namespace linalg

namespace detail {

inline double se_kernel(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j, double length_scale) {
  double d2 = 0.0;
  for (std::size_t d = 0; d < a.rows(); ++d) {
    const double diff = a(d, i) - b(d, j);
    d2 += diff * diff;
  }
  return std::exp(-d2 / (2.0 * length_scale));
}

inline Matrix noisy_gram(const Matrix& x, double length_scale, double noise) {
  const std::size_t n = x.cols();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = 1.0 + noise * noise;
    for (std::size_t j = 0; j < i; ++j) k(i, j) = k(j, i) = se_kernel(x, i, x, j, length_scale);
  }
  return k;
}

inline std::string duplicate_diagnostic(const Matrix& x) {
  for (std::size_t i = 0; i < x.cols(); ++i)
    for (std::size_t j = i + 1; j < x.cols(); ++j) {
      bool same = true;
      for (std::size_t d = 0; d < x.rows() && same; ++d) same = x(d, i) == x(d, j);
      if (same) return "data points " + std::to_string(i) + " and " + std::to_string(j) + " coincide";
    }
  return "no exact duplicates; points are numerically indistinguishable";
}

}  // namespace detail

/// Best linear unbiased estimator with zero prior mean and a squared
/// exponential kernel exp(-|x - x'|^2 / (2 l)).
class KrigingModel {
 public:
  /// `x` holds one data point per column (n x N).
  static KrigingModel fit(Matrix x, std::vector<double> y, double length_scale = 1.0, double noise = 2.1) {
    if (x.cols() < 1) throw config_error("kriging needs at least one data point");
    if (y.size() != x.cols()) {
      throw shape_error("kriging: " + std::to_string(x.cols()) + " points but " + std::to_string(y.size()) +
                        " values");
    }
    if (noise < 0.0) throw config_error("kriging noise must be non-negative");
    KrigingModel m;
    const Matrix gram = detail::noisy_gram(x, length_scale, noise);
    auto chol = linalg::cholesky(gram);
    if (!chol) throw numeric_error("kriging system is singular: " + detail::duplicate_diagnostic(x));
    m.weights_ = linalg::cholesky_solve(*chol, y);
    m.chol_ = std::move(*chol);
    m.x_ = std::move(x);
    m.y_ = std::move(y);
    m.length_scale_ = length_scale;
    m.noise_ = noise;
    return m;
  }

  double predict(std::span<const double> point) const {
    const Matrix p = Matrix::column(point);
    double acc = 0.0;
    for (std::size_t i = 0; i < x_.cols(); ++i) acc += detail::se_kernel(p, 0, x_, i, length_scale_) * weights_[i];
    return acc;
  }

  std::size_t dim() const { return x_.rows(); }
  std::size_t size() const { return x_.cols(); }
  const Matrix& points() const { return x_; }
  const std::vector<double>& values() const { return y_; }
  const std::vector<double>& weights() const { return weights_; }
  const Matrix& cholesky_factor() const { return chol_; }
  double length_scale() const { return length_scale_; }
  double noise() const { return noise_; }

 private:
  Matrix x_;
  std::vector<double> y_;
  Matrix chol_;
  std::vector<double> weights_;
  double length_scale_ = 1.0;
  double noise_ = 2.1;
};

/// Kriging predictions at the fixed query columns of `queries` (n x M), as an
/// (M x 1) Var differentiable with respect to the data locations `x` (n x N)
/// and values `y` (N x 1). The linear solve is differentiated through its
/// adjoint: ybar = A^{-1} wbar and Abar = -ybar w^T.
inline ad::Var kriging_predict(const ad::Var& x, const ad::Var& y, const Matrix& queries, double length_scale,
                               double noise) {
  const std::size_t n = x.rows(), count = x.cols(), m = queries.cols();
  if (y.rows() != count || y.cols() != 1) {
    throw shape_error("kriging_predict: values must be (" + std::to_string(count) + "x1), got " + y.shape());
  }
  if (queries.rows() != n) {
    throw shape_error("kriging_predict: queries " + queries.shape() + " do not match data " + x.shape());
  }
  const Matrix& xv = x.value();
  auto gram = std::make_shared<Matrix>(detail::noisy_gram(xv, length_scale, noise));
  auto chol = linalg::cholesky(*gram);
  if (!chol) throw numeric_error("kriging system is singular: " + detail::duplicate_diagnostic(xv));
  auto weights = std::make_shared<std::vector<double>>(linalg::cholesky_solve(*chol, y.value().data()));
  auto cross = std::make_shared<Matrix>(m, count);  // kappa(u_m, x_i)
  for (std::size_t q = 0; q < m; ++q)
    for (std::size_t i = 0; i < count; ++i) (*cross)(q, i) = detail::se_kernel(queries, q, xv, i, length_scale);
  Matrix out(m, 1);
  for (std::size_t q = 0; q < m; ++q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += (*cross)(q, i) * (*weights)[i];
    out[q] = acc;
  }
  const int ix = x.id(), iy = y.id();
  auto px = x.shared_value();
  auto pl = std::make_shared<const Matrix>(std::move(*chol));
  auto pq = std::make_shared<const Matrix>(queries);
  return ad::detail::make(std::move(out), {&x, &y},
                          [=](const Matrix& g, ad::GradientSink& s) {
                            std::vector<double> wbar(count, 0.0);
                            for (std::size_t q = 0; q < m; ++q) {
                              const double gq = g[q];
                              for (std::size_t i = 0; i < count; ++i) wbar[i] += gq * (*cross)(q, i);
                            }
                            const std::vector<double> ybar = linalg::cholesky_solve(*pl, wbar);
                            if (s.wants(iy)) {
                              Matrix& gy = s.at(iy);
                              for (std::size_t i = 0; i < count; ++i) gy[i] += ybar[i];
                            }
                            if (!s.wants(ix)) return;
                            Matrix& gx = s.at(ix);
                            const Matrix& xs = *px;
                            const std::vector<double>& w = *weights;
                            for (std::size_t q = 0; q < m; ++q) {
                              const double gq = g[q];
                              for (std::size_t i = 0; i < count; ++i) {
                                const double coef = gq * w[i] * (*cross)(q, i) / length_scale;
                                for (std::size_t d = 0; d < n; ++d) gx(d, i) += coef * ((*pq)(d, q) - xs(d, i));
                              }
                            }
                            for (std::size_t i = 0; i < count; ++i)
                              for (std::size_t j = 0; j < count; ++j) {
                                if (i == j) continue;
                                const double coef = -ybar[i] * w[j] * (*gram)(i, j) / length_scale;
                                for (std::size_t d = 0; d < n; ++d) {
                                  const double diff = xs(d, j) - xs(d, i);
                                  gx(d, i) += coef * diff;
                                  gx(d, j) -= coef * diff;
                                }
                              }
                          });
}

/// Uniform Monte Carlo points in the box, one per column (n x count).
inline Matrix mc_points(const SearchSpace& space, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  Matrix u(space.n, count);
  for (std::size_t c = 0; c < count; ++c) {
    const std::vector<double> p = space.sample_uniform(rng);
    for (std::size_t d = 0; d < space.n; ++d) u(d, c) = p[d];
  }
  return u;
}

/// Differential entropy of p(x) ~ exp(-rho fhat(x)) on the box from values of
/// fhat at M uniform points: log Z + rho E_p[fhat], with Z = V mean(exp(-rho fhat)).
inline ad::Var boltzmann_entropy(const ad::Var& fhat, double rho, double log_volume) {
  const double count = static_cast<double>(fhat.rows() * fhat.cols());
  const ad::Var logits = ad::scale(fhat, -rho);
  const ad::Var log_z = ad::add_scalar(ad::logsumexp(logits), log_volume - std::log(count));
  const ad::Var p = ad::softmax_columns(logits);
  const ad::Var h = ad::add(log_z, ad::scale(ad::sum(ad::hadamard(p, fhat)), rho));
  if (!std::isfinite(h.scalar())) {
    throw numeric_error("posterior entropy is not finite (rho = " + std::to_string(rho) +
                        "); rho too large for the surrogate's range");
  }
  return h;
}

/// rho = rho0 exp(|D|^(1/n) / h0); rho0 for an empty history.
inline double anneal_rho(double rho0, double h0, std::size_t sample_count, std::size_t n) {
  if (!(h0 > 0.0)) throw numeric_error("annealing needs a positive initial entropy h0, got " + std::to_string(h0));
  if (sample_count == 0) return rho0;
  return rho0 * std::exp(std::pow(static_cast<double>(sample_count), 1.0 / static_cast<double>(n)) / h0);
}

struct PosteriorModel {
  KrigingModel kriging;
  double rho0 = 1.0;
  double h0 = std::numeric_limits<double>::quiet_NaN();
  double rho = 1.0;
};

inline double posterior_entropy(const KrigingModel& model, double rho, const SearchSpace& space,
                                std::size_t mc_samples, std::uint64_t seed) {
  if (mc_samples < 100) throw config_error("posterior entropy needs at least 100 Monte Carlo samples");
  if (space.n != model.dim()) throw shape_error("search space and surrogate dimensions differ");
  const Matrix u = mc_points(space, mc_samples, seed);
  Matrix fhat(mc_samples, 1);
  for (std::size_t c = 0; c < mc_samples; ++c) fhat[c] = model.predict(u.column_values(c));
  return boltzmann_entropy(ad::Var(std::move(fhat)), rho, space.log_volume()).scalar();
}

inline double posterior_entropy(const PosteriorModel& model, const SearchSpace& space, std::size_t mc_samples,
                                std::uint64_t seed) {
  return posterior_entropy(model.kriging, model.rho, space, mc_samples, seed);
}

struct LossConfig {
  double lambda = 1.0;      // entropy weight
  double l2 = 1e-4;         // C
  double length_scale = 1.0;
  double noise = 2.1;       // epsilon
  double rho0 = 1.0;
  double h0 = std::numeric_limits<double>::quiet_NaN();
  std::size_t mc_samples = 1000;
  std::size_t max_points = 512;
};

/// Indices kept when the history exceeds `cap`: a seeded uniform subset, sorted.
inline std::vector<std::size_t> thinned_indices(std::size_t total, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (total <= cap) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < cap; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct FunctionLoss {
  ad::Var total;        // regret + lambda * entropy
  ad::Var regret;
  ad::Var entropy;      // undefined when lambda == 0
  double rho = 0.0;
};

namespace detail {

struct SurrogateData {
  ad::Var x;  // (n x N)
  ad::Var y;  // (N x 1)
  std::size_t total = 0;
};

/// Every sample so far: earlier ones as constants, the traced window as Vars.
inline SurrogateData surrogate_data(const TrajectoryRecord& rec, std::size_t cap, std::uint64_t seed) {
  const std::size_t total = rec.samples.size();
  const std::vector<std::size_t> keep = thinned_indices(total, cap, seed);
  std::vector<ad::Var> xs, ys;
  xs.reserve(keep.size());
  ys.reserve(keep.size());
  for (std::size_t i : keep) {
    if (i >= rec.traced_offset && i - rec.traced_offset < rec.traced.size()) {
      const TracedSample& t = rec.traced[i - rec.traced_offset];
      xs.push_back(t.x);
      ys.push_back(t.f);
    } else {
      xs.emplace_back(Matrix::column(rec.samples[i].x));
      ys.emplace_back(rec.samples[i].f);
    }
  }
  return {ad::hcat(xs), ad::transpose(ad::hcat(ys)), total};
}

}  // namespace detail

/// Entropy of the Boltzmann posterior built from a trajectory's samples.
inline ad::Var trajectory_entropy(const TrajectoryRecord& rec, const SearchSpace& space, const LossConfig& config,
                                  double rho, std::uint64_t seed) {
  const detail::SurrogateData data = detail::surrogate_data(rec, config.max_points, derive_seed(seed, {1}));
  const Matrix u = mc_points(space, config.mc_samples, derive_seed(seed, {2}));
  const ad::Var fhat = kriging_predict(data.x, data.y, u, config.length_scale, config.noise);
  return boltzmann_entropy(fhat, rho, space.log_volume());
}

/// Loss of one trajectory: regret over the traced window plus lambda times
/// the posterior entropy over all samples so far.
inline FunctionLoss function_loss(const TrajectoryRecord& rec, const SearchSpace& space, const LossConfig& config,
                                  std::uint64_t seed) {
  if (rec.traced.empty()) throw config_error("meta-loss needs a trajectory with samples");
  std::vector<ad::Var> fs;
  fs.reserve(rec.traced.size());
  for (const TracedSample& t : rec.traced) fs.push_back(t.f);
  FunctionLoss out;
  out.regret = ad::sum(ad::hcat(fs));
  out.total = out.regret;
  if (config.lambda > 0.0) {
    out.rho = anneal_rho(config.rho0, config.h0, rec.samples.size(), rec.n);
    out.entropy = trajectory_entropy(rec, space, config, out.rho, seed);
    out.total = ad::add(out.regret, ad::scale(out.entropy, config.lambda));
  }
  return out;
}

/// (1/m) sum_q loss_q + C |phi|^2 on one tape.
inline ad::Var meta_loss(const std::vector<const TrajectoryRecord*>& trajectories, const MetaParamVars& params,
                         const SearchSpace& space, const LossConfig& config, std::uint64_t seed) {
  if (trajectories.empty()) throw config_error("meta-loss needs at least one trajectory");
  std::vector<ad::Var> totals;
  for (std::size_t q = 0; q < trajectories.size(); ++q) {
    totals.push_back(function_loss(*trajectories[q], space, config, derive_seed(seed, {q})).total);
  }
  ad::Var mean = ad::scale(ad::sum(ad::hcat(totals)), 1.0 / static_cast<double>(totals.size()));
  if (config.l2 > 0.0) {
    std::vector<ad::Var> norms;
    for (const ad::Var& p : params.all()) norms.push_back(ad::squared_norm(p));
    mean = ad::add(mean, ad::scale(ad::sum(ad::hcat(norms)), config.l2));
  }
  return mean;
}

/// Entropy at rho0 of the surrogate fitted to a trajectory (no tape).
inline double initial_entropy(const TrajectoryRecord& rec, const SearchSpace& space, const LossConfig& config,
                              std::uint64_t seed) {
  const ad::Var h = trajectory_entropy(rec, space, config, config.rho0, seed);
  return h.scalar();
}

}  // namespace swarmlearn
