#pragma once

// Quadratic and Rastrigin-family objectives
//
//   f(x) = ||A x - b||^2 - alpha * sum_i c_i cos(2 pi x_i) + alpha n
//
// with analytic gradient and Hessian-vector products, so objective values
// and gradients can sit on a tape and be differentiated through.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "swarmlearn/autodiff.hpp"
#include "swarmlearn/errors.hpp"
#include "swarmlearn/matrix.hpp"
#include "swarmlearn/random.hpp"

namespace swarmlearn {

/// Axis-aligned search box; scopes initialization and entropy integration.
struct SearchSpace {
  std::size_t n = 0;
  std::vector<double> lo, hi;

  static SearchSpace box(std::size_t n, double lo = -5.12, double hi = 5.12) {
    SearchSpace s{n, std::vector<double>(n, lo), std::vector<double>(n, hi)};
    s.validate();
    return s;
  }

  void validate() const {
    if (n < 1) throw config_error("search space needs n >= 1");
    if (lo.size() != n || hi.size() != n) throw config_error("search space bounds do not match n");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(lo[i] < hi[i])) throw config_error("search space bound " + std::to_string(i) + " has lo >= hi");
    }
  }

  double log_volume() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::log(hi[i] - lo[i]);
    return acc;
  }

  std::vector<double> sample_uniform(Rng& rng) const {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
    return x;
  }
};

enum class Family { quadratic, rastrigin_family };

inline std::string to_string(Family f) {
  return f == Family::quadratic ? "quadratic" : "rastrigin_family";
}

inline Family parse_family(std::string_view s) {
  if (s == "quadratic") return Family::quadratic;
  if (s == "rastrigin_family" || s == "rastrigin-family") return Family::rastrigin_family;
  throw config_error("unknown function family '" + std::string(s) + "'");
}

struct Evaluation {
  double value = 0.0;
  std::vector<double> gradient;
};

class FunctionInstance {
 public:
  FunctionInstance(Family family, Matrix a, std::vector<double> b, std::vector<double> c, double alpha)
      : family_(family), a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), alpha_(alpha) {
    const std::size_t n = a_.rows();
    if (n < 1 || a_.cols() != n || b_.size() != n || c_.size() != n) {
      throw shape_error("function instance needs square A (n x n) and n-vectors b, c; got A " +
                        a_.shape() + ", |b| = " + std::to_string(b_.size()) +
                        ", |c| = " + std::to_string(c_.size()));
    }
  }

  Family family() const { return family_; }
  std::size_t dim() const { return a_.rows(); }
  const Matrix& a() const { return a_; }
  const std::vector<double>& b() const { return b_; }
  const std::vector<double>& c() const { return c_; }
  double alpha() const { return alpha_; }

  double value(std::span<const double> x) const {
    check_dim(x.size());
    const std::vector<double> r = residual(x);
    double sq = 0.0;
    for (double v : r) sq += v * v;
    double wave = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) wave += c_[i] * std::cos(two_pi * x[i]);
    return sq - alpha_ * wave + alpha_ * static_cast<double>(dim());
  }

  std::vector<double> gradient(std::span<const double> x) const {
    check_dim(x.size());
    const std::size_t n = dim();
    const std::vector<double> r = residual(x);
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) g[j] += 2.0 * a_(i, j) * r[i];
    for (std::size_t i = 0; i < n; ++i) g[i] += two_pi * alpha_ * c_[i] * std::sin(two_pi * x[i]);
    return g;
  }

  Evaluation evaluate(std::span<const double> x) const { return {value(x), gradient(x)}; }

  /// Hessian at x applied to v: 2 A^T A v + 4 pi^2 alpha diag(c cos(2 pi x)) v.
  std::vector<double> hessian_times(std::span<const double> x, std::span<const double> v) const {
    check_dim(x.size());
    check_dim(v.size());
    const std::size_t n = dim();
    std::vector<double> av(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) av[i] += a_(i, j) * v[j];
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += 2.0 * a_(i, j) * av[i];
    for (std::size_t i = 0; i < n; ++i)
      out[i] += two_pi * two_pi * alpha_ * c_[i] * std::cos(two_pi * x[i]) * v[i];
    return out;
  }

 private:
  static constexpr double two_pi = 2.0 * std::numbers::pi;

  void check_dim(std::size_t got) const {
    if (got != dim()) {
      throw shape_error("point of dimension " + std::to_string(got) + " given to a " +
                        std::to_string(dim()) + "-dimensional objective");
    }
  }

  std::vector<double> residual(std::span<const double> x) const {
    const std::size_t n = dim();
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += a_(i, j) * x[j];
      r[i] = acc - b_[i];
    }
    return r;
  }

  Family family_;
  Matrix a_;
  std::vector<double> b_, c_;
  double alpha_;
};

/// Draws A, b (and c for the Rastrigin family) i.i.d. standard normal, in
/// that order, so both families share A and b for a given seed.
inline FunctionInstance sample_instance(Family family, const SearchSpace& space, std::uint64_t seed,
                                        double alpha = 10.0) {
  space.validate();
  const std::size_t n = space.n;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(n, n);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = normal(rng);
  std::vector<double> b(n), c(n, 0.0);
  for (double& v : b) v = normal(rng);
  if (family == Family::quadratic) return FunctionInstance(family, std::move(a), std::move(b), std::move(c), 0.0);
  for (double& v : c) v = normal(rng);
  return FunctionInstance(family, std::move(a), std::move(b), std::move(c), alpha);
}

/// A = I, b = 0, c = 1, alpha = 10; global minimum 0 at the origin.
inline FunctionInstance canonical_rastrigin(std::size_t n) {
  if (n < 1) throw config_error("canonical Rastrigin needs n >= 1");
  return FunctionInstance(Family::rastrigin_family, Matrix::identity(n), std::vector<double>(n, 0.0),
                          std::vector<double>(n, 1.0), 10.0);
}

struct TracedEvaluation {
  ad::Var value;     // (1x1)
  ad::Var gradient;  // (n x 1)
};

/// Evaluates at a (possibly tracked) point. The value node back-propagates
/// through the gradient and the gradient node through the Hessian.
inline TracedEvaluation evaluate(const FunctionInstance& inst, const ad::Var& x) {
  if (x.cols() != 1 || x.rows() != inst.dim()) {
    throw shape_error("objective expects an (" + std::to_string(inst.dim()) + "x1) point, got " + x.shape());
  }
  const std::span<const double> xs = x.value().data();
  Evaluation ev = inst.evaluate(xs);
  Matrix grad = Matrix::column(ev.gradient);
  if (!x.tracked()) return {ad::Var(ev.value), ad::Var(std::move(grad))};

  const int ix = x.id();
  auto g_shared = std::make_shared<const Matrix>(grad);
  ad::Var value = x.tape()->record(Matrix(1, 1, ev.value), [ix, g_shared](const Matrix& g, ad::GradientSink& s) {
    Matrix& gx = s.at(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * (*g_shared)[i];
  });
  auto x_shared = x.shared_value();
  // The tape may outlive the caller's instance.
  auto f = std::make_shared<const FunctionInstance>(inst);
  ad::Var gradient = x.tape()->record(std::move(grad), [ix, x_shared, f](const Matrix& g, ad::GradientSink& s) {
    const std::vector<double> hv = f->hessian_times(x_shared->data(), g.data());
    Matrix& gx = s.at(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += hv[i];
  });
  return {value, gradient};
}

namespace detail {

inline std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_real(std::string_view s) {
  double v = 0.0;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw config_error("malformed number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// One-line record: family, n, alpha, A (row-major), b, c.
inline std::string serialize(const FunctionInstance& inst) {
  std::string out = to_string(inst.family()) + "," + std::to_string(inst.dim()) + "," +
                    detail::format_real(inst.alpha());
  for (double v : inst.a().data()) out += "," + detail::format_real(v);
  for (double v : inst.b()) out += "," + detail::format_real(v);
  for (double v : inst.c()) out += "," + detail::format_real(v);
  return out;
}

inline FunctionInstance parse_instance(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (fields.size() < 3) throw config_error("instance record needs family, n, alpha");
  const Family family = parse_family(fields[0]);
  const double n_real = detail::parse_real(fields[1]);
  if (n_real < 1 || n_real != std::floor(n_real)) throw config_error("instance record has invalid n");
  const auto n = static_cast<std::size_t>(n_real);
  if (fields.size() != 3 + n * n + 2 * n) {
    throw config_error("instance record for n = " + std::to_string(n) + " needs " +
                       std::to_string(3 + n * n + 2 * n) + " fields, got " + std::to_string(fields.size()));
  }
  const double alpha = detail::parse_real(fields[2]);
  std::size_t pos = 3;
  Matrix a(n, n);
  for (std::size_t i = 0; i < n * n; ++i) a[i] = detail::parse_real(fields[pos++]);
  std::vector<double> b(n), c(n);
  for (double& v : b) v = detail::parse_real(fields[pos++]);
  for (double& v : c) v = detail::parse_real(fields[pos++]);
  return FunctionInstance(family, std::move(a), std::move(b), std::move(c), alpha);
}

}  // namespace swarmlearn
