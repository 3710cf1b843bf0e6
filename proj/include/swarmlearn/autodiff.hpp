#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// A Var either carries a constant value or refers to a node on a Tape. Ops
// whose operands are all constants compute values only and record nothing,
// so the same model code serves both training (parameters bound to a tape)
// and plain forward evaluation (parameters as constants).

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "swarmlearn/errors.hpp"
#include "swarmlearn/matrix.hpp"

namespace swarmlearn::ad {

class Tape;

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value) : value_(std::make_shared<const Matrix>(std::move(value))) {}
  explicit Var(double scalar) : Var(Matrix(1, 1, scalar)) {}

  const Matrix& value() const { return *value_; }
  std::shared_ptr<const Matrix> shared_value() const { return value_; }
  std::size_t rows() const { return value_->rows(); }
  std::size_t cols() const { return value_->cols(); }
  std::string shape() const { return value_->shape(); }
  bool defined() const { return value_ != nullptr; }

  double scalar() const {
    if (rows() != 1 || cols() != 1) throw shape_error("expected a scalar, got " + shape());
    return (*value_)[0];
  }

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(std::shared_ptr<const Matrix> value, Tape* tape, int id)
      : value_(std::move(value)), tape_(tape), id_(id) {}

  std::shared_ptr<const Matrix> value_;
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// The same value with its tape history cut off.
inline Var detach(const Var& v) {
  if (!v.defined()) return v;
  return Var(v.value());
}

/// Adjoint buffers handed to backward closures. Untracked operands have id -1
/// and are silently skipped.
class GradientSink {
 public:
  GradientSink(std::vector<Matrix>& grads, const std::vector<std::pair<std::size_t, std::size_t>>& shapes)
      : grads_(grads), shapes_(shapes) {}

  bool wants(int id) const { return id >= 0; }

  Matrix& at(int id) {
    Matrix& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) {
      const auto [r, c] = shapes_[static_cast<std::size_t>(id)];
      g = Matrix(r, c);
    }
    return g;
  }

 private:
  std::vector<Matrix>& grads_;
  const std::vector<std::pair<std::size_t, std::size_t>>& shapes_;
};

using BackwardFn = std::function<void(const Matrix& upstream, GradientSink& sink)>;

/// Gradients of one backward pass, indexed by parameter registration order.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Matrix> grads, std::vector<int> param_ids)
      : grads_(std::move(grads)), param_ids_(std::move(param_ids)) {}

  const Matrix& of(const Var& param) const {
    for (std::size_t i = 0; i < param_ids_.size(); ++i) {
      if (param_ids_[i] == param.id()) return grads_[i];
    }
    throw std::invalid_argument("variable is not a registered parameter of this tape");
  }
  const std::vector<Matrix>& parameters() const { return grads_; }
  std::vector<Matrix>& parameters() { return grads_; }

 private:
  std::vector<Matrix> grads_;
  std::vector<int> param_ids_;
};

/// Append-only record of operations. Nodes only ever refer to earlier nodes,
/// so a single reverse sweep visits everything in topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Matrix value) {
    Var v = record(std::move(value), nullptr);
    param_ids_.push_back(v.id());
    return v;
  }

  Var record(Matrix value, BackwardFn backward) {
    auto shared = std::make_shared<const Matrix>(std::move(value));
    shapes_.emplace_back(shared->rows(), shared->cols());
    backward_.push_back(std::move(backward));
    return Var(std::move(shared), this, static_cast<int>(backward_.size() - 1));
  }

  std::size_t size() const { return backward_.size(); }
  std::size_t parameter_count() const { return param_ids_.size(); }

  Gradients backward(const Var& loss) const {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw shape_error("backward needs a scalar loss, got " + loss.shape());
    }
    std::vector<Matrix> param_grads;
    param_grads.reserve(param_ids_.size());
    if (!loss.tracked()) {
      for (int id : param_ids_) {
        const auto [r, c] = shapes_[static_cast<std::size_t>(id)];
        param_grads.emplace_back(r, c);
      }
      return Gradients(std::move(param_grads), param_ids_);
    }
    if (loss.tape() != this) throw std::invalid_argument("loss was recorded on a different tape");

    std::vector<Matrix> grads(backward_.size());
    GradientSink sink(grads, shapes_);
    grads[static_cast<std::size_t>(loss.id())] = Matrix(1, 1, 1.0);
    for (int i = loss.id(); i >= 0; --i) {
      const auto idx = static_cast<std::size_t>(i);
      if (grads[idx].empty() || !backward_[idx]) continue;
      backward_[idx](grads[idx], sink);
    }
    for (int id : param_ids_) {
      Matrix& g = grads[static_cast<std::size_t>(id)];
      if (g.empty()) {
        const auto [r, c] = shapes_[static_cast<std::size_t>(id)];
        g = Matrix(r, c);
      }
      param_grads.push_back(std::move(g));
    }
    return Gradients(std::move(param_grads), param_ids_);
  }

 private:
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
  std::vector<BackwardFn> backward_;
  std::vector<int> param_ids_;
};

namespace detail {

inline Tape* common_tape(std::initializer_list<const Var*> inputs) {
  Tape* tape = nullptr;
  for (const Var* v : inputs) {
    if (!v->tracked()) continue;
    if (tape != nullptr && tape != v->tape()) {
      throw std::invalid_argument("operands were recorded on different tapes");
    }
    tape = v->tape();
  }
  return tape;
}

/// Records `value` with `backward` when any input is tracked; otherwise
/// returns a constant.
template <class Fn>
Var make(Matrix value, std::initializer_list<const Var*> inputs, Fn&& backward) {
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) return Var(std::move(value));
  return tape->record(std::move(value), BackwardFn(std::forward<Fn>(backward)));
}

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw shape_error(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

template <class F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var constant(Matrix m) { return Var(std::move(m)); }
inline Var constant(double s) { return Var(s); }
inline Var zeros(std::size_t rows, std::size_t cols) { return Var(Matrix(rows, cols)); }
inline Var ones(std::size_t rows, std::size_t cols) { return Var(Matrix(rows, cols, 1.0)); }

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape("add", a, b);
  Matrix out = a.value();
  out += b.value();
  const int ia = a.id(), ib = b.id();
  return detail::make(std::move(out), {&a, &b}, [ia, ib](const Matrix& g, GradientSink& s) {
    if (s.wants(ia)) s.at(ia) += g;
    if (s.wants(ib)) s.at(ib) += g;
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape("sub", a, b);
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.id(), ib = b.id();
  return detail::make(std::move(out), {&a, &b}, [ia, ib](const Matrix& g, GradientSink& s) {
    if (s.wants(ia)) s.at(ia) += g;
    if (s.wants(ib)) {
      Matrix& gb = s.at(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise product.
inline Var hadamard(const Var& a, const Var& b) {
  detail::require_same_shape("hadamard", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const int ia = a.id(), ib = b.id();
  auto pa = a.shared_value(), pb = b.shared_value();
  return detail::make(std::move(out), {&a, &b}, [ia, ib, pa, pb](const Matrix& g, GradientSink& s) {
    if (s.wants(ia)) {
      Matrix& ga = s.at(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*pb)[i];
    }
    if (s.wants(ib)) {
      Matrix& gb = s.at(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*pa)[i];
    }
  });
}

/// Elementwise quotient.
inline Var divide(const Var& a, const Var& b) {
  detail::require_same_shape("divide", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  const int ia = a.id(), ib = b.id();
  auto pa = a.shared_value(), pb = b.shared_value();
  return detail::make(std::move(out), {&a, &b}, [ia, ib, pa, pb](const Matrix& g, GradientSink& s) {
    if (s.wants(ia)) {
      Matrix& ga = s.at(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (*pb)[i];
    }
    if (s.wants(ib)) {
      Matrix& gb = s.at(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = (*pb)[i];
        gb[i] -= g[i] * (*pa)[i] / (d * d);
      }
    }
  });
}

inline Var scale(const Var& a, double factor) {
  Matrix out = detail::map(a.value(), [factor](double x) { return x * factor; });
  const int ia = a.id();
  return detail::make(std::move(out), {&a}, [ia, factor](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

inline Var add_scalar(const Var& a, double offset) {
  Matrix out = detail::map(a.value(), [offset](double x) { return x + offset; });
  const int ia = a.id();
  return detail::make(std::move(out), {&a}, [ia](const Matrix& g, GradientSink& s) { s.at(ia) += g; });
}

inline Var negate(const Var& a) { return scale(a, -1.0); }

/// Broadcasts a 1x1 factor over every entry of `a`.
inline Var mul_scalar(const Var& a, const Var& factor) {
  if (factor.rows() != 1 || factor.cols() != 1) {
    throw shape_error("mul_scalar: factor must be (1x1), got " + factor.shape());
  }
  const double f = factor.scalar();
  Matrix out = detail::map(a.value(), [f](double x) { return x * f; });
  const int ia = a.id(), ifac = factor.id();
  auto pa = a.shared_value();
  return detail::make(std::move(out), {&a, &factor}, [ia, ifac, f, pa](const Matrix& g, GradientSink& s) {
    if (s.wants(ia)) {
      Matrix& ga = s.at(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * f;
    }
    if (s.wants(ifac)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * (*pa)[i];
      s.at(ifac)[0] += acc;
    }
  });
}

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw shape_error("matmul: shape mismatch " + a.shape() + " * " + b.shape());
  }
  Matrix out = swarmlearn::matmul(a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  auto pa = a.shared_value(), pb = b.shared_value();
  return detail::make(std::move(out), {&a, &b}, [ia, ib, pa, pb](const Matrix& g, GradientSink& s) {
    if (s.wants(ia)) s.at(ia) += matmul_nt(g, *pb);
    if (s.wants(ib)) s.at(ib) += matmul_tn(*pa, g);
  });
}

inline Var transpose(const Var& a) {
  Matrix out = swarmlearn::transpose(a.value());
  const int ia = a.id();
  return detail::make(std::move(out), {&a}, [ia](const Matrix& g, GradientSink& s) {
    s.at(ia) += swarmlearn::transpose(g);
  });
}

inline Var tanh(const Var& a) {
  Matrix out = detail::map(a.value(), [](double x) { return std::tanh(x); });
  const int ia = a.id();
  auto po = std::make_shared<const Matrix>(out);
  return detail::make(std::move(out), {&a}, [ia, po](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - (*po)[i] * (*po)[i]);
  });
}

inline Var sigmoid(const Var& a) {
  Matrix out = detail::map(a.value(), detail::stable_sigmoid);
  const int ia = a.id();
  auto po = std::make_shared<const Matrix>(out);
  return detail::make(std::move(out), {&a}, [ia, po](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*po)[i] * (1.0 - (*po)[i]);
  });
}

inline Var exp(const Var& a) {
  Matrix out = detail::map(a.value(), [](double x) { return std::exp(x); });
  const int ia = a.id();
  auto po = std::make_shared<const Matrix>(out);
  return detail::make(std::move(out), {&a}, [ia, po](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*po)[i];
  });
}

inline Var log(const Var& a) {
  Matrix out = detail::map(a.value(), [](double x) { return std::log(x); });
  const int ia = a.id();
  auto pa = a.shared_value();
  return detail::make(std::move(out), {&a}, [ia, pa](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (*pa)[i];
  });
}

inline Var square(const Var& a) {
  Matrix out = detail::map(a.value(), [](double x) { return x * x; });
  const int ia = a.id();
  auto pa = a.shared_value();
  return detail::make(std::move(out), {&a}, [ia, pa](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * (*pa)[i];
  });
}

/// Sum of all entries, as (1x1).
inline Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  const int ia = a.id();
  return detail::make(Matrix(1, 1, acc), {&a}, [ia](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
}

/// Sum down each column: (r x c) -> (1 x c).
inline Var column_sums(const Var& a) {
  const Matrix& av = a.value();
  Matrix out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
  const int ia = a.id();
  return detail::make(std::move(out), {&a}, [ia](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c];
  });
}

/// Sum across each row: (r x c) -> (r x 1).
inline Var row_sums(const Var& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[r] += av(r, c);
  const int ia = a.id();
  return detail::make(std::move(out), {&a}, [ia](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[r];
  });
}

inline Var squared_norm(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v * v;
  const int ia = a.id();
  auto pa = a.shared_value();
  return detail::make(Matrix(1, 1, acc), {&a}, [ia, pa](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g[0] * (*pa)[i];
  });
}

namespace detail {

// Softmax over groups of entries; `stride` walks within a group, `groups`
// group starts are at `start(g)`.
template <class Start>
void softmax_groups(const Matrix& in, Matrix& out, std::size_t groups, std::size_t len,
                    std::size_t stride, Start start) {
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t s0 = start(g);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[s0 + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(in[s0 + i * stride] - mx);
      out[s0 + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[s0 + i * stride] /= total;
  }
}

template <class Start>
void softmax_groups_backward(const Matrix& y, const Matrix& g, Matrix& ga, std::size_t groups,
                             std::size_t len, std::size_t stride, Start start) {
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const std::size_t s0 = start(grp);
    double dot = 0.0;
    for (std::size_t i = 0; i < len; ++i) dot += y[s0 + i * stride] * g[s0 + i * stride];
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t k = s0 + i * stride;
      ga[k] += y[k] * (g[k] - dot);
    }
  }
}

}  // namespace detail

/// Softmax within each column (every column sums to one).
inline Var softmax_columns(const Var& a) {
  const Matrix& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Matrix out(rows, cols);
  detail::softmax_groups(av, out, cols, rows, cols, [](std::size_t c) { return c; });
  const int ia = a.id();
  auto po = std::make_shared<const Matrix>(out);
  return detail::make(std::move(out), {&a}, [ia, po, rows, cols](const Matrix& g, GradientSink& s) {
    detail::softmax_groups_backward(*po, g, s.at(ia), cols, rows, cols, [](std::size_t c) { return c; });
  });
}

/// Softmax within each row (every row sums to one).
inline Var softmax_rows(const Var& a) {
  const Matrix& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Matrix out(rows, cols);
  detail::softmax_groups(av, out, rows, cols, 1, [cols](std::size_t r) { return r * cols; });
  const int ia = a.id();
  auto po = std::make_shared<const Matrix>(out);
  return detail::make(std::move(out), {&a}, [ia, po, rows, cols](const Matrix& g, GradientSink& s) {
    detail::softmax_groups_backward(*po, g, s.at(ia), rows, cols, 1,
                                    [cols](std::size_t r) { return r * cols; });
  });
}

/// log(sum(exp(a))) over all entries, max-shifted.
inline Var logsumexp(const Var& a) {
  const Matrix& av = a.value();
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : av.data()) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : av.data()) total += std::exp(v - mx);
  const double result = mx + std::log(total);
  const int ia = a.id();
  auto pa = a.shared_value();
  return detail::make(Matrix(1, 1, result), {&a}, [ia, pa, result](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * std::exp((*pa)[i] - result);
  });
}

inline Var slice_cols(const Var& a, std::size_t first, std::size_t count) {
  const Matrix& av = a.value();
  if (first + count > av.cols()) {
    throw shape_error("slice_cols: columns [" + std::to_string(first) + ", " +
                      std::to_string(first + count) + ") out of range for " + av.shape());
  }
  Matrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, first + c);
  const int ia = a.id();
  return detail::make(std::move(out), {&a}, [ia, first, count](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) ga(r, first + c) += g(r, c);
  });
}

inline Var column(const Var& a, std::size_t j) { return slice_cols(a, j, 1); }

/// Gathers the listed columns (repeats allowed).
inline Var select_cols(const Var& a, const std::vector<std::size_t>& index) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), index.size());
  for (std::size_t c = 0; c < index.size(); ++c) {
    if (index[c] >= av.cols()) {
      throw shape_error("select_cols: column " + std::to_string(index[c]) + " out of range for " +
                        av.shape());
    }
    for (std::size_t r = 0; r < av.rows(); ++r) out(r, c) = av(r, index[c]);
  }
  const int ia = a.id();
  return detail::make(std::move(out), {&a}, [ia, index](const Matrix& g, GradientSink& s) {
    Matrix& ga = s.at(ia);
    for (std::size_t c = 0; c < index.size(); ++c)
      for (std::size_t r = 0; r < g.rows(); ++r) ga(r, index[c]) += g(r, c);
  });
}

/// Concatenates column blocks of equal height. Records one node per call.
inline Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw shape_error("hcat: nothing to concatenate");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  Tape* tape = nullptr;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw shape_error("hcat: height mismatch " + parts.front().shape() + " vs " + p.shape());
    }
    cols += p.cols();
    if (p.tracked()) {
      if (tape != nullptr && tape != p.tape()) {
        throw std::invalid_argument("operands were recorded on different tapes");
      }
      tape = p.tape();
    }
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, std::size_t>> blocks;  // (id, first column)
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    blocks.emplace_back(p.id(), offset);
    widths.push_back(pv.cols());
    offset += pv.cols();
  }
  if (tape == nullptr) return Var(std::move(out));
  return tape->record(std::move(out), [blocks, widths](const Matrix& g, GradientSink& s) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto [id, first] = blocks[b];
      if (!s.wants(id)) continue;
      Matrix& gp = s.at(id);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < widths[b]; ++c) gp(r, c) += g(r, first + c);
    }
  });
}

/// Squared Euclidean distances between the columns of x (n x k) and the
/// columns of y (n x m), as (k x m).
inline Var pairwise_sq_dists(const Var& x, const Var& y) {
  if (x.rows() != y.rows()) {
    throw shape_error("pairwise_sq_dists: dimension mismatch " + x.shape() + " vs " + y.shape());
  }
  const Matrix& xv = x.value();
  const Matrix& yv = y.value();
  const std::size_t n = xv.rows(), k = xv.cols(), m = yv.cols();
  Matrix out(k, m);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        const double diff = xv(d, i) - yv(d, j);
        acc += diff * diff;
      }
      out(i, j) = acc;
    }
  const int ix = x.id(), iy = y.id();
  auto px = x.shared_value(), py = y.shared_value();
  return detail::make(std::move(out), {&x, &y}, [ix, iy, px, py, n, k, m](const Matrix& g, GradientSink& s) {
    Matrix* gx = s.wants(ix) ? &s.at(ix) : nullptr;
    Matrix* gy = s.wants(iy) ? &s.at(iy) : nullptr;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double w = 2.0 * g(i, j);
        if (w == 0.0) continue;
        for (std::size_t d = 0; d < n; ++d) {
          const double diff = (*px)(d, i) - (*py)(d, j);
          if (gx) (*gx)(d, i) += w * diff;
          if (gy) (*gy)(d, j) -= w * diff;
        }
      }
  });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return negate(a); }
inline Var operator*(const Var& a, double f) { return scale(a, f); }
inline Var operator*(double f, const Var& a) { return scale(a, f); }

/// Result of comparing analytic gradients with finite differences.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t parameter = 0;
  std::size_t entry = 0;
  std::size_t checked = 0;
};

using ScalarProgram = std::function<Var(const std::vector<Var>&)>;

/// max over entries of |analytic - fd| / (|analytic| + |fd| + 1e-12), with
/// fd the five-point central difference at `step`.
inline GradCheckReport grad_check(const ScalarProgram& program, const std::vector<Matrix>& theta,
                                  double step) {
  Tape tape;
  std::vector<Var> params;
  params.reserve(theta.size());
  for (const Matrix& m : theta) params.push_back(tape.parameter(m));
  const Var loss = program(params);
  if (!std::isfinite(loss.scalar())) throw numeric_error("grad_check: loss is not finite at theta");
  const Gradients grads = tape.backward(loss);

  auto evaluate = [&](std::size_t p, std::size_t e, double delta) {
    std::vector<Var> consts;
    consts.reserve(theta.size());
    for (std::size_t q = 0; q < theta.size(); ++q) {
      if (q == p) {
        Matrix m = theta[q];
        m[e] += delta;
        consts.emplace_back(std::move(m));
      } else {
        consts.emplace_back(theta[q]);
      }
    }
    const double v = program(consts).scalar();
    if (!std::isfinite(v)) {
      throw numeric_error("grad_check: non-finite value at parameter " + std::to_string(p) +
                          " entry " + std::to_string(e));
    }
    return v;
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < theta.size(); ++p) {
    for (std::size_t e = 0; e < theta[p].size(); ++e) {
      const double analytic = grads.parameters()[p][e];
      if (!std::isfinite(analytic)) {
        throw numeric_error("grad_check: non-finite gradient at parameter " + std::to_string(p) +
                            " entry " + std::to_string(e));
      }
      const double fd = (8.0 * (evaluate(p, e, step) - evaluate(p, e, -step)) -
                         (evaluate(p, e, 2.0 * step) - evaluate(p, e, -2.0 * step))) /
                        (12.0 * step);
      const double rel = std::abs(analytic - fd) / (std::abs(analytic) + std::abs(fd) + 1e-12);
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.parameter = p;
        report.entry = e;
      }
    }
  }
  return report;
}

}  // namespace swarmlearn::ad
