#include "tggat/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace tggat::nx {

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<Var> inputs;
  BackwardFn backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

void require_scalar(const Var& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError(std::string(op) + ": expected 1x1, got " + s.shape().str());
}

// Elementwise unary op from value and derivative functors.
template <typename F, typename DF>
Var unary(const Var& x, F f, DF df) {
  Matrix out = x.value().unaryExpr(f);
  return make_op(std::move(out), {x}, [x, df](const Matrix& g, const Matrix& y) {
    Matrix d(g.rows(), g.cols());
    const Matrix& xv = x.value();
    for (Index i = 0; i < g.size(); ++i) d.data()[i] = g.data()[i] * df(xv.data()[i], y.data()[i]);
    accumulate_grad(x, d);
  });
}

}  // namespace

std::string Shape::str() const { return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")"; }

// --- Var ----------------------------------------------------------------------

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Var(std::move(m), requires_grad);
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }
bool Var::is_leaf() const { return node_ && !node_->backward; }

const Matrix& Var::value() const {
  if (!node_) throw UsageError("Var: undefined");
  return node_->value;
}

Matrix& Var::mutable_value() {
  if (!node_) throw UsageError("Var: undefined");
  if (node_->backward) throw UsageError("Var: only leaf values are mutable");
  return node_->value;
}

const Matrix& Var::grad() const {
  if (!node_) throw UsageError("Var: undefined");
  if (node_->grad.size() == 0) {
    // Lazily materialize zeros so callers can always read a same-shape grad.
    node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw UsageError("Var::item: not a scalar " + shape().str());
  return value()(0, 0);
}

Var make_op(Matrix value, std::vector<Var> inputs, BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  const bool any = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                 [](const Var& v) { return v.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

void accumulate_grad(const Var& v, const Matrix& g) {
  if (v.requires_grad()) v.node()->accumulate(g);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

void backward(const Var& root) {
  if (!root.defined() || root.rows() != 1 || root.cols() != 1) {
    throw UsageError("backward: root must be a 1x1 value");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].node();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (n->backward) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  }
  Matrix one(1, 1);
  one(0, 0) = 1.0;
  root.node()->accumulate(one);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(n->grad, n->value);
  }
}

// --- linear algebra -----------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + a.shape().str() + " * " + b.shape().str());
  }
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) {
      Matrix ga(a.rows(), a.cols());
      ga.noalias() = g * b.value().transpose();
      accumulate_grad(a, ga);
    }
    if (b.requires_grad()) {
      Matrix gb(b.rows(), b.cols());
      gb.noalias() = a.value().transpose() * g;
      accumulate_grad(b, gb);
    }
  });
}

Var transpose(const Var& x) {
  Matrix out = x.value().transpose();
  return make_op(std::move(out), {x}, [x](const Matrix& g, const Matrix&) { accumulate_grad(x, g.transpose()); });
}

// --- elementwise ----------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    accumulate_grad(a, g);
    accumulate_grad(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    accumulate_grad(a, g);
    if (b.requires_grad()) accumulate_grad(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    if (a.requires_grad()) accumulate_grad(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) accumulate_grad(b, g.cwiseProduct(a.value()));
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  return make_op(a.value().cwiseQuotient(b.value()), {a, b}, [a, b](const Matrix& g, const Matrix& y) {
    if (a.requires_grad()) accumulate_grad(a, g.cwiseQuotient(b.value()));
    if (b.requires_grad()) accumulate_grad(b, -g.cwiseProduct(y).cwiseQuotient(b.value()));
  });
}

Var scale(const Var& x, double s) {
  return make_op(x.value() * s, {x}, [x, s](const Matrix& g, const Matrix&) { accumulate_grad(x, g * s); });
}

Var add_scalar(const Var& x, double s) {
  return make_op(x.value().array() + s, {x}, [x](const Matrix& g, const Matrix&) { accumulate_grad(x, g); });
}

Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_row: row " + row.shape().str() + " does not broadcast over " + x.shape().str());
  }
  Matrix out = x.value();
  out.rowwise() += row.value().row(0);
  return make_op(std::move(out), {x, row}, [x, row](const Matrix& g, const Matrix&) {
    accumulate_grad(x, g);
    if (row.requires_grad()) accumulate_grad(row, g.colwise().sum());
  });
}

Var add_const(const Var& x, const Matrix& c) {
  if (c.rows() != x.rows() || c.cols() != x.cols()) throw ShapeError("add_const: shape mismatch");
  return make_op(x.value() + c, {x}, [x](const Matrix& g, const Matrix&) { accumulate_grad(x, g); });
}

Var scalar_times(const Var& s, const Matrix& c) {
  require_scalar(s, "scalar_times");
  return make_op(c * s.value()(0, 0), {s}, [s, c](const Matrix& g, const Matrix&) {
    Matrix gs(1, 1);
    gs(0, 0) = g.cwiseProduct(c).sum();
    accumulate_grad(s, gs);
  });
}

Var mul_scalar(const Var& x, const Var& s) {
  require_scalar(s, "mul_scalar");
  return make_op(x.value() * s.value()(0, 0), {x, s}, [x, s](const Matrix& g, const Matrix&) {
    if (x.requires_grad()) accumulate_grad(x, g * s.value()(0, 0));
    if (s.requires_grad()) {
      Matrix gs(1, 1);
      gs(0, 0) = g.cwiseProduct(x.value()).sum();
      accumulate_grad(s, gs);
    }
  });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
  static const double k = std::sqrt(2.0 / std::numbers::pi);
  constexpr double c = 0.044715;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(k * (v + c * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
      });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var minimum(const Var& a, const Var& b) {
  require_same_shape(a, b, "minimum");
  return make_op(a.value().cwiseMin(b.value()), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    const Matrix pick_a = (a.value().array() <= b.value().array()).cast<double>().matrix();
    if (a.requires_grad()) accumulate_grad(a, g.cwiseProduct(pick_a));
    if (b.requires_grad()) accumulate_grad(b, g - g.cwiseProduct(pick_a));
  });
}

Var maximum(const Var& a, const Var& b) {
  require_same_shape(a, b, "maximum");
  return make_op(a.value().cwiseMax(b.value()), {a, b}, [a, b](const Matrix& g, const Matrix&) {
    const Matrix pick_a = (a.value().array() >= b.value().array()).cast<double>().matrix();
    if (a.requires_grad()) accumulate_grad(a, g.cwiseProduct(pick_a));
    if (b.requires_grad()) accumulate_grad(b, g - g.cwiseProduct(pick_a));
  });
}

Var huber(const Var& x, double beta) {
  // |x| == beta takes the quadratic-branch derivative.
  return unary(
      x,
      [beta](double v) {
        const double a = std::abs(v);
        return a < beta ? 0.5 * v * v / beta : a - 0.5 * beta;
      },
      [beta](double v, double) {
        if (std::abs(v) <= beta) return v / beta;
        return v > 0.0 ? 1.0 : -1.0;
      });
}

// --- reductions -----------------------------------------------------------------

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_op(std::move(out), {x}, [x](const Matrix& g, const Matrix&) {
    accumulate_grad(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  Matrix out(1, 1);
  out(0, 0) = x.value().sum() / n;
  return make_op(std::move(out), {x}, [x, n](const Matrix& g, const Matrix&) {
    accumulate_grad(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0) / n));
  });
}

// --- structural -----------------------------------------------------------------

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), inputs, [inputs](const Matrix& g, const Matrix&) {
    Index offset = 0;
    for (const Var& p : inputs) {
      if (p.requires_grad()) accumulate_grad(p, g.middleRows(offset, p.rows()));
      offset += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), inputs, [inputs](const Matrix& g, const Matrix&) {
    Index offset = 0;
    for (const Var& p : inputs) {
      if (p.requires_grad()) accumulate_grad(p, g.middleCols(offset, p.cols()));
      offset += p.cols();
    }
  });
}

Var slice_rows(const Var& x, Index start, Index count) {
  if (start < 0 || count < 1 || start + count > x.rows()) throw ShapeError("slice_rows: range out of bounds");
  return make_op(x.value().middleRows(start, count), {x}, [x, start, count](const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    full.middleRows(start, count) = g;
    accumulate_grad(x, full);
  });
}

Var slice_cols(const Var& x, Index start, Index count) {
  if (start < 0 || count < 1 || start + count > x.cols()) throw ShapeError("slice_cols: range out of bounds");
  return make_op(x.value().middleCols(start, count), {x}, [x, start, count](const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(x.rows(), x.cols());
    full.middleCols(start, count) = g;
    accumulate_grad(x, full);
  });
}

Var reshape(const Var& x, Index rows, Index cols) {
  if (rows * cols != x.value().size()) throw ShapeError("reshape: element count changes");
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
  return make_op(std::move(out), {x}, [x](const Matrix& g, const Matrix&) {
    accumulate_grad(x, Eigen::Map<const Matrix>(g.data(), x.rows(), x.cols()));
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  const auto n = static_cast<Index>(ids.size());
  if (n == 0) throw ShapeError("gather_rows: empty id list");
  Matrix out(n, table.cols());
  for (Index i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) throw ShapeError("gather_rows: id out of range");
    out.row(i) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_op(std::move(out), {table}, [table, idx](const Matrix& g, const Matrix&) {
    Matrix full = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Index>(i));
    accumulate_grad(table, full);
  });
}

Var detach(const Var& x) { return Var::constant(x.value()); }

Var softmax(const Var& x, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  if (axis == 0) return transpose(softmax(transpose(x), 1));
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.value().row(r).maxCoeff();
    out.row(r) = (x.value().row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return make_op(std::move(out), {x}, [x](const Matrix& g, const Matrix& y) {
    Matrix d = y.cwiseProduct(g);
    const Eigen::VectorXd dots = d.rowwise().sum();
    d -= y.cwiseProduct(dots.replicate(1, y.cols()));
    accumulate_grad(x, d);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(n));
  }
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.value().row(r).mean();
    const auto centered = x.value().row(r).array() - mu;
    const double var = centered.square().sum() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return make_op(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std, n](const Matrix& g, const Matrix&) {
    if (gain.requires_grad()) accumulate_grad(gain, g.cwiseProduct(xhat).colwise().sum());
    if (bias.requires_grad()) accumulate_grad(bias, g.colwise().sum());
    if (x.requires_grad()) {
      const Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
      Matrix dx(x.rows(), n);
      for (Index r = 0; r < x.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).sum() / static_cast<double>(n);
        dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
      }
      accumulate_grad(x, dx);
    }
  });
}

// --- parameters -------------------------------------------------------------------

Var ParameterStore::add(std::string name, Matrix init, bool trainable) {
  if (index_.contains(name)) throw UsageError("ParameterStore: duplicate parameter name '" + name + "'");
  Var v(std::move(init), true);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), v, trainable});
  return v;
}

bool ParameterStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

const Parameter& ParameterStore::get(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("ParameterStore: unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += static_cast<std::size_t>(p.value.value().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.value.zero_grad();
}

std::vector<Var> ParameterStore::trainable_values() const {
  std::vector<Var> out;
  for (const Parameter& p : params_) {
    if (p.trainable) out.push_back(p.value);
  }
  return out;
}

Matrix uniform_init(Rng& rng, Index rows, Index cols, Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// --- gradient checking ------------------------------------------------------------

FiniteDiffResult finite_diff_check(const std::function<Var()>& f, std::span<const Var> params, double eps,
                                   double floor) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw UsageError("finite_diff_check: eps must lie in (0, 1e-3]");
  for (const Var& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) throw UsageError("finite_diff_check: params must be trainable leaves");
    Var(p).zero_grad();
  }
  backward(f());

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(p.grad());

  FiniteDiffResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var p = params[k];
    Matrix& values = p.mutable_value();
    for (Index i = 0; i < values.size(); ++i) {
      const double original = values.data()[i];
      values.data()[i] = original + eps;
      const double plus = f().item();
      values.data()[i] = original - eps;
      const double minus = f().item();
      values.data()[i] = original;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result = {std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity(), k, i, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace tggat::nx
