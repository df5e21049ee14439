#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tggat/errors.hpp"

// Dense 2-D tensors with reverse-mode differentiation.
//
// Every value in the model is a Var: a shared handle to a graph node holding a
// row-major double matrix, its gradient, and (for non-leaves) the closure that
// pushes the upstream gradient into its inputs. Graphs are built eagerly while
// ops run and freed when the last handle goes away.
namespace tggat::nx {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Shape {
  Index rows = 0;
  Index cols = 0;

  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {
struct Node;
}

// Upstream gradient and the node's own forward value.
using BackwardFn = std::function<void(const Matrix& upstream, const Matrix& value)>;

class Var {
 public:
  Var() = default;
  // Leaf. Leaves that require grad accumulate into grad() on every backward().
  explicit Var(Matrix value, bool requires_grad = false);

  static Var constant(Matrix value) { return Var(std::move(value), false); }
  static Var scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const;
  bool is_leaf() const;

  const Matrix& value() const;
  // Leaf values may be edited in place (optimizer, finite differences, checkpoint load).
  Matrix& mutable_value();
  const Matrix& grad() const;
  void zero_grad();

  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Shape shape() const { return {rows(), cols()}; }
  double item() const;

  detail::Node* node() const { return node_.get(); }

 private:
  friend Var make_op(Matrix value, std::vector<Var> inputs, BackwardFn fn);
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Builds a non-leaf. When grad mode is off or no input requires grad the
// result is a constant and `fn` is dropped.
Var make_op(Matrix value, std::vector<Var> inputs, BackwardFn fn);

// Adds g into v's gradient; a no-op for constants.
void accumulate_grad(const Var& v, const Matrix& g);

// Thread-local switch used for evaluation and finite differences.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Root must be 1x1. Intermediate gradients are recomputed on each call; leaf
// gradients accumulate.
void backward(const Var& root);

// --- linear algebra ---------------------------------------------------------
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);

// --- elementwise ------------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
// x (n x m) plus a 1 x m row broadcast over rows.
Var add_row(const Var& x, const Var& row);
// Adds a constant matrix (masks, fixed offsets).
Var add_const(const Var& x, const Matrix& c);
// s * C for a 1x1 Var s and constant C.
Var scalar_times(const Var& s, const Matrix& c);
// x * s for a 1x1 Var s.
Var mul_scalar(const Var& x, const Var& s);
Var relu(const Var& x);
// tanh approximation of GELU.
Var gelu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
// Gradient is zero where the value was clamped.
Var clamp(const Var& x, double lo, double hi);
// Ties route the gradient to the first operand.
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);
// Smooth-L1: 0.5 x^2 / beta for |x| < beta, |x| - 0.5 beta otherwise.
Var huber(const Var& x, double beta);

// --- reductions -------------------------------------------------------------
Var sum(const Var& x);
Var mean(const Var& x);

// --- structural -------------------------------------------------------------
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& x, Index start, Index count);
Var slice_cols(const Var& x, Index start, Index count);
Var reshape(const Var& x, Index rows, Index cols);
Var gather_rows(const Var& table, std::span<const int> ids);
// Value passes through; no gradient flows back.
Var detach(const Var& x);

// axis = 1 normalizes each row, axis = 0 each column. Max-subtracted.
Var softmax(const Var& x, int axis = 1);
// Row-wise normalization; gain and bias are 1 x cols.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// --- parameters -------------------------------------------------------------
struct Parameter {
  std::string name;
  Var value;
  bool trainable = true;
};

class ParameterStore {
 public:
  // Names are unique within a store.
  Var add(std::string name, Matrix init, bool trainable = true);

  bool contains(std::string_view name) const;
  const Parameter& get(std::string_view name) const;
  Var value(std::string_view name) const { return get(name).value; }

  std::span<Parameter> all() { return params_; }
  std::span<const Parameter> all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  std::vector<Var> trainable_values() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Rng = std::mt19937_64;

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Matrix uniform_init(Rng& rng, Index rows, Index cols, Index fan_in);

// --- gradient checking ------------------------------------------------------
struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Index worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the backward() gradient of f wrt every entry of `params` with the
// central difference (f(+eps) - f(-eps)) / 2eps. Relative error uses the
// denominator max(|analytic|, |numeric|, floor); the floor keeps entries whose
// true gradient is zero (e.g. key biases under softmax) from turning
// difference roundoff into large ratios. Leaves param grads holding the
// analytic gradient.
FiniteDiffResult finite_diff_check(const std::function<Var()>& f, std::span<const Var> params,
                                   double eps = 1e-5, double floor = 1e-6);

}  // namespace tggat::nx
