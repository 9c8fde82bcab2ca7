#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace thc {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xn.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw DimensionError("negative tensor dimension");
  }
  Tensor(int rows, int cols, std::vector<double> values)
      : rows_(rows), cols_(cols), v_(std::move(values)) {
    if (v_.size() != static_cast<size_t>(rows) * cols)
      throw DimensionError("value count " + std::to_string(v_.size()) +
                           " does not match shape " + shape_str());
  }

  static Tensor scalar(double v) { return Tensor(1, 1, {v}); }
  static Tensor row(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor(1, n, std::move(v));
  }
  static Tensor identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return rows_ * cols_; }
  bool empty() const { return v_.empty(); }

  double& at(int r, int c) { return v_[static_cast<size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return v_[static_cast<size_t>(r) * cols_ + c]; }
  double& operator[](int i) { return v_[i]; }
  double operator[](int i) const { return v_[i]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape_str() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  double scalar_value() const {
    if (!is_scalar()) throw ContractError("expected scalar, got " + shape_str());
    return v_[0];
  }
  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double v) { std::fill(v_.begin(), v_.end(), v); }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> v_;
};

// Untaped value-level ops. The tape primitives call into these; oracles and
// the optimizer use them directly.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
double sum(const Tensor& a);

// Reverse-mode tape. One tape per forward pass; freed after backward.
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const;

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double s);
  Var log(Var a);
  Var exp(Var a);
  Var tanh(Var a);
  Var softmax_rows(Var a);
  Var sum(Var a);
  Var mean_all(Var a);
  Var reshape(Var a, int rows, int cols);
  Var mean_of(const std::vector<Var>& vars);
  // mean over entries of -(a*log(a) + (1-a)*log(1-a)), logs clamped at eps
  Var binary_entropy_mean(Var a, double eps = 1e-12);
  // -log softmax(logits)[label] for a 1xN logit row, log-space stable
  Var cross_entropy(Var logits, int label);

  void backward(Var loss);
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // lazily sized
    std::function<void()> back;  // empty for leaves
  };
  std::vector<Node> nodes_;

  Node& node(Var v) {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
      throw ContractError("invalid tape variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
      throw ContractError("invalid tape variable");
    return nodes_[v.id];
  }
  Var push(Tensor value, std::function<void()> back);
  Tensor& grad_of(int id);
};

}  // namespace thc
