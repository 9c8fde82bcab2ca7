#include "thc/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace thc {

namespace {

// Broadcast of b against a: shapes equal, b scalar, b a 1xN row against
// MxN, or b an Mx1 column against MxN. That covers every case the model
// composes; anything else is a shape error.
bool broadcast_ok(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return true;
  if (b.is_scalar()) return true;
  if (b.rows() == 1 && b.cols() == a.cols()) return true;
  if (b.cols() == 1 && b.rows() == a.rows()) return true;
  return false;
}

double bcast_at(const Tensor& b, const Tensor& a, int r, int c) {
  if (b.same_shape(a)) return b.at(r, c);
  if (b.is_scalar()) return b[0];
  if (b.rows() == 1) return b.at(0, c);
  return b.at(r, 0);
}

void require_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (!broadcast_ok(a, b))
    throw DimensionError(std::string(op) + ": shapes " + a.shape_str() +
                         " and " + b.shape_str() + " are not compatible");
}

// Accumulate a gradient of a's shape into b's (possibly broadcast) shape.
void reduce_into(Tensor& gb, const Tensor& g, const Tensor& a) {
  if (gb.same_shape(a)) {
    for (int i = 0; i < g.size(); ++i) gb[i] += g[i];
  } else if (gb.is_scalar()) {
    for (int i = 0; i < g.size(); ++i) gb[0] += g[i];
  } else if (gb.rows() == 1) {
    for (int r = 0; r < a.rows(); ++r)
      for (int c = 0; c < a.cols(); ++c) gb.at(0, c) += g.at(r, c);
  } else {
    for (int r = 0; r < a.rows(); ++r)
      for (int c = 0; c < a.cols(); ++c) gb.at(r, 0) += g.at(r, c);
  }
}

// out += a * b
void matmul_acc(Tensor& out, const Tensor& a, const Tensor& b) {
  const int m = a.rows(), n = a.cols(), p = b.cols();
  for (int i = 0; i < m; ++i) {
    double* orow = out.data() + static_cast<size_t>(i) * p;
    const double* arow = a.data() + static_cast<size_t>(i) * n;
    for (int k = 0; k < n; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data() + static_cast<size_t>(k) * p;
      for (int j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() +
                         " vs " + b.shape_str());
  Tensor out(a.rows(), b.cols());
  matmul_acc(out, a, b);
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  if (!a.all_finite())
    throw NumericError("softmax_rows: non-finite input " + a.shape_str());
  Tensor out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r) {
    double mx = a.at(r, 0);
    for (int c = 1; c < a.cols(); ++c) mx = std::max(mx, a.at(r, c));
    double z = 0.0;
    for (int c = 0; c < a.cols(); ++c) {
      out.at(r, c) = std::exp(a.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (int c = 0; c < a.cols(); ++c) out.at(r, c) /= z;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_broadcast(a, b, "add");
  Tensor out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      out.at(r, c) = a.at(r, c) + bcast_at(b, a, r, c);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_broadcast(a, b, "sub");
  Tensor out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      out.at(r, c) = a.at(r, c) - bcast_at(b, a, r, c);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_broadcast(a, b, "mul");
  Tensor out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      out.at(r, c) = a.at(r, c) * bcast_at(b, a, r, c);
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_broadcast(a, b, "div");
  Tensor out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) {
      double d = bcast_at(b, a, r, c);
      if (d == 0.0)
        throw NumericError("div: zero divisor at (" + std::to_string(r) + "," +
                           std::to_string(c) + ")");
      out.at(r, c) = a.at(r, c) / d;
    }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) {
      if (a.at(r, c) <= 0.0)
        throw NumericError("log: non-positive entry at (" + std::to_string(r) +
                           "," + std::to_string(c) + ")");
      out.at(r, c) = std::log(a.at(r, c));
    }
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Var Tape::push(Tensor value, std::function<void()> back) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::leaf(Tensor value) { return push(std::move(value), {}); }

Tensor& Tape::grad_of(int id) { return nodes_[id].grad; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty())
    throw ContractError("gradient not computed; call backward() first");
  return n.grad;
}

void Tape::backward(Var loss) {
  Node& ln = node(loss);
  if (!ln.value.is_scalar())
    throw ContractError("backward: loss must be scalar, got " +
                        ln.value.shape_str());
  for (Node& n : nodes_) n.grad = Tensor(n.value.rows(), n.value.cols());
  nodes_[loss.id].grad[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back();
  }
}

Tape::Var Tape::matmul(Var a, Var b) {
  Var out = push(thc::matmul(value(a), value(b)), {});
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    const Tensor& g = nodes_[io].grad;
    // dL/da += g * b^T ; dL/db += a^T * g
    matmul_acc(grad_of(ia), g, thc::transpose(nodes_[ib].value));
    matmul_acc(grad_of(ib), thc::transpose(nodes_[ia].value), g);
  };
  return out;
}

Tape::Var Tape::transpose(Var a) {
  Var out = push(thc::transpose(value(a)), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io]() {
    const Tensor& g = nodes_[io].grad;
    Tensor& ga = grad_of(ia);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) ga.at(c, r) += g.at(r, c);
  };
  return out;
}

Tape::Var Tape::add(Var a, Var b) {
  Var out = push(thc::add(value(a), value(b)), {});
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    const Tensor& g = nodes_[io].grad;
    reduce_into(grad_of(ia), g, nodes_[ia].value);
    reduce_into(grad_of(ib), g, nodes_[ia].value);
  };
  return out;
}

Tape::Var Tape::sub(Var a, Var b) {
  Var out = push(thc::sub(value(a), value(b)), {});
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    const Tensor& g = nodes_[io].grad;
    reduce_into(grad_of(ia), g, nodes_[ia].value);
    Tensor neg = thc::scale(g, -1.0);
    reduce_into(grad_of(ib), neg, nodes_[ia].value);
  };
  return out;
}

Tape::Var Tape::mul(Var a, Var b) {
  Var out = push(thc::mul(value(a), value(b)), {});
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    const Tensor& g = nodes_[io].grad;
    const Tensor& av = nodes_[ia].value;
    const Tensor& bv = nodes_[ib].value;
    Tensor& ga = grad_of(ia);
    Tensor gb_full(av.rows(), av.cols());
    for (int r = 0; r < av.rows(); ++r)
      for (int c = 0; c < av.cols(); ++c) {
        ga.at(r, c) += g.at(r, c) * bcast_at(bv, av, r, c);
        gb_full.at(r, c) = g.at(r, c) * av.at(r, c);
      }
    reduce_into(grad_of(ib), gb_full, av);
  };
  return out;
}

Tape::Var Tape::div(Var a, Var b) {
  Var out = push(thc::div(value(a), value(b)), {});
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    const Tensor& g = nodes_[io].grad;
    const Tensor& av = nodes_[ia].value;
    const Tensor& bv = nodes_[ib].value;
    Tensor& ga = grad_of(ia);
    Tensor gb_full(av.rows(), av.cols());
    for (int r = 0; r < av.rows(); ++r)
      for (int c = 0; c < av.cols(); ++c) {
        double d = bcast_at(bv, av, r, c);
        ga.at(r, c) += g.at(r, c) / d;
        gb_full.at(r, c) = -g.at(r, c) * av.at(r, c) / (d * d);
      }
    reduce_into(grad_of(ib), gb_full, av);
  };
  return out;
}

Tape::Var Tape::scale(Var a, double s) {
  Var out = push(thc::scale(value(a), s), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io, s]() {
    const Tensor& g = nodes_[io].grad;
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  };
  return out;
}

Tape::Var Tape::log(Var a) {
  Var out = push(thc::log(value(a)), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io]() {
    const Tensor& g = nodes_[io].grad;
    const Tensor& av = nodes_[ia].value;
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] / av[i];
  };
  return out;
}

Tape::Var Tape::exp(Var a) {
  Var out = push(thc::exp(value(a)), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io]() {
    const Tensor& g = nodes_[io].grad;
    const Tensor& ov = nodes_[io].value;
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * ov[i];
  };
  return out;
}

Tape::Var Tape::tanh(Var a) {
  const Tensor& av = value(a);
  Tensor o(av.rows(), av.cols());
  for (int i = 0; i < av.size(); ++i) o[i] = std::tanh(av[i]);
  Var out = push(std::move(o), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io]() {
    const Tensor& g = nodes_[io].grad;
    const Tensor& ov = nodes_[io].value;
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - ov[i] * ov[i]);
  };
  return out;
}

Tape::Var Tape::softmax_rows(Var a) {
  Var out = push(thc::softmax_rows(value(a)), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io]() {
    const Tensor& g = nodes_[io].grad;
    const Tensor& y = nodes_[io].value;
    Tensor& ga = grad_of(ia);
    for (int r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
      for (int c = 0; c < y.cols(); ++c)
        ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
    }
  };
  return out;
}

Tape::Var Tape::sum(Var a) {
  Var out = push(Tensor::scalar(thc::sum(value(a))), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io]() {
    double g = nodes_[io].grad[0];
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < ga.size(); ++i) ga[i] += g;
  };
  return out;
}

Tape::Var Tape::mean_all(Var a) {
  int n = value(a).size();
  Var out = push(Tensor::scalar(thc::sum(value(a)) / n), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io, n]() {
    double g = nodes_[io].grad[0] / n;
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < ga.size(); ++i) ga[i] += g;
  };
  return out;
}

Tape::Var Tape::reshape(Var a, int rows, int cols) {
  const Tensor& av = value(a);
  if (rows * cols != av.size())
    throw DimensionError("reshape: cannot view " + av.shape_str() + " as [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "]");
  Tensor o(rows, cols, std::vector<double>(av.data(), av.data() + av.size()));
  Var out = push(std::move(o), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io]() {
    const Tensor& g = nodes_[io].grad;
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return out;
}

Tape::Var Tape::mean_of(const std::vector<Var>& vars) {
  if (vars.empty()) throw ContractError("mean_of: empty variable list");
  const Tensor& first = value(vars[0]);
  Tensor acc(first.rows(), first.cols());
  for (Var v : vars) {
    const Tensor& t = value(v);
    if (!t.same_shape(first))
      throw DimensionError("mean_of: mixed shapes " + first.shape_str() +
                           " and " + t.shape_str());
    for (int i = 0; i < t.size(); ++i) acc[i] += t[i];
  }
  const double inv = 1.0 / vars.size();
  for (int i = 0; i < acc.size(); ++i) acc[i] *= inv;
  Var out = push(std::move(acc), {});
  std::vector<int> ids(vars.size());
  for (size_t i = 0; i < vars.size(); ++i) ids[i] = vars[i].id;
  int io = out.id;
  nodes_[io].back = [this, ids, io, inv]() {
    const Tensor& g = nodes_[io].grad;
    for (int id : ids) {
      Tensor& ga = grad_of(id);
      for (int i = 0; i < g.size(); ++i) ga[i] += inv * g[i];
    }
  };
  return out;
}

Tape::Var Tape::binary_entropy_mean(Var a, double eps) {
  const Tensor& av = value(a);
  double acc = 0.0;
  for (int i = 0; i < av.size(); ++i) {
    double p = std::clamp(av[i], eps, 1.0 - eps);
    acc += -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
  }
  int n = av.size();
  Var out = push(Tensor::scalar(acc / n), {});
  int ia = a.id, io = out.id;
  nodes_[io].back = [this, ia, io, eps, n]() {
    double g = nodes_[io].grad[0] / n;
    const Tensor& av2 = nodes_[ia].value;
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < av2.size(); ++i) {
      double p = std::clamp(av2[i], eps, 1.0 - eps);
      ga[i] += g * std::log((1.0 - p) / p);
    }
  };
  return out;
}

Tape::Var Tape::cross_entropy(Var logits, int label) {
  const Tensor& l = value(logits);
  if (l.rows() != 1)
    throw ContractError("cross_entropy: logits must be a row vector, got " +
                        l.shape_str());
  if (label < 0 || label >= l.cols())
    throw ContractError("cross_entropy: label " + std::to_string(label) +
                        " out of range for " + std::to_string(l.cols()) +
                        " classes");
  if (!l.all_finite()) throw NumericError("cross_entropy: non-finite logits");
  double mx = l[0];
  for (int i = 1; i < l.size(); ++i) mx = std::max(mx, l[i]);
  double z = 0.0;
  for (int i = 0; i < l.size(); ++i) z += std::exp(l[i] - mx);
  double lse = mx + std::log(z);
  Var out = push(Tensor::scalar(lse - l[label]), {});
  int ia = logits.id, io = out.id;
  nodes_[io].back = [this, ia, io, label]() {
    double g = nodes_[io].grad[0];
    const Tensor& l2 = nodes_[ia].value;
    Tensor p = thc::softmax_rows(l2);
    Tensor& ga = grad_of(ia);
    for (int i = 0; i < l2.size(); ++i)
      ga[i] += g * (p[i] - (i == label ? 1.0 : 0.0));
  };
  return out;
}

}  // namespace thc
