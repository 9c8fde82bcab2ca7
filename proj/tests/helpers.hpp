#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "thc/rng.hpp"
#include "thc/tensor.hpp"

namespace thc::testing {

inline Tensor random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Central finite differences of f over every entry of every tensor in xs.
inline std::vector<Tensor> finite_diff(std::vector<Tensor*> xs,
                                       const std::function<double()>& f,
                                       double eps = 1e-4) {
  std::vector<Tensor> grads;
  for (Tensor* x : xs) {
    Tensor g(x->rows(), x->cols());
    for (int i = 0; i < x->size(); ++i) {
      double saved = (*x)[i];
      (*x)[i] = saved + eps;
      double up = f();
      (*x)[i] = saved - eps;
      double down = f();
      (*x)[i] = saved;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// max over entries of |a-b| / max(1, |a|, |b|)
inline double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (int i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace thc::testing
