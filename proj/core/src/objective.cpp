#include "thc/objective.hpp"

#include <algorithm>
#include <cmath>

namespace thc {

namespace {

constexpr double kLogEps = 1e-12;

// Differentiable surrogate for clamping to (eps, 1-eps): affine squeeze of
// (0,1) into the safe range. Keeps tape.log off the domain boundary when a
// softmax entry underflows.
Tape::Var squeeze_unit(Tape& t, Tape::Var a) {
  const Tensor& av = t.value(a);
  Tensor eps(av.rows(), av.cols(), kLogEps);
  return t.add(t.scale(a, 1.0 - 2.0 * kLogEps), t.leaf(std::move(eps)));
}

// mean over entries of -(s*log(a) + (1-a)*log(1-a)), the literal form with
// the raw logits s in the first term
Tape::Var literal_entropy_mean(Tape& t, Tape::Var s, Tape::Var a) {
  const Tensor& av = t.value(a);
  Tape::Var ones = t.leaf(Tensor(av.rows(), av.cols(), 1.0));
  Tape::Var asafe = squeeze_unit(t, a);
  Tape::Var one_minus = t.sub(ones, asafe);
  Tape::Var term =
      t.add(t.mul(s, t.log(asafe)), t.mul(one_minus, t.log(one_minus)));
  return t.scale(t.mean_all(term), -1.0);
}

}  // namespace

TotalLoss total_loss(Tape& t, const BatchVars& batch,
                     const std::vector<int>& labels, const LossWeights& w) {
  if (labels.size() != batch.final_logits.size())
    throw ContractError("total_loss: got " + std::to_string(labels.size()) +
                        " labels for " +
                        std::to_string(batch.final_logits.size()) + " samples");
  std::vector<Tape::Var> ce_terms;
  ce_terms.reserve(labels.size());
  for (size_t s = 0; s < labels.size(); ++s)
    ce_terms.push_back(t.cross_entropy(batch.final_logits[s], labels[s]));
  TotalLoss out;
  out.ce = t.mean_of(ce_terms);

  if (batch.assignments.empty()) {
    out.sparsity = t.leaf(Tensor::scalar(0.0));
    out.entropy = t.leaf(Tensor::scalar(0.0));
  } else {
    Tape::Var sps = t.sum(batch.assignments[0]);
    for (size_t i = 1; i < batch.assignments.size(); ++i)
      sps = t.add(sps, t.sum(batch.assignments[i]));
    out.sparsity = sps;

    std::vector<Tape::Var> ent_terms;
    for (size_t i = 0; i < batch.assignments.size(); ++i) {
      if (w.literal_entropy)
        ent_terms.push_back(
            literal_entropy_mean(t, batch.assign_logits[i], batch.assignments[i]));
      else
        ent_terms.push_back(t.binary_entropy_mean(batch.assignments[i], kLogEps));
    }
    out.entropy = t.mean_of(ent_terms);
  }

  out.total = t.add(t.add(out.ce, t.scale(out.sparsity, w.sparsity)),
                    t.scale(out.entropy, w.entropy));
  return out;
}

LossBreakdown breakdown(const Tape& t, const TotalLoss& loss,
                        const LossWeights& w) {
  LossBreakdown b;
  b.ce = t.value(loss.ce).scalar_value();
  b.sparsity = t.value(loss.sparsity).scalar_value();
  b.entropy = t.value(loss.entropy).scalar_value();
  b.total = t.value(loss.total).scalar_value();
  b.weights = w;
  return b;
}

double cross_entropy_value(const Tensor& logits, int label) {
  if (logits.rows() != 1)
    throw ContractError("cross_entropy: logits must be a row vector");
  if (label < 0 || label >= logits.cols())
    throw ContractError("cross_entropy: label out of range");
  double mx = logits[0];
  for (int i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
  return mx + std::log(z) - logits[label];
}

double sparsity_loss_value(const Tensor& assignment) { return sum(assignment); }

double entropy_loss_value(const Tensor& a, double eps) {
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double p = std::clamp(a[i], eps, 1.0 - eps);
    acc += -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
  }
  return acc / a.size();
}

}  // namespace thc
