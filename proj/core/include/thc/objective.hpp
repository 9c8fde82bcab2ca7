#pragma once

#include <vector>

#include "thc/model.hpp"
#include "thc/tensor.hpp"

namespace thc {

struct LossWeights {
  double sparsity = 1.0;
  double entropy = 1.0;
  // Use the literal "S log A" form of the entropy term instead of the
  // binary-entropy "A log A" form.
  bool literal_entropy = false;
};

struct LossBreakdown {
  double ce = 0.0;
  double sparsity = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  LossWeights weights;
};

struct TotalLoss {
  Tape::Var total, ce, sparsity, entropy;
};

// Batch objective: mean cross-entropy on the averaged logits, plus the
// sparsity sum over all layer assignments and the entropy regularizer
// (mean over layers of the per-entry mean).
TotalLoss total_loss(Tape& t, const BatchVars& batch,
                     const std::vector<int>& labels, const LossWeights& w);

LossBreakdown breakdown(const Tape& t, const TotalLoss& loss,
                        const LossWeights& w);

// Value-level helpers, used by tests and reporting.
double cross_entropy_value(const Tensor& logits, int label);
double sparsity_loss_value(const Tensor& assignment);
double entropy_loss_value(const Tensor& assignment, double eps = 1e-12);

}  // namespace thc
