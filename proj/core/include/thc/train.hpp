#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "thc/cluster_eval.hpp"
#include "thc/config.hpp"
#include "thc/data.hpp"
#include "thc/model.hpp"
#include "thc/objective.hpp"

namespace thc {

struct TrainConfig {
  std::vector<int> schedule{20, 4};
  int epochs = 50;
  int batch_size = 16;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  LossWeights weights;
  Ablation ablation = Ablation::full;
  // Data-driven assignment initialization (full ablation): Lloyd partitions
  // of the mean training adjacency are regressed into W_A before training.
  bool warm_start = true;
  double train_ratio = 0.7;
  double val_ratio = 0.2;
  double test_ratio = 0.1;
  int heads = 4;
  int dk = 64;
  int dv = 64;
  int readout_hidden = 32;

  void validate() const;
  ModelConfig model_config(int input_size) const;
  static TrainConfig from_config(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
};

struct Split {
  std::vector<int> train, val, test;
};

// Stratified deterministic split; sizes follow the ratios by largest
// remainder, class proportions tracked per split.
Split split_dataset(const Dataset& ds, double train_ratio, double val_ratio,
                    double test_ratio, uint64_t seed);

// First-order adaptive-moment optimizer over an ordered parameter list.
class Adam {
 public:
  Adam(const std::vector<Tensor*>& params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);
  // per-parameter learning-rate multipliers (parameter-group style)
  void set_lr_scales(std::vector<double> scales);

 private:
  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<Tensor> m_, v_;
  std::vector<double> scales_;
};

std::vector<Tensor*> parameter_ptrs(ThcModel& model);

struct EpochMetrics {
  int epoch = 0;
  double ce = 0, sparsity = 0, entropy = 0, total = 0;
  double train_auroc = 0, val_auroc = 0, val_acc = 0;
};

struct TrainResult {
  ThcModel model;       // parameters after the last epoch
  ThcModel best_model;  // snapshot at the best-validation-AUROC epoch
  int best_epoch = -1;
  double best_val_auroc = -1.0;
  std::vector<EpochMetrics> history;
};

// Initialize each layer's W_A so the assignment logits start at a Lloyd
// partition of the mean adjacency over the given samples (ridge regression
// from the attention logits onto a centered one-hot target). Uses no
// ground-truth labels; deterministic in the seed.
void warm_start_assignments(ThcModel& model, const Dataset& ds,
                            const std::vector<int>& idx, uint64_t seed);

TrainResult train(const Dataset& ds, const Split& split, const TrainConfig& cfg);

struct EvalMetrics {
  double auroc = 0;
  double acc = 0;
  std::vector<double> scores;
  std::vector<int> preds;
  std::vector<int> labels;
};
// Deterministic per-sample eval-mode scoring of a subset.
EvalMetrics evaluate_subset(const ThcModel& model, const Dataset& ds,
                            const std::vector<int>& idx);

// Test metrics of the best-validation snapshot.
EvalMetrics select_and_test(const TrainResult& result, const Dataset& ds,
                            const Split& split);

struct AssignmentStack {
  std::vector<Tensor> logits;  // per-layer averaged pre-softmax logits
  std::vector<Tensor> soft;    // softmaxed shared assignments A^i
  std::vector<Partition> hard;
  Tensor flat;  // product of the soft assignments
  Partition flat_hard;
};
// Global assignment: eval-mode pass over the given samples, per-layer
// logit averaging, one softmax, then row-argmax hardening.
AssignmentStack finalize_assignment(const ThcModel& model, const Dataset& ds,
                                    const std::vector<int>& idx);

}  // namespace thc
