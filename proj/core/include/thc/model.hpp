#pragma once

#include <string>
#include <utility>
#include <vector>

#include "thc/rng.hpp"
#include "thc/tensor.hpp"

namespace thc {

enum class Ablation { full, no_cluster, linear_cluster };
enum class Mode { train, eval };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct ModelConfig {
  int input_size = 0;         // V, node count of the input graphs
  std::vector<int> schedule;  // cluster count per layer, strictly decreasing
  int heads = 4;
  int dk = 64;
  int dv = 64;
  int readout_hidden = 32;
  int classes = 2;
  Ablation ablation = Ablation::full;

  void validate() const;  // throws ConfigError
  int num_layers() const { return static_cast<int>(schedule.size()); }
  // C_i: node/cluster count entering layer i (0-based)
  int layer_input_size(int layer) const;
  // cluster count after layer i; equals input_size under no_cluster
  int layer_output_size(int layer) const;
};

// Two-layer perceptron with tanh hidden, applied row-wise.
struct MlpParams {
  Tensor w1, b1, w2, b2;
};

struct HeadParams {
  Tensor wq, wk;
};

struct LayerParams {
  std::vector<HeadParams> heads;
  Tensor wv;             // one value projection per layer, shared across heads
  Tensor wa;             // assignment projection (full ablation only)
  Tensor assign_logits;  // free assignment logits (linear_cluster only)
  MlpParams encoder;     // dv -> hidden -> layer_output_size
};

struct ThcModel {
  ModelConfig cfg;
  std::vector<LayerParams> layers;
  std::vector<MlpParams> readouts;  // flattened embedding -> class logits

  static ThcModel init(const ModelConfig& cfg, Rng& rng);
  // flat name->tensor view; traversal order is the serialization and
  // optimizer-state order
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
};

struct MlpVars {
  Tape::Var w1, b1, w2, b2;
};
struct LayerVars {
  std::vector<std::pair<Tape::Var, Tape::Var>> heads;  // (wq, wk)
  Tape::Var wv, wa, assign_logits;
  MlpVars encoder;
};
// Model parameters registered as tape leaves; `flat` parallels
// ThcModel::parameters().
struct ModelVars {
  std::vector<LayerVars> layers;
  std::vector<MlpVars> readouts;
  std::vector<Tape::Var> flat;
};
ModelVars bind(Tape& tape, const ThcModel& model);

struct BatchVars {
  std::vector<Tape::Var> assignments;    // A^i, batch-shared
  std::vector<Tape::Var> assign_logits;  // batch-mean pre-softmax logits
  std::vector<std::vector<Tape::Var>> layer_logits;  // [sample][layer]
  std::vector<Tape::Var> final_logits;               // [sample], mean over layers
};

struct ForwardTrace {
  std::vector<Tensor> assignments;
  std::vector<Tensor> assign_logits;
  // [sample][layer][head]: the noised S' actually consumed by Eq. (2)/(3)
  std::vector<std::vector<std::vector<Tensor>>> stoch_logits;
  std::vector<std::vector<Tensor>> embeddings;    // [sample][layer]: X^{i+1}
  std::vector<std::vector<Tensor>> layer_logits;  // [sample][layer]
  std::vector<Tensor> final_logits;               // [sample]
};

// Eq.-level building blocks, exposed for tests.
Tape::Var attention_logits(Tape& t, Tape::Var x, Tape::Var wq, Tape::Var wk,
                           int dk);
Tensor logistic_noise_like(const Tensor& s, Rng& rng);
Tape::Var add_stochastic_noise(Tape& t, Tape::Var s, Mode mode, Rng* rng);
Tape::Var propagate(Tape& t, Tape::Var x, const std::vector<Tape::Var>& s_heads,
                    Tape::Var wv);
Tape::Var mlp_apply(Tape& t, Tape::Var x, const MlpVars& mlp);
Tape::Var coarsen(Tape& t, Tape::Var x_prime, Tape::Var a,
                  const MlpVars& encoder);

// Full batch forward; one shared A^i per layer. rng required in train mode.
BatchVars forward_batch(Tape& t, const std::vector<const Tensor*>& batch,
                        const ThcModel& model, const ModelVars& vars, Mode mode,
                        Rng* rng, ForwardTrace* trace = nullptr);

ForwardTrace forward(const Tensor& x, const ThcModel& model, Mode mode,
                     Rng* rng = nullptr);
ForwardTrace forward_batch_trace(const std::vector<const Tensor*>& batch,
                                 const ThcModel& model, Mode mode,
                                 Rng* rng = nullptr);

}  // namespace thc
