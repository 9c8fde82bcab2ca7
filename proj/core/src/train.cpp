#include "thc/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace thc {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (lr < 0.0) throw ConfigError("train: learning rate must be >= 0");
  double s = train_ratio + val_ratio + test_ratio;
  if (std::abs(s - 1.0) > 1e-9)
    throw ConfigError("train: split ratios sum to " + std::to_string(s) +
                      ", expected 1");
  if (train_ratio <= 0.0 || val_ratio <= 0.0 || test_ratio <= 0.0)
    throw ConfigError("train: all split ratios must be positive");
}

ModelConfig TrainConfig::model_config(int input_size) const {
  ModelConfig mc;
  mc.input_size = input_size;
  mc.schedule = schedule;
  mc.heads = heads;
  mc.dk = dk;
  mc.dv = dv;
  mc.readout_hidden = readout_hidden;
  mc.ablation = ablation;
  mc.validate();
  return mc;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) {
  TrainConfig c;
  c.schedule = kv.get_int_list("model.schedule", c.schedule);
  c.heads = kv.get_int("model.heads", c.heads);
  c.dk = kv.get_int("model.dk", c.dk);
  c.dv = kv.get_int("model.dv", c.dv);
  c.readout_hidden = kv.get_int("model.readout_hidden", c.readout_hidden);
  c.ablation = ablation_from_string(kv.get_string("model.ablation", "full"));
  c.epochs = kv.get_int("train.epochs", c.epochs);
  c.batch_size = kv.get_int("train.batch_size", c.batch_size);
  c.lr = kv.get_double("train.lr", c.lr);
  c.beta1 = kv.get_double("train.beta1", c.beta1);
  c.beta2 = kv.get_double("train.beta2", c.beta2);
  c.adam_eps = kv.get_double("train.adam_eps", c.adam_eps);
  c.seed = kv.get_u64("train.seed", c.seed);
  c.weights.sparsity = kv.get_double("train.lambda_sparsity", c.weights.sparsity);
  c.weights.entropy = kv.get_double("train.lambda_entropy", c.weights.entropy);
  c.weights.literal_entropy =
      kv.get_bool("train.literal_entropy", c.weights.literal_entropy);
  c.warm_start = kv.get_bool("train.warm_start", c.warm_start);
  std::vector<double> ratios = kv.get_double_list(
      "train.ratios", {c.train_ratio, c.val_ratio, c.test_ratio});
  if (ratios.size() != 3)
    throw ConfigError("train.ratios must hold three values");
  c.train_ratio = ratios[0];
  c.val_ratio = ratios[1];
  c.test_ratio = ratios[2];
  c.validate();
  return c;
}

namespace {
std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("model.schedule", join_ints(schedule));
  kv.set("model.heads", std::to_string(heads));
  kv.set("model.dk", std::to_string(dk));
  kv.set("model.dv", std::to_string(dv));
  kv.set("model.readout_hidden", std::to_string(readout_hidden));
  kv.set("model.ablation", to_string(ablation));
  kv.set("train.epochs", std::to_string(epochs));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.lr", fmt_g(lr));
  kv.set("train.beta1", fmt_g(beta1));
  kv.set("train.beta2", fmt_g(beta2));
  kv.set("train.adam_eps", fmt_g(adam_eps));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.lambda_sparsity", fmt_g(weights.sparsity));
  kv.set("train.lambda_entropy", fmt_g(weights.entropy));
  kv.set("train.literal_entropy", weights.literal_entropy ? "1" : "0");
  kv.set("train.warm_start", warm_start ? "1" : "0");
  kv.set("train.ratios",
         fmt_g(train_ratio) + "," + fmt_g(val_ratio) + "," + fmt_g(test_ratio));
  return kv;
}

// ---------------------------------------------------------------------------
// Splits

Split split_dataset(const Dataset& ds, double train_ratio, double val_ratio,
                    double test_ratio, uint64_t seed) {
  const int n = static_cast<int>(ds.samples.size());
  if (n == 0) throw ConfigError("split: empty dataset");
  double sum_r = train_ratio + val_ratio + test_ratio;
  if (std::abs(sum_r - 1.0) > 1e-9)
    throw ConfigError("split: ratios must sum to 1");

  // exact split sizes by largest remainder
  const double ratios[3] = {train_ratio, val_ratio, test_ratio};
  int target[3];
  double frac[3];
  int assigned = 0;
  for (int s = 0; s < 3; ++s) {
    double ideal = ratios[s] * n;
    target[s] = static_cast<int>(ideal);
    frac[s] = ideal - target[s];
    assigned += target[s];
  }
  while (assigned < n) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (frac[s] > frac[best]) best = s;
    target[best]++;
    frac[best] = -1.0;
    assigned++;
  }
  for (int s = 0; s < 3; ++s)
    if (target[s] < 1)
      throw ConfigError("split: ratio " + std::to_string(ratios[s]) +
                        " yields an empty split for " + std::to_string(n) +
                        " samples");

  // group indices by class, shuffle within each class
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < n; ++i) by_class[ds.samples[i].label].push_back(i);
  Rng rng(seed);
  for (auto& [label, idx] : by_class) rng.shuffle(idx);

  // per-class split quotas by largest remainder on the class size
  std::vector<std::array<int, 3>> quota;
  std::vector<const std::vector<int>*> class_idx;
  for (auto& [label, idx] : by_class) {
    int cn = static_cast<int>(idx.size());
    std::array<int, 3> q{};
    double qfrac[3];
    int got = 0;
    for (int s = 0; s < 3; ++s) {
      double ideal = ratios[s] * cn;
      q[s] = static_cast<int>(ideal);
      qfrac[s] = ideal - q[s];
      got += q[s];
    }
    while (got < cn) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (qfrac[s] > qfrac[best]) best = s;
      q[best]++;
      qfrac[best] = -1.0;
      got++;
    }
    quota.push_back(q);
    class_idx.push_back(&idx);
  }

  // repair column sums so the global targets are met exactly: move single
  // units out of overfull splits, taking from the class that overshoots its
  // proportional share the most
  int colsum[3] = {0, 0, 0};
  for (auto& q : quota)
    for (int s = 0; s < 3; ++s) colsum[s] += q[s];
  for (int s = 0; s < 3; ++s) {
    while (colsum[s] > target[s]) {
      int dst = 0;
      while (colsum[dst] >= target[dst]) dst++;
      int best_c = -1;
      double best_over = -1e300;
      for (size_t c = 0; c < quota.size(); ++c) {
        if (quota[c][s] == 0) continue;
        double over = quota[c][s] - ratios[s] * class_idx[c]->size();
        if (over > best_over) {
          best_over = over;
          best_c = static_cast<int>(c);
        }
      }
      quota[best_c][s]--;
      quota[best_c][dst]++;
      colsum[s]--;
      colsum[dst]++;
    }
  }

  Split split;
  std::vector<int>* out[3] = {&split.train, &split.val, &split.test};
  for (size_t c = 0; c < quota.size(); ++c) {
    size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (int k = 0; k < quota[c][s]; ++k)
        out[s]->push_back((*class_idx[c])[pos++]);
  }
  for (int s = 0; s < 3; ++s) std::sort(out[s]->begin(), out[s]->end());
  return split;
}

// ---------------------------------------------------------------------------
// Optimizer

std::vector<Tensor*> parameter_ptrs(ThcModel& model) {
  std::vector<Tensor*> out;
  for (auto& [name, p] : model.parameters()) out.push_back(p);
  return out;
}

Adam::Adam(const std::vector<Tensor*>& params, double lr, double beta1,
           double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const Tensor* p : params) {
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

void Adam::set_lr_scales(std::vector<double> scales) {
  if (!scales.empty() && scales.size() != m_.size())
    throw ContractError("adam: lr scale list does not match parameter list");
  scales_ = std::move(scales);
}

void Adam::step(const std::vector<Tensor*>& params,
                const std::vector<Tensor>& grads) {
  if (params.size() != grads.size() || params.size() != m_.size())
    throw ContractError("adam: gradient list does not match parameter list");
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    const double lr = lr_ * (scales_.empty() ? 1.0 : scales_[i]);
    for (int j = 0; j < p.size(); ++j) {
      m_[i][j] = b1_ * m_[i][j] + (1.0 - b1_) * g[j];
      v_[i][j] = b2_ * v_[i][j] + (1.0 - b2_) * g[j] * g[j];
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Solve (XtX + lambda*I) W = XtY by Gaussian elimination with partial
// pivoting; the system is symmetric positive definite and tiny (n <= V).
Tensor ridge_solve(Tensor m, Tensor rhs, double lambda) {
  const int n = m.rows();
  for (int i = 0; i < n; ++i) m.at(i, i) += lambda;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m.at(r, col)) > std::abs(m.at(pivot, col))) pivot = r;
    if (m.at(pivot, col) == 0.0)
      throw NumericError("ridge_solve: singular system at column " +
                         std::to_string(col));
    if (pivot != col) {
      for (int c = 0; c < n; ++c) std::swap(m.at(col, c), m.at(pivot, c));
      for (int c = 0; c < rhs.cols(); ++c)
        std::swap(rhs.at(col, c), rhs.at(pivot, c));
    }
    for (int r = col + 1; r < n; ++r) {
      double f = m.at(r, col) / m.at(col, col);
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) m.at(r, c) -= f * m.at(col, c);
      for (int c = 0; c < rhs.cols(); ++c)
        rhs.at(r, c) -= f * rhs.at(col, c);
    }
  }
  Tensor w(n, rhs.cols());
  for (int c = 0; c < rhs.cols(); ++c) {
    for (int r = n - 1; r >= 0; --r) {
      double acc = rhs.at(r, c);
      for (int k = r + 1; k < n; ++k) acc -= m.at(r, k) * w.at(k, c);
      w.at(r, c) = acc / m.at(r, r);
    }
  }
  return w;
}

Tensor tanh_t(const Tensor& x) {
  Tensor o(x.rows(), x.cols());
  for (int i = 0; i < x.size(); ++i) o[i] = std::tanh(x[i]);
  return o;
}

Tensor mlp_value(const Tensor& x, const MlpParams& m) {
  return add(matmul(tanh_t(add(matmul(x, m.w1), m.b1)), m.w2), m.b2);
}

// One sample's eval-mode attention at one layer: head-mean logits (sbar) and
// propagated features (xprime).
void attention_pass(const Tensor& x, const LayerParams& lp, const ModelConfig& cfg,
                    Tensor& sbar, Tensor& xprime) {
  Tensor xv = matmul(x, lp.wv);
  for (int m = 0; m < cfg.heads; ++m) {
    Tensor sm = scale(
        matmul(matmul(x, lp.heads[m].wq), transpose(matmul(x, lp.heads[m].wk))),
        1.0 / std::sqrt(static_cast<double>(cfg.dk)));
    Tensor contrib = matmul(softmax_rows(sm), xv);
    if (m == 0) {
      sbar = sm;
      xprime = contrib;
    } else {
      sbar = add(sbar, sm);
      xprime = add(xprime, contrib);
    }
  }
  sbar = scale(sbar, 1.0 / cfg.heads);
  xprime = scale(xprime, 1.0 / cfg.heads);
}

}  // namespace

void warm_start_assignments(ThcModel& model, const Dataset& ds,
                            const std::vector<int>& idx, uint64_t seed) {
  if (model.cfg.ablation != Ablation::full) return;
  if (idx.empty())
    throw ContractError("warm_start_assignments: empty sample set");

  const ModelConfig& cfg = model.cfg;
  const int n = static_cast<int>(idx.size());
  std::vector<Tensor> xs;
  xs.reserve(n);
  for (int i : idx) xs.push_back(ds.samples[i].adjacency);

  Tensor conn(ds.V, ds.V);  // connectivity at the current hierarchy level
  for (const Tensor& x : xs)
    for (int j = 0; j < conn.size(); ++j) conn[j] += x[j];
  for (int j = 0; j < conn.size(); ++j) conn[j] /= static_cast<double>(n);

  // target logit gap; large enough to saturate the row softmax, so the
  // shared assignment is insensitive to per-sample attention fluctuations
  const double gamma = 8.0;
  for (int layer = 0; layer < cfg.num_layers(); ++layer) {
    const LayerParams& lp = model.layers[layer];
    const int cin = conn.rows();
    const int cout = cfg.layer_output_size(layer);
    Partition part =
        lloyd(conn, cout, seed ^ (0xd1b54a32d192ed03ull * (layer + 1)));

    Tensor target(cin, cout, -gamma / cout);
    for (int r = 0; r < cin; ++r) target.at(r, part.assignment[r]) += gamma;

    // Fit W_A by least squares over every sample's attention logits, not just
    // their mean: accumulating the per-sample Gram matrix suppresses the
    // directions that fluctuate sample to sample, so each sample's assignment
    // lands near the partition instead of amplifying its noise.
    std::vector<Tensor> xprime(n);
    Tensor sbar(cin, cin);
    Tensor gram(cin, cin);
    for (int s = 0; s < n; ++s) {
      Tensor sb;
      attention_pass(xs[s], lp, cfg, sb, xprime[s]);
      Tensor g = matmul(transpose(sb), sb);
      for (int j = 0; j < sbar.size(); ++j) sbar[j] += sb[j];
      for (int j = 0; j < gram.size(); ++j) gram[j] += g[j];
    }
    for (int j = 0; j < sbar.size(); ++j) sbar[j] /= static_cast<double>(n);
    for (int j = 0; j < gram.size(); ++j) gram[j] /= static_cast<double>(n);
    // Blend the mean Gram with the per-sample scatter: full scatter (alpha 1)
    // over-shrinks the fit until rows become ambiguous, zero keeps per-sample
    // assignments noisy. Deeper layers see much flatter logits, so they get a
    // lighter blend.
    {
      const double alpha = layer == 0 ? 0.03 : 0.003;
      Tensor mm = matmul(transpose(sbar), sbar);
      for (int j = 0; j < gram.size(); ++j)
        gram[j] = mm[j] + alpha * (gram[j] - mm[j]);
    }
    double tr_gram = 0.0;
    for (int i = 0; i < cin; ++i) tr_gram += gram.at(i, i);
    double lambda = 1e-9 * tr_gram / cin + 1e-15;
    model.layers[layer].wa =
        ridge_solve(std::move(gram), matmul(transpose(sbar), target), lambda);

    Tensor at =
        transpose(softmax_rows(matmul(sbar, model.layers[layer].wa)));
    for (int s = 0; s < n; ++s)
      xs[s] = matmul(at, mlp_value(xprime[s], lp.encoder));

    // coarsen the connectivity for the next level: cluster-mean pooling of
    // the hard partition, so the next Lloyd sees mid-level structure rather
    // than untrained encoder features
    Tensor pool(cin, cout);
    std::vector<int> sizes(cout, 0);
    for (int r = 0; r < cin; ++r) ++sizes[part.assignment[r]];
    for (int r = 0; r < cin; ++r)
      pool.at(r, part.assignment[r]) =
          1.0 / std::max(1, sizes[part.assignment[r]]);
    conn = matmul(transpose(pool), matmul(conn, pool));
  }
}

EvalMetrics evaluate_subset(const ThcModel& model, const Dataset& ds,
                            const std::vector<int>& idx) {
  if (idx.empty()) throw ContractError("evaluate_subset: empty index set");
  EvalMetrics m;
  for (int i : idx) {
    ForwardTrace trace = forward(ds.samples[i].adjacency, model, Mode::eval);
    const Tensor& logits = trace.final_logits[0];
    m.scores.push_back(logits[1] - logits[0]);
    m.preds.push_back(logits[1] > logits[0] ? 1 : 0);
    m.labels.push_back(ds.samples[i].label);
  }
  m.auroc = auroc(m.scores, m.labels);
  m.acc = accuracy(m.preds, m.labels);
  return m;
}

TrainResult train(const Dataset& ds, const Split& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw ConfigError("train: empty training split");

  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  Rng noise_rng = root.fork(2);
  Rng shuffle_rng = root.fork(3);

  TrainResult result;
  result.model = ThcModel::init(cfg.model_config(ds.V), init_rng);
  if (cfg.warm_start)
    warm_start_assignments(result.model, ds, split.train, cfg.seed);
  result.best_model = result.model;

  Adam adam(parameter_ptrs(result.model), cfg.lr, cfg.beta1, cfg.beta2,
            cfg.adam_eps);
  if (cfg.warm_start && cfg.ablation == Ablation::full) {
    // the warm-started assignment projections get a reduced learning rate so
    // gradient updates refine rather than overwrite the fitted partition
    // between re-anchoring passes
    auto named = result.model.parameters();
    std::vector<double> scales(named.size(), 1.0);
    for (size_t p = 0; p < named.size(); ++p)
      if (named[p].first.ends_with(".wa")) scales[p] = 0.02;
    adam.set_lr_scales(std::move(scales));
  }

  std::vector<int> train_idx = split.train;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double ce_acc = 0, sps_acc = 0, ent_acc = 0, tot_acc = 0;
    int n_batches = 0;
    for (size_t b = 0; b < train_idx.size(); b += cfg.batch_size) {
      std::vector<const Tensor*> batch;
      std::vector<int> labels;
      for (size_t j = b; j < std::min(train_idx.size(), b + cfg.batch_size); ++j) {
        batch.push_back(&ds.samples[train_idx[j]].adjacency);
        labels.push_back(ds.samples[train_idx[j]].label);
      }
      Tape tape;
      ModelVars vars = bind(tape, result.model);
      BatchVars bv = forward_batch(tape, batch, result.model, vars, Mode::train,
                                   &noise_rng);
      TotalLoss loss = total_loss(tape, bv, labels, cfg.weights);
      LossBreakdown lb = breakdown(tape, loss, cfg.weights);
      if (!std::isfinite(lb.total))
        throw NumericError(
            "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
            std::to_string(n_batches) + " (ce=" + std::to_string(lb.ce) +
            ", sparsity=" + std::to_string(lb.sparsity) +
            ", entropy=" + std::to_string(lb.entropy) + ")");
      tape.backward(loss.total);
      std::vector<Tensor> grads;
      grads.reserve(vars.flat.size());
      for (Tape::Var v : vars.flat) grads.push_back(tape.grad(v));
      adam.step(parameter_ptrs(result.model), grads);
      ce_acc += lb.ce;
      sps_acc += lb.sparsity;
      ent_acc += lb.entropy;
      tot_acc += lb.total;
      ++n_batches;
    }

    // re-anchor the assignment projections each epoch: the Lloyd targets are
    // fixed, so this just re-aligns W_A with the drifted attention logits
    // (alternating-optimization style)
    if (cfg.warm_start)
      warm_start_assignments(result.model, ds, split.train, cfg.seed);

    EpochMetrics em;
    em.epoch = epoch;
    em.ce = ce_acc / n_batches;
    em.sparsity = sps_acc / n_batches;
    em.entropy = ent_acc / n_batches;
    em.total = tot_acc / n_batches;
    EvalMetrics tr = evaluate_subset(result.model, ds, split.train);
    EvalMetrics va = evaluate_subset(result.model, ds, split.val);
    em.train_auroc = tr.auroc;
    em.val_auroc = va.auroc;
    em.val_acc = va.acc;
    result.history.push_back(em);

    // ties break toward the earlier epoch
    if (em.val_auroc > result.best_val_auroc) {
      result.best_val_auroc = em.val_auroc;
      result.best_epoch = epoch;
      result.best_model = result.model;
    }
  }
  return result;
}

EvalMetrics select_and_test(const TrainResult& result, const Dataset& ds,
                            const Split& split) {
  return evaluate_subset(result.best_model, ds, split.test);
}

// ---------------------------------------------------------------------------
// Global assignment extraction (tape-free eval-mode math)

AssignmentStack finalize_assignment(const ThcModel& model, const Dataset& ds,
                                    const std::vector<int>& idx) {
  if (idx.empty()) throw ContractError("finalize_assignment: empty sample set");
  if (model.cfg.ablation == Ablation::no_cluster)
    throw ContractError("finalize_assignment: no_cluster model has no assignments");

  const ModelConfig& cfg = model.cfg;
  const int n = static_cast<int>(idx.size());
  std::vector<Tensor> xs;
  xs.reserve(n);
  for (int i : idx) xs.push_back(ds.samples[i].adjacency);

  AssignmentStack stack;
  for (int layer = 0; layer < cfg.num_layers(); ++layer) {
    const LayerParams& lp = model.layers[layer];
    const int cout = cfg.layer_output_size(layer);

    std::vector<Tensor> xprime(n);
    Tensor logit_sum;
    for (int s = 0; s < n; ++s) {
      Tensor sbar;
      attention_pass(xs[s], lp, cfg, sbar, xprime[s]);
      if (cfg.ablation == Ablation::full) {
        Tensor l = matmul(sbar, lp.wa);
        logit_sum = (s == 0) ? l : add(logit_sum, l);
      }
    }

    Tensor layer_logits = cfg.ablation == Ablation::full
                              ? scale(logit_sum, 1.0 / n)
                              : lp.assign_logits;
    Tensor a = softmax_rows(layer_logits);
    stack.logits.push_back(layer_logits);
    stack.soft.push_back(a);
    stack.hard.push_back(harden_rows(a));

    Tensor at = transpose(a);
    for (int s = 0; s < n; ++s) {
      xs[s] = matmul(at, mlp_value(xprime[s], lp.encoder));
      if (xs[s].rows() != cout || xs[s].cols() != cout)
        throw DimensionError("finalize: unexpected embedding shape " +
                             xs[s].shape_str());
    }
  }
  stack.flat = flatten_stack(stack.soft);
  stack.flat_hard = harden_rows(stack.flat);
  return stack;
}

}  // namespace thc
