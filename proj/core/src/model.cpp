#include "thc/model.hpp"

#include <cmath>

namespace thc {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_cluster: return "no_cluster";
    case Ablation::linear_cluster: return "linear_cluster";
  }
  return "full";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_cluster") return Ablation::no_cluster;
  if (s == "linear_cluster") return Ablation::linear_cluster;
  throw ConfigError("unknown ablation mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_size < 1) throw ConfigError("model: input_size must be >= 1");
  if (schedule.empty()) throw ConfigError("model: empty cluster schedule");
  if (heads < 1 || dk < 1 || dv < 1)
    throw ConfigError("model: heads, dk and dv must all be >= 1");
  int prev = input_size;
  for (int c : schedule) {
    if (c < 1) throw ConfigError("model: cluster sizes must be >= 1");
    if (c >= prev)
      throw ConfigError("model: schedule must be strictly decreasing, got " +
                        std::to_string(c) + " after " + std::to_string(prev));
    prev = c;
  }
}

int ModelConfig::layer_input_size(int layer) const {
  if (ablation == Ablation::no_cluster) return input_size;
  return layer == 0 ? input_size : schedule[layer - 1];
}

int ModelConfig::layer_output_size(int layer) const {
  if (ablation == Ablation::no_cluster) return input_size;
  return schedule[layer];
}

namespace {

Tensor random_matrix(int rows, int cols, double scale, Rng& rng) {
  Tensor t(rows, cols);
  for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

MlpParams init_mlp(int in, int hidden, int out, Rng& rng) {
  MlpParams m;
  m.w1 = random_matrix(in, hidden, std::sqrt(2.0 / (in + hidden)), rng);
  m.b1 = Tensor(1, hidden);
  m.w2 = random_matrix(hidden, out, std::sqrt(2.0 / (hidden + out)), rng);
  m.b2 = Tensor(1, out);
  return m;
}

void collect_mlp(const std::string& prefix, MlpParams& m,
                 std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(prefix + ".w1", &m.w1);
  out.emplace_back(prefix + ".b1", &m.b1);
  out.emplace_back(prefix + ".w2", &m.w2);
  out.emplace_back(prefix + ".b2", &m.b2);
}

}  // namespace

ThcModel ThcModel::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ThcModel model;
  model.cfg = cfg;
  for (int i = 0; i < cfg.num_layers(); ++i) {
    const int cin = cfg.layer_input_size(i);
    const int cout = cfg.layer_output_size(i);
    LayerParams layer;
    const double ws = 1.0 / std::sqrt(static_cast<double>(cin));
    for (int m = 0; m < cfg.heads; ++m) {
      HeadParams h;
      h.wq = random_matrix(cin, cfg.dk, ws, rng);
      h.wk = random_matrix(cin, cfg.dk, ws, rng);
      layer.heads.push_back(std::move(h));
    }
    layer.wv = random_matrix(cin, cfg.dv, ws, rng);
    if (cfg.ablation == Ablation::full) {
      // small init keeps the initial assignment near-uniform so the class
      // signal shapes A before the entropy term hardens it
      layer.wa = random_matrix(cin, cout, 0.1 * ws, rng);
    } else if (cfg.ablation == Ablation::linear_cluster) {
      layer.assign_logits = Tensor(cin, cout);
    }
    layer.encoder = init_mlp(cfg.dv, 2 * cout, cout, rng);
    model.layers.push_back(std::move(layer));
  }
  for (int i = 0; i < cfg.num_layers(); ++i) {
    const int cout = cfg.layer_output_size(i);
    model.readouts.push_back(
        init_mlp(cout * cout, cfg.readout_hidden, cfg.classes, rng));
  }
  return model;
}

std::vector<std::pair<std::string, Tensor*>> ThcModel::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string lp = "layer" + std::to_string(i);
    LayerParams& l = layers[i];
    for (size_t m = 0; m < l.heads.size(); ++m) {
      out.emplace_back(lp + ".head" + std::to_string(m) + ".wq", &l.heads[m].wq);
      out.emplace_back(lp + ".head" + std::to_string(m) + ".wk", &l.heads[m].wk);
    }
    out.emplace_back(lp + ".wv", &l.wv);
    if (!l.wa.empty()) out.emplace_back(lp + ".wa", &l.wa);
    if (!l.assign_logits.empty())
      out.emplace_back(lp + ".assign_logits", &l.assign_logits);
    collect_mlp(lp + ".encoder", l.encoder, out);
  }
  for (size_t i = 0; i < readouts.size(); ++i)
    collect_mlp("readout" + std::to_string(i), readouts[i], out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ThcModel::parameters() const {
  auto mut = const_cast<ThcModel*>(this)->parameters();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [n, t] : mut) out.emplace_back(n, t);
  return out;
}

ModelVars bind(Tape& tape, const ThcModel& model) {
  ModelVars vars;
  auto bind_one = [&](const Tensor& t) {
    Tape::Var v = tape.leaf(t);
    vars.flat.push_back(v);
    return v;
  };
  auto bind_mlp = [&](const MlpParams& m) {
    MlpVars mv;
    mv.w1 = bind_one(m.w1);
    mv.b1 = bind_one(m.b1);
    mv.w2 = bind_one(m.w2);
    mv.b2 = bind_one(m.b2);
    return mv;
  };
  for (const LayerParams& l : model.layers) {
    LayerVars lv;
    for (const HeadParams& h : l.heads) {
      // sequenced separately: argument evaluation order must not decide
      // the position of wq and wk inside vars.flat
      Tape::Var q = bind_one(h.wq);
      Tape::Var k = bind_one(h.wk);
      lv.heads.emplace_back(q, k);
    }
    lv.wv = bind_one(l.wv);
    if (!l.wa.empty()) lv.wa = bind_one(l.wa);
    if (!l.assign_logits.empty()) lv.assign_logits = bind_one(l.assign_logits);
    lv.encoder = bind_mlp(l.encoder);
    vars.layers.push_back(std::move(lv));
  }
  for (const MlpParams& r : model.readouts) vars.readouts.push_back(bind_mlp(r));
  return vars;
}

Tape::Var attention_logits(Tape& t, Tape::Var x, Tape::Var wq, Tape::Var wk,
                           int dk) {
  const Tensor& xv = t.value(x);
  if (xv.rows() != xv.cols())
    throw DimensionError("attention_logits: input must be square, got " +
                         xv.shape_str());
  Tape::Var q = t.matmul(x, wq);
  Tape::Var k = t.matmul(x, wk);
  return t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(double(dk)));
}

Tensor logistic_noise_like(const Tensor& s, Rng& rng) {
  Tensor n(s.rows(), s.cols());
  for (int i = 0; i < n.size(); ++i) n[i] = rng.logistic();
  return n;
}

Tape::Var add_stochastic_noise(Tape& t, Tape::Var s, Mode mode, Rng* rng) {
  if (mode == Mode::eval) return s;
  if (!rng) throw ContractError("add_stochastic_noise: train mode needs an rng");
  return t.add(s, t.leaf(logistic_noise_like(t.value(s), *rng)));
}

Tape::Var propagate(Tape& t, Tape::Var x, const std::vector<Tape::Var>& s_heads,
                    Tape::Var wv) {
  if (s_heads.empty()) throw ContractError("propagate: no attention heads");
  Tape::Var xv = t.matmul(x, wv);
  std::vector<Tape::Var> per_head;
  per_head.reserve(s_heads.size());
  for (Tape::Var s : s_heads)
    per_head.push_back(t.matmul(t.softmax_rows(s), xv));
  return t.mean_of(per_head);
}

Tape::Var mlp_apply(Tape& t, Tape::Var x, const MlpVars& mlp) {
  Tape::Var h = t.tanh(t.add(t.matmul(x, mlp.w1), mlp.b1));
  return t.add(t.matmul(h, mlp.w2), mlp.b2);
}

Tape::Var coarsen(Tape& t, Tape::Var x_prime, Tape::Var a,
                  const MlpVars& encoder) {
  return t.matmul(t.transpose(a), mlp_apply(t, x_prime, encoder));
}

BatchVars forward_batch(Tape& t, const std::vector<const Tensor*>& batch,
                        const ThcModel& model, const ModelVars& vars, Mode mode,
                        Rng* rng, ForwardTrace* trace) {
  if (batch.empty()) throw ContractError("forward_batch: empty batch");
  const ModelConfig& cfg = model.cfg;
  const int n = static_cast<int>(batch.size());
  const int k = cfg.num_layers();

  std::vector<Tape::Var> xs(n);
  for (int s = 0; s < n; ++s) {
    const Tensor& x = *batch[s];
    if (x.rows() != cfg.input_size || x.cols() != cfg.input_size)
      throw DimensionError("forward: sample is " + x.shape_str() +
                           ", model expects [" + std::to_string(cfg.input_size) +
                           "x" + std::to_string(cfg.input_size) + "]");
    if (!x.all_finite()) throw NumericError("forward: non-finite adjacency");
    xs[s] = t.leaf(x);
  }

  BatchVars out;
  out.layer_logits.assign(n, {});
  if (trace) {
    trace->stoch_logits.assign(n, {});
    trace->embeddings.assign(n, {});
    trace->layer_logits.assign(n, {});
  }

  for (int i = 0; i < k; ++i) {
    const LayerVars& lv = vars.layers[i];
    std::vector<std::vector<Tape::Var>> s_heads(n);
    std::vector<Tape::Var> xprime(n);
    for (int s = 0; s < n; ++s) {
      for (int m = 0; m < cfg.heads; ++m) {
        Tape::Var sl = attention_logits(t, xs[s], lv.heads[m].first,
                                        lv.heads[m].second, cfg.dk);
        s_heads[s].push_back(add_stochastic_noise(t, sl, mode, rng));
      }
      xprime[s] = propagate(t, xs[s], s_heads[s], lv.wv);
      if (trace) {
        std::vector<Tensor> sh;
        for (Tape::Var v : s_heads[s]) sh.push_back(t.value(v));
        trace->stoch_logits[s].push_back(std::move(sh));
      }
    }

    Tape::Var assign;  // invalid for no_cluster
    if (cfg.ablation == Ablation::full) {
      std::vector<Tape::Var> sample_logits(n);
      for (int s = 0; s < n; ++s)
        sample_logits[s] = t.matmul(t.mean_of(s_heads[s]), lv.wa);
      Tape::Var lbar = t.mean_of(sample_logits);
      assign = t.softmax_rows(lbar);
      out.assign_logits.push_back(lbar);
      out.assignments.push_back(assign);
    } else if (cfg.ablation == Ablation::linear_cluster) {
      assign = t.softmax_rows(lv.assign_logits);
      out.assign_logits.push_back(lv.assign_logits);
      out.assignments.push_back(assign);
    }

    const int cout = cfg.layer_output_size(i);
    for (int s = 0; s < n; ++s) {
      Tape::Var xn;
      if (cfg.ablation == Ablation::no_cluster)
        xn = mlp_apply(t, xprime[s], lv.encoder);
      else
        xn = coarsen(t, xprime[s], assign, lv.encoder);
      Tape::Var logits =
          mlp_apply(t, t.reshape(xn, 1, cout * cout), vars.readouts[i]);
      out.layer_logits[s].push_back(logits);
      if (trace) {
        trace->embeddings[s].push_back(t.value(xn));
        trace->layer_logits[s].push_back(t.value(logits));
      }
      xs[s] = xn;
    }
  }

  out.final_logits.reserve(n);
  for (int s = 0; s < n; ++s)
    out.final_logits.push_back(t.mean_of(out.layer_logits[s]));

  if (trace) {
    trace->assignments.clear();
    trace->assign_logits.clear();
    for (Tape::Var v : out.assignments) trace->assignments.push_back(t.value(v));
    for (Tape::Var v : out.assign_logits)
      trace->assign_logits.push_back(t.value(v));
    trace->final_logits.clear();
    for (Tape::Var v : out.final_logits)
      trace->final_logits.push_back(t.value(v));
  }
  return out;
}

ForwardTrace forward_batch_trace(const std::vector<const Tensor*>& batch,
                                 const ThcModel& model, Mode mode, Rng* rng) {
  Tape tape;
  ModelVars vars = bind(tape, model);
  ForwardTrace trace;
  forward_batch(tape, batch, model, vars, mode, rng, &trace);
  return trace;
}

ForwardTrace forward(const Tensor& x, const ThcModel& model, Mode mode,
                     Rng* rng) {
  return forward_batch_trace({&x}, model, mode, rng);
}

}  // namespace thc
