#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "thc/model.hpp"
#include "thc/objective.hpp"

using namespace thc;
using namespace thc::testing;

namespace {

// leaf-built BatchVars with one sample, explicit logits and assignments
BatchVars synthetic_batch(Tape& t, const Tensor& logits,
                          const std::vector<Tensor>& assignments) {
  BatchVars b;
  Tape::Var y = t.leaf(logits);
  b.final_logits.push_back(y);
  b.layer_logits.push_back({y});
  for (const Tensor& a : assignments) {
    b.assign_logits.push_back(t.leaf(log(a)));
    b.assignments.push_back(t.leaf(a));
  }
  return b;
}

}  // namespace

TEST_CASE("cross entropy hand cases") {
  CHECK(cross_entropy_value(Tensor(1, 2, {0, 0}), 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy_value(Tensor(1, 2, {10, -10}), 0) <= 1e-8);
  CHECK_THROWS_AS(cross_entropy_value(Tensor(1, 2, {0, 0}), 2), ContractError);
}

TEST_CASE("cross entropy tape value and gradient match finite differences") {
  Rng rng(1);
  Tensor logits = random_tensor(1, 4, rng);
  const int label = 2;
  Tape tape;
  auto v = tape.leaf(logits);
  auto ce = tape.cross_entropy(v, label);
  CHECK(tape.value(ce).scalar_value() ==
        doctest::Approx(cross_entropy_value(logits, label)).epsilon(1e-12));
  tape.backward(ce);
  auto f = [&]() { return cross_entropy_value(logits, label); };
  auto fd = finite_diff({&logits}, f);
  CHECK(max_rel_err(tape.grad(v), fd[0]) < 1e-5);
}

TEST_CASE("sparsity loss of row-stochastic matrices") {
  Rng rng(2);
  Tensor a = softmax_rows(random_tensor(7, 3, rng));
  CHECK(sparsity_loss_value(a) == doctest::Approx(7.0).epsilon(1e-12));

  // two-layer stack 3x2 and 2x1
  Tensor a1 = softmax_rows(random_tensor(3, 2, rng));
  Tensor a2 = softmax_rows(random_tensor(2, 1, rng));
  CHECK(sparsity_loss_value(a1) + sparsity_loss_value(a2) ==
        doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("sparsity gradient is the all-ones matrix") {
  Rng rng(3);
  Tensor a = random_tensor(4, 3, rng);
  Tape tape;
  auto v = tape.leaf(a);
  tape.backward(tape.sum(v));
  for (int i = 0; i < a.size(); ++i) CHECK(tape.grad(v)[i] == 1.0);
}

TEST_CASE("entropy loss values at the extremes") {
  Tensor half(3, 2, 0.5);
  CHECK(entropy_loss_value(half) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tensor hard(2, 2, {0.999999, 1e-6, 1e-6, 0.999999});
  CHECK(entropy_loss_value(hard) < 2e-5);
  // clamp keeps exact 0/1 finite
  Tensor onehot(1, 2, {1.0, 0.0});
  CHECK(std::isfinite(entropy_loss_value(onehot)));
  CHECK(entropy_loss_value(onehot) < 1e-10);
}

TEST_CASE("entropy tape value and gradient match a direct evaluation") {
  Rng rng(4);
  Tensor a = softmax_rows(random_tensor(4, 3, rng));
  Tape tape;
  auto v = tape.leaf(a);
  auto ent = tape.binary_entropy_mean(v);
  CHECK(tape.value(ent).scalar_value() ==
        doctest::Approx(entropy_loss_value(a)).epsilon(1e-12));
  tape.backward(ent);
  // analytic gradient: d/dp of the mean is log((1-p)/p) / size
  for (int i = 0; i < a.size(); ++i) {
    double expect = std::log((1.0 - a[i]) / a[i]) / a.size();
    CHECK(tape.grad(v)[i] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("entropy is maximal at one-half and decreases toward hard values") {
  double prev = -1.0;
  std::vector<double> ps{0.01, 0.1, 0.25, 0.5};
  for (double p : ps) {
    double v = entropy_loss_value(Tensor(2, 2, p));
    CHECK(v > prev);
    prev = v;
  }
  prev = entropy_loss_value(Tensor(2, 2, 0.5));
  for (double p : {0.75, 0.9, 0.99}) {
    double v = entropy_loss_value(Tensor(2, 2, p));
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("total loss with zero weights equals cross entropy exactly") {
  Rng rng(5);
  Tape tape;
  Tensor logits = random_tensor(1, 2, rng);
  BatchVars b = synthetic_batch(tape, logits,
                                {softmax_rows(random_tensor(4, 2, rng))});
  LossWeights w;
  w.sparsity = 0.0;
  w.entropy = 0.0;
  TotalLoss loss = total_loss(tape, b, {0}, w);
  CHECK(tape.value(loss.total).scalar_value() ==
        tape.value(loss.ce).scalar_value());
}

TEST_CASE("zero-information model composes to the analytic total") {
  Tape tape;
  Tensor logits(1, 2, {0.0, 0.0});
  Tensor a1(6, 3, 1.0 / 3), a2(3, 2, 0.5);
  BatchVars b = synthetic_batch(tape, logits, {a1, a2});
  LossWeights w;
  TotalLoss loss = total_loss(tape, b, {1}, w);
  LossBreakdown bd = breakdown(tape, loss, w);
  CHECK(bd.ce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bd.sparsity == doctest::Approx(6.0 + 3.0).epsilon(1e-12));
  // layer entropies: binary entropy of 1/3 and of 1/2, averaged
  double h3 = -(1.0 / 3 * std::log(1.0 / 3) + 2.0 / 3 * std::log(2.0 / 3));
  double expect_ent = 0.5 * (h3 + std::log(2.0));
  CHECK(bd.entropy == doctest::Approx(expect_ent).epsilon(1e-10));
  CHECK(bd.total ==
        doctest::Approx(bd.ce + bd.sparsity + bd.entropy).epsilon(1e-12));
}

TEST_CASE("total equals the composed parts bit-exactly") {
  Rng rng(6);
  ModelConfig cfg;
  cfg.input_size = 8;
  cfg.schedule = {4, 2};
  cfg.heads = 2;
  cfg.dk = 4;
  cfg.dv = 4;
  cfg.readout_hidden = 4;
  ThcModel model = ThcModel::init(cfg, rng);
  Tensor x1 = random_tensor(8, 8, rng), x2 = random_tensor(8, 8, rng);

  LossWeights w;
  w.sparsity = 0.3;
  w.entropy = 1.7;
  Tape tape;
  ModelVars vars = bind(tape, model);
  BatchVars b = forward_batch(tape, {&x1, &x2}, model, vars, Mode::eval, nullptr);
  TotalLoss loss = total_loss(tape, b, {0, 1}, w);
  LossBreakdown bd = breakdown(tape, loss, w);
  // the composition order is pinned: (ce + ws*sps) + we*ent
  CHECK(bd.total == (bd.ce + w.sparsity * bd.sparsity) + w.entropy * bd.entropy);
  CHECK(bd.ce >= 0.0);
  CHECK(bd.sparsity >= 0.0);
  CHECK(bd.entropy >= 0.0);
}

TEST_CASE("no_cluster batches carry zero regularizers") {
  Rng rng(7);
  ModelConfig cfg;
  cfg.input_size = 6;
  cfg.schedule = {3};
  cfg.heads = 2;
  cfg.dk = 4;
  cfg.dv = 4;
  cfg.readout_hidden = 4;
  cfg.ablation = Ablation::no_cluster;
  ThcModel model = ThcModel::init(cfg, rng);
  Tensor x = random_tensor(6, 6, rng);
  Tape tape;
  ModelVars vars = bind(tape, model);
  BatchVars b = forward_batch(tape, {&x}, model, vars, Mode::eval, nullptr);
  TotalLoss loss = total_loss(tape, b, {0}, {});
  LossBreakdown bd = breakdown(tape, loss, {});
  CHECK(bd.sparsity == 0.0);
  CHECK(bd.entropy == 0.0);
  CHECK(bd.total == bd.ce);
}

TEST_CASE("under row-stochastic A the sparsity gradient vanishes") {
  // L_sps composed through the softmax: rows always sum to 1, so the
  // pre-softmax gradient is ~0 and the regularizer pressure is entropy-only
  Rng rng(8);
  Tensor logits = random_tensor(5, 3, rng);
  Tape tape;
  auto v = tape.leaf(logits);
  tape.backward(tape.sum(tape.softmax_rows(v)));
  for (int i = 0; i < logits.size(); ++i)
    CHECK(std::abs(tape.grad(v)[i]) < 1e-12);
}

TEST_CASE("literal entropy form stays finite and differs from binary form") {
  Rng rng(9);
  ModelConfig cfg;
  cfg.input_size = 6;
  cfg.schedule = {3};
  cfg.heads = 2;
  cfg.dk = 4;
  cfg.dv = 4;
  cfg.readout_hidden = 4;
  ThcModel model = ThcModel::init(cfg, rng);
  Tensor x = random_tensor(6, 6, rng);

  auto run = [&](bool literal) {
    Tape tape;
    ModelVars vars = bind(tape, model);
    BatchVars b = forward_batch(tape, {&x}, model, vars, Mode::eval, nullptr);
    LossWeights w;
    w.literal_entropy = literal;
    TotalLoss loss = total_loss(tape, b, {0}, w);
    tape.backward(loss.total);
    return breakdown(tape, loss, w).entropy;
  };
  double binary = run(false), literal = run(true);
  CHECK(std::isfinite(binary));
  CHECK(std::isfinite(literal));
  CHECK(binary != literal);
}

TEST_CASE("total_loss gradients match finite differences on a k=2 toy") {
  Rng rng(10);
  ModelConfig cfg;
  cfg.input_size = 6;
  cfg.schedule = {3, 2};
  cfg.heads = 2;
  cfg.dk = 3;
  cfg.dv = 3;
  cfg.readout_hidden = 3;
  ThcModel model = ThcModel::init(cfg, rng);
  Tensor x = random_tensor(6, 6, rng);
  LossWeights w;

  Tape tape;
  ModelVars vars = bind(tape, model);
  BatchVars b = forward_batch(tape, {&x}, model, vars, Mode::eval, nullptr);
  tape.backward(total_loss(tape, b, {1}, w).total);

  auto f = [&]() {
    Tape t2;
    ModelVars v2 = bind(t2, model);
    BatchVars b2 = forward_batch(t2, {&x}, model, v2, Mode::eval, nullptr);
    return t2.value(total_loss(t2, b2, {1}, w).total).scalar_value();
  };
  auto params = model.parameters();
  for (size_t p = 0; p < params.size(); ++p) {
    auto fd = finite_diff({params[p].second}, f);
    CHECK_MESSAGE(max_rel_err(tape.grad(vars.flat[p]), fd[0]) < 1e-4,
                  params[p].first);
  }
}
