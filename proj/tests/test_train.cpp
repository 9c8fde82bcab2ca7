#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "thc/checkpoint.hpp"
#include "thc/train.hpp"

using namespace thc;
using namespace thc::testing;
namespace fs = std::filesystem;

namespace {

Dataset toy_dataset(int n_samples, double shift, double sigma, uint64_t seed) {
  PlantedSpec spec;
  spec.nodes = 12;
  spec.fine = 4;
  spec.coarse = 2;
  spec.within = 0.8;
  spec.between = 0.2;
  spec.sigma = sigma;
  spec.class_shift = shift;
  spec.seed = seed;
  return generate(spec, n_samples);
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.schedule = {4, 2};
  cfg.heads = 2;
  cfg.dk = 4;
  cfg.dv = 4;
  cfg.readout_hidden = 6;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.lr = 3e-3;
  cfg.seed = 1;
  return cfg;
}

Dataset constant_dataset(int n_samples, int v) {
  Dataset ds;
  ds.V = v;
  Rng rng(9);
  Tensor adj = random_tensor(v, v, rng);
  for (int i = 0; i < n_samples; ++i) {
    BrainGraph g;
    g.id = "c" + std::to_string(i);
    g.label = i % 2;
    g.adjacency = adj;
    ds.samples.push_back(g);
  }
  return ds;
}

}  // namespace

TEST_CASE("split of ten samples follows the 7:2:1 ratio") {
  Dataset ds = constant_dataset(10, 4);
  Split s = split_dataset(ds, 0.7, 0.2, 0.1, 0);
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 2);
  CHECK(s.test.size() == 1);
}

TEST_CASE("split is deterministic and a partition") {
  Dataset ds = toy_dataset(37, 0.1, 0.1, 5);
  Split a = split_dataset(ds, 0.7, 0.2, 0.1, 11);
  Split b = split_dataset(ds, 0.7, 0.2, 0.1, 11);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  std::vector<int> all;
  for (auto* part : {&a.train, &a.val, &a.test})
    all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  std::vector<int> expect(ds.samples.size());
  for (size_t i = 0; i < expect.size(); ++i) expect[i] = static_cast<int>(i);
  CHECK(all == expect);
}

TEST_CASE("split stratification keeps class balance within five percent") {
  Dataset ds = toy_dataset(200, 0.1, 0.1, 6);  // labels alternate, 50/50
  Split s = split_dataset(ds, 0.7, 0.2, 0.1, 3);
  for (auto* part : {&s.train, &s.val, &s.test}) {
    double pos = 0;
    for (int i : *part) pos += ds.samples[i].label;
    CHECK(std::abs(pos / part->size() - 0.5) <= 0.05);
  }
}

TEST_CASE("degenerate ratios raise a config error") {
  Dataset ds = constant_dataset(5, 4);
  CHECK_THROWS_AS(split_dataset(ds, 0.98, 0.01, 0.01, 0), ConfigError);
  CHECK_THROWS_AS(split_dataset(ds, 0.5, 0.2, 0.1, 0), ConfigError);
}

TEST_CASE("optimizer reaches the bottom of a quadratic bowl") {
  Rng rng(1);
  Tensor x = random_tensor(3, 2, rng);
  Tensor target = random_tensor(3, 2, rng);
  Adam adam({&x}, 0.05);
  double err = 0;
  for (int step = 0; step < 1000; ++step) {
    Tensor g(3, 2);
    for (int i = 0; i < x.size(); ++i) g[i] = 2.0 * (x[i] - target[i]);
    adam.step({&x}, {g});
    err = 0;
    for (int i = 0; i < x.size(); ++i)
      err += (x[i] - target[i]) * (x[i] - target[i]);
    if (err < 1e-6) break;
  }
  CHECK(err < 1e-6);
}

TEST_CASE("one optimizer step descends a convex cross-entropy toy") {
  Tensor w(1, 2, {0.3, -0.2});
  auto loss_of = [&]() {
    Tape tape;
    auto v = tape.leaf(w);
    auto l = tape.cross_entropy(v, 0);
    return tape.value(l).scalar_value();
  };
  double before = loss_of();
  Tape tape;
  auto v = tape.leaf(w);
  tape.backward(tape.cross_entropy(v, 0));
  Adam adam({&w}, 1e-2);
  adam.step({&w}, {tape.grad(v)});
  CHECK(loss_of() < before);
}

TEST_CASE("zero learning rate leaves parameters bit-exact") {
  Dataset ds = toy_dataset(20, 0.2, 0.1, 7);
  TrainConfig cfg = toy_config();
  cfg.lr = 0.0;
  cfg.epochs = 2;
  cfg.warm_start = false;  // keeps W_A at its random init
  Split split = split_dataset(ds, 0.7, 0.2, 0.1, cfg.seed);
  TrainResult result = train(ds, split, cfg);

  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  ThcModel fresh = ThcModel::init(cfg.model_config(ds.V), init_rng);
  auto got = result.model.parameters();
  auto expect = fresh.parameters();
  REQUIRE(got.size() == expect.size());
  for (size_t p = 0; p < got.size(); ++p)
    for (int i = 0; i < got[p].second->size(); ++i)
      CHECK((*got[p].second)[i] == (*expect[p].second)[i]);
}

TEST_CASE("zero epochs keep the initial model and an empty history") {
  Dataset ds = toy_dataset(20, 0.2, 0.1, 8);
  TrainConfig cfg = toy_config();
  cfg.epochs = 0;
  Split split = split_dataset(ds, 0.7, 0.2, 0.1, cfg.seed);
  TrainResult result = train(ds, split, cfg);
  CHECK(result.history.empty());
  CHECK(result.best_epoch == -1);
  CHECK_NOTHROW(select_and_test(result, ds, split));
}

TEST_CASE("best epoch is the earliest argmax of validation AUROC") {
  Dataset ds = toy_dataset(40, 0.3, 0.15, 9);
  TrainConfig cfg = toy_config();
  cfg.epochs = 6;
  Split split = split_dataset(ds, 0.7, 0.2, 0.1, cfg.seed);
  TrainResult result = train(ds, split, cfg);
  REQUIRE(result.history.size() == 6);
  int arg = 0;
  for (size_t e = 1; e < result.history.size(); ++e)
    if (result.history[e].val_auroc > result.history[arg].val_auroc)
      arg = static_cast<int>(e);
  CHECK(result.best_epoch == arg);
  CHECK(result.best_val_auroc ==
        doctest::Approx(result.history[arg].val_auroc));
}

TEST_CASE("training separates a strongly separable toy") {
  Dataset ds = toy_dataset(60, 0.4, 0.3, 10);
  TrainConfig cfg = toy_config();
  cfg.epochs = 60;
  Split split = split_dataset(ds, 0.7, 0.2, 0.1, cfg.seed);
  TrainResult result = train(ds, split, cfg);
  EvalMetrics test = select_and_test(result, ds, split);
  CHECK(test.auroc == 1.0);
  CHECK(test.acc == 1.0);
  // training CE well below chance level by the end
  CHECK(result.history.back().ce < 0.3 * std::log(2.0));
}

TEST_CASE("training is reproducible down to checkpoint bytes") {
  Dataset ds = toy_dataset(24, 0.3, 0.1, 11);
  TrainConfig cfg = toy_config();
  cfg.epochs = 2;
  Split split = split_dataset(ds, 0.7, 0.2, 0.1, cfg.seed);
  TrainResult r1 = train(ds, split, cfg);
  TrainResult r2 = train(ds, split, cfg);
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t e = 0; e < r1.history.size(); ++e) {
    CHECK(r1.history[e].total == r2.history[e].total);
    CHECK(r1.history[e].val_auroc == r2.history[e].val_auroc);
  }
  fs::path p1 = fs::temp_directory_path() / "thc_test_ck1.txt";
  fs::path p2 = fs::temp_directory_path() / "thc_test_ck2.txt";
  save_checkpoint(r1.best_model, cfg, p1.string());
  save_checkpoint(r2.best_model, cfg, p2.string());
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("non-finite loss aborts with a diagnostic naming the batch") {
  Dataset ds = toy_dataset(20, 0.2, 0.1, 12);
  TrainConfig cfg = toy_config();
  cfg.epochs = 1;
  cfg.lr = 1e6;  // drives the parameters to overflow within the first epoch
  Split split = split_dataset(ds, 0.7, 0.2, 0.1, cfg.seed);
  try {
    train(ds, split, cfg);
    // extreme steps may still survive one epoch; only the thrown form matters
  } catch (const NumericError& e) {
    std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
  }
}

TEST_CASE("finalize_assignment on one sample equals its eval trace") {
  Dataset ds = toy_dataset(4, 0.2, 0.1, 13);
  TrainConfig cfg = toy_config();
  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  ThcModel model = ThcModel::init(cfg.model_config(ds.V), init_rng);

  AssignmentStack stack = finalize_assignment(model, ds, {2});
  ForwardTrace trace = forward(ds.samples[2].adjacency, model, Mode::eval);
  REQUIRE(stack.soft.size() == trace.assignments.size());
  for (size_t l = 0; l < stack.soft.size(); ++l)
    CHECK(max_abs_diff(stack.soft[l], trace.assignments[l]) < 1e-10);
}

TEST_CASE("finalize_assignment averages identical samples to the solo result") {
  Dataset ds = constant_dataset(2, 12);
  TrainConfig cfg = toy_config();
  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  ThcModel model = ThcModel::init(cfg.model_config(12), init_rng);
  AssignmentStack both = finalize_assignment(model, ds, {0, 1});
  AssignmentStack solo = finalize_assignment(model, ds, {0});
  for (size_t l = 0; l < both.soft.size(); ++l)
    CHECK(max_abs_diff(both.soft[l], solo.soft[l]) < 1e-12);
}

TEST_CASE("single-layer stack flattens to itself") {
  Dataset ds = toy_dataset(3, 0.2, 0.1, 14);
  TrainConfig cfg = toy_config();
  cfg.schedule = {4};
  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  ThcModel model = ThcModel::init(cfg.model_config(ds.V), init_rng);
  AssignmentStack stack = finalize_assignment(model, ds, {0, 1, 2});
  CHECK(max_abs_diff(stack.flat, stack.soft[0]) == 0.0);
}

TEST_CASE("finalize_assignment hard partitions cover every node once") {
  Dataset ds = toy_dataset(6, 0.2, 0.1, 15);
  TrainConfig cfg = toy_config();
  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  ThcModel model = ThcModel::init(cfg.model_config(ds.V), init_rng);
  AssignmentStack stack = finalize_assignment(model, ds, {0, 1, 2, 3});
  CHECK(stack.hard[0].size() == 12);
  CHECK(stack.hard[1].size() == 4);
  CHECK(stack.flat_hard.size() == 12);
  for (int v : stack.flat_hard.assignment) {
    CHECK(v >= 0);
    CHECK(v < 2);
  }
}

TEST_CASE("finalize_assignment rejects no_cluster models") {
  Dataset ds = toy_dataset(3, 0.2, 0.1, 16);
  TrainConfig cfg = toy_config();
  cfg.ablation = Ablation::no_cluster;
  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  ThcModel model = ThcModel::init(cfg.model_config(ds.V), init_rng);
  CHECK_THROWS_AS(finalize_assignment(model, ds, {0}), ContractError);
}

TEST_CASE("ablation variants train end to end") {
  Dataset ds = toy_dataset(20, 0.3, 0.1, 17);
  for (Ablation ab :
       {Ablation::full, Ablation::no_cluster, Ablation::linear_cluster}) {
    TrainConfig cfg = toy_config();
    cfg.epochs = 1;
    cfg.ablation = ab;
    Split split = split_dataset(ds, 0.7, 0.2, 0.1, cfg.seed);
    TrainResult result = train(ds, split, cfg);
    CHECK(result.history.size() == 1);
    CHECK(std::isfinite(result.history[0].total));
  }
}
