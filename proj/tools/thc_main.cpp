// thc: generate planted datasets, train and evaluate THC models, and
// benchmark layer runtimes. Exit codes: 0 ok, 2 usage/parse error,
// 3 runtime/numeric error.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "thc/checkpoint.hpp"
#include "thc/cluster_eval.hpp"
#include "thc/config.hpp"
#include "thc/data.hpp"
#include "thc/model.hpp"
#include "thc/objective.hpp"
#include "thc/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int worker_count() {
  const char* env = std::getenv("THC_WORKERS");
  if (!env) return 1;
  int n = std::atoi(env);
  if (n < 1) throw thc::ConfigError("THC_WORKERS must be a positive integer");
  return n;
}

struct RunManifest {
  std::string command;
  std::string config_snapshot;
  uint64_t seed = 0;
  std::map<std::string, std::string> outputs;
  std::map<std::string, double> phase_ms;

  void write(const fs::path& path) const {
    json j;
    j["version"] = 1;
    j["command"] = command;
    j["config"] = config_snapshot;
    j["seed"] = seed;
    j["workers"] = worker_count();
    j["outputs"] = outputs;
    j["phase_ms"] = phase_ms;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
  }
};

void write_metrics_csv(const fs::path& path,
                       const std::vector<thc::EpochMetrics>& history) {
  std::ofstream out(path);
  out << "epoch,ce,sparsity,entropy,total,train_auroc,val_auroc,val_acc\n";
  for (const thc::EpochMetrics& m : history) {
    out << m.epoch << "," << fmt17(m.ce) << "," << fmt17(m.sparsity) << ","
        << fmt17(m.entropy) << "," << fmt17(m.total) << ","
        << fmt17(m.train_auroc) << "," << fmt17(m.val_auroc) << ","
        << fmt17(m.val_acc) << "\n";
  }
}

struct TrainRunOutput {
  thc::EvalMetrics test;
  int best_epoch = -1;
};

TrainRunOutput run_single_training(const thc::Dataset& ds,
                                   const thc::TrainConfig& cfg,
                                   const fs::path& out_dir,
                                   RunManifest& manifest) {
  fs::create_directories(out_dir);
  auto t0 = Clock::now();
  thc::Split split = thc::split_dataset(ds, cfg.train_ratio, cfg.val_ratio,
                                        cfg.test_ratio, cfg.seed);
  thc::TrainResult result = thc::train(ds, split, cfg);
  manifest.phase_ms["train"] += ms_since(t0);

  t0 = Clock::now();
  write_metrics_csv(out_dir / "metrics.csv", result.history);
  thc::save_checkpoint(result.best_model, cfg, (out_dir / "checkpoint.txt").string());
  TrainRunOutput out;
  out.best_epoch = result.best_epoch;
  out.test = thc::select_and_test(result, ds, split);
  manifest.phase_ms["report"] += ms_since(t0);
  manifest.outputs["metrics"] = (out_dir / "metrics.csv").string();
  manifest.outputs["checkpoint"] = (out_dir / "checkpoint.txt").string();
  return out;
}

// ---------------------------------------------------------------------------

int cmd_generate(const std::string& spec_path, const std::string& out_dir,
                 int samples_flag, int64_t seed_flag) {
  thc::KeyValueConfig kv = thc::KeyValueConfig::parse_file(spec_path);
  thc::PlantedSpec spec = thc::planted_from_config(kv);
  int n = samples_flag > 0 ? samples_flag : thc::planted_sample_count(kv);
  if (seed_flag >= 0) spec.seed = static_cast<uint64_t>(seed_flag);

  RunManifest manifest;
  manifest.command = "generate";
  manifest.config_snapshot = kv.dump();
  manifest.seed = spec.seed;

  auto t0 = Clock::now();
  thc::Dataset ds = thc::generate(spec, n);
  manifest.phase_ms["generate"] = ms_since(t0);
  t0 = Clock::now();
  thc::save_dataset(ds, out_dir);
  manifest.phase_ms["write"] = ms_since(t0);
  manifest.outputs["dataset"] = out_dir;
  manifest.write(fs::path(out_dir) / "run_manifest.json");

  std::cout << "generated " << ds.samples.size() << " samples, V=" << ds.V
            << " -> " << out_dir << "\n";
  return 0;
}

thc::TrainConfig build_train_config(const std::string& config_path,
                                    int64_t seed_flag,
                                    const std::string& schedule_flag,
                                    const std::string& ablation_flag,
                                    int epochs_flag) {
  thc::KeyValueConfig kv;
  if (!config_path.empty()) kv = thc::KeyValueConfig::parse_file(config_path);
  if (seed_flag >= 0) kv.set("train.seed", std::to_string(seed_flag));
  if (!schedule_flag.empty()) kv.set("model.schedule", schedule_flag);
  if (!ablation_flag.empty()) kv.set("model.ablation", ablation_flag);
  if (epochs_flag >= 0) kv.set("train.epochs", std::to_string(epochs_flag));
  return thc::TrainConfig::from_config(kv);
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, int64_t seed_flag,
              const std::string& schedule_flag, const std::string& ablation_flag,
              int epochs_flag, int folds, bool print_config) {
  thc::TrainConfig cfg = build_train_config(config_path, seed_flag,
                                            schedule_flag, ablation_flag,
                                            epochs_flag);
  if (print_config) {
    std::cout << cfg.to_config().dump();
    return 0;
  }

  thc::Dataset ds = thc::load_dataset(data_dir);
  fs::create_directories(out_dir);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config_snapshot = cfg.to_config().dump();
  manifest.seed = cfg.seed;
  manifest.write(fs::path(out_dir) / "run_manifest.json");

  if (folds <= 1) {
    TrainRunOutput out = run_single_training(ds, cfg, out_dir, manifest);
    manifest.write(fs::path(out_dir) / "run_manifest.json");
    std::cout << "best_epoch=" << out.best_epoch
              << " test_auroc=" << out.test.auroc
              << " test_acc=" << out.test.acc << "\n";
    return 0;
  }

  std::vector<double> aurocs, accs;
  std::ofstream summary(fs::path(out_dir) / "folds_summary.csv");
  summary << "fold,seed,test_auroc,test_acc\n";
  for (int f = 0; f < folds; ++f) {
    thc::TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + static_cast<uint64_t>(f);
    TrainRunOutput out = run_single_training(
        ds, fold_cfg, fs::path(out_dir) / ("fold" + std::to_string(f)), manifest);
    summary << f << "," << fold_cfg.seed << "," << fmt17(out.test.auroc) << ","
            << fmt17(out.test.acc) << "\n";
    aurocs.push_back(out.test.auroc);
    accs.push_back(out.test.acc);
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair<double, double>(m, std::sqrt(s / v.size()));
  };
  auto [am, as] = mean_std(aurocs);
  auto [cm, cs] = mean_std(accs);
  summary << "mean," << cfg.seed << "," << fmt17(am) << "," << fmt17(cm) << "\n";
  summary << "std," << cfg.seed << "," << fmt17(as) << "," << fmt17(cs) << "\n";
  manifest.outputs["folds_summary"] = (fs::path(out_dir) / "folds_summary.csv").string();
  manifest.write(fs::path(out_dir) / "run_manifest.json");
  std::cout << folds << "-fold test_auroc=" << am << "±" << as
            << " test_acc=" << cm << "±" << cs << "\n";
  return 0;
}

void write_report_row(std::ofstream& out, const std::string& method,
                      const std::string& level, const thc::ClusterScores& s) {
  out << method << "," << level << "," << fmt17(s.purity) << "," << fmt17(s.nmi)
      << "," << fmt17(s.nmi_literal) << "," << fmt17(s.homogeneity) << ","
      << fmt17(s.homogeneity_std) << "\n";
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& out_dir) {
  thc::LoadedCheckpoint ck = thc::load_checkpoint(ckpt_path);
  thc::Dataset ds = thc::load_dataset(data_dir);
  if (ds.V != ck.input_size)
    throw thc::ContractError("evaluate: dataset has V=" + std::to_string(ds.V) +
                             " but checkpoint expects V=" +
                             std::to_string(ck.input_size));
  fs::create_directories(out_dir);

  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.config_snapshot = ck.config.to_config().dump();
  manifest.seed = ck.config.seed;

  auto t0 = Clock::now();
  thc::Split split =
      thc::split_dataset(ds, ck.config.train_ratio, ck.config.val_ratio,
                         ck.config.test_ratio, ck.config.seed);
  thc::EvalMetrics test = thc::evaluate_subset(ck.model, ds, split.test);
  manifest.phase_ms["classify"] = ms_since(t0);
  std::cout << "test_auroc=" << test.auroc << " test_acc=" << test.acc << "\n";

  if (!ds.has_truth()) {
    std::cout << "dataset carries no ground-truth communities; "
                 "cluster report skipped\n";
    manifest.write(fs::path(out_dir) / "run_manifest.json");
    return 0;
  }
  if (ck.config.ablation == thc::Ablation::no_cluster) {
    std::cout << "no_cluster model produces no assignments; "
                 "cluster report skipped\n";
    manifest.write(fs::path(out_dir) / "run_manifest.json");
    return 0;
  }

  t0 = Clock::now();
  thc::AssignmentStack stack =
      thc::finalize_assignment(ck.model, ds, split.train);
  thc::HierarchyReport rep =
      thc::hierarchy_report(stack.soft, ds.fine_labels, ds.coarse_labels);

  // classical baselines on the dataset-mean adjacency
  thc::Tensor mean_adj = thc::mean_adjacency(ds);
  int n_fine = 1 + *std::max_element(ds.fine_labels.begin(), ds.fine_labels.end());
  int n_coarse =
      1 + *std::max_element(ds.coarse_labels.begin(), ds.coarse_labels.end());
  thc::Partition fine_truth = thc::Partition::from_labels(ds.fine_labels);
  thc::Partition coarse_truth = thc::Partition::from_labels(ds.coarse_labels);
  thc::Partition lloyd_fine = thc::lloyd(mean_adj, n_fine, ck.config.seed);
  thc::Partition lloyd_coarse = thc::lloyd(mean_adj, n_coarse, ck.config.seed);
  thc::LouvainResult louv = thc::louvain(mean_adj, ck.config.seed);

  std::ofstream report(fs::path(out_dir) / "report.csv");
  report << "method,level,purity,nmi,nmi_literal,homogeneity,homogeneity_std\n";
  write_report_row(report, "THC", "1", rep.level1);
  write_report_row(report, "THC", "flat", rep.flat);
  write_report_row(report, "Lloyd", "1",
                   thc::score_partition(lloyd_fine, fine_truth));
  write_report_row(report, "Lloyd", "flat",
                   thc::score_partition(lloyd_coarse, coarse_truth));
  write_report_row(report, "Louvain", "1",
                   thc::score_partition(louv.partition, fine_truth));

  std::ofstream clusters(fs::path(out_dir) / "clusters.csv");
  clusters << "level,cluster,node,truth\n";
  for (int v = 0; v < ds.V; ++v)
    clusters << "1," << rep.level1_hard.assignment[v] << "," << v << ","
             << ds.fine_labels[v] << "\n";
  for (int v = 0; v < ds.V; ++v)
    clusters << "flat," << rep.flat_hard.assignment[v] << "," << v << ","
             << ds.coarse_labels[v] << "\n";

  manifest.phase_ms["cluster_report"] = ms_since(t0);
  manifest.outputs["report"] = (fs::path(out_dir) / "report.csv").string();
  manifest.outputs["clusters"] = (fs::path(out_dir) / "clusters.csv").string();
  manifest.write(fs::path(out_dir) / "run_manifest.json");

  std::cout << "purity_level1=" << rep.level1.purity
            << " purity_flat=" << rep.flat.purity
            << " lloyd_purity=" << thc::purity(lloyd_fine, fine_truth)
            << " louvain_purity=" << thc::purity(louv.partition, fine_truth)
            << "\n";
  return 0;
}

double time_forward_backward_ms(const thc::ThcModel& model, const thc::Tensor& x,
                                int reps) {
  // one warmup, then the mean of `reps` timed passes
  std::vector<int> labels{0};
  for (int r = 0; r <= reps; ++r) {
    if (r == 1) {
      auto t0 = Clock::now();
      for (int q = 1; q <= reps; ++q) {
        thc::Tape tape;
        thc::ModelVars vars = thc::bind(tape, model);
        thc::BatchVars bv = thc::forward_batch(tape, {&x}, model, vars,
                                               thc::Mode::eval, nullptr);
        thc::TotalLoss loss = thc::total_loss(tape, bv, labels, {});
        tape.backward(loss.total);
      }
      return ms_since(t0) / reps;
    }
    thc::Tape tape;
    thc::ModelVars vars = thc::bind(tape, model);
    thc::BatchVars bv =
        thc::forward_batch(tape, {&x}, model, vars, thc::Mode::eval, nullptr);
    thc::TotalLoss loss = thc::total_loss(tape, bv, labels, {});
    tape.backward(loss.total);
  }
  return 0.0;
}

thc::ThcModel single_layer_model(int nodes, int d, thc::Rng& rng) {
  thc::ModelConfig mc;
  mc.input_size = nodes;
  mc.schedule = {std::max(1, nodes / 2)};
  mc.heads = 4;
  mc.dk = d;
  mc.dv = d;
  mc.ablation = thc::Ablation::full;
  return thc::ThcModel::init(mc, rng);
}

int cmd_bench(const std::vector<int>& sizes, const std::vector<int>& schedule,
              int d, int reps, const std::string& out_csv) {
  thc::Rng rng(7);
  std::ofstream out(out_csv);
  out << "n,k,d,layer_full_ms,layer_cluster_ms,layer_ratio,"
         "model_cluster_ms,model_nocluster_ms\n";
  for (int n : sizes) {
    thc::Tensor xn(n, n);
    for (int i = 0; i < xn.size(); ++i) xn[i] = rng.normal();
    // a full-resolution transformer layer at n nodes
    thc::ThcModel layer_full = single_layer_model(n, d, rng);
    double t_full = time_forward_backward_ms(layer_full, xn, reps);
    for (int k : schedule) {
      if (k >= n) continue;
      thc::Tensor xk(k, k);
      for (int i = 0; i < xk.size(); ++i) xk[i] = rng.normal();
      // the layer after coarsening to k clusters
      thc::ThcModel layer_cluster = single_layer_model(k, d, rng);
      double t_cluster = time_forward_backward_ms(layer_cluster, xk, reps);

      // whole two-layer models, with and without clustering
      thc::ModelConfig mc;
      mc.input_size = n;
      mc.schedule = {k, std::max(1, k / 2)};
      mc.heads = 4;
      mc.dk = d;
      mc.dv = d;
      thc::Rng mrng(11);
      thc::ThcModel with_cluster = thc::ThcModel::init(mc, mrng);
      mc.ablation = thc::Ablation::no_cluster;
      thc::ThcModel without_cluster = thc::ThcModel::init(mc, mrng);
      double t_model_cluster = time_forward_backward_ms(with_cluster, xn, reps);
      double t_model_no = time_forward_backward_ms(without_cluster, xn, reps);

      out << n << "," << k << "," << d << "," << fmt17(t_full) << ","
          << fmt17(t_cluster) << "," << fmt17(t_full / t_cluster) << ","
          << fmt17(t_model_cluster) << "," << fmt17(t_model_no) << "\n";
      std::cout << "n=" << n << " k=" << k << " d=" << d
                << " layer_full=" << t_full << "ms layer_cluster=" << t_cluster
                << "ms ratio=" << t_full / t_cluster << "\n";
    }
  }
  std::cout << "wrote " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-based hierarchical clustering for weighted graphs"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a planted dataset");
  std::string gen_spec, gen_out;
  int gen_samples = -1;
  int64_t gen_seed = -1;
  gen->add_option("--spec", gen_spec, "Planted-spec config file")->required();
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--samples", gen_samples, "Sample count override");
  gen->add_option("--seed", gen_seed, "Seed override");

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  std::string tr_data, tr_config, tr_out, tr_schedule, tr_ablation;
  int64_t tr_seed = -1;
  int tr_epochs = -1, tr_folds = 1;
  bool tr_print = false;
  tr->add_option("--data", tr_data, "Dataset directory");
  tr->add_option("--config", tr_config, "Training config file");
  tr->add_option("--out", tr_out, "Output directory");
  tr->add_option("--seed", tr_seed, "Seed override");
  tr->add_option("--schedule", tr_schedule, "Cluster schedule, e.g. 20,4");
  tr->add_option("--ablation", tr_ablation,
                 "Model variant: full, no_cluster or linear_cluster");
  tr->add_option("--epochs", tr_epochs, "Epoch count override");
  tr->add_option("--folds", tr_folds, "Run k seeds and report mean±std");
  tr->add_flag("--print-config", tr_print, "Print the resolved config and exit");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--out", ev_out, "Output directory")->required();

  // bench
  auto* be = app.add_subcommand("bench", "Time layers with/without clustering");
  std::vector<int> be_sizes{360};
  std::vector<int> be_schedule{20};
  int be_d = 64, be_reps = 3;
  std::string be_out = "bench.csv";
  be->add_option("--sizes", be_sizes, "Node counts");
  be->add_option("--schedule", be_schedule, "Cluster counts");
  be->add_option("--d", be_d, "Feature dimension");
  be->add_option("--reps", be_reps, "Timed repetitions");
  be->add_option("--out", be_out, "Output CSV path");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate(gen_spec, gen_out, gen_samples, gen_seed);
    if (tr->parsed()) {
      if (!tr_print && (tr_data.empty() || tr_out.empty()))
        throw thc::ConfigError("train: --data and --out are required");
      return cmd_train(tr_data, tr_config, tr_out, tr_seed, tr_schedule,
                       tr_ablation, tr_epochs, tr_folds, tr_print);
    }
    if (ev->parsed()) return cmd_evaluate(ev_ckpt, ev_data, ev_out);
    if (be->parsed()) return cmd_bench(be_sizes, be_schedule, be_d, be_reps, be_out);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const thc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const thc::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
