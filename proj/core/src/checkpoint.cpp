#include "thc/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace thc {

namespace {

constexpr const char* kMagic = "thc-checkpoint 1";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const ThcModel& model, const TrainConfig& config,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write checkpoint " + path);
  out << kMagic << "\n";
  out << "input_size " << model.cfg.input_size << "\n";
  out << "schedule " << join_ints(config.schedule) << "\n";
  out << "heads " << config.heads << "\n";
  out << "dk " << config.dk << "\n";
  out << "dv " << config.dv << "\n";
  out << "readout_hidden " << config.readout_hidden << "\n";
  out << "ablation " << to_string(config.ablation) << "\n";
  out << "epochs " << config.epochs << "\n";
  out << "batch_size " << config.batch_size << "\n";
  out << "lr " << fmt17(config.lr) << "\n";
  out << "beta1 " << fmt17(config.beta1) << "\n";
  out << "beta2 " << fmt17(config.beta2) << "\n";
  out << "adam_eps " << fmt17(config.adam_eps) << "\n";
  out << "seed " << config.seed << "\n";
  out << "lambda_sparsity " << fmt17(config.weights.sparsity) << "\n";
  out << "lambda_entropy " << fmt17(config.weights.entropy) << "\n";
  out << "literal_entropy " << (config.weights.literal_entropy ? 1 : 0) << "\n";
  out << "ratios " << fmt17(config.train_ratio) << "," << fmt17(config.val_ratio)
      << "," << fmt17(config.test_ratio) << "\n";
  for (const auto& [name, t] : model.parameters()) {
    out << "tensor " << name << " " << t->rows() << " " << t->cols() << "\n";
    for (int i = 0; i < t->size(); ++i) {
      if (i) out << ' ';
      out << fmt17((*t)[i]);
    }
    out << "\n";
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw ParseError(path + ":1: not a thc checkpoint");

  LoadedCheckpoint ck;
  TrainConfig& c = ck.config;
  std::map<std::string, std::vector<double>> tensors;
  std::map<std::string, std::pair<int, int>> shapes;
  std::vector<std::string> order;

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    auto fail = [&](const std::string& what) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + what);
    };
    if (key == "input_size") ss >> ck.input_size;
    else if (key == "schedule") {
      std::string v;
      ss >> v;
      c.schedule = parse_int_list(v);
    } else if (key == "heads") ss >> c.heads;
    else if (key == "dk") ss >> c.dk;
    else if (key == "dv") ss >> c.dv;
    else if (key == "readout_hidden") ss >> c.readout_hidden;
    else if (key == "ablation") {
      std::string v;
      ss >> v;
      c.ablation = ablation_from_string(v);
    } else if (key == "epochs") ss >> c.epochs;
    else if (key == "batch_size") ss >> c.batch_size;
    else if (key == "lr") ss >> c.lr;
    else if (key == "beta1") ss >> c.beta1;
    else if (key == "beta2") ss >> c.beta2;
    else if (key == "adam_eps") ss >> c.adam_eps;
    else if (key == "seed") ss >> c.seed;
    else if (key == "lambda_sparsity") ss >> c.weights.sparsity;
    else if (key == "lambda_entropy") ss >> c.weights.entropy;
    else if (key == "literal_entropy") {
      int v = 0;
      ss >> v;
      c.weights.literal_entropy = v != 0;
    } else if (key == "ratios") {
      std::string v;
      ss >> v;
      auto r = parse_double_list(v);
      if (r.size() != 3) fail("ratios must hold three values");
      c.train_ratio = r[0];
      c.val_ratio = r[1];
      c.test_ratio = r[2];
    } else if (key == "tensor") {
      std::string name;
      int rows = 0, cols = 0;
      if (!(ss >> name >> rows >> cols)) fail("malformed tensor header");
      if (!std::getline(in, line)) fail("missing tensor values");
      ++lineno;
      std::istringstream vs(line);
      std::vector<double> values(static_cast<size_t>(rows) * cols);
      for (double& v : values)
        if (!(vs >> v)) fail("tensor " + name + ": expected " +
                             std::to_string(rows * cols) + " values");
      tensors[name] = std::move(values);
      shapes[name] = {rows, cols};
      order.push_back(name);
    } else {
      fail("unknown checkpoint key '" + key + "'");
    }
    if (ss.fail()) fail("malformed value for key '" + key + "'");
  }

  if (ck.input_size < 1) throw ParseError(path + ": missing input_size");
  Rng dummy(0);
  ck.model = ThcModel::init(c.model_config(ck.input_size), dummy);
  for (auto& [name, t] : ck.model.parameters()) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ParseError(path + ": missing tensor '" + name + "'");
    auto [rows, cols] = shapes[name];
    if (rows != t->rows() || cols != t->cols())
      throw ParseError(path + ": tensor '" + name + "' is " +
                       std::to_string(rows) + "x" + std::to_string(cols) +
                       ", expected " + t->shape_str());
    *t = Tensor(rows, cols, std::move(it->second));
  }
  return ck;
}

}  // namespace thc
