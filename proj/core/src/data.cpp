#include "thc/data.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "thc/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace thc {

void PlantedSpec::validate() const {
  if (nodes < 1) throw ConfigError("planted spec: nodes must be >= 1");
  if (fine < 1 || fine > nodes)
    throw ConfigError("planted spec: fine block count out of range");
  if (coarse < 1 || coarse > fine)
    throw ConfigError("planted spec: coarse block count out of range");
  if (sigma < 0.0) throw ConfigError("planted spec: sigma must be >= 0");
  if (!(within > between))
    throw ConfigError("planted spec: within mean must exceed between mean");
  if (class_pattern != "alternating" && class_pattern != "first")
    throw ConfigError("planted spec: unknown class_pattern '" + class_pattern +
                      "'");
}

int PlantedSpec::fine_block(int node) const {
  return static_cast<int>(static_cast<long long>(node) * fine / nodes);
}

int PlantedSpec::coarse_block(int fine_id) const {
  return static_cast<int>(static_cast<long long>(fine_id) * coarse / fine);
}

double PlantedSpec::block_shift(int fine_id) const {
  if (class_pattern == "first") return fine_id == 0 ? class_shift : 0.0;
  return (fine_id % 2 == 0 ? 1.0 : -1.0) * class_shift;
}

Dataset generate(const PlantedSpec& spec, int n_samples) {
  spec.validate();
  if (n_samples < 1) throw ConfigError("generate: need at least one sample");

  Dataset ds;
  ds.V = spec.nodes;
  for (int v = 0; v < spec.nodes; ++v) {
    int f = spec.fine_block(v);
    ds.fine_labels.push_back(f);
    ds.coarse_labels.push_back(spec.coarse_block(f));
  }

  for (int s = 0; s < n_samples; ++s) {
    Rng rng(spec.seed ^ (0x9e3779b97f4a7c15ull * (static_cast<uint64_t>(s) + 1)));
    BrainGraph g;
    g.label = s % 2;  // exact 50/50 balance
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%04d", s);
    g.id = buf;
    g.adjacency = Tensor(spec.nodes, spec.nodes);
    for (int u = 0; u < spec.nodes; ++u) {
      int fu = spec.fine_block(u);
      for (int v = u; v < spec.nodes; ++v) {
        int fv = spec.fine_block(v);
        double mean;
        if (fu == fv) {
          mean = spec.within;
          if (g.label == 1) mean += spec.block_shift(fu);
        } else if (spec.coarse_block(fu) == spec.coarse_block(fv)) {
          mean = spec.mid_mean();
        } else {
          mean = spec.between;
        }
        double w = mean + (spec.sigma > 0.0 ? spec.sigma * rng.normal() : 0.0);
        g.adjacency.at(u, v) = w;
        g.adjacency.at(v, u) = w;
      }
    }
    ds.samples.push_back(std::move(g));
  }
  return ds;
}

PlantedSpec planted_from_config(const KeyValueConfig& kv) {
  PlantedSpec s;
  s.nodes = kv.get_int("data.nodes", s.nodes);
  s.fine = kv.get_int("data.fine", s.fine);
  s.coarse = kv.get_int("data.coarse", s.coarse);
  s.within = kv.get_double("data.within", s.within);
  s.between = kv.get_double("data.between", s.between);
  s.mid = kv.get_double("data.mid", s.mid);
  s.sigma = kv.get_double("data.sigma", s.sigma);
  s.class_shift = kv.get_double("data.class_shift", s.class_shift);
  s.class_pattern = kv.get_string("data.class_pattern", s.class_pattern);
  s.seed = kv.get_u64("data.seed", s.seed);
  s.validate();
  return s;
}

int planted_sample_count(const KeyValueConfig& kv, int def) {
  return kv.get_int("data.samples", def);
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_matrix(const fs::path& path, const Tensor& m) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << m.rows() << "\n";
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << fmt17(m.at(r, c));
    }
    out << "\n";
  }
}

Tensor read_matrix(const fs::path& path, int expected_v) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open matrix file");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path.string() + ":1: missing header line");
  int v = 0;
  try {
    v = std::stoi(line);
  } catch (const std::exception&) {
    throw ParseError(path.string() + ":1: header is not a node count");
  }
  if (v != expected_v)
    throw ParseError(path.string() + ":1: matrix size " + std::to_string(v) +
                     " does not match manifest V=" + std::to_string(expected_v));
  Tensor m(v, v);
  for (int r = 0; r < v; ++r) {
    if (!std::getline(in, line))
      throw ParseError(path.string() + ":" + std::to_string(r + 2) +
                       ": unexpected end of file");
    std::istringstream row(line);
    for (int c = 0; c < v; ++c) {
      if (!(row >> m.at(r, c)))
        throw ParseError(path.string() + ":" + std::to_string(r + 2) +
                         ": expected " + std::to_string(v) + " values");
    }
  }
  return m;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["V"] = ds.V;
  json samples = json::array();
  for (const BrainGraph& g : ds.samples) {
    std::string file = g.id + ".txt";
    write_matrix(fs::path(dir) / file, g.adjacency);
    samples.push_back({{"id", g.id}, {"label", g.label}, {"file", file}});
  }
  manifest["samples"] = std::move(samples);
  if (!ds.fine_labels.empty()) {
    manifest["fine_labels"] = ds.fine_labels;
    manifest["coarse_labels"] = ds.coarse_labels;
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw ParseError(mpath.string() + ": cannot open manifest");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(mpath.string() + ": " + e.what());
  }

  Dataset ds;
  try {
    ds.V = manifest.at("V").get<int>();
    if (manifest.contains("fine_labels")) {
      ds.fine_labels = manifest["fine_labels"].get<std::vector<int>>();
      ds.coarse_labels = manifest["coarse_labels"].get<std::vector<int>>();
      if (static_cast<int>(ds.fine_labels.size()) != ds.V ||
          static_cast<int>(ds.coarse_labels.size()) != ds.V)
        throw ParseError(mpath.string() +
                         ": ground-truth label count does not match V");
    }
    for (const json& s : manifest.at("samples")) {
      BrainGraph g;
      g.id = s.at("id").get<std::string>();
      g.label = s.at("label").get<int>();
      fs::path file = fs::path(dir) / s.at("file").get<std::string>();
      if (!fs::exists(file))
        throw ParseError(mpath.string() + ": missing matrix file " +
                         file.string());
      g.adjacency = read_matrix(file, ds.V);
      ds.samples.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw ParseError(mpath.string() + ": " + e.what());
  }
  return ds;
}

Tensor mean_adjacency(const Dataset& ds) {
  if (ds.samples.empty()) throw ContractError("mean_adjacency: empty dataset");
  Tensor m(ds.V, ds.V);
  for (const BrainGraph& g : ds.samples)
    for (int i = 0; i < m.size(); ++i) m[i] += g.adjacency[i];
  for (int i = 0; i < m.size(); ++i) m[i] /= ds.samples.size();
  return m;
}

}  // namespace thc
