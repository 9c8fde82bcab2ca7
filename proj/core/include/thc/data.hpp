#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thc/rng.hpp"
#include "thc/tensor.hpp"

namespace thc {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One sample: symmetric weighted adjacency plus a binary class label.
struct BrainGraph {
  std::string id;
  int label = 0;
  Tensor adjacency;
};

struct Dataset {
  int V = 0;
  std::vector<BrainGraph> samples;
  // optional planted ground truth, one entry per node
  std::vector<int> fine_labels;
  std::vector<int> coarse_labels;
  bool has_truth() const { return !fine_labels.empty(); }
};

// Two-level planted community structure. Nodes are split into `fine`
// contiguous blocks which nest exactly into `coarse` blocks. Edge means:
// within a fine block `within`, across fine blocks inside the same coarse
// block `mid` (default midpoint of within/between), across coarse blocks
// `between`. Class 1 shifts the within-block mean of selected fine blocks
// by class_shift, so separating the classes requires resolving the blocks.
struct PlantedSpec {
  int nodes = 60;
  int fine = 6;
  int coarse = 3;
  double within = 0.8;
  double between = 0.2;
  double mid = -1.0;  // <0 means (within+between)/2
  double sigma = 0.1;
  double class_shift = 0.15;
  // "alternating": block f shifted by class_shift * (+1 / -1 for even/odd f)
  // "first": only block 0 shifted
  std::string class_pattern = "alternating";
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  double mid_mean() const { return mid < 0.0 ? 0.5 * (within + between) : mid; }
  int fine_block(int node) const;
  int coarse_block(int fine_id) const;
  double block_shift(int fine_id) const;  // class-1 mean shift of block f
};

Dataset generate(const PlantedSpec& spec, int n_samples);

class KeyValueConfig;
// [data] section keys: nodes, fine, coarse, within, between, mid, sigma,
// class_shift, class_pattern, seed, samples
PlantedSpec planted_from_config(const KeyValueConfig& kv);
int planted_sample_count(const KeyValueConfig& kv, int def = 400);

// Dataset directory: manifest.json plus one matrix file per sample
// (header line with V, then V rows of V values at 17 significant digits).
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

Tensor mean_adjacency(const Dataset& ds);

}  // namespace thc
