#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thc/tensor.hpp"

namespace thc {

// Hard partition of a node set; cluster ids dense in [0, n_clusters).
struct Partition {
  std::vector<int> assignment;
  int n_clusters = 0;

  static Partition from_labels(const std::vector<int>& labels);
  int size() const { return static_cast<int>(assignment.size()); }
};

struct Contingency {
  std::vector<std::vector<long long>> table;  // [cluster][truth]
  std::vector<long long> c_sizes, t_sizes;
  long long n = 0;
};
Contingency contingency(const Partition& c, const Partition& t);

struct ClusterScores {
  double purity = 0.0;
  double nmi = 0.0;          // I(C;T) / mean(H(C), H(T))
  double nmi_literal = 0.0;  // I(C;T) - E[I] under the permutation model
  double homogeneity = 0.0;  // 1 - H(C|T)/H(C)
  double homogeneity_std = 0.0;  // 1 - H(T|C)/H(T)
};

double purity(const Partition& c, const Partition& t);
double nmi(const Partition& c, const Partition& t);
double nmi_literal(const Partition& c, const Partition& t);
double homogeneity(const Partition& c, const Partition& t);
double homogeneity_std(const Partition& c, const Partition& t);
ClusterScores score_partition(const Partition& c, const Partition& t);

double entropy_of(const std::vector<long long>& sizes, long long n);
double mutual_information(const Contingency& ct);
double expected_mutual_information(const Contingency& ct);

// k-means on the rows of `points` with k-means++ seeding; empty clusters
// are repaired by reseeding the farthest point.
Partition lloyd(const Tensor& points, int k, uint64_t seed, int max_iter = 300);
double kmeans_inertia(const Tensor& points, const Partition& p);

struct LouvainResult {
  Partition partition;
  double modularity = 0.0;
  std::vector<double> phase_modularity;  // after each aggregation phase
};
// Greedy modularity optimization on a weighted graph; negative weights are
// clipped to zero.
LouvainResult louvain(const Tensor& adjacency, uint64_t seed);
double modularity(const Tensor& adjacency, const Partition& p);

// Rank-based AUROC with 0.5 credit for ties; labels are 0/1.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);
double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

Partition harden_rows(const Tensor& soft);
Tensor flatten_stack(const std::vector<Tensor>& stack);  // product of A^i

struct HierarchyReport {
  ClusterScores level1;
  ClusterScores flat;
  Partition level1_hard;
  Partition flat_hard;
};
HierarchyReport hierarchy_report(const std::vector<Tensor>& stack,
                                 const std::vector<int>& fine_truth,
                                 const std::vector<int>& coarse_truth);

}  // namespace thc
