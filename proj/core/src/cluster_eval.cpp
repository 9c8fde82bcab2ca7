#include "thc/cluster_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "thc/rng.hpp"

namespace thc {

Partition Partition::from_labels(const std::vector<int>& labels) {
  Partition p;
  std::map<int, int> remap;
  for (int l : labels) {
    auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
    p.assignment.push_back(it->second);
  }
  p.n_clusters = static_cast<int>(remap.size());
  return p;
}

Contingency contingency(const Partition& c, const Partition& t) {
  if (c.size() != t.size())
    throw ContractError("contingency: partitions cover " +
                        std::to_string(c.size()) + " vs " +
                        std::to_string(t.size()) + " nodes");
  if (c.size() == 0) throw ContractError("contingency: empty partitions");
  Contingency ct;
  ct.n = c.size();
  ct.table.assign(c.n_clusters, std::vector<long long>(t.n_clusters, 0));
  ct.c_sizes.assign(c.n_clusters, 0);
  ct.t_sizes.assign(t.n_clusters, 0);
  for (int i = 0; i < c.size(); ++i) {
    ct.table[c.assignment[i]][t.assignment[i]]++;
    ct.c_sizes[c.assignment[i]]++;
    ct.t_sizes[t.assignment[i]]++;
  }
  return ct;
}

double entropy_of(const std::vector<long long>& sizes, long long n) {
  double h = 0.0;
  for (long long s : sizes) {
    if (s == 0) continue;
    double p = static_cast<double>(s) / n;
    h -= p * std::log(p);
  }
  return h;
}

double mutual_information(const Contingency& ct) {
  double mi = 0.0;
  for (size_t i = 0; i < ct.table.size(); ++i)
    for (size_t j = 0; j < ct.table[i].size(); ++j) {
      long long nij = ct.table[i][j];
      if (nij == 0) continue;
      double p = static_cast<double>(nij) / ct.n;
      mi += p * std::log(static_cast<double>(ct.n) * nij /
                         (static_cast<double>(ct.c_sizes[i]) * ct.t_sizes[j]));
    }
  return mi;
}

// Expected MI of two partitions with these marginals under the permutation
// (hypergeometric) null model.
double expected_mutual_information(const Contingency& ct) {
  const long long n = ct.n;
  double emi = 0.0;
  for (long long ai : ct.c_sizes) {
    if (ai == 0) continue;
    for (long long bj : ct.t_sizes) {
      if (bj == 0) continue;
      long long lo = std::max<long long>(1, ai + bj - n);
      long long hi = std::min(ai, bj);
      for (long long nij = lo; nij <= hi; ++nij) {
        double term = (static_cast<double>(nij) / n) *
                      std::log(static_cast<double>(n) * nij /
                               (static_cast<double>(ai) * bj));
        double logp = std::lgamma(ai + 1) + std::lgamma(bj + 1) +
                      std::lgamma(n - ai + 1) + std::lgamma(n - bj + 1) -
                      std::lgamma(n + 1) - std::lgamma(nij + 1) -
                      std::lgamma(ai - nij + 1) - std::lgamma(bj - nij + 1) -
                      std::lgamma(n - ai - bj + nij + 1);
        emi += term * std::exp(logp);
      }
    }
  }
  return emi;
}

double purity(const Partition& c, const Partition& t) {
  Contingency ct = contingency(c, t);
  long long correct = 0;
  for (const auto& row : ct.table)
    correct += *std::max_element(row.begin(), row.end());
  return static_cast<double>(correct) / ct.n;
}

double nmi(const Partition& c, const Partition& t) {
  Contingency ct = contingency(c, t);
  double hc = entropy_of(ct.c_sizes, ct.n);
  double ht = entropy_of(ct.t_sizes, ct.n);
  double denom = 0.5 * (hc + ht);
  if (denom < 1e-15) return 1.0;  // both partitions trivial, hence identical
  return mutual_information(ct) / denom;
}

double nmi_literal(const Partition& c, const Partition& t) {
  Contingency ct = contingency(c, t);
  return mutual_information(ct) - expected_mutual_information(ct);
}

double homogeneity(const Partition& c, const Partition& t) {
  Contingency ct = contingency(c, t);
  double hc = entropy_of(ct.c_sizes, ct.n);
  if (hc < 1e-15) return 1.0;  // single-cluster C, by convention
  double hct = hc - mutual_information(ct);  // H(C|T)
  return 1.0 - hct / hc;
}

double homogeneity_std(const Partition& c, const Partition& t) {
  Contingency ct = contingency(c, t);
  double ht = entropy_of(ct.t_sizes, ct.n);
  if (ht < 1e-15) return 1.0;
  double htc = ht - mutual_information(ct);  // H(T|C)
  return 1.0 - htc / ht;
}

ClusterScores score_partition(const Partition& c, const Partition& t) {
  ClusterScores s;
  s.purity = purity(c, t);
  s.nmi = nmi(c, t);
  s.nmi_literal = nmi_literal(c, t);
  s.homogeneity = homogeneity(c, t);
  s.homogeneity_std = homogeneity_std(c, t);
  return s;
}

// ---------------------------------------------------------------------------
// Lloyd

namespace {

double sq_dist(const Tensor& points, int row, const std::vector<double>& center) {
  double d = 0.0;
  const double* p = points.data() + static_cast<size_t>(row) * points.cols();
  for (int j = 0; j < points.cols(); ++j) {
    double diff = p[j] - center[j];
    d += diff * diff;
  }
  return d;
}

}  // namespace

Partition lloyd(const Tensor& points, int k, uint64_t seed, int max_iter) {
  const int n = points.rows(), d = points.cols();
  if (k < 1 || k > n)
    throw ContractError("lloyd: k=" + std::to_string(k) + " out of range for " +
                        std::to_string(n) + " points");
  Rng rng(seed);
  std::vector<std::vector<double>> centers;

  // k-means++ seeding
  int first = rng.uniform_int(n);
  centers.push_back(std::vector<double>(points.data() + size_t(first) * d,
                                        points.data() + size_t(first + 1) * d));
  std::vector<double> dist2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centers) best = std::min(best, sq_dist(points, i, c));
      dist2[i] = best;
      total += best;
    }
    int pick;
    if (total <= 0.0) {
      pick = rng.uniform_int(n);  // duplicate points; any choice works
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(std::vector<double>(points.data() + size_t(pick) * d,
                                          points.data() + size_t(pick + 1) * d));
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(points, i, centers[0]);
      for (int c = 1; c < k; ++c) {
        double dd = sq_dist(points, i, centers[c]);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    // recompute means; reseed empty clusters with the globally farthest point
    std::vector<int> counts(k, 0);
    for (auto& c : centers) std::fill(c.begin(), c.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      counts[assign[i]]++;
      const double* p = points.data() + size_t(i) * d;
      for (int j = 0; j < d; ++j) centers[assign[i]][j] += p[j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (int j = 0; j < d; ++j) centers[c][j] /= counts[c];
      } else {
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
          double dd = sq_dist(points, i, centers[assign[i]]);
          if (dd > fd) {
            fd = dd;
            far = i;
          }
        }
        const double* p = points.data() + size_t(far) * d;
        centers[c].assign(p, p + d);
        assign[far] = c;
        changed = true;
      }
    }
    if (!changed) break;
  }
  Partition p = Partition::from_labels(assign);
  return p;
}

double kmeans_inertia(const Tensor& points, const Partition& p) {
  const int n = points.rows(), d = points.cols();
  std::vector<std::vector<double>> centers(p.n_clusters,
                                           std::vector<double>(d, 0.0));
  std::vector<int> counts(p.n_clusters, 0);
  for (int i = 0; i < n; ++i) {
    counts[p.assignment[i]]++;
    const double* pt = points.data() + size_t(i) * d;
    for (int j = 0; j < d; ++j) centers[p.assignment[i]][j] += pt[j];
  }
  for (int c = 0; c < p.n_clusters; ++c)
    if (counts[c])
      for (int j = 0; j < d; ++j) centers[c][j] /= counts[c];
  double inertia = 0.0;
  for (int i = 0; i < n; ++i) inertia += sq_dist(points, i, centers[p.assignment[i]]);
  return inertia;
}

// ---------------------------------------------------------------------------
// Louvain

double modularity(const Tensor& adjacency, const Partition& p) {
  const int n = adjacency.rows();
  if (n == 0) throw ContractError("modularity: empty graph");
  std::vector<double> deg(n, 0.0);
  double two_m = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double w = std::max(0.0, adjacency.at(i, j));
      deg[i] += w;
      two_m += w;
    }
  if (two_m <= 0.0) throw ContractError("modularity: graph has no weight");
  double q = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (p.assignment[i] != p.assignment[j]) continue;
      double w = std::max(0.0, adjacency.at(i, j));
      q += w / two_m - deg[i] * deg[j] / (two_m * two_m);
    }
  return q;
}

namespace {

// one level of local moving + the induced community graph
struct LouvainLevel {
  std::vector<int> community;  // per node of this level's graph
  Tensor aggregated;
};

LouvainLevel louvain_level(const Tensor& a, Rng& rng, bool& improved) {
  const int n = a.rows();
  std::vector<double> deg(n, 0.0);
  double two_m = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      deg[i] += a.at(i, j);
      two_m += a.at(i, j);
    }

  std::vector<int> comm(n);
  std::iota(comm.begin(), comm.end(), 0);
  std::vector<double> tot(deg);  // total degree per community

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  improved = false;
  bool moved = true;
  while (moved) {
    moved = false;
    for (int idx : order) {
      int cur = comm[idx];
      // weight from idx to each neighboring community (self-loop excluded)
      std::map<int, double> links;
      for (int j = 0; j < n; ++j) {
        if (j == idx) continue;
        if (a.at(idx, j) > 0.0) links[comm[j]] += a.at(idx, j);
      }
      tot[cur] -= deg[idx];
      double best_gain = links.count(cur)
                             ? links[cur] - deg[idx] * tot[cur] / two_m
                             : -deg[idx] * tot[cur] / two_m;
      int best = cur;
      for (auto& [c, w] : links) {
        if (c == cur) continue;
        double gain = w - deg[idx] * tot[c] / two_m;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += deg[idx];
      if (best != cur) {
        comm[idx] = best;
        moved = true;
        improved = true;
      }
    }
  }

  Partition p = Partition::from_labels(comm);
  LouvainLevel level;
  level.community = p.assignment;
  level.aggregated = Tensor(p.n_clusters, p.n_clusters);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      level.aggregated.at(p.assignment[i], p.assignment[j]) += a.at(i, j);
  return level;
}

}  // namespace

LouvainResult louvain(const Tensor& adjacency, uint64_t seed) {
  const int n = adjacency.rows();
  if (n == 0 || adjacency.cols() != n)
    throw ContractError("louvain: adjacency must be a nonempty square matrix");
  Tensor a(n, n);
  for (int i = 0; i < a.size(); ++i) a[i] = std::max(0.0, adjacency[i]);
  double total = sum(a);
  if (total <= 0.0) throw ContractError("louvain: graph has no positive weight");

  Rng rng(seed);
  std::vector<int> node_comm(n);
  std::iota(node_comm.begin(), node_comm.end(), 0);

  LouvainResult result;
  Tensor current = a;
  while (true) {
    bool improved = false;
    LouvainLevel level = louvain_level(current, rng, improved);
    for (int i = 0; i < n; ++i) node_comm[i] = level.community[node_comm[i]];
    Partition p = Partition::from_labels(node_comm);
    result.phase_modularity.push_back(modularity(adjacency, p));
    if (!improved || level.aggregated.rows() == current.rows()) {
      result.partition = p;
      result.modularity = result.phase_modularity.back();
      break;
    }
    current = level.aggregated;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Classification metrics

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw ContractError("auroc: scores and labels must align and be nonempty");
  long long pos = std::count(labels.begin(), labels.end(), 1);
  long long neg = static_cast<long long>(labels.size()) - pos;
  if (pos == 0 || neg == 0)
    throw ContractError("auroc: undefined with a single class present");

  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  // average ranks over ties, then Mann-Whitney U
  std::vector<double> rank(scores.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double r = 0.5 * (i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == 1) rank_sum += rank[k];
  double u = rank_sum - 0.5 * pos * (pos + 1);
  return u / (static_cast<double>(pos) * neg);
}

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw ContractError("accuracy: preds and labels must align and be nonempty");
  long long hits = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / preds.size();
}

// ---------------------------------------------------------------------------
// Hierarchy reports

Partition harden_rows(const Tensor& soft) {
  std::vector<int> labels(soft.rows());
  for (int r = 0; r < soft.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < soft.cols(); ++c)
      if (soft.at(r, c) > soft.at(r, best)) best = c;
    labels[r] = best;
  }
  return Partition::from_labels(labels);
}

Tensor flatten_stack(const std::vector<Tensor>& stack) {
  if (stack.empty()) throw ContractError("flatten_stack: empty stack");
  Tensor flat = stack[0];
  for (size_t i = 1; i < stack.size(); ++i) flat = matmul(flat, stack[i]);
  return flat;
}

HierarchyReport hierarchy_report(const std::vector<Tensor>& stack,
                                 const std::vector<int>& fine_truth,
                                 const std::vector<int>& coarse_truth) {
  if (stack.empty()) throw ContractError("hierarchy_report: empty stack");
  if (stack[0].rows() != static_cast<int>(fine_truth.size()) ||
      stack[0].rows() != static_cast<int>(coarse_truth.size()))
    throw ContractError("hierarchy_report: assignment covers " +
                        std::to_string(stack[0].rows()) +
                        " nodes but truth has " +
                        std::to_string(fine_truth.size()));
  HierarchyReport rep;
  Partition fine = Partition::from_labels(fine_truth);
  Partition coarse = Partition::from_labels(coarse_truth);
  rep.level1_hard = harden_rows(stack[0]);
  rep.level1 = score_partition(rep.level1_hard, fine);
  rep.flat_hard = harden_rows(flatten_stack(stack));
  rep.flat = score_partition(rep.flat_hard, coarse);
  return rep;
}

}  // namespace thc
