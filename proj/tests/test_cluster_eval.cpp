#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "helpers.hpp"
#include "thc/cluster_eval.hpp"
#include "thc/data.hpp"

using namespace thc;
using namespace thc::testing;

namespace {

Partition random_partition(int n, int k, Rng& rng) {
  std::vector<int> labels(n);
  for (int& l : labels) l = rng.uniform_int(k);
  return Partition::from_labels(labels);
}

// brute force purity by set intersections
double purity_brute(const Partition& c, const Partition& t) {
  double total = 0;
  for (int ci = 0; ci < c.n_clusters; ++ci) {
    std::map<int, int> counts;
    for (int v = 0; v < c.size(); ++v)
      if (c.assignment[v] == ci) counts[t.assignment[v]]++;
    int best = 0;
    for (auto& [label, n] : counts) best = std::max(best, n);
    total += best;
  }
  return total / c.size();
}

double entropy_brute(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int l : labels) counts[l]++;
  double h = 0;
  for (auto& [l, n] : counts) {
    double p = double(n) / labels.size();
    h -= p * std::log(p);
  }
  return h;
}

double mi_brute(const Partition& c, const Partition& t) {
  const int n = c.size();
  double mi = 0;
  for (int ci = 0; ci < c.n_clusters; ++ci)
    for (int ti = 0; ti < t.n_clusters; ++ti) {
      int joint = 0, nc = 0, nt = 0;
      for (int v = 0; v < n; ++v) {
        bool in_c = c.assignment[v] == ci, in_t = t.assignment[v] == ti;
        joint += in_c && in_t;
        nc += in_c;
        nt += in_t;
      }
      if (joint == 0) continue;
      double pj = double(joint) / n;
      mi += pj * std::log(pj / (double(nc) / n * double(nt) / n));
    }
  return mi;
}

}  // namespace

TEST_CASE("purity trivial cases") {
  Partition t = Partition::from_labels({0, 0, 1, 1, 2, 2});
  CHECK(purity(t, t) == 1.0);
  Partition giant = Partition::from_labels({0, 0, 0, 0, 0, 0});
  CHECK(purity(giant, t) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("purity matches brute force on random 30-node partitions") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Partition c = random_partition(30, 2 + rng.uniform_int(5), rng);
    Partition t = random_partition(30, 2 + rng.uniform_int(5), rng);
    CHECK(std::abs(purity(c, t) - purity_brute(c, t)) < 1e-12);
  }
}

TEST_CASE("nmi and homogeneity trivial cases") {
  Partition t = Partition::from_labels({0, 0, 1, 1, 2, 2});
  CHECK(nmi(t, t) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(homogeneity(t, t) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(homogeneity_std(t, t) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("nmi of an independent product split approaches zero") {
  // C splits by row parity, T by column parity of an 8x8 grid: independent
  std::vector<int> c_labels, t_labels;
  for (int v = 0; v < 64; ++v) {
    c_labels.push_back((v / 8) % 2);
    t_labels.push_back(v % 2);
  }
  Partition c = Partition::from_labels(c_labels);
  Partition t = Partition::from_labels(t_labels);
  CHECK(nmi(c, t) < 1e-12);
}

TEST_CASE("contingency entropies match brute force on a 20-node instance") {
  Rng rng(2);
  Partition c = random_partition(20, 4, rng);
  Partition t = random_partition(20, 3, rng);
  Contingency ct = contingency(c, t);
  CHECK(std::abs(entropy_of(ct.c_sizes, ct.n) - entropy_brute(c.assignment)) <
        1e-12);
  CHECK(std::abs(entropy_of(ct.t_sizes, ct.n) - entropy_brute(t.assignment)) <
        1e-12);
  CHECK(std::abs(mutual_information(ct) - mi_brute(c, t)) < 1e-12);
}

TEST_CASE("exhaustive small-instance metric equivalence") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + rng.uniform_int(24);  // V <= 25
    Partition c = random_partition(n, 1 + rng.uniform_int(5), rng);
    Partition t = random_partition(n, 1 + rng.uniform_int(5), rng);
    CHECK(std::abs(purity(c, t) - purity_brute(c, t)) < 1e-12);
    Contingency ct = contingency(c, t);
    double hc = entropy_brute(c.assignment), ht = entropy_brute(t.assignment);
    double mi = mi_brute(c, t);
    if (hc > 0 || ht > 0) {
      double expect = mi / (0.5 * (hc + ht));
      CHECK(std::abs(nmi(c, t) - expect) < 1e-12);
    }
    if (hc > 0) {
      // H(C|T) = H(C) - I(C;T)
      double expect = 1.0 - (hc - mi) / hc;
      CHECK(std::abs(homogeneity(c, t) - expect) < 1e-10);
    }
    CHECK(purity(c, t) >= 1.0 / t.n_clusters - 1e-12);
  }
}

TEST_CASE("all scores are permutation-invariant and in range") {
  Rng rng(4);
  Partition c = random_partition(25, 4, rng);
  Partition t = random_partition(25, 3, rng);
  ClusterScores base = score_partition(c, t);
  CHECK(base.purity >= 0.0);
  CHECK(base.purity <= 1.0);
  CHECK(base.nmi >= 0.0);
  CHECK(base.nmi <= 1.0);
  CHECK(base.homogeneity <= 1.0);
  CHECK(base.homogeneity_std <= 1.0);

  // relabel both partitions
  auto relabel = [](const Partition& p, int shift) {
    std::vector<int> l(p.assignment);
    for (int& x : l) x = (x + shift) % p.n_clusters;
    return Partition::from_labels(l);
  };
  ClusterScores perm = score_partition(relabel(c, 2), relabel(t, 1));
  CHECK(perm.purity == doctest::Approx(base.purity).epsilon(1e-12));
  CHECK(perm.nmi == doctest::Approx(base.nmi).epsilon(1e-12));
  CHECK(perm.nmi_literal == doctest::Approx(base.nmi_literal).epsilon(1e-12));
  CHECK(perm.homogeneity == doctest::Approx(base.homogeneity).epsilon(1e-12));
}

TEST_CASE("single-cluster homogeneity follows the stated convention") {
  Partition giant = Partition::from_labels({0, 0, 0, 0});
  Partition t = Partition::from_labels({0, 0, 1, 1});
  CHECK(homogeneity(giant, t) == 1.0);
}

TEST_CASE("mismatched node sets are a contract error") {
  Partition a = Partition::from_labels({0, 1});
  Partition b = Partition::from_labels({0, 1, 0});
  CHECK_THROWS_AS(purity(a, b), ContractError);
}

TEST_CASE("Lloyd trivial cases") {
  // zero-noise planted blocks are identical points: k = block count is exact
  PlantedSpec spec;
  spec.nodes = 24;
  spec.fine = 4;
  spec.coarse = 2;
  spec.within = 0.8;
  spec.between = 0.2;
  spec.sigma = 0.0;
  Dataset ds = generate(spec, 2);
  Partition truth = Partition::from_labels(ds.fine_labels);
  CHECK(purity(lloyd(mean_adjacency(ds), 4, 7), truth) == 1.0);

  // k=1: one cluster, inertia equals total variance around the mean row
  Rng rng(5);
  Tensor pts = random_tensor(10, 3, rng);
  Partition one = lloyd(pts, 1, 0);
  CHECK(one.n_clusters == 1);
  Tensor mean(1, 3);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 3; ++c) mean[c] += pts.at(r, c) / 10.0;
  double var = 0;
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 3; ++c) {
      double d = pts.at(r, c) - mean[c];
      var += d * d;
    }
  CHECK(kmeans_inertia(pts, one) == doctest::Approx(var).epsilon(1e-9));
}

TEST_CASE("Lloyd matches the exhaustive optimum on a 9-point set") {
  // three tight groups on a line
  Tensor pts(9, 1, {0.0, 0.1, 0.2, 5.0, 5.1, 5.2, 10.0, 10.1, 10.2});
  Partition got = lloyd(pts, 3, 11);
  double got_inertia = kmeans_inertia(pts, got);

  // exhaustive search over all assignments of 9 points to 3 clusters
  double best = 1e300;
  for (int mask = 0; mask < 19683; ++mask) {  // 3^9
    std::vector<int> labels(9);
    int m = mask;
    for (int i = 0; i < 9; ++i) {
      labels[i] = m % 3;
      m /= 3;
    }
    Partition p = Partition::from_labels(labels);
    if (p.n_clusters != 3) continue;
    best = std::min(best, kmeans_inertia(pts, p));
  }
  CHECK(got_inertia == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("Louvain separates disconnected cliques") {
  const int n = 10;
  Tensor adj(n, n);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (u != v && (u < 5) == (v < 5)) adj.at(u, v) = 1.0;
  LouvainResult res = louvain(adj, 1);
  CHECK(res.partition.n_clusters == 2);
  for (int v = 1; v < 5; ++v)
    CHECK(res.partition.assignment[v] == res.partition.assignment[0]);
  for (int v = 6; v < n; ++v)
    CHECK(res.partition.assignment[v] == res.partition.assignment[5]);

  // single clique collapses to one community
  Tensor clique(4, 4, 1.0);
  for (int i = 0; i < 4; ++i) clique.at(i, i) = 0.0;
  CHECK(louvain(clique, 1).partition.n_clusters == 1);
}

TEST_CASE("Louvain is no worse than the planted two-block partition") {
  PlantedSpec spec;
  spec.nodes = 16;
  spec.fine = 2;
  spec.coarse = 2;
  spec.within = 0.9;
  spec.between = 0.1;
  spec.sigma = 0.05;
  spec.seed = 3;
  Dataset ds = generate(spec, 5);
  Tensor adj = mean_adjacency(ds);
  LouvainResult res = louvain(adj, 1);
  Partition truth = Partition::from_labels(ds.fine_labels);
  CHECK(res.modularity >= modularity(adj, truth) - 1e-9);

  // phase modularity never decreases
  for (size_t i = 1; i < res.phase_modularity.size(); ++i)
    CHECK(res.phase_modularity[i] >= res.phase_modularity[i - 1] - 1e-12);
}

TEST_CASE("auroc basics and pairwise oracle") {
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), ContractError);

  std::vector<double> scores{0.1, 0.4, 0.35, 0.8, 0.65, 0.9, 0.5, 0.5, 0.2, 0.7};
  std::vector<int> labels{0, 0, 1, 1, 0, 1, 0, 1, 0, 1};
  double expect = 0, pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      pairs += 1;
      if (scores[i] > scores[j]) expect += 1;
      else if (scores[i] == scores[j]) expect += 0.5;
    }
  CHECK(auroc(scores, labels) == doctest::Approx(expect / pairs).epsilon(1e-12));
  CHECK(accuracy({1, 0, 1, 1}, {1, 0, 0, 1}) == doctest::Approx(0.75));
}

TEST_CASE("harden and flatten of a soft stack") {
  Tensor a1(3, 2, {0.9, 0.1, 0.2, 0.8, 0.7, 0.3});
  Tensor a2(2, 1, {1.0, 1.0});
  Partition hard = harden_rows(a1);
  CHECK(hard.assignment == std::vector<int>{0, 1, 0});
  Tensor flat = flatten_stack({a1, a2});
  REQUIRE(flat.rows() == 3);
  REQUIRE(flat.cols() == 1);
  for (int r = 0; r < 3; ++r)
    CHECK(flat.at(r, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hierarchy report on truth-equal hard assignments") {
  std::vector<int> fine{0, 0, 1, 1, 2, 2, 3, 3};
  std::vector<int> coarse{0, 0, 0, 0, 1, 1, 1, 1};
  Tensor a1(8, 4);
  for (int v = 0; v < 8; ++v) a1.at(v, fine[v]) = 1.0;
  Tensor a2(4, 2);
  for (int f = 0; f < 4; ++f) a2.at(f, f / 2) = 1.0;
  HierarchyReport rep = hierarchy_report({a1, a2}, fine, coarse);
  CHECK(rep.level1.purity == 1.0);
  CHECK(rep.level1.nmi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.flat.purity == 1.0);
  CHECK(rep.flat_hard.n_clusters == 2);
}
