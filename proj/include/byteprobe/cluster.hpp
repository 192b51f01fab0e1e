#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "byteprobe/cnn.hpp"

namespace byteprobe {

inline constexpr int kNoise = -1;

struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> values;  // n*n, symmetric, zero diagonal

  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * n + j]; }

  static DistanceMatrix euclidean(const std::vector<double>& points, std::size_t n,
                                  std::size_t dim);
  void validate() const;  // throws InputError on asymmetry etc.
};

// Condensed-tree edge.  Node ids < n are points; ids >= n are condensed
// clusters, with n being the root.
struct CondensedEdge {
  int parent = 0;
  int child = 0;
  double lambda = 0.0;  // 1/distance at which the child departs the parent
  std::size_t child_size = 1;
};

struct ClusterResult {
  std::vector<int> labels;  // per point: final cluster id or kNoise
  std::vector<double> stabilities;  // per final cluster id
  std::vector<CondensedEdge> condensed_tree;
  std::vector<int> selected;  // condensed ids of the chosen clusters
  std::size_t min_cluster_size = 2;
  std::size_t min_samples = 1;

  std::size_t cluster_count() const { return stabilities.size(); }
  std::size_t noise_count() const {
    std::size_t k = 0;
    for (int l : labels) k += (l == kNoise);
    return k;
  }
};

// Density-based hierarchical clustering: core distances (min_samples-th
// nearest other point), mutual-reachability transform, minimum spanning
// tree, single-linkage dendrogram, condensation at min_cluster_size, then
// excess-of-mass cluster extraction.  Unclustered points are labeled noise.
//
// Conventions, mirrored exactly by the test oracle:
//   - with min_samples=1 the core distance is the nearest-neighbor distance;
//   - stability ties between a cluster and its children keep the parent;
//   - the root is only selectable when it never splits (degenerate inputs
//     such as all-identical points then form one all-point cluster);
//   - fewer than min_cluster_size points means everything is noise.
ClusterResult hdbscan(const DistanceMatrix& dist, std::size_t min_cluster_size,
                      std::size_t min_samples);
ClusterResult hdbscan_points(const std::vector<double>& points, std::size_t n,
                             std::size_t dim, std::size_t min_cluster_size,
                             std::size_t min_samples);

struct MdsConfig {
  std::size_t dim = 2;
  std::size_t max_iters = 300;
  double tol = 1e-9;  // stop when the relative stress drop falls below this
  bool random_init = false;  // default: classical (Torgerson) initialization
  std::uint64_t seed = 0;    // used only with random_init
};

struct MdsResult {
  std::size_t n = 0;
  std::size_t dim = 2;
  std::vector<double> coords;  // n x dim, row-major
  std::vector<double> stress_history;  // raw stress, nonincreasing
  double final_stress = 0.0;
};

// Metric MDS via SMACOF stress majorization on raw stress
// sum_{i<j} (d_ij - |x_i - x_j|)^2.
MdsResult mds_smacof(const DistanceMatrix& dist, const MdsConfig& config = {});

struct EmbeddingPoint {
  int symbol = 0;  // byte value, or 256 for the padding symbol
  bool is_padding = false;
  int cluster = kNoise;
  bool is_outlier = false;
  double x = 0.0, y = 0.0;
};

struct EmbeddingAnalysis {
  std::vector<EmbeddingPoint> points;
  ClusterResult clusters;
  MdsResult projection;
  std::vector<std::string> warnings;
};

// Clusters and projects the learned embedding rows (all vocab symbols, the
// padding row included but flagged).  Noise points are the reported
// outliers.
EmbeddingAnalysis embedding_outliers(const CnnModel& model,
                                     std::size_t min_cluster_size = 2,
                                     std::size_t min_samples = 1,
                                     const MdsConfig& mds_config = {});

}  // namespace byteprobe
