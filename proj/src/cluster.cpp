#include "byteprobe/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "byteprobe/errors.hpp"
#include "byteprobe/rng.hpp"

namespace byteprobe {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// lambda差 with the inf-inf case defined as zero (distance-zero merges put
// both birth and departure at infinite lambda).
double lambda_gap(double lambda, double birth) {
  if (std::isinf(lambda) && std::isinf(birth)) return 0.0;
  return lambda - birth;
}
}  // namespace

DistanceMatrix DistanceMatrix::euclidean(const std::vector<double>& points, std::size_t n,
                                         std::size_t dim) {
  if (points.size() != n * dim) {
    throw InputError("distance matrix: points buffer does not match n*dim");
  }
  DistanceMatrix m;
  m.n = n;
  m.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = points[i * dim + k] - points[j * dim + k];
        acc += diff * diff;
      }
      const double d = std::sqrt(acc);
      m.at(i, j) = d;
      m.at(j, i) = d;
    }
  }
  return m;
}

void DistanceMatrix::validate() const {
  if (values.size() != n * n) throw InputError("distance matrix: wrong buffer size");
  for (std::size_t i = 0; i < n; ++i) {
    if (at(i, i) != 0.0) throw InputError("distance matrix: nonzero diagonal");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (at(i, j) < 0.0) throw InputError("distance matrix: negative entry");
      if (at(i, j) != at(j, i)) throw InputError("distance matrix: not symmetric");
    }
  }
}

namespace {

struct DendroNode {
  int left = -1, right = -1;  // ids (< n: points, >= n: merge nodes)
  double height = 0.0;
  std::size_t size = 1;
};

// Collects the point ids under a dendrogram node.
void collect_points(int id, std::size_t n, const std::vector<DendroNode>& nodes,
                    std::vector<int>& out) {
  std::vector<int> stack{id};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    if (cur < static_cast<int>(n)) {
      out.push_back(cur);
    } else {
      stack.push_back(nodes[cur].left);
      stack.push_back(nodes[cur].right);
    }
  }
}

}  // namespace

ClusterResult hdbscan(const DistanceMatrix& dist, std::size_t min_cluster_size,
                      std::size_t min_samples) {
  if (min_cluster_size < 2) throw InputError("hdbscan: min_cluster_size must be >= 2");
  if (min_samples < 1) throw InputError("hdbscan: min_samples must be >= 1");
  const std::size_t n = dist.n;

  ClusterResult result;
  result.min_cluster_size = min_cluster_size;
  result.min_samples = min_samples;
  result.labels.assign(n, kNoise);
  if (n < min_cluster_size) return result;  // defined: everything is noise

  // Core distance: distance to the min_samples-th nearest *other* point
  // (so min_samples=1 means the nearest-neighbor distance).
  const std::size_t k = std::min(min_samples, n - 1);
  std::vector<double> core(n, 0.0);
  std::vector<double> row(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row[m++] = dist.at(i, j);
    }
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    core[i] = row[k - 1];
  }

  auto mutual_reach = [&](std::size_t a, std::size_t b) {
    return std::max({dist.at(a, b), core[a], core[b]});
  };

  // Mutual-reachability distances tie often (a core distance can dominate
  // many pairs at once), and tied merges admit several valid dendrograms.
  // Processing the full edge list sorted by (weight, i, j) through the
  // union-find pins one canonical tree; the test oracle uses the same
  // convention.
  struct Edge {
    std::size_t a, b;
    double w;
  };
  std::vector<Edge> mst;
  mst.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) mst.push_back({i, j, mutual_reach(i, j)});
  }
  std::sort(mst.begin(), mst.end(), [](const Edge& x, const Edge& y) {
    if (x.w != y.w) return x.w < y.w;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });

  // Single-linkage dendrogram via union-find over the sorted edges.
  std::vector<DendroNode> nodes(2 * n - 1);
  std::vector<int> dsu_parent(n);
  std::vector<int> dsu_node(n);  // current dendrogram node of each root
  std::iota(dsu_parent.begin(), dsu_parent.end(), 0);
  std::iota(dsu_node.begin(), dsu_node.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (dsu_parent[x] != x) {
      dsu_parent[x] = dsu_parent[dsu_parent[x]];
      x = dsu_parent[x];
    }
    return x;
  };
  int next_node = static_cast<int>(n);
  for (const Edge& e : mst) {
    const int ra = find(static_cast<int>(e.a));
    const int rb = find(static_cast<int>(e.b));
    if (ra == rb) continue;
    DendroNode& nd = nodes[next_node];
    nd.left = dsu_node[ra];
    nd.right = dsu_node[rb];
    nd.height = e.w;
    nd.size = (nd.left < static_cast<int>(n) ? 1 : nodes[nd.left].size) +
              (nd.right < static_cast<int>(n) ? 1 : nodes[nd.right].size);
    dsu_parent[rb] = ra;
    dsu_node[ra] = next_node;
    ++next_node;
  }
  const int root_node = next_node - 1;

  // Condense: walk top-down, carrying the current condensed cluster id.
  // Splits where both sides reach min_cluster_size spawn two new clusters;
  // smaller side-branches fall out of the running cluster point by point.
  const int root_cluster = static_cast<int>(n);
  int next_cluster = root_cluster + 1;
  std::vector<double> birth{/*indexed by cluster-id - n*/};
  birth.push_back(0.0);
  std::vector<int> cluster_parent{root_cluster};  // parent condensed id, root's is itself
  std::vector<int> fallout_cluster(n, root_cluster);
  std::vector<double> fallout_lambda(n, kInf);

  auto node_size = [&](int id) -> std::size_t {
    return id < static_cast<int>(n) ? 1 : nodes[id].size;
  };
  auto drop_points = [&](int id, double lambda, int cluster) {
    std::vector<int> pts;
    collect_points(id, n, nodes, pts);
    for (int p : pts) {
      result.condensed_tree.push_back({cluster, p, lambda, 1});
      fallout_cluster[p] = cluster;
      fallout_lambda[p] = lambda;
    }
  };

  struct WalkItem {
    int node;
    int cluster;
  };
  std::vector<WalkItem> walk;
  if (n >= 2) walk.push_back({root_node, root_cluster});
  while (!walk.empty()) {
    const WalkItem item = walk.back();
    walk.pop_back();
    const DendroNode& nd = nodes[item.node];
    const double lambda = nd.height > 0.0 ? 1.0 / nd.height : kInf;
    const std::size_t s_left = node_size(nd.left);
    const std::size_t s_right = node_size(nd.right);
    const bool big_left = s_left >= min_cluster_size;
    const bool big_right = s_right >= min_cluster_size;

    if (big_left && big_right) {
      for (int child_node : {nd.left, nd.right}) {
        const int cid = next_cluster++;
        birth.push_back(lambda);
        cluster_parent.push_back(item.cluster);
        result.condensed_tree.push_back({item.cluster, cid, lambda, node_size(child_node)});
        walk.push_back({child_node, cid});
      }
    } else if (big_left || big_right) {
      const int keep = big_left ? nd.left : nd.right;
      const int shed = big_left ? nd.right : nd.left;
      drop_points(shed, lambda, item.cluster);
      walk.push_back({keep, item.cluster});
    } else {
      drop_points(nd.left, lambda, item.cluster);
      drop_points(nd.right, lambda, item.cluster);
    }
  }

  const int cluster_total = next_cluster - root_cluster;
  std::vector<double> stability(cluster_total, 0.0);
  std::vector<std::vector<int>> children(cluster_total);
  for (const CondensedEdge& e : result.condensed_tree) {
    const int ci = e.parent - root_cluster;
    stability[ci] += static_cast<double>(e.child_size) * lambda_gap(e.lambda, birth[ci]);
    if (e.child >= root_cluster) children[ci].push_back(e.child - root_cluster);
  }

  // Excess-of-mass selection, children before parents (ids are created
  // top-down, so descending order works).  Ties keep the parent.  The root
  // participates only when the tree never split.
  std::vector<bool> chosen(cluster_total, false);
  std::vector<double> subtree_stab(stability);
  for (int ci = cluster_total - 1; ci >= 0; --ci) {
    if (children[ci].empty()) {
      chosen[ci] = true;  // includes a childless root: the degenerate one-cluster case
      continue;
    }
    double child_sum = 0.0;
    for (int ch : children[ci]) child_sum += subtree_stab[ch];
    if (ci == 0 || child_sum > stability[ci]) {
      subtree_stab[ci] = child_sum;
    } else {
      subtree_stab[ci] = stability[ci];
      chosen[ci] = true;
      // Deselect every descendant.
      std::vector<int> stack(children[ci]);
      while (!stack.empty()) {
        const int c = stack.back();
        stack.pop_back();
        chosen[c] = false;
        stack.insert(stack.end(), children[c].begin(), children[c].end());
      }
    }
  }

  std::vector<int> final_id(cluster_total, kNoise);
  for (int ci = 0; ci < cluster_total; ++ci) {
    if (chosen[ci]) {
      final_id[ci] = static_cast<int>(result.selected.size());
      result.selected.push_back(ci + root_cluster);
      result.stabilities.push_back(stability[ci]);
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    int ci = fallout_cluster[p] - root_cluster;
    while (true) {
      if (chosen[ci]) {
        result.labels[p] = final_id[ci];
        break;
      }
      if (ci == 0) break;  // reached the root unselected: noise
      ci = cluster_parent[ci] - root_cluster;
    }
  }
  return result;
}

ClusterResult hdbscan_points(const std::vector<double>& points, std::size_t n,
                             std::size_t dim, std::size_t min_cluster_size,
                             std::size_t min_samples) {
  return hdbscan(DistanceMatrix::euclidean(points, n, dim), min_cluster_size, min_samples);
}

namespace {

double raw_stress(const DistanceMatrix& dist, const std::vector<double>& x, std::size_t dim) {
  const std::size_t n = dist.n;
  double stress = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = x[i * dim + k] - x[j * dim + k];
        acc += diff * diff;
      }
      const double residual = dist.at(i, j) - std::sqrt(acc);
      stress += residual * residual;
    }
  }
  return stress;
}

// Classical scaling: double-center the squared distances and take the top
// eigenpairs.  For configurations that embed exactly in `dim` dimensions
// this is already the stress-zero solution.
std::vector<double> torgerson_init(const DistanceMatrix& dist, std::size_t dim) {
  const std::size_t n = dist.n;
  Eigen::MatrixXd b(n, n);
  std::vector<double> row_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d2 = dist.at(i, j) * dist.at(i, j);
      row_mean[i] += d2;
      grand += d2;
    }
    row_mean[i] /= static_cast<double>(n);
  }
  grand /= static_cast<double>(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d2 = dist.at(i, j) * dist.at(i, j);
      b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          -0.5 * (d2 - row_mean[i] - row_mean[j] + grand);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  std::vector<double> x(n * dim, 0.0);
  for (std::size_t k = 0; k < dim && k < n; ++k) {
    // Eigenvalues come back ascending; take from the top.
    const auto col = static_cast<Eigen::Index>(n - 1 - k);
    const double lambda = eig.eigenvalues()(col);
    if (lambda <= 0.0) continue;
    const double scalefac = std::sqrt(lambda);
    for (std::size_t i = 0; i < n; ++i) {
      x[i * dim + k] = scalefac * eig.eigenvectors()(static_cast<Eigen::Index>(i), col);
    }
  }
  return x;
}

}  // namespace

MdsResult mds_smacof(const DistanceMatrix& dist, const MdsConfig& config) {
  dist.validate();
  const std::size_t n = dist.n;
  const std::size_t dim = config.dim;
  MdsResult result;
  result.n = n;
  result.dim = dim;
  if (n == 0) return result;
  if (n == 1) {
    result.coords.assign(dim, 0.0);
    result.stress_history.push_back(0.0);
    return result;
  }

  std::vector<double> x;
  if (config.random_init) {
    Rng rng(config.seed);
    x.resize(n * dim);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
  } else {
    x = torgerson_init(dist, dim);
  }

  double stress = raw_stress(dist, x, dim);
  result.stress_history.push_back(stress);

  std::vector<double> bx(n * dim);
  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    // Guttman transform: X' = (1/n) B(X) X with unit weights.
    std::fill(bx.begin(), bx.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double diag = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
          const double diff = x[i * dim + k] - x[j * dim + k];
          acc += diff * diff;
        }
        const double dij = std::sqrt(acc);
        const double bij = dij > 0.0 ? -dist.at(i, j) / dij : 0.0;
        diag -= bij;
        for (std::size_t k = 0; k < dim; ++k) bx[i * dim + k] += bij * x[j * dim + k];
      }
      for (std::size_t k = 0; k < dim; ++k) bx[i * dim + k] += diag * x[i * dim + k];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n * dim; ++i) x[i] = bx[i] * inv_n;

    const double new_stress = raw_stress(dist, x, dim);
    result.stress_history.push_back(new_stress);
    const double drop = stress - new_stress;
    stress = new_stress;
    if (stress == 0.0 || (drop >= 0.0 && drop < config.tol * std::max(stress, 1e-300))) break;
  }
  result.coords = std::move(x);
  result.final_stress = stress;
  return result;
}

EmbeddingAnalysis embedding_outliers(const CnnModel& model, std::size_t min_cluster_size,
                                     std::size_t min_samples, const MdsConfig& mds_config) {
  const Tensor& table = model.embedding.tensor;
  const std::size_t vocab = table.dim(0);
  const std::size_t dim = table.dim(1);

  EmbeddingAnalysis out;
  DistanceMatrix dist = DistanceMatrix::euclidean(table.data(), vocab, dim);
  double max_d = 0.0;
  for (double v : dist.values) max_d = std::max(max_d, v);
  if (max_d == 0.0) {
    out.warnings.push_back("embedding is degenerate (all rows identical); "
                           "clustering collapses to a single cluster");
  }

  out.clusters = hdbscan(dist, min_cluster_size, min_samples);
  out.projection = mds_smacof(dist, mds_config);

  out.points.resize(vocab);
  for (std::size_t s = 0; s < vocab; ++s) {
    EmbeddingPoint& p = out.points[s];
    p.symbol = static_cast<int>(s);
    p.is_padding = s == vocab - 1 && vocab == kVocab;
    p.cluster = out.clusters.labels[s];
    p.is_outlier = p.cluster == kNoise;
    p.x = out.projection.coords[s * out.projection.dim];
    p.y = out.projection.dim > 1 ? out.projection.coords[s * out.projection.dim + 1] : 0.0;
  }
  return out;
}

}  // namespace byteprobe
