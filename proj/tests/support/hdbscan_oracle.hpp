#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <vector>

namespace byteprobe::testing {

// Brute-force HDBSCAN for tiny instances: Kruskal over the full
// mutual-reachability graph, a recursive set-based condensed tree, and
// excess-of-mass selection.  Shares the production conventions (nearest
// other point at min_samples=1, parent wins stability ties, root selectable
// only when childless) but none of the code or data structures.
struct OracleClustering {
  std::vector<int> labels;  // canonical: clusters renumbered by first point
  std::vector<double> stabilities_sorted;
};

namespace hdbscan_oracle_detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct MergeNode {
  std::vector<int> points;
  double height = 0.0;
  std::unique_ptr<MergeNode> left, right;
};

struct CondensedCluster {
  double birth = 0.0;
  double stability = 0.0;
  bool chosen = false;
  CondensedCluster* parent = nullptr;
  std::vector<std::unique_ptr<CondensedCluster>> kids;
  std::map<int, double> fallout;  // point -> lambda at which it left
};

inline double gap(double lambda, double birth) {
  if (std::isinf(lambda) && std::isinf(birth)) return 0.0;
  return lambda - birth;
}

inline void condense(const MergeNode* node, CondensedCluster* cur, std::size_t mcs) {
  const double lambda = node->height > 0.0 ? 1.0 / node->height : kInf;
  const MergeNode* l = node->left.get();
  const MergeNode* r = node->right.get();
  const bool big_l = l->points.size() >= mcs;
  const bool big_r = r->points.size() >= mcs;
  auto shed = [&](const MergeNode* side) {
    for (int p : side->points) {
      cur->fallout[p] = lambda;
      cur->stability += gap(lambda, cur->birth);
    }
  };
  if (big_l && big_r) {
    cur->stability += gap(lambda, cur->birth) *
                      static_cast<double>(l->points.size() + r->points.size());
    for (const MergeNode* side : {l, r}) {
      auto kid = std::make_unique<CondensedCluster>();
      kid->birth = lambda;
      kid->parent = cur;
      CondensedCluster* raw = kid.get();
      cur->kids.push_back(std::move(kid));
      if (side->left) {
        condense(side, raw, mcs);
      } else {
        // A single point can never be a condensed cluster when mcs >= 2.
      }
    }
  } else if (big_l || big_r) {
    shed(big_l ? r : l);
    const MergeNode* keep = big_l ? l : r;
    if (keep->left) {
      condense(keep, cur, mcs);
    } else {
      cur->fallout[keep->points[0]] = kInf;  // unreachable with mcs >= 2
    }
  } else {
    shed(l);
    shed(r);
  }
}

inline double select_eom(CondensedCluster* c, bool is_root) {
  if (c->kids.empty()) {
    c->chosen = true;  // childless root included: degenerate single cluster
    return c->stability;
  }
  double kid_sum = 0.0;
  for (auto& k : c->kids) kid_sum += select_eom(k.get(), false);
  if (is_root || kid_sum > c->stability) return kid_sum;
  c->chosen = true;
  // Deselect the whole subtree below.
  std::vector<CondensedCluster*> stack;
  for (auto& k : c->kids) stack.push_back(k.get());
  while (!stack.empty()) {
    CondensedCluster* k = stack.back();
    stack.pop_back();
    k->chosen = false;
    for (auto& kk : k->kids) stack.push_back(kk.get());
  }
  return c->stability;
}

inline void collect(CondensedCluster* c, std::vector<CondensedCluster*>& all) {
  all.push_back(c);
  for (auto& k : c->kids) collect(k.get(), all);
}

}  // namespace hdbscan_oracle_detail

inline OracleClustering hdbscan_oracle(const std::vector<double>& points, std::size_t n,
                                       std::size_t dim, std::size_t mcs, std::size_t ms) {
  using namespace hdbscan_oracle_detail;
  OracleClustering out;
  out.labels.assign(n, -1);
  if (n < mcs) return out;

  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        acc += (points[i * dim + k] - points[j * dim + k]) *
               (points[i * dim + k] - points[j * dim + k]);
      }
      d[i][j] = std::sqrt(acc);
    }
  }
  std::vector<double> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> others;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(d[i][j]);
    }
    std::sort(others.begin(), others.end());
    core[i] = others[std::min(ms, others.size()) - 1];
  }
  std::vector<std::vector<double>> mr(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) mr[i][j] = std::max({d[i][j], core[i], core[j]});
    }
  }

  struct E {
    std::size_t a, b;
    double w;
  };
  std::vector<E> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j, mr[i][j]});
  }
  std::sort(edges.begin(), edges.end(), [](const E& x, const E& y) {
    if (x.w != y.w) return x.w < y.w;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });

  // Kruskal, building the merge tree directly on point sets.
  std::vector<int> rep(n);
  std::map<int, std::unique_ptr<MergeNode>> roots;
  for (std::size_t i = 0; i < n; ++i) {
    rep[i] = static_cast<int>(i);
    auto leaf = std::make_unique<MergeNode>();
    leaf->points = {static_cast<int>(i)};
    roots[static_cast<int>(i)] = std::move(leaf);
  }
  auto find_rep = [&](std::size_t x) {
    int r = rep[x];
    while (rep[static_cast<std::size_t>(r)] != r) r = rep[static_cast<std::size_t>(r)];
    return r;
  };
  for (const E& e : edges) {
    const int ra = find_rep(e.a), rb = find_rep(e.b);
    if (ra == rb) continue;
    auto node = std::make_unique<MergeNode>();
    node->height = e.w;
    node->left = std::move(roots[ra]);
    node->right = std::move(roots[rb]);
    node->points = node->left->points;
    node->points.insert(node->points.end(), node->right->points.begin(),
                        node->right->points.end());
    roots.erase(ra);
    roots.erase(rb);
    rep[static_cast<std::size_t>(rb)] = ra;
    roots[ra] = std::move(node);
  }
  MergeNode* root = roots.begin()->second.get();

  CondensedCluster top;
  top.birth = 0.0;
  if (root->left) {
    condense(root, &top, mcs);
  } else {
    top.fallout[root->points[0]] = kInf;
  }
  select_eom(&top, true);

  std::vector<CondensedCluster*> all;
  collect(&top, all);
  std::map<const CondensedCluster*, int> cluster_index;
  for (std::size_t i = 0; i < all.size(); ++i) cluster_index[all[i]] = static_cast<int>(i);
  std::vector<int> raw_labels(n, -1);
  for (CondensedCluster* c : all) {
    for (const auto& [p, lambda] : c->fallout) {
      CondensedCluster* walk = c;
      while (walk && !walk->chosen) walk = walk->parent;
      if (walk) raw_labels[static_cast<std::size_t>(p)] = cluster_index[walk];
    }
  }
  // Canonical renumbering by first appearance.
  std::map<int, int> remap;
  for (std::size_t p = 0; p < n; ++p) {
    if (raw_labels[p] < 0) continue;
    auto [it, fresh] = remap.emplace(raw_labels[p], static_cast<int>(remap.size()));
    out.labels[p] = it->second;
    (void)fresh;
  }
  for (CondensedCluster* c : all) {
    if (c->chosen) out.stabilities_sorted.push_back(c->stability);
  }
  std::sort(out.stabilities_sorted.begin(), out.stabilities_sorted.end());
  return out;
}

// Canonicalizes any labeling so two partitions can be compared directly.
inline std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size(), -1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    auto [it, fresh] = remap.emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
    (void)fresh;
  }
  return out;
}

}  // namespace byteprobe::testing
