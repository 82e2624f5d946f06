#pragma once

// Vessel-tree construction on top of curve skeletons: orient the skeleton
// from a root, prune thinning spurs, break cycles, assign per-branch
// generations, and decompose a vessel mask into the four nested branch
// levels used by the abundance statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/distance.hpp"
#include "vasq/grid.hpp"
#include "vasq/skeleton.hpp"

namespace vasq {

enum class NodeKind { Root, Junction, Endpoint };

struct TreeNode {
  std::size_t voxel = 0;  // linear index in the source geometry
  NodeKind kind = NodeKind::Endpoint;
  int degree = 0;  // incident branches
};

struct TreeBranch {
  int node_a = -1;  // parent-side node
  int node_b = -1;  // child-side node
  std::vector<std::size_t> voxels;  // interior polyline, parent-to-child order
  int generation = 0;  // root branch 0, +1 at every junction crossed
  int component = 0;
};

struct VesselTree {
  Index3 dims{0, 0, 0};
  std::array<double, 3> spacing{1, 1, 1};
  std::array<double, 3> origin{0, 0, 0};
  std::uint8_t label = 0;
  std::vector<TreeNode> nodes;
  std::vector<TreeBranch> branches;
  std::vector<int> roots;  // node ids, one per skeleton component
  bool is_forest = false;  // skeleton had more than one 26-component
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(std::size_t(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[std::size_t(a)] != a) {
      parent[std::size_t(a)] = parent[std::size_t(parent[std::size_t(a)])];
      a = parent[std::size_t(a)];
    }
    return a;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::size_t(b)] = a;
    return true;
  }
};

}  // namespace detail

// Orient a skeleton into a tree. Cycles are broken by dropping the longest
// edge in each (minimum spanning forest under physical edge length), then
// terminal branches shorter than 3 voxels that end at a junction are pruned
// as thinning artifacts. Junctions/endpoints are identified on the pruned
// graph; breadth-first traversal from the root assigns generations, which
// increment only when a branch starts at a junction. Disconnected skeletons
// come back as a flagged forest with one root per component (each component
// rooted at its voxel closest to the hint). An empty skeleton gives an empty
// tree.
inline VesselTree build_tree(const Skeleton& skel, Index3 root_hint) {
  VesselTree tree;
  tree.dims = skel.dims;
  tree.spacing = skel.spacing;
  tree.origin = skel.origin;
  tree.label = skel.label;
  if (skel.voxels.empty()) return tree;

  const auto& vox = skel.voxels;  // sorted
  const int n = int(vox.size());
  auto id_of = [&](std::size_t linear) -> int {
    auto it = std::lower_bound(vox.begin(), vox.end(), linear);
    if (it == vox.end() || *it != linear) return -1;
    return int(it - vox.begin());
  };

  // hint placement: the closest skeleton voxel, in voxel units
  double best_d2 = std::numeric_limits<double>::infinity();
  int hint_id = -1;
  for (int i = 0; i < n; ++i) {
    auto c = skel.coords(vox[std::size_t(i)]);
    double dx = c[0] - root_hint[0], dy = c[1] - root_hint[1], dz = c[2] - root_hint[2];
    double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best_d2) {
      best_d2 = d2;
      hint_id = i;
    }
  }
  if (best_d2 > 25.0)
    throw validation_error("root hint (" + std::to_string(root_hint[0]) + "," +
                           std::to_string(root_hint[1]) + "," + std::to_string(root_hint[2]) +
                           ") is farther than 5 voxels from every skeleton voxel");

  // 26-adjacency between skeleton voxels
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto c = skel.coords(vox[std::size_t(i)]);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          int x = c[0] + dx, y = c[1] + dy, z = c[2] + dz;
          if (x < 0 || x >= skel.dims[0] || y < 0 || y >= skel.dims[1] || z < 0 ||
              z >= skel.dims[2])
            continue;
          std::size_t linear =
              std::size_t(x) +
              std::size_t(skel.dims[0]) * (std::size_t(y) + std::size_t(skel.dims[1]) * std::size_t(z));
          int j = id_of(linear);
          if (j >= 0 && j != i) adj[std::size_t(i)].push_back(j);
        }
  }

  // spanning forest by ascending physical edge length: every non-forest edge
  // is the longest edge of the cycle it would close
  struct Edge {
    double w;
    int a, b;
  };
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    auto ci = skel.coords(vox[std::size_t(i)]);
    for (int j : adj[std::size_t(i)]) {
      if (j <= i) continue;
      auto cj = skel.coords(vox[std::size_t(j)]);
      double dx = (ci[0] - cj[0]) * skel.spacing[0];
      double dy = (ci[1] - cj[1]) * skel.spacing[1];
      double dz = (ci[2] - cj[2]) * skel.spacing[2];
      edges.push_back({std::sqrt(dx * dx + dy * dy + dz * dz), i, j});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& p, const Edge& q) {
    if (p.w != q.w) return p.w < q.w;
    if (p.a != q.a) return p.a < q.a;
    return p.b < q.b;
  });
  detail::UnionFind uf(n);
  std::vector<std::vector<int>> tadj(static_cast<std::size_t>(n));
  for (const Edge& e : edges)
    if (uf.unite(e.a, e.b)) {
      tadj[std::size_t(e.a)].push_back(e.b);
      tadj[std::size_t(e.b)].push_back(e.a);
    }
  for (auto& a : tadj) std::sort(a.begin(), a.end());

  // spur pruning: walk from each leaf (hint voxel excluded) to the nearest
  // degree>=3 voxel; drop walks of fewer than 3 voxels. All walks are
  // collected against the unpruned degrees and removed in one pass.
  std::vector<int> degree(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) degree[std::size_t(i)] = int(tadj[std::size_t(i)].size());
  std::vector<std::uint8_t> removed(std::size_t(n), 0);
  for (int leaf = 0; leaf < n; ++leaf) {
    if (degree[std::size_t(leaf)] != 1 || leaf == hint_id) continue;
    std::vector<int> walk{leaf};
    int prev = -1, cur = leaf;
    bool ends_at_junction = false;
    while (int(walk.size()) < 3) {
      int next = -1;
      for (int nb : tadj[std::size_t(cur)])
        if (nb != prev) {
          next = nb;
          break;
        }
      if (next < 0) break;  // isolated path
      if (degree[std::size_t(next)] >= 3) {
        ends_at_junction = true;
        break;
      }
      walk.push_back(next);
      prev = cur;
      cur = next;
    }
    if (ends_at_junction && int(walk.size()) < 3 &&
        std::find(walk.begin(), walk.end(), hint_id) == walk.end())
      for (int v : walk) removed[std::size_t(v)] = 1;
  }
  for (int i = 0; i < n; ++i) {
    if (!removed[std::size_t(i)]) continue;
    tadj[std::size_t(i)].clear();
  }
  for (int i = 0; i < n; ++i)
    tadj[std::size_t(i)].erase(std::remove_if(tadj[std::size_t(i)].begin(),
                                              tadj[std::size_t(i)].end(),
                                              [&](int j) { return removed[std::size_t(j)]; }),
                               tadj[std::size_t(i)].end());
  for (int i = 0; i < n; ++i) degree[std::size_t(i)] = int(tadj[std::size_t(i)].size());

  // components of the pruned forest, in ascending first-voxel order
  std::vector<int> component(std::size_t(n), -1);
  int n_components = 0;
  for (int s = 0; s < n; ++s) {
    if (removed[std::size_t(s)] || component[std::size_t(s)] >= 0) continue;
    std::vector<int> stack{s};
    component[std::size_t(s)] = n_components;
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      for (int nb : tadj[std::size_t(cur)])
        if (component[std::size_t(nb)] < 0) {
          component[std::size_t(nb)] = n_components;
          stack.push_back(nb);
        }
    }
    ++n_components;
  }
  tree.is_forest = n_components > 1;

  // per-component root: the hint voxel in its own component, the voxel
  // closest to the hint elsewhere (ties to the smaller index)
  std::vector<int> comp_root(std::size_t(n_components), -1);
  std::vector<double> comp_best(std::size_t(n_components),
                                std::numeric_limits<double>::infinity());
  comp_root[std::size_t(component[std::size_t(hint_id)])] = hint_id;
  for (int i = 0; i < n; ++i) {
    if (removed[std::size_t(i)]) continue;
    int c = component[std::size_t(i)];
    if (c == component[std::size_t(hint_id)]) continue;
    auto cc = skel.coords(vox[std::size_t(i)]);
    double dx = cc[0] - root_hint[0], dy = cc[1] - root_hint[1], dz = cc[2] - root_hint[2];
    double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < comp_best[std::size_t(c)]) {
      comp_best[std::size_t(c)] = d2;
      comp_root[std::size_t(c)] = i;
    }
  }

  // node set: roots plus every pruned-graph voxel of degree != 2
  std::vector<int> node_of(std::size_t(n), -1);
  auto add_node = [&](int i, NodeKind kind) {
    if (node_of[std::size_t(i)] >= 0) return node_of[std::size_t(i)];
    node_of[std::size_t(i)] = int(tree.nodes.size());
    tree.nodes.push_back({vox[std::size_t(i)], kind, 0});
    return node_of[std::size_t(i)];
  };
  for (int c = 0; c < n_components; ++c)
    tree.roots.push_back(add_node(comp_root[std::size_t(c)], NodeKind::Root));
  for (int i = 0; i < n; ++i) {
    if (removed[std::size_t(i)] || degree[std::size_t(i)] == 2 || node_of[std::size_t(i)] >= 0)
      continue;
    add_node(i, degree[std::size_t(i)] >= 3 ? NodeKind::Junction : NodeKind::Endpoint);
  }

  // breadth-first branch extraction from each root
  std::set<std::pair<int, int>> walked;  // undirected first-step edges
  auto mark = [&](int a, int b) { walked.insert({std::min(a, b), std::max(a, b)}); };
  auto was_walked = [&](int a, int b) {
    return walked.count({std::min(a, b), std::max(a, b)}) > 0;
  };
  for (int root_node : tree.roots) {
    std::vector<std::pair<int, int>> frontier;  // (voxel id, incoming generation)
    int root_voxel = -1;
    for (int i = 0; i < n; ++i)
      if (node_of[std::size_t(i)] == root_node) root_voxel = i;
    frontier.push_back({root_voxel, -1});
    std::size_t head = 0;
    while (head < frontier.size()) {
      auto [u, gen_in] = frontier[head++];
      const int u_node = node_of[std::size_t(u)];
      const bool at_junction = degree[std::size_t(u)] >= 3;
      const int child_gen = gen_in < 0 ? 0 : (at_junction ? gen_in + 1 : gen_in);
      for (int first : tadj[std::size_t(u)]) {
        if (was_walked(u, first)) continue;
        mark(u, first);
        TreeBranch br;
        br.node_a = u_node;
        br.generation = child_gen;
        br.component = component[std::size_t(u)];
        int prev = u, cur = first;
        while (node_of[std::size_t(cur)] < 0) {
          br.voxels.push_back(vox[std::size_t(cur)]);
          int next = -1;
          for (int nb : tadj[std::size_t(cur)])
            if (nb != prev) {
              next = nb;
              break;
            }
          prev = cur;
          cur = next;
        }
        mark(prev, cur);
        br.node_b = node_of[std::size_t(cur)];
        tree.nodes[std::size_t(br.node_a)].degree++;
        tree.nodes[std::size_t(br.node_b)].degree++;
        frontier.push_back({cur, br.generation});
        tree.branches.push_back(std::move(br));
      }
    }
  }
  return tree;
}

// Each junction with k incident branches contributes k - 2 (a plain
// bifurcation 1, a trifurcation 2), so on a binary tree the count equals
// endpoints - 1.
inline std::size_t count_bifurcations(const VesselTree& tree) {
  std::size_t count = 0;
  for (const auto& node : tree.nodes)
    if (node.degree >= 3) count += std::size_t(node.degree - 2);
  return count;
}

// Cumulative branch-level masks: levels[0] is the cardiac portion, levels[3]
// the whole class mask.
struct BranchLevels {
  std::array<LabelMask, 4> levels;
  bool heart_fallback = false;  // heart mask was empty; levels[0] is the
                                // extrapulmonary portion instead
};

// Split a class mask into the four nested branch levels. levels[0] is the
// portion inside the heart; branches are ranked by intrapulmonary generation
// g = tree generation - (generation of the first branch whose midpoint lies
// in the lung) + 2, clamped to >= 1, so the lung-entering branch and its
// parent rank 1-2 (levels[1]), the next three generations rank 3-5
// (levels[2]), and everything deeper lands in levels[3]. Mask voxels outside
// the heart follow their nearest skeleton voxel's branch.
inline BranchLevels decompose_levels(const VesselTree& tree, const LabelMask& mask,
                                     const LabelMask& lung_mask, const LabelMask& heart_mask) {
  require_same_geometry(mask, lung_mask, "branch-level decomposition");
  require_same_geometry(mask, heart_mask, "branch-level decomposition");
  if (tree.dims != mask.dims)
    throw validation_error("branch-level decomposition: tree was built on a different grid");

  const std::size_t n = mask.size();
  auto member = [&](std::size_t i) {
    return tree.label ? mask.data[i] == tree.label : mask.data[i] != 0;
  };

  BranchLevels out;
  for (auto& level : out.levels) level = LabelMask::like(mask);
  const std::uint8_t code = tree.label ? tree.label : 1;

  bool heart_empty = true;
  for (std::size_t i = 0; i < n && heart_empty; ++i)
    if (heart_mask.data[i]) heart_empty = false;
  out.heart_fallback = heart_empty;

  std::vector<std::uint8_t> in_l0(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!member(i)) continue;
    in_l0[i] = heart_empty ? !lung_mask.data[i] : heart_mask.data[i] != 0;
  }

  // branch ranks from the lung-entry generation
  int entry_gen = std::numeric_limits<int>::max();
  auto midpoint = [&](const TreeBranch& br) {
    std::vector<std::size_t> path;
    path.push_back(tree.nodes[std::size_t(br.node_a)].voxel);
    path.insert(path.end(), br.voxels.begin(), br.voxels.end());
    path.push_back(tree.nodes[std::size_t(br.node_b)].voxel);
    return path[path.size() / 2];
  };
  for (const auto& br : tree.branches)
    if (lung_mask.data[midpoint(br)]) entry_gen = std::min(entry_gen, br.generation);

  auto level_of_gen = [&](int generation) {
    int g = entry_gen == std::numeric_limits<int>::max()
                ? 1
                : std::max(1, generation - entry_gen + 2);
    if (g <= 2) return 1;
    if (g <= 5) return 2;
    return 3;
  };

  // per-skeleton-voxel level (nodes take the smallest incident branch level)
  std::vector<int> site_level(n, 4);
  LabelMask sites = LabelMask::like(mask);
  auto place = [&](std::size_t voxel, int level) {
    sites.data[voxel] = 1;
    site_level[voxel] = std::min(site_level[voxel], level);
  };
  for (const auto& br : tree.branches) {
    const int level = level_of_gen(br.generation);
    for (std::size_t v : br.voxels) place(v, level);
    place(tree.nodes[std::size_t(br.node_a)].voxel, level);
    place(tree.nodes[std::size_t(br.node_b)].voxel, level);
  }
  for (const auto& node : tree.nodes)
    if (node.degree == 0) place(node.voxel, 1);  // isolated single-voxel component

  bool have_sites = false;
  for (std::size_t i = 0; i < n && !have_sites; ++i)
    if (sites.data[i]) have_sites = true;
  DistanceField field;
  if (have_sites) field = distance_to_sites(sites);

  for (std::size_t i = 0; i < n; ++i) {
    if (!member(i)) continue;
    int level;
    if (in_l0[i])
      level = 0;
    else if (have_sites)
      level = site_level[std::size_t(field.nearest.data[i])];
    else
      level = 3;
    for (int k = level; k < 4; ++k) out.levels[std::size_t(k)].data[i] = code;
  }

  for (std::size_t i = 0; i < n; ++i)
    for (int k = 1; k < 4; ++k)
      if (out.levels[std::size_t(k - 1)].data[i] && !out.levels[std::size_t(k)].data[i])
        throw std::logic_error("branch-level decomposition produced non-nested levels");
  return out;
}

}  // namespace vasq
