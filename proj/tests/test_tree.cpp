#include "vasq/tree.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

#include "test_util.hpp"

using namespace vasq;

namespace {

// a skeleton straight from a list of voxels, for hand-built graph shapes
Skeleton make_skeleton(Index3 dims, const std::vector<Index3>& voxels,
                       std::array<double, 3> spacing = {1, 1, 1}) {
  LabelMask m = LabelMask::zeros(dims, spacing);
  for (const auto& v : voxels) m.at(v[0], v[1], v[2]) = 1;
  Skeleton s;
  s.dims = dims;
  s.spacing = spacing;
  s.origin = m.origin;
  s.label = 1;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.data[i]) s.voxels.push_back(i);
  return s;
}

std::vector<Index3> y_shape() {
  std::vector<Index3> v;
  for (int y = 2; y <= 8; ++y) v.push_back({10, y, 5});  // stem
  v.push_back({10, 9, 5});                               // junction
  for (int k = 1; k <= 5; ++k) v.push_back({10 - k, 9 + k, 5});  // left arm
  for (int k = 1; k <= 5; ++k) v.push_back({10 + k, 9 + k, 5});  // right arm
  return v;
}

std::multiset<int> generations(const VesselTree& t) {
  std::multiset<int> g;
  for (const auto& b : t.branches) g.insert(b.generation);
  return g;
}

std::size_t degree_one_nodes(const VesselTree& t) {
  std::size_t n = 0;
  for (const auto& node : t.nodes)
    if (node.degree == 1) ++n;
  return n;
}

// every skeleton voxel sits in exactly one branch interior or one node
void expect_full_coverage(const VesselTree& t, const Skeleton& s) {
  std::map<std::size_t, int> uses;
  for (const auto& node : t.nodes) uses[node.voxel]++;
  for (const auto& b : t.branches)
    for (std::size_t v : b.voxels) uses[v]++;
  EXPECT_EQ(uses.size(), s.voxels.size());
  for (const auto& [voxel, count] : uses) {
    EXPECT_EQ(count, 1) << "voxel " << voxel << " claimed " << count << " times";
    EXPECT_TRUE(std::binary_search(s.voxels.begin(), s.voxels.end(), voxel));
  }
}

}  // namespace

TEST(BuildTree, StraightLine) {
  std::vector<Index3> line;
  for (int x = 2; x <= 31; ++x) line.push_back({x, 2, 2});
  Skeleton s = make_skeleton({34, 5, 5}, line);
  VesselTree t = build_tree(s, {2, 2, 2});

  ASSERT_EQ(t.branches.size(), 1u);
  EXPECT_EQ(t.branches[0].generation, 0);
  EXPECT_EQ(t.branches[0].voxels.size(), 28u);
  EXPECT_EQ(count_bifurcations(t), 0u);
  EXPECT_EQ(degree_one_nodes(t), 2u);
  EXPECT_FALSE(t.is_forest);
  ASSERT_EQ(t.roots.size(), 1u);
  EXPECT_EQ(t.nodes[std::size_t(t.roots[0])].kind, NodeKind::Root);
  EXPECT_EQ(t.nodes[std::size_t(t.roots[0])].voxel, s.voxels.front());
  expect_full_coverage(t, s);
}

TEST(BuildTree, YShape) {
  Skeleton s = make_skeleton({22, 16, 11}, y_shape());
  VesselTree t = build_tree(s, {10, 2, 5});

  EXPECT_EQ(t.branches.size(), 3u);
  EXPECT_EQ(generations(t), (std::multiset<int>{0, 1, 1}));
  EXPECT_EQ(count_bifurcations(t), 1u);

  LabelMask probe = LabelMask::zeros({22, 16, 11});
  std::size_t junctions = 0;
  for (const auto& node : t.nodes)
    if (node.kind == NodeKind::Junction) {
      ++junctions;
      EXPECT_EQ(node.voxel, probe.index(10, 9, 5));
      EXPECT_EQ(node.degree, 3);
    }
  EXPECT_EQ(junctions, 1u);
  expect_full_coverage(t, s);
}

TEST(BuildTree, ShortSpurIsPruned) {
  std::vector<Index3> v = y_shape();
  // swap the left arm for a 2-voxel stub
  v.erase(std::remove_if(v.begin(), v.end(),
                         [](const Index3& p) { return p[0] < 10 && p[0] >= 10 - 5; }),
          v.end());
  v.push_back({9, 10, 5});
  v.push_back({8, 11, 5});
  Skeleton s = make_skeleton({22, 16, 11}, v);
  VesselTree t = build_tree(s, {10, 2, 5});

  // stub gone, ex-junction absorbed: one branch from root to the arm tip
  EXPECT_EQ(t.branches.size(), 1u);
  EXPECT_EQ(count_bifurcations(t), 0u);
  std::set<std::size_t> claimed;
  for (const auto& node : t.nodes) claimed.insert(node.voxel);
  for (std::size_t x : t.branches[0].voxels) claimed.insert(x);
  LabelMask probe = LabelMask::zeros({22, 16, 11});
  EXPECT_EQ(claimed.count(probe.index(9, 10, 5)), 0u);
  EXPECT_EQ(claimed.count(probe.index(8, 11, 5)), 0u);
  EXPECT_EQ(claimed.size(), s.voxels.size() - 2);
}

TEST(BuildTree, CycleBrokenIntoAcyclicBranches) {
  std::vector<Index3> v;
  for (int y = 0; y <= 2; ++y) v.push_back({5, y, 2});  // 3-voxel tail
  for (int x = 2; x <= 9; ++x)
    for (int y = 3; y <= 8; ++y)
      if (x == 2 || x == 9 || y == 3 || y == 8) v.push_back({x, y, 2});
  Skeleton s = make_skeleton({12, 10, 5}, v);
  VesselTree t = build_tree(s, {5, 0, 2});

  EXPECT_FALSE(t.is_forest);
  ASSERT_EQ(t.roots.size(), 1u);
  // acyclic: branch count = node count - 1 on a connected tree
  EXPECT_EQ(t.branches.size(), t.nodes.size() - 1);
  EXPECT_EQ(count_bifurcations(t), 1u);
  EXPECT_EQ(generations(t), (std::multiset<int>{0, 1, 1}));
  expect_full_coverage(t, s);  // breaking an edge loses no voxels

  // identical rerun gives identical structure
  VesselTree t2 = build_tree(s, {5, 0, 2});
  ASSERT_EQ(t.branches.size(), t2.branches.size());
  for (std::size_t i = 0; i < t.branches.size(); ++i) {
    EXPECT_EQ(t.branches[i].voxels, t2.branches[i].voxels);
    EXPECT_EQ(t.branches[i].generation, t2.branches[i].generation);
  }
}

namespace {

// depth-2 binary tree in the xy plane: trunk, two arms, four sub-arms
std::vector<Index3> depth2_tree() {
  std::vector<Index3> v;
  for (int y = 2; y <= 7; ++y) v.push_back({20, y, 3});  // trunk
  v.push_back({20, 8, 3});                               // first junction
  for (int k = 1; k <= 4; ++k) v.push_back({20 - k, 8 + k, 3});
  for (int k = 1; k <= 4; ++k) v.push_back({20 + k, 8 + k, 3});
  v.push_back({15, 13, 3});  // left junction
  v.push_back({25, 13, 3});  // right junction
  for (int k = 1; k <= 4; ++k) v.push_back({15 - k, 13 + k, 3});
  for (int k = 1; k <= 4; ++k) v.push_back({15 + k, 13 + k, 3});
  for (int k = 1; k <= 4; ++k) v.push_back({25 - k, 13 + k, 3});
  for (int k = 1; k <= 4; ++k) v.push_back({25 + k, 13 + k, 3});
  return v;
}

}  // namespace

TEST(BuildTree, BinaryTreeBifurcationCount) {
  Skeleton s = make_skeleton({40, 26, 7}, depth2_tree());
  VesselTree t = build_tree(s, {20, 2, 3});

  EXPECT_EQ(count_bifurcations(t), 3u);  // 2^2 - 1 for depth 2
  EXPECT_EQ(t.branches.size(), 7u);
  EXPECT_EQ(generations(t), (std::multiset<int>{0, 1, 1, 2, 2, 2, 2}));
  EXPECT_EQ(degree_one_nodes(t), 5u);  // root + 4 leaves
  EXPECT_EQ(count_bifurcations(t) + 1, 4u);  // endpoints - 1 rule on binary trees
  expect_full_coverage(t, s);
}

TEST(BuildTree, DisconnectedSkeletonBecomesFlaggedForest) {
  std::vector<Index3> v;
  for (int x = 1; x <= 8; ++x) v.push_back({x, 1, 1});
  for (int x = 1; x <= 6; ++x) v.push_back({x, 5, 3});
  Skeleton s = make_skeleton({10, 8, 5}, v);
  VesselTree t = build_tree(s, {1, 1, 1});

  EXPECT_TRUE(t.is_forest);
  ASSERT_EQ(t.roots.size(), 2u);
  EXPECT_EQ(t.branches.size(), 2u);
  for (const auto& b : t.branches) EXPECT_EQ(b.generation, 0);
  EXPECT_EQ(count_bifurcations(t), 0u);
  expect_full_coverage(t, s);
}

TEST(BuildTree, HintTooFarIsAnError) {
  std::vector<Index3> v{{1, 1, 1}, {2, 1, 1}, {3, 1, 1}};
  Skeleton s = make_skeleton({20, 20, 20}, v);
  EXPECT_THROW(build_tree(s, {15, 15, 15}), validation_error);
  // empty skeletons are fine and give an empty tree
  Skeleton empty;
  empty.dims = {4, 4, 4};
  VesselTree t = build_tree(empty, {0, 0, 0});
  EXPECT_TRUE(t.nodes.empty());
  EXPECT_TRUE(t.branches.empty());
}

// --- branch-level decomposition ------------------------------------------------------

namespace {

struct DecomposeFixture {
  Skeleton skel;
  VesselTree tree;
  LabelMask mask, lung, heart;

  explicit DecomposeFixture(bool lung_from_y, int lung_min_y, int heart_max_y) {
    Index3 dims{40, 26, 7};
    skel = make_skeleton(dims, depth2_tree());
    tree = build_tree(skel, {20, 2, 3});
    mask = skel.to_mask();
    lung = LabelMask::zeros(dims);
    heart = LabelMask::zeros(dims);
    for (int z = 0; z < dims[2]; ++z)
      for (int y = 0; y < dims[1]; ++y)
        for (int x = 0; x < dims[0]; ++x) {
          if (lung_from_y && y >= lung_min_y) lung.at(x, y, z) = 1;
          if (y <= heart_max_y) heart.at(x, y, z) = 1;
        }
  }
};

std::set<std::size_t> mask_set(const LabelMask& m) {
  std::set<std::size_t> s;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.data[i]) s.insert(i);
  return s;
}

}  // namespace

TEST(Decompose, MaskInsideHeartFillsAllLevels) {
  Index3 dims{34, 5, 5};
  std::vector<Index3> line;
  for (int x = 2; x <= 31; ++x) line.push_back({x, 2, 2});
  Skeleton s = make_skeleton(dims, line);
  VesselTree t = build_tree(s, {2, 2, 2});
  LabelMask mask = s.to_mask();
  LabelMask lung = LabelMask::zeros(dims);
  LabelMask heart = LabelMask::zeros(dims);
  for (auto& v : heart.data) v = 1;

  BranchLevels lv = decompose_levels(t, mask, lung, heart);
  EXPECT_FALSE(lv.heart_fallback);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(lv.levels[std::size_t(k)].data, mask.data);
}

TEST(Decompose, BranchesLandInRuleImpliedLevels) {
  // lung begins at y=4, so the trunk's midpoint (20,5) is intrapulmonary:
  // entry generation 0 -> trunk ranks 2 (levels[1]), arms 3 (levels[2]),
  // sub-arms 4 (levels[2]); heart covers y<=2 (trunk base)
  DecomposeFixture f(true, 4, 2);
  BranchLevels lv = decompose_levels(f.tree, f.mask, f.lung, f.heart);
  EXPECT_FALSE(lv.heart_fallback);

  for (const auto& br : f.tree.branches) {
    int expected_level = br.generation == 0 ? 1 : 2;
    for (std::size_t v : br.voxels) {
      if (f.heart.data[v]) continue;  // cardiac portion belongs to L0
      for (int k = 0; k < 4; ++k) {
        bool in = lv.levels[std::size_t(k)].data[v] != 0;
        EXPECT_EQ(in, k >= expected_level)
            << "gen " << br.generation << " voxel in level " << k;
      }
    }
  }
  // nesting and the delta partition
  std::size_t mask_voxels = mask_set(f.mask).size();
  std::size_t delta_total = mask_set(lv.levels[0]).size();
  for (int k = 1; k < 4; ++k) {
    auto prev = mask_set(lv.levels[std::size_t(k - 1)]);
    auto cur = mask_set(lv.levels[std::size_t(k)]);
    for (std::size_t v : prev) EXPECT_EQ(cur.count(v), 1u) << "nesting broken at " << k;
    delta_total += cur.size() - prev.size();
  }
  EXPECT_EQ(delta_total, mask_voxels);
  EXPECT_EQ(mask_set(lv.levels[3]), mask_set(f.mask));
}

TEST(Decompose, LateLungEntryShiftsLevels) {
  // lung begins at y=10: the arms (generation 1, midpoints at y=11) are the
  // first intrapulmonary branches -> trunk ranks 1, arms 2 (both levels[1]),
  // sub-arms 3 (levels[2])
  DecomposeFixture f(true, 10, 2);
  BranchLevels lv = decompose_levels(f.tree, f.mask, f.lung, f.heart);
  for (const auto& br : f.tree.branches) {
    int expected_level = br.generation <= 1 ? 1 : 2;
    for (std::size_t v : br.voxels) {
      if (f.heart.data[v]) continue;
      EXPECT_EQ(lv.levels[std::size_t(expected_level)].data[v] != 0, true);
      EXPECT_EQ(lv.levels[std::size_t(expected_level - 1)].data[v] != 0, false);
    }
  }
}

TEST(Decompose, EmptyHeartFallsBackToExtrapulmonaryCore) {
  DecomposeFixture f(true, 10, -1);  // heart mask left empty
  BranchLevels lv = decompose_levels(f.tree, f.mask, f.lung, f.heart);
  EXPECT_TRUE(lv.heart_fallback);
  for (std::size_t i = 0; i < f.mask.size(); ++i) {
    bool expect_l0 = f.mask.data[i] && !f.lung.data[i];
    EXPECT_EQ(lv.levels[0].data[i] != 0, expect_l0);
  }
}

TEST(Decompose, DilatedMaskFollowsNearestBranch) {
  DecomposeFixture f(true, 4, 2);
  // thicken the mask by one voxel in-plane; levels must still partition it
  LabelMask fat = LabelMask::like(f.mask);
  for (int z = 0; z < f.mask.dims[2]; ++z)
    for (int y = 0; y < f.mask.dims[1]; ++y)
      for (int x = 0; x < f.mask.dims[0]; ++x) {
        bool any = false;
        for (int dy = -1; dy <= 1 && !any; ++dy)
          for (int dx = -1; dx <= 1 && !any; ++dx)
            if (f.mask.inside(x + dx, y + dy, z) && f.mask.at(x + dx, y + dy, z)) any = true;
        if (any) fat.at(x, y, z) = 1;
      }
  BranchLevels lv = decompose_levels(f.tree, fat, f.lung, f.heart);

  EXPECT_EQ(mask_set(lv.levels[3]), mask_set(fat));
  for (int k = 1; k < 4; ++k)
    for (std::size_t i = 0; i < fat.size(); ++i)
      ASSERT_FALSE(lv.levels[std::size_t(k - 1)].data[i] && !lv.levels[std::size_t(k)].data[i]);

  // a voxel beside the trunk inherits the trunk's level, one beside a
  // sub-arm tip inherits the sub-arm's
  EXPECT_NE(lv.levels[1].at(21, 5, 3), 0);
  EXPECT_EQ(lv.levels[1].at(12, 17, 3), 0);
  EXPECT_NE(lv.levels[2].at(12, 17, 3), 0);
}

TEST(Decompose, MismatchedGeometryRejected) {
  DecomposeFixture f(true, 4, 2);
  LabelMask wrong = LabelMask::zeros({4, 4, 4});
  EXPECT_THROW(decompose_levels(f.tree, f.mask, wrong, f.heart), validation_error);
}
