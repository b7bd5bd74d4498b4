#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "mocap/qp/clique.hpp"

namespace mocap::qp {

int CliqueSubproblem::dim() const {
  int d = 0;
  for (const auto& g : groups) d += g.dim;
  return d;
}

int CliqueSubproblem::offset_of(int group_id) const {
  int offset = 0;
  for (const auto& g : groups) {
    if (g.id == group_id) return offset;
    offset += g.dim;
  }
  return -1;
}

const VariableGroup* CliqueSubproblem::find(int group_id) const {
  for (const auto& g : groups)
    if (g.id == group_id) return &g;
  return nullptr;
}

void CliqueSubproblem::check() const {
  const int n = dim();
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("clique " + std::to_string(id) + ": " + what);
  };
  std::set<int> ids;
  for (const auto& g : groups) {
    if (g.dim < 0) fail("negative group dimension");
    if (!ids.insert(g.id).second) fail("group " + std::to_string(g.id) + " listed twice");
  }
  if (H.rows() != n || H.cols() != n) fail("H is not " + std::to_string(n) + "x" + std::to_string(n));
  if (h.size() != n) fail("h has wrong length");
  if (A.cols() != n && A.rows() > 0) fail("A has wrong column count");
  if (b.size() != A.rows()) fail("b and A row counts differ");
  if (!row_tags.empty() && static_cast<int>(row_tags.size()) != A.rows())
    fail("row tags do not match constraint rows");
  const double tol = 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff());
  // Tiled so that the transposed reads stay in cache on large cliques.
  constexpr int kTile = 64;
  for (int j0 = 0; j0 < n; j0 += kTile)
    for (int i0 = j0; i0 < n; i0 += kTile) {
      const int ni = std::min(kTile, n - i0), nj = std::min(kTile, n - j0);
      if ((H.block(i0, j0, ni, nj) - H.block(j0, i0, nj, ni).transpose()).cwiseAbs().maxCoeff() > tol)
        fail("H is not symmetric");
    }
}

int QuadMessage::dim() const {
  int d = 0;
  for (const auto& g : groups) d += g.dim;
  return d;
}

std::vector<int> CliqueTree::leaves() const {
  std::vector<int> out;
  for (int a = 0; a < size(); ++a)
    if (children[a].empty()) out.push_back(a);
  return out;
}

CliqueTree build_chain_tree(int n_cliques, int root) {
  if (n_cliques <= 0) throw std::invalid_argument("chain tree needs at least one clique");
  if (root < 0 || root >= n_cliques)
    throw std::invalid_argument("root " + std::to_string(root) +
                                " outside [0, " + std::to_string(n_cliques) + ")");
  CliqueTree tree;
  tree.root = root;
  tree.parent.assign(n_cliques, -1);
  tree.children.assign(n_cliques, {});
  tree.separators.assign(n_cliques, {});
  for (int a = 0; a < n_cliques; ++a) {
    if (a < root) tree.parent[a] = a + 1;
    if (a > root) tree.parent[a] = a - 1;
    if (tree.parent[a] >= 0) tree.children[tree.parent[a]].push_back(a);
  }
  return tree;
}

int middle_root(int n_points) { return std::max(0, n_points / 2 - 1); }

void attach_separators(CliqueTree& tree, const std::vector<CliqueSubproblem>& subs) {
  if (static_cast<int>(subs.size()) != tree.size())
    throw std::invalid_argument("tree and subproblem counts differ");
  tree.separators.assign(tree.size(), {});
  for (int a = 0; a < tree.size(); ++a) {
    const int p = tree.parent[a];
    if (p < 0) continue;
    for (const auto& g : subs[a].groups) {
      const VariableGroup* other = subs[p].find(g.id);
      if (!other) continue;
      if (other->dim != g.dim)
        throw std::invalid_argument("group " + std::to_string(g.id) +
                                    " has different sizes in cliques " +
                                    std::to_string(a) + " and " + std::to_string(p));
      tree.separators[a].push_back(g.id);
    }
  }
}

bool has_clique_intersection_property(const CliqueTree& tree,
                                      const std::vector<CliqueSubproblem>& subs) {
  // A group's cliques are connected iff exactly one of them has a parent
  // outside the set (or is the root).
  std::map<int, std::vector<int>> holders;
  for (int a = 0; a < tree.size(); ++a)
    for (const auto& g : subs[a].groups) holders[g.id].push_back(a);
  for (const auto& [id, cliques] : holders) {
    const std::set<int> in(cliques.begin(), cliques.end());
    int tops = 0;
    for (int a : cliques)
      if (tree.parent[a] < 0 || !in.contains(tree.parent[a])) ++tops;
    if (tops != 1) return false;
  }
  return true;
}

std::vector<std::vector<int>> upward_waves(const CliqueTree& tree) {
  std::vector<int> height(tree.size(), -1);
  // Children always sit farther from the root; resolve by repeated sweeps
  // ordered by depth.
  std::vector<int> depth(tree.size(), 0), order;
  order.push_back(tree.root);
  for (std::size_t k = 0; k < order.size(); ++k)
    for (int c : tree.children[order[k]]) {
      depth[c] = depth[order[k]] + 1;
      order.push_back(c);
    }
  if (static_cast<int>(order.size()) != tree.size())
    throw std::invalid_argument("clique tree is not connected");
  int max_height = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int hgt = 0;
    for (int c : tree.children[*it]) hgt = std::max(hgt, height[c] + 1);
    height[*it] = hgt;
    max_height = std::max(max_height, hgt);
  }
  std::vector<std::vector<int>> waves(max_height + 1);
  for (int a = 0; a < tree.size(); ++a) waves[height[a]].push_back(a);
  return waves;
}

}  // namespace mocap::qp
