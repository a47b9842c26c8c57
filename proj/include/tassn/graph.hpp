#pragma once

// Mesh-graph algebra for the spectral GCN: adjacency from triangle faces,
// normalized Laplacian with its Chebyshev scaling, Chebyshev basis
// propagation on tape tensors, and a multilevel coarsening hierarchy with
// pooling / upsampling maps.

#include "tassn/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace tassn::graph {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct MeshGraph {
  int num_vertices = 0;
  std::vector<std::array<int, 3>> faces;  // empty for coarsened levels
  Mat adjacency;                          // symmetric 0/1, zero diagonal
  Vec degree;
};

struct Laplacian {
  Mat L;           // I - D^{-1/2} A D^{-1/2}
  double lambda_max = 0.0;
  Mat L_scaled;    // 2 L / lambda_max - I
};

namespace detail {

inline void check_connected(const Mat& A, int C) {
  std::vector<char> seen(C, 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  int visited = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int u = 0; u < C; ++u)
      if (A(v, u) != 0.0 && !seen[u]) {
        seen[u] = 1;
        ++visited;
        stack.push_back(u);
      }
  }
  if (visited != C)
    throw std::invalid_argument("graph is disconnected (" + std::to_string(visited) +
                                " of " + std::to_string(C) + " vertices reachable)");
}

inline MeshGraph from_adjacency(Mat A) {
  MeshGraph g;
  g.num_vertices = static_cast<int>(A.rows());
  g.degree = A.rowwise().sum();
  g.adjacency = std::move(A);
  return g;
}

}  // namespace detail

inline MeshGraph build_graph(const std::vector<std::array<int, 3>>& faces, int C) {
  if (C <= 0) throw std::invalid_argument("build_graph: C must be positive");
  Mat A = Mat::Zero(C, C);
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      if (a < 0 || a >= C || b < 0 || b >= C)
        throw std::invalid_argument("build_graph: face index out of range");
      if (a == b) throw std::invalid_argument("build_graph: degenerate face");
      A(a, b) = 1.0;
      A(b, a) = 1.0;
    }
  }
  detail::check_connected(A, C);
  MeshGraph g = detail::from_adjacency(std::move(A));
  g.faces = faces;
  return g;
}

// Largest eigenvalue of the (symmetric PSD) Laplacian by power iteration.
inline double power_iteration_lambda_max(const Mat& L, double rel_tol = 1e-8,
                                         int max_iters = 10000) {
  const int n = static_cast<int>(L.rows());
  Vec v = Vec::Ones(n);
  for (int i = 0; i < n; ++i) v(i) += 0.01 * std::sin(static_cast<double>(i + 1));
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vec w = L * v;
    double nl = w.norm();
    if (nl == 0.0) return 0.0;
    w /= nl;
    double next = w.dot(L * w);
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) return next;
    lambda = next;
    v = std::move(w);
  }
  return lambda;
}

inline Laplacian normalized_laplacian(const MeshGraph& g) {
  const int C = g.num_vertices;
  for (int i = 0; i < C; ++i)
    if (g.degree(i) < 1.0)
      throw std::invalid_argument("normalized_laplacian: zero-degree vertex " +
                                  std::to_string(i));
  Vec dinv_sqrt = g.degree.array().rsqrt();
  Laplacian lap;
  lap.L = Mat::Identity(C, C) -
          (dinv_sqrt.asDiagonal() * g.adjacency * dinv_sqrt.asDiagonal());
  lap.L = 0.5 * (lap.L + lap.L.transpose().eval());  // enforce exact symmetry
  // Power iteration approaches lambda_max from below; converge well past the
  // 1e-8 contract and pad by 1e-9 so the scaled spectrum stays inside [-1, 1].
  lap.lambda_max = power_iteration_lambda_max(lap.L, 1e-13) * (1.0 + 1e-9);
  lap.L_scaled = (2.0 / lap.lambda_max) * lap.L - Mat::Identity(C, C);
  return lap;
}

// [T_0(L^)X, ..., T_S(L^)X] via T_0 = I, T_1 = L^, T_k = 2 L^ T_{k-1} - T_{k-2}.
inline std::vector<ad::Var> chebyshev_propagate(ad::Tape& tape, const Laplacian& lap,
                                                ad::Var X, int S) {
  if (S < 0) throw std::invalid_argument("chebyshev_propagate: S must be >= 0");
  std::vector<ad::Var> basis;
  basis.reserve(S + 1);
  basis.push_back(X);
  if (S >= 1) basis.push_back(tape.const_matmul(lap.L_scaled, X));
  for (int k = 2; k <= S; ++k) {
    ad::Var t = tape.const_matmul(lap.L_scaled, basis[k - 1]);
    basis.push_back(tape.axpby(2.0, t, -1.0, basis[k - 2]));
  }
  return basis;
}

struct HierarchyLevel {
  MeshGraph g;
  Laplacian lap;
  // Maps from this level down to the next-coarser level (empty at the
  // coarsest level). parent_of[i] = coarse parent of fine vertex i.
  std::vector<int> parent_of;
  std::vector<std::vector<int>> children;  // indexed by coarse vertex
};

struct GraphHierarchy {
  std::vector<HierarchyLevel> levels;  // finest first

  int num_levels() const { return static_cast<int>(levels.size()); }
  int vertices_at(int level) const { return levels.at(level).g.num_vertices; }
};

// Greedy heavy-edge matching with uniform edge weights: visit vertices in
// index order, match each unmatched vertex with its lowest-index unmatched
// neighbor; unmatched vertices become singleton parents.
inline std::vector<int> match_level(const MeshGraph& g) {
  const int C = g.num_vertices;
  std::vector<int> parent(C, -1);
  int next = 0;
  for (int v = 0; v < C; ++v) {
    if (parent[v] >= 0) continue;
    int mate = -1;
    for (int u = 0; u < C; ++u)
      if (u != v && g.adjacency(v, u) != 0.0 && parent[u] < 0) {
        mate = u;
        break;
      }
    parent[v] = next;
    if (mate >= 0) parent[mate] = next;
    ++next;
  }
  return parent;
}

inline GraphHierarchy coarsen(const MeshGraph& g, int levels, int min_vertices = 4) {
  if (levels < 1) throw std::invalid_argument("coarsen: levels must be >= 1");
  GraphHierarchy h;
  h.levels.push_back({g, normalized_laplacian(g), {}, {}});
  for (int l = 0; l < levels; ++l) {
    HierarchyLevel& fine = h.levels.back();
    std::vector<int> parent = match_level(fine.g);
    int coarse_count = 1 + *std::max_element(parent.begin(), parent.end());
    if (coarse_count < min_vertices)
      throw std::invalid_argument("coarsen: level " + std::to_string(l + 1) +
                                  " would have " + std::to_string(coarse_count) +
                                  " < " + std::to_string(min_vertices) + " vertices");
    Mat A = Mat::Zero(coarse_count, coarse_count);
    const int C = fine.g.num_vertices;
    for (int v = 0; v < C; ++v)
      for (int u = v + 1; u < C; ++u)
        if (fine.g.adjacency(v, u) != 0.0 && parent[v] != parent[u]) {
          A(parent[v], parent[u]) = 1.0;
          A(parent[u], parent[v]) = 1.0;
        }
    fine.parent_of = parent;
    fine.children.assign(coarse_count, {});
    for (int v = 0; v < C; ++v) fine.children[parent[v]].push_back(v);

    MeshGraph cg = detail::from_adjacency(std::move(A));
    h.levels.push_back({cg, normalized_laplacian(cg), {}, {}});
  }
  return h;
}

// Copies each coarse parent's feature row to all of its fine children.
// Input lives at `level`, output at `level - 1`.
inline ad::Var upsample(ad::Tape& tape, const GraphHierarchy& h, int level, ad::Var coarse) {
  if (level < 1 || level >= h.num_levels())
    throw std::out_of_range("upsample: level out of range");
  const HierarchyLevel& fine = h.levels[level - 1];
  const int Cf = fine.g.num_vertices;
  const int Cc = h.levels[level].g.num_vertices;
  Mat U = Mat::Zero(Cf, Cc);
  for (int v = 0; v < Cf; ++v) U(v, fine.parent_of[v]) = 1.0;
  return tape.const_matmul(U, coarse);
}

// Mean over each parent's children. Input lives at `level`, output at `level + 1`.
inline ad::Var pool(ad::Tape& tape, const GraphHierarchy& h, int level, ad::Var fine_feat) {
  if (level < 0 || level + 1 >= h.num_levels())
    throw std::out_of_range("pool: level out of range");
  const HierarchyLevel& fine = h.levels[level];
  const int Cf = fine.g.num_vertices;
  const int Cc = h.levels[level + 1].g.num_vertices;
  Mat P = Mat::Zero(Cc, Cf);
  for (int p = 0; p < Cc; ++p)
    for (int v : fine.children[p]) P(p, v) = 1.0 / static_cast<double>(fine.children[p].size());
  return tape.const_matmul(P, fine_feat);
}

// Plain-text topology format: first line "C F", then F lines of three
// 0-based vertex indices.
inline void save_topology(const std::string& path,
                          const std::vector<std::array<int, 3>>& faces, int C) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << C << " " << faces.size() << "\n";
  for (const auto& f : faces) out << f[0] << " " << f[1] << " " << f[2] << "\n";
}

inline MeshGraph load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  int C = 0, F = 0;
  if (!(in >> C >> F)) throw std::runtime_error("bad topology header in " + path);
  std::vector<std::array<int, 3>> faces(F);
  for (auto& f : faces)
    if (!(in >> f[0] >> f[1] >> f[2]))
      throw std::runtime_error("truncated topology file " + path);
  return build_graph(faces, C);
}

}  // namespace tassn::graph
