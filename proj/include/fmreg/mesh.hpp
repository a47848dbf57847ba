// Copyright 2026 The fmreg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "fmreg/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <variant>

namespace fmreg {

/// Triangle mesh with row-per-vertex coordinates. Normals are optional (empty if absent).
struct TriMesh {
  Points V;
  Faces F;
  Points N;

  Index num_vertices() const { return V.rows(); }
  Index num_faces() const { return F.rows(); }
};

struct PointCloud {
  Points P;
  Points N;

  Index size() const { return P.rows(); }
};

using Surface = std::variant<TriMesh, PointCloud>;

inline const Points& positions(const Surface& s) {
  return std::holds_alternative<TriMesh>(s) ? std::get<TriMesh>(s).V : std::get<PointCloud>(s).P;
}

/// Throws on out-of-range indices or faces with repeated vertices.
inline void validate(const TriMesh& mesh) {
  const Index n = mesh.num_vertices();
  std::vector<Index> degenerate;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int v = mesh.F(f, c);
      if (v < 0 || v >= n) fail(ErrorKind::kIndexOutOfRange, "face ", f, " references vertex ", v, " but mesh has ", n, " vertices");
    }
    if (mesh.F(f, 0) == mesh.F(f, 1) || mesh.F(f, 1) == mesh.F(f, 2) || mesh.F(f, 0) == mesh.F(f, 2)) degenerate.push_back(f);
  }
  if (!degenerate.empty()) {
    std::ostringstream oss;
    oss << degenerate.size() << " face(s) with repeated vertices:";
    for (std::size_t i = 0; i < std::min<std::size_t>(degenerate.size(), 16); ++i) oss << ' ' << degenerate[i];
    if (degenerate.size() > 16) oss << " ...";
    throw Error(ErrorKind::kDegenerateFace, oss.str());
  }
}

inline double face_area(const TriMesh& mesh, Index f) {
  const Vec3 a = row3(mesh.V, mesh.F(f, 0));
  const Vec3 b = row3(mesh.V, mesh.F(f, 1));
  const Vec3 c = row3(mesh.V, mesh.F(f, 2));
  return 0.5 * (b - a).cross(c - a).norm();
}

inline double total_area(const TriMesh& mesh) {
  double sum = 0.0;
  for (Index f = 0; f < mesh.num_faces(); ++f) sum += face_area(mesh, f);
  return sum;
}

/// Barycentric vertex areas: a third of each incident triangle.
/// Vertices with no incident face get area 0.
inline VecX vertex_areas(const TriMesh& mesh) {
  VecX a = VecX::Zero(mesh.num_vertices());
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const double third = face_area(mesh, f) / 3.0;
    for (int c = 0; c < 3; ++c) a[mesh.F(f, c)] += third;
  }
  return a;
}

inline std::vector<Index> isolated_vertices(const TriMesh& mesh) {
  std::vector<char> used(mesh.num_vertices(), 0);
  for (Index f = 0; f < mesh.num_faces(); ++f)
    for (int c = 0; c < 3; ++c) used[mesh.F(f, c)] = 1;
  std::vector<Index> out;
  for (Index i = 0; i < mesh.num_vertices(); ++i)
    if (!used[i]) out.push_back(i);
  return out;
}

inline Points face_normals(const TriMesh& mesh) {
  Points N(mesh.num_faces(), 3);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 a = row3(mesh.V, mesh.F(f, 0));
    const Vec3 b = row3(mesh.V, mesh.F(f, 1));
    const Vec3 c = row3(mesh.V, mesh.F(f, 2));
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    N.row(f) = (len > 0 ? Vec3(n / len) : Vec3::Zero()).transpose();
  }
  return N;
}

/// Area-weighted vertex normals. Vertices whose weighted sum vanishes get a zero
/// normal and are listed in `flagged` when provided.
inline Points vertex_normals(const TriMesh& mesh, std::vector<Index>* flagged = nullptr) {
  Points N = Points::Zero(mesh.num_vertices(), 3);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 a = row3(mesh.V, mesh.F(f, 0));
    const Vec3 b = row3(mesh.V, mesh.F(f, 1));
    const Vec3 c = row3(mesh.V, mesh.F(f, 2));
    const Vec3 n = (b - a).cross(c - a);  // |n| = 2 * area
    for (int k = 0; k < 3; ++k) N.row(mesh.F(f, k)) += n.transpose();
  }
  const double scale = std::max(1e-300, mesh.V.cwiseAbs().maxCoeff());
  for (Index i = 0; i < N.rows(); ++i) {
    const double len = N.row(i).norm();
    if (len <= 1e-14 * scale * scale) {
      N.row(i).setZero();
      if (flagged) flagged->push_back(i);
    } else {
      N.row(i) /= len;
    }
  }
  return N;
}

inline double bbox_diagonal(const Points& P) {
  if (P.rows() == 0) return 0.0;
  return (P.colwise().maxCoeff() - P.colwise().minCoeff()).norm();
}

/// Undirected edge list with unique entries (i < j), sorted.
inline std::vector<std::pair<int, int>> edges(const TriMesh& mesh) {
  std::vector<std::pair<int, int>> e;
  e.reserve(mesh.num_faces() * 3);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      int a = mesh.F(f, c), b = mesh.F(f, (c + 1) % 3);
      if (a > b) std::swap(a, b);
      e.emplace_back(a, b);
    }
  }
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

/// Edge-length weighted adjacency lists.
inline std::vector<std::vector<std::pair<int, double>>> adjacency(const TriMesh& mesh) {
  std::vector<std::vector<std::pair<int, double>>> adj(mesh.num_vertices());
  for (const auto& [a, b] : edges(mesh)) {
    const double len = (mesh.V.row(a) - mesh.V.row(b)).norm();
    adj[a].emplace_back(b, len);
    adj[b].emplace_back(a, len);
  }
  return adj;
}

/// Dijkstra edge-path distances from a set of sources (infinity if unreachable).
inline VecX dijkstra(const std::vector<std::vector<std::pair<int, double>>>& adj, const std::vector<int>& sources,
                     double cutoff = std::numeric_limits<double>::infinity()) {
  VecX dist = VecX::Constant(static_cast<Index>(adj.size()), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (int s : sources) {
    dist[s] = 0.0;
    pq.emplace(0.0, s);
  }
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u] || d > cutoff) continue;
    for (auto [v, w] : adj[u]) {
      const double nd = d + w;
      if (nd < dist[v]) {
        dist[v] = nd;
        pq.emplace(nd, v);
      }
    }
  }
  return dist;
}

/// Connected component label per vertex (isolated vertices get their own label).
inline std::vector<int> vertex_components(const TriMesh& mesh, int* count = nullptr) {
  const Index n = mesh.num_vertices();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    for (int c = 1; c < 3; ++c) {
      const int a = find(mesh.F(f, 0)), b = find(mesh.F(f, c));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<int> label(n, -1);
  std::map<int, int> ids;
  for (Index i = 0; i < n; ++i) {
    const int r = find(static_cast<int>(i));
    auto [it, inserted] = ids.emplace(r, static_cast<int>(ids.size()));
    label[i] = it->second;
  }
  if (count) *count = static_cast<int>(ids.size());
  return label;
}

/// Keeps the faces selected by `keep` and drops vertices no face references.
/// `source` receives, for each output vertex, its index in the input mesh.
inline TriMesh compact(const TriMesh& mesh, const std::vector<char>& keep_face, std::vector<int>* source = nullptr) {
  std::vector<int> remap(mesh.num_vertices(), -1);
  std::vector<int> src;
  Index kept = 0;
  for (Index f = 0; f < mesh.num_faces(); ++f) kept += keep_face[f] ? 1 : 0;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    if (!keep_face[f]) continue;
    for (int c = 0; c < 3; ++c) remap[mesh.F(f, c)] = 1;
  }
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    if (remap[i] >= 0) {
      remap[i] = static_cast<int>(src.size());
      src.push_back(static_cast<int>(i));
    }
  }
  TriMesh out;
  out.V.resize(static_cast<Index>(src.size()), 3);
  for (Index i = 0; i < out.V.rows(); ++i) out.V.row(i) = mesh.V.row(src[i]);
  if (mesh.N.rows() == mesh.V.rows()) {
    out.N.resize(out.V.rows(), 3);
    for (Index i = 0; i < out.N.rows(); ++i) out.N.row(i) = mesh.N.row(src[i]);
  }
  out.F.resize(kept, 3);
  Index r = 0;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    if (!keep_face[f]) continue;
    for (int c = 0; c < 3; ++c) out.F(r, c) = remap[mesh.F(f, c)];
    ++r;
  }
  if (source) *source = std::move(src);
  return out;
}

/// Largest connected component by face count.
inline TriMesh largest_component(const TriMesh& mesh, std::vector<int>* source = nullptr) {
  int count = 0;
  const auto label = vertex_components(mesh, &count);
  std::vector<Index> faces_per(count, 0);
  for (Index f = 0; f < mesh.num_faces(); ++f) ++faces_per[label[mesh.F(f, 0)]];
  const int best = static_cast<int>(std::max_element(faces_per.begin(), faces_per.end()) - faces_per.begin());
  std::vector<char> keep(mesh.num_faces());
  for (Index f = 0; f < mesh.num_faces(); ++f) keep[f] = label[mesh.F(f, 0)] == best;
  return compact(mesh, keep, source);
}

inline TriMesh transformed(const TriMesh& mesh, const Mat3& R, const Vec3& t, double scale = 1.0) {
  TriMesh out = mesh;
  for (Index i = 0; i < out.V.rows(); ++i) out.V.row(i) = (scale * (R * row3(mesh.V, i)) + t).transpose();
  if (mesh.N.rows() == mesh.V.rows())
    for (Index i = 0; i < out.N.rows(); ++i) out.N.row(i) = (R * row3(mesh.N, i)).transpose();
  return out;
}

/// Reorders vertices so that new vertex i is old vertex perm[i].
inline TriMesh permuted(const TriMesh& mesh, const std::vector<int>& perm) {
  TriMesh out;
  const Index n = mesh.num_vertices();
  std::vector<int> inverse(n);
  out.V.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    out.V.row(i) = mesh.V.row(perm[i]);
    inverse[perm[i]] = static_cast<int>(i);
  }
  out.F = mesh.F;
  for (Index f = 0; f < out.F.rows(); ++f)
    for (int c = 0; c < 3; ++c) out.F(f, c) = inverse[mesh.F(f, c)];
  return out;
}

}  // namespace fmreg
