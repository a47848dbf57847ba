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

// Lightweight meshing: implicit surface extraction, edge-collapse decimation and
// tangential relaxation. Used to build procedural fixtures and to simplify scans.

#include "fmreg/mesh.hpp"

#include <functional>
#include <queue>
#include <unordered_map>

namespace fmreg {

using ScalarField = std::function<double(const Vec3&)>;

/// Moves points onto the zero level set of `f` by damped Newton steps along the
/// numerical gradient.
inline void project_to_level_set(const ScalarField& f, Points& V, double h, int iterations = 4) {
  for (Index i = 0; i < V.rows(); ++i) {
    Vec3 p = row3(V, i);
    for (int it = 0; it < iterations; ++it) {
      const double v = f(p);
      Vec3 g;
      for (int c = 0; c < 3; ++c) {
        Vec3 e = Vec3::Zero();
        e[c] = 1e-3 * h;
        g[c] = (f(p + e) - f(p - e)) / (2e-3 * h);
      }
      const double g2 = g.squaredNorm();
      if (g2 < 1e-20) break;
      Vec3 step = v * g / g2;
      if (step.norm() > h) step *= h / step.norm();
      p -= step;
    }
    V.row(i) = p.transpose();
  }
}

/// Naive surface nets over a regular grid: one vertex per sign-changing cell, one quad per
/// sign-changing grid edge, split along its shorter diagonal. Negative values are inside;
/// faces are oriented outward.
inline TriMesh surface_nets(const ScalarField& f, const Vec3& lo, const Vec3& hi, double h) {
  require(h > 0, "surface_nets: spacing must be positive");
  const Eigen::Vector3i n = ((hi - lo) / h).array().ceil().cast<int>().matrix() + Eigen::Vector3i::Ones();
  auto gid = [&](int i, int j, int k) { return (static_cast<long>(k) * n[1] + j) * n[0] + i; };
  auto point = [&](int i, int j, int k) { return Vec3(lo + h * Vec3(i, j, k)); };
  std::vector<double> value(static_cast<std::size_t>(n[0]) * n[1] * n[2]);
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) value[gid(i, j, k)] = f(point(i, j, k));

  std::unordered_map<long, int> cell_vertex;
  std::vector<Vec3> verts;
  for (int k = 0; k + 1 < n[2]; ++k)
    for (int j = 0; j + 1 < n[1]; ++j)
      for (int i = 0; i + 1 < n[0]; ++i) {
        Vec3 sum = Vec3::Zero();
        int crossings = 0;
        for (int a = 0; a < 8; ++a) {
          const int ai = a & 1, aj = (a >> 1) & 1, ak = (a >> 2) & 1;
          for (int axis = 0; axis < 3; ++axis) {
            if ((a >> axis) & 1) continue;
            const int b = a | (1 << axis);
            const int bi = b & 1, bj = (b >> 1) & 1, bk = (b >> 2) & 1;
            const double va = value[gid(i + ai, j + aj, k + ak)], vb = value[gid(i + bi, j + bj, k + bk)];
            if ((va < 0) == (vb < 0)) continue;
            const double t = va / (va - vb);
            sum += point(i + ai, j + aj, k + ak) + t * (point(i + bi, j + bj, k + bk) - point(i + ai, j + aj, k + ak));
            ++crossings;
          }
        }
        if (crossings == 0) continue;
        cell_vertex[gid(i, j, k)] = static_cast<int>(verts.size());
        verts.push_back(sum / crossings);
      }

  std::vector<std::array<int, 3>> tris;
  auto cell = [&](int i, int j, int k) { return cell_vertex.at(gid(i, j, k)); };
  auto emit_quad = [&](std::array<int, 4> q) {
    const double d02 = (verts[q[0]] - verts[q[2]]).squaredNorm(), d13 = (verts[q[1]] - verts[q[3]]).squaredNorm();
    if (d02 <= d13) {
      tris.push_back({q[0], q[1], q[2]});
      tris.push_back({q[0], q[2], q[3]});
    } else {
      tris.push_back({q[0], q[1], q[3]});
      tris.push_back({q[1], q[2], q[3]});
    }
  };
  for (int k = 1; k + 1 < n[2]; ++k)
    for (int j = 1; j + 1 < n[1]; ++j)
      for (int i = 1; i + 1 < n[0]; ++i) {
        const bool inside = value[gid(i, j, k)] < 0;
        // Edge along x: cells around it ordered counter-clockwise seen from +x (y, z plane).
        if (i + 1 < n[0] && inside != (value[gid(i + 1, j, k)] < 0)) {
          std::array<int, 4> q{cell(i, j - 1, k - 1), cell(i, j, k - 1), cell(i, j, k), cell(i, j - 1, k)};
          if (!inside) std::reverse(q.begin(), q.end());
          emit_quad(q);
        }
        if (j + 1 < n[1] && inside != (value[gid(i, j + 1, k)] < 0)) {
          std::array<int, 4> q{cell(i - 1, j, k - 1), cell(i - 1, j, k), cell(i, j, k), cell(i, j, k - 1)};
          if (!inside) std::reverse(q.begin(), q.end());
          emit_quad(q);
        }
        if (k + 1 < n[2] && inside != (value[gid(i, j, k + 1)] < 0)) {
          std::array<int, 4> q{cell(i - 1, j - 1, k), cell(i, j - 1, k), cell(i, j, k), cell(i - 1, j, k)};
          if (!inside) std::reverse(q.begin(), q.end());
          emit_quad(q);
        }
      }

  TriMesh mesh;
  mesh.V.resize(static_cast<Index>(verts.size()), 3);
  for (std::size_t v = 0; v < verts.size(); ++v) mesh.V.row(static_cast<Index>(v)) = verts[v].transpose();
  mesh.F.resize(static_cast<Index>(tris.size()), 3);
  for (std::size_t t = 0; t < tris.size(); ++t) mesh.F.row(static_cast<Index>(t)) << tris[t][0], tris[t][1], tris[t][2];
  return mesh;
}

namespace detail {

inline double triangle_quality(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double area2 = (b - a).cross(c - a).norm();
  const double l2 = (b - a).squaredNorm() + (c - b).squaredNorm() + (a - c).squaredNorm();
  return l2 > 0 ? 2 * std::sqrt(3.0) * area2 / l2 : 0.0;  // 1 for equilateral
}

}  // namespace detail

/// Shortest-edge-first collapse down to `target` vertices. Collapses that would change the
/// topology (link condition), flip a face or create a sliver are skipped. The merged vertex
/// sits at the edge midpoint, optionally moved by `place`. Ties go to the smaller vertex pair.
inline TriMesh decimate(const TriMesh& mesh, int target, const std::function<Vec3(const Vec3&)>& place = nullptr) {
  validate(mesh);
  require(target >= 4, "decimate: target must be at least 4 vertices");
  const Index n = mesh.num_vertices();
  std::vector<Vec3> V(n);
  for (Index i = 0; i < n; ++i) V[i] = row3(mesh.V, i);
  std::vector<std::array<int, 3>> F(mesh.num_faces());
  std::vector<char> face_alive(F.size(), 1);
  std::vector<std::vector<int>> vf(n);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    F[f] = {mesh.F(f, 0), mesh.F(f, 1), mesh.F(f, 2)};
    for (int c = 0; c < 3; ++c) vf[F[f][c]].push_back(static_cast<int>(f));
  }
  std::vector<char> alive(n, 1);
  std::vector<int> version(n, 0);
  int remaining = static_cast<int>(n);

  auto neighbors = [&](int v) {
    std::vector<int> out;
    for (int f : vf[v])
      for (int c = 0; c < 3; ++c)
        if (F[f][c] != v) out.push_back(F[f][c]);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  };

  struct Entry {
    double len2;
    int u, v, vu, vv;
    bool operator>(const Entry& o) const { return std::tie(len2, u, v) > std::tie(o.len2, o.u, o.v); }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
  auto push_edges = [&](int v) {
    for (int w : neighbors(v)) {
      const int a = std::min(v, w), b = std::max(v, w);
      heap.push({(V[a] - V[b]).squaredNorm(), a, b, version[a], version[b]});
    }
  };
  for (Index v = 0; v < n; ++v) push_edges(static_cast<int>(v));

  while (remaining > target && !heap.empty()) {
    const Entry e = heap.top();
    heap.pop();
    const int u = e.u, v = e.v;
    if (!alive[u] || !alive[v] || version[u] != e.vu || version[v] != e.vv) continue;
    std::vector<int> shared;
    for (int f : vf[u])
      if (F[f][0] == v || F[f][1] == v || F[f][2] == v) shared.push_back(f);
    if (shared.empty()) continue;
    // Link condition: common neighbours are exactly the apexes of the shared faces.
    const std::vector<int> nu = neighbors(u), nv = neighbors(v);
    std::vector<int> common;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
    if (common.size() != shared.size() || nu.size() <= 3 || nv.size() <= 3) continue;
    Vec3 p = 0.5 * (V[u] + V[v]);
    if (place) p = place(p);
    bool ok = true;
    for (int w : {u, v}) {
      for (int f : vf[w]) {
        if (std::find(shared.begin(), shared.end(), f) != shared.end()) continue;
        std::array<Vec3, 3> before, after;
        for (int c = 0; c < 3; ++c) {
          before[c] = V[F[f][c]];
          after[c] = (F[f][c] == u || F[f][c] == v) ? p : V[F[f][c]];
        }
        const Vec3 n0 = (before[1] - before[0]).cross(before[2] - before[0]);
        const Vec3 n1 = (after[1] - after[0]).cross(after[2] - after[0]);
        if (n0.dot(n1) <= 0.3 * n0.norm() * n1.norm() || detail::triangle_quality(after[0], after[1], after[2]) < 0.2) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
    }
    if (!ok) continue;
    for (int f : shared) {
      face_alive[f] = 0;
      for (int c = 0; c < 3; ++c) {
        auto& list = vf[F[f][c]];
        list.erase(std::remove(list.begin(), list.end(), f), list.end());
      }
    }
    for (int f : vf[v]) {
      for (int c = 0; c < 3; ++c)
        if (F[f][c] == v) F[f][c] = u;
      vf[u].push_back(f);
    }
    vf[v].clear();
    alive[v] = 0;
    V[u] = p;
    --remaining;
    ++version[u];
    for (int w : neighbors(u)) ++version[w];
    push_edges(u);
    for (int w : neighbors(u)) push_edges(w);
  }

  TriMesh out;
  std::vector<int> id(n, -1);
  int next = 0;
  for (Index i = 0; i < n; ++i)
    if (alive[i]) id[i] = next++;
  out.V.resize(next, 3);
  for (Index i = 0; i < n; ++i)
    if (alive[i]) out.V.row(id[i]) = V[i].transpose();
  std::vector<std::array<int, 3>> tris;
  for (std::size_t f = 0; f < F.size(); ++f)
    if (face_alive[f]) tris.push_back({id[F[f][0]], id[F[f][1]], id[F[f][2]]});
  out.F.resize(static_cast<Index>(tris.size()), 3);
  for (std::size_t f = 0; f < tris.size(); ++f) out.F.row(static_cast<Index>(f)) << tris[f][0], tris[f][1], tris[f][2];
  return out;
}

/// Moves each vertex toward the centroid of its neighbours within its tangent plane,
/// then applies `place` (e.g. reprojection onto the underlying surface).
inline void tangential_relax(TriMesh& mesh, int iterations, double step = 0.5,
                             const std::function<Vec3(const Vec3&)>& place = nullptr) {
  const auto adj = adjacency(mesh);
  for (int it = 0; it < iterations; ++it) {
    const Points N = vertex_normals(mesh);
    Points next = mesh.V;
    for (Index i = 0; i < mesh.num_vertices(); ++i) {
      if (adj[i].empty()) continue;
      Vec3 c = Vec3::Zero();
      for (const auto& [j, w] : adj[i]) c += row3(mesh.V, j);
      c /= static_cast<double>(adj[i].size());
      Vec3 d = c - row3(mesh.V, i);
      const Vec3 nrm = row3(N, i);
      d -= d.dot(nrm) * nrm;
      Vec3 p = row3(mesh.V, i) + step * d;
      if (place) p = place(p);
      next.row(i) = p.transpose();
    }
    mesh.V = std::move(next);
  }
}

}  // namespace fmreg
