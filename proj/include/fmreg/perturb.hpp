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

// Seeded surface perturbations for robustness tests. Magnitudes are fractions of the
// bounding box diagonal, except for downsampling where it is the kept vertex ratio.

#include "fmreg/knn.hpp"
#include "fmreg/mesh.hpp"

#include <random>
#include <set>

namespace fmreg {

enum class PerturbKind { kNoise, kHole, kGlue, kDownsample, kPointCloud, kFrontalView };

struct PerturbationSpec {
  PerturbKind kind = PerturbKind::kNoise;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
};

/// Perturbed surface plus, per output vertex, the input vertex it stands for.
struct PerturbResult {
  Surface surface;
  std::vector<int> source;
};

inline const char* to_string(PerturbKind k) {
  switch (k) {
    case PerturbKind::kNoise: return "noise";
    case PerturbKind::kHole: return "hole";
    case PerturbKind::kGlue: return "glue";
    case PerturbKind::kDownsample: return "downsample";
    case PerturbKind::kPointCloud: return "to-point-cloud";
    case PerturbKind::kFrontalView: return "frontal-view";
  }
  return "?";
}

inline PerturbKind parse_perturb_kind(const std::string& s) {
  for (auto k : {PerturbKind::kNoise, PerturbKind::kHole, PerturbKind::kGlue, PerturbKind::kDownsample,
                 PerturbKind::kPointCloud, PerturbKind::kFrontalView})
    if (s == to_string(k)) return k;
  fail(ErrorKind::kParse, "unknown perturbation '", s, "'");
}

namespace detail {

inline std::vector<int> identity_map(Index n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Remaps face corners through `label`, drops collapsed and duplicate faces, then drops faces
// on edges shared by more than two faces until the result is edge-manifold.
inline Faces remap_faces(const Faces& F, const std::vector<int>& label) {
  std::vector<std::array<int, 3>> tris;
  std::set<std::array<int, 3>> seen;
  for (Index f = 0; f < F.rows(); ++f) {
    std::array<int, 3> t{label[F(f, 0)], label[F(f, 1)], label[F(f, 2)]};
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    std::array<int, 3> key = t;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) continue;
    tris.push_back(t);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<std::pair<int, int>, int> count;
    for (const auto& t : tris)
      for (int c = 0; c < 3; ++c) ++count[std::minmax(t[c], t[(c + 1) % 3])];
    std::vector<std::array<int, 3>> kept;
    for (const auto& t : tris) {
      bool bad = false;
      for (int c = 0; c < 3; ++c) bad = bad || count[std::minmax(t[c], t[(c + 1) % 3])] > 2;
      if (bad) changed = true;
      else kept.push_back(t);
    }
    tris = std::move(kept);
  }
  Faces out(static_cast<Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i) out.row(static_cast<Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
  return out;
}

// Builds a mesh from clustered vertices: cluster positions are centroids, the source of
// each cluster is its member closest to the centroid.
inline PerturbResult cluster_mesh(const TriMesh& mesh, const std::vector<int>& label, int clusters) {
  Points V = Points::Zero(clusters, 3);
  std::vector<int> count(clusters, 0);
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    V.row(label[i]) += mesh.V.row(i);
    ++count[label[i]];
  }
  for (int c = 0; c < clusters; ++c) V.row(c) /= std::max(1, count[c]);
  std::vector<int> rep(clusters, -1);
  std::vector<double> best(clusters, std::numeric_limits<double>::infinity());
  for (Index i = 0; i < mesh.num_vertices(); ++i) {
    const double d = (mesh.V.row(i) - V.row(label[i])).squaredNorm();
    if (d < best[label[i]]) {
      best[label[i]] = d;
      rep[label[i]] = static_cast<int>(i);
    }
  }
  TriMesh merged;
  merged.V = std::move(V);
  merged.F = remap_faces(mesh.F, label);
  std::vector<char> keep(merged.F.rows(), 1);
  std::vector<int> kept;
  TriMesh out = compact(merged, keep, &kept);
  std::vector<int> source(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) source[i] = rep[kept[i]];
  return {std::move(out), std::move(source)};
}

// Grid clustering that only merges vertices joined by mesh edges inside the same cell, so
// nearby but unconnected parts (a hand resting on a thigh) are not welded.
inline int cluster_grid(const TriMesh& mesh, double cell, std::vector<int>& label) {
  const Eigen::RowVector3d lo = mesh.V.colwise().minCoeff();
  const Index n = mesh.num_vertices();
  std::vector<std::array<long, 3>> key(n);
  for (Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) key[i][c] = static_cast<long>(std::floor((mesh.V(i, c) - lo[c]) / cell));
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (Index f = 0; f < mesh.F.rows(); ++f)
    for (int c = 0; c < 3; ++c) {
      const int a = mesh.F(f, c), b = mesh.F(f, (c + 1) % 3);
      if (key[a] == key[b]) parent[find(a)] = find(b);
    }
  std::map<int, int> ids;
  label.assign(n, -1);
  for (Index i = 0; i < n; ++i) {
    auto [it, inserted] = ids.emplace(find(static_cast<int>(i)), static_cast<int>(ids.size()));
    label[i] = it->second;
  }
  return static_cast<int>(ids.size());
}

inline Vec3 seeded_direction(std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> g;
  Vec3 d(g(rng), g(rng), g(rng));
  return d.normalized();
}

}  // namespace detail

inline PerturbResult perturb(const TriMesh& mesh, const PerturbationSpec& spec) {
  validate(mesh);
  require(spec.magnitude >= 0, "perturb: magnitude must be non-negative");
  const Index n = mesh.num_vertices();
  const double diag = bbox_diagonal(mesh.V);
  PerturbResult res;
  switch (spec.kind) {
    case PerturbKind::kNoise: {
      TriMesh out = mesh;
      out.N.resize(0, 3);
      std::mt19937_64 rng(mix_seed(spec.seed));
      std::normal_distribution<double> g(0.0, 1.0);
      const double sigma = spec.magnitude * diag;
      for (Index i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) out.V(i, c) += sigma * g(rng);
      res = {std::move(out), detail::identity_map(n)};
      break;
    }
    case PerturbKind::kHole: {
      const int center = static_cast<int>(mix_seed(spec.seed) % static_cast<std::uint64_t>(n));
      const double radius = spec.magnitude * diag;
      const VecX dist = dijkstra(adjacency(mesh), {center}, radius);
      std::vector<char> keep(mesh.num_faces(), 1);
      for (Index f = 0; f < mesh.num_faces(); ++f)
        for (int c = 0; c < 3; ++c)
          if (dist[mesh.F(f, c)] <= radius) keep[f] = 0;
      std::vector<int> src;
      TriMesh out = compact(mesh, keep, &src);
      res = {std::move(out), std::move(src)};
      break;
    }
    case PerturbKind::kGlue: {
      const double radius = spec.magnitude * diag;
      const KdTree3 tree(mesh.V);
      std::vector<int> parent(n);
      std::iota(parent.begin(), parent.end(), 0);
      auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
      };
      for (Index i = 0; i < n; ++i)
        for (int j : tree.within(row3(mesh.V, i), radius)) {
          const int a = find(static_cast<int>(i)), b = find(j);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
      std::map<int, int> ids;
      std::vector<int> label(n);
      for (Index i = 0; i < n; ++i) label[i] = ids.emplace(find(static_cast<int>(i)), static_cast<int>(ids.size())).first->second;
      res = detail::cluster_mesh(mesh, label, static_cast<int>(ids.size()));
      break;
    }
    case PerturbKind::kDownsample: {
      require(spec.magnitude > 0 && spec.magnitude <= 1, "downsample ratio must lie in (0, 1]");
      const int target = static_cast<int>(std::ceil(spec.magnitude * n));
      if (target >= n) {
        res = {mesh, detail::identity_map(n)};
        break;
      }
      // Smallest grid cell (bisection on a log scale) whose clustering keeps <= target vertices.
      double lo = 1e-6 * diag, hi = diag;
      std::vector<int> label;
      for (int it = 0; it < 60; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (detail::cluster_grid(mesh, mid, label) > target) lo = mid;
        else hi = mid;
      }
      const int clusters = detail::cluster_grid(mesh, hi, label);
      res = detail::cluster_mesh(mesh, label, clusters);
      break;
    }
    case PerturbKind::kPointCloud: {
      PointCloud pc;
      pc.P = mesh.V;
      pc.N = vertex_normals(mesh);
      res = {std::move(pc), detail::identity_map(n)};
      break;
    }
    case PerturbKind::kFrontalView: {
      const Vec3 view = detail::seeded_direction(spec.seed);
      const Points FN = face_normals(mesh);
      std::vector<char> keep(mesh.num_faces());
      for (Index f = 0; f < mesh.num_faces(); ++f) keep[f] = row3(FN, f).dot(view) < 0;
      std::vector<int> src;
      TriMesh out = compact(mesh, keep, &src);
      res = {std::move(out), std::move(src)};
      break;
    }
  }
  const Index remaining = positions(res.surface).rows();
  const bool no_faces = std::holds_alternative<TriMesh>(res.surface) && std::get<TriMesh>(res.surface).num_faces() == 0;
  if (remaining < 4 || no_faces)
    fail(ErrorKind::kEmptyResult, to_string(spec.kind), " perturbation left ", remaining, " vertices");
  return res;
}

}  // namespace fmreg
