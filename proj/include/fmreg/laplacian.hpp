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

#include "fmreg/knn.hpp"
#include "fmreg/mesh.hpp"

#include <Eigen/Eigenvalues>

#include <map>

namespace fmreg {

/// Stiffness/mass pair of the discrete Laplace-Beltrami operator, Delta = A^-1 W.
/// W is symmetric positive semidefinite with zero row sums; A is lumped.
struct LaplacianPair {
  SparseMat W;
  VecX mass;
};

inline constexpr double kMaxCotangent = 1e4;

namespace detail {

inline double clamped_cot(const Vec3& a, const Vec3& b) {
  const double s = a.cross(b).norm();
  const double c = a.dot(b);
  if (s <= std::abs(c) / kMaxCotangent) return c >= 0 ? kMaxCotangent : -kMaxCotangent;
  return std::clamp(c / s, -kMaxCotangent, kMaxCotangent);
}

inline SparseMat assemble_stiffness(Index n, const std::vector<Triplet>& offdiag) {
  std::vector<Triplet> trip = offdiag;
  VecX diag = VecX::Zero(n);
  for (const auto& t : offdiag) diag[t.row()] -= t.value();
  for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, diag[i]);
  SparseMat W(n, n);
  W.setFromTriplets(trip.begin(), trip.end());
  W.makeCompressed();
  return W;
}

}  // namespace detail

/// Cotangent stiffness matrix and barycentric mass.
inline LaplacianPair cotangent_laplacian(const TriMesh& mesh) {
  validate(mesh);
  const Index n = mesh.num_vertices();
  std::map<std::pair<int, int>, int> edge_faces;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      int a = mesh.F(f, c), b = mesh.F(f, (c + 1) % 3);
      if (a > b) std::swap(a, b);
      if (++edge_faces[{a, b}] > 2) fail(ErrorKind::kNonManifold, "edge (", a, ", ", b, ") has more than two incident faces");
    }
  }
  std::vector<Triplet> off;
  off.reserve(mesh.num_faces() * 6);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      // Corner c is opposite the edge (c+1, c+2).
      const int i = mesh.F(f, c), j = mesh.F(f, (c + 1) % 3), k = mesh.F(f, (c + 2) % 3);
      const Vec3 pi = row3(mesh.V, i);
      const double w = -0.5 * detail::clamped_cot(row3(mesh.V, j) - pi, row3(mesh.V, k) - pi);
      off.emplace_back(j, k, w);
      off.emplace_back(k, j, w);
    }
  }
  LaplacianPair lap{detail::assemble_stiffness(n, off), vertex_areas(mesh)};
  for (Index i = 0; i < n; ++i)
    if (!(lap.mass[i] > 0)) fail(ErrorKind::kPrecondition, "vertex ", i, " has no incident face (zero area)");
  return lap;
}

/// Point cloud Laplacian: for every point, its k nearest neighbours are projected to the
/// PCA tangent plane and the Delaunay star of the point is built there; cotangent weights
/// and a third of the star's triangle areas are accumulated. W is symmetrized.
inline LaplacianPair pointcloud_laplacian(const PointCloud& cloud, int k_neighbors = 10) {
  const Index n = cloud.size();
  require(k_neighbors >= 6, "pointcloud_laplacian: k_neighbors must be >= 6 (got ", k_neighbors, ")");
  require(n > k_neighbors, "pointcloud_laplacian: cloud of ", n, " points cannot supply ", k_neighbors, " neighbours");
  const KdTree3 tree(cloud.P);
  std::vector<Triplet> off;
  VecX mass = VecX::Zero(n);
  for (Index p = 0; p < n; ++p) {
    const Vec3 x = row3(cloud.P, p);
    std::vector<int> nb = tree.knn(x, k_neighbors + 1);
    nb.erase(std::remove(nb.begin(), nb.end(), static_cast<int>(p)), nb.end());
    nb.resize(std::min<std::size_t>(nb.size(), k_neighbors));
    const int m = static_cast<int>(nb.size());

    Vec3 mean = x;
    for (int q : nb) mean += row3(cloud.P, q);
    mean /= (m + 1);
    Mat3 cov = (x - mean) * (x - mean).transpose();
    for (int q : nb) cov += (row3(cloud.P, q) - mean) * (row3(cloud.P, q) - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    if (es.eigenvalues()[1] <= 1e-12 * std::max(1e-300, es.eigenvalues()[2]))
      fail(ErrorKind::kDegenerateGeometry, "point ", p, ": rank-deficient neighbourhood");
    const Vec3 u = es.eigenvectors().col(2), v = es.eigenvectors().col(1);

    std::vector<Eigen::Vector2d> uv(m);
    for (int i = 0; i < m; ++i) {
      const Vec3 d = row3(cloud.P, nb[i]) - x;
      uv[i] = {d.dot(u), d.dot(v)};
    }
    // Triangles (origin, a, b) of the local Delaunay triangulation: empty circumcircle.
    for (int a = 0; a < m; ++a) {
      for (int b = a + 1; b < m; ++b) {
        const Eigen::Vector2d pa = uv[a], pb = uv[b];
        const double cross = pa.x() * pb.y() - pa.y() * pb.x();
        if (std::abs(cross) < 1e-14 * (pa.squaredNorm() + pb.squaredNorm())) continue;
        // Circumcenter of (0, pa, pb).
        const double d = 2 * cross;
        const Eigen::Vector2d cc((pb.y() * pa.squaredNorm() - pa.y() * pb.squaredNorm()) / d,
                                 (pa.x() * pb.squaredNorm() - pb.x() * pa.squaredNorm()) / d);
        const double r2 = cc.squaredNorm();
        bool empty = true;
        for (int c = 0; c < m && empty; ++c)
          if (c != a && c != b && (uv[c] - cc).squaredNorm() < r2 * (1 - 1e-10)) empty = false;
        if (!empty) continue;
        const Vec3 o(0, 0, 0), A(pa.x(), pa.y(), 0), B(pb.x(), pb.y(), 0);
        const double cot_b = detail::clamped_cot(o - B, A - B);  // opposite edge (p, a)
        const double cot_a = detail::clamped_cot(o - A, B - A);  // opposite edge (p, b)
        off.emplace_back(p, nb[a], -0.5 * cot_b);
        off.emplace_back(p, nb[b], -0.5 * cot_a);
        mass[p] += std::abs(cross) / 6.0;
      }
    }
    if (!(mass[p] > 0)) fail(ErrorKind::kDegenerateGeometry, "point ", p, ": empty local triangulation");
  }
  std::vector<Triplet> sym;
  sym.reserve(off.size() * 2);
  for (const auto& t : off) {
    sym.emplace_back(t.row(), t.col(), 0.5 * t.value());
    sym.emplace_back(t.col(), t.row(), 0.5 * t.value());
  }
  return {detail::assemble_stiffness(n, sym), mass};
}

}  // namespace fmreg
