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

#include "fmreg/mesh.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace fmreg {

/// Closest point on triangle (a, b, c) to p (Voronoi-region walk).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return (p - closest_point_on_triangle(p, a, b, c)).norm();
}

/// Bounding volume hierarchy over the triangles of a mesh for exact closest-point queries.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriMesh& mesh) : mesh_(mesh) {
    require(mesh.num_faces() > 0, "TriangleBvh: reference mesh has no faces");
    order_.resize(mesh.num_faces());
    std::iota(order_.begin(), order_.end(), 0);
    centroid_.resize(mesh.num_faces(), 3);
    for (Index f = 0; f < mesh.num_faces(); ++f)
      centroid_.row(f) = (mesh.V.row(mesh.F(f, 0)) + mesh.V.row(mesh.F(f, 1)) + mesh.V.row(mesh.F(f, 2))) / 3.0;
    build(0, static_cast<int>(order_.size()));
  }

  /// Distance to the surface, and optionally the closest face.
  double distance(const Vec3& p, int* face = nullptr) const {
    double best = std::numeric_limits<double>::infinity();
    int arg = -1;
    search(0, p, best, arg);
    if (face) *face = arg;
    return std::sqrt(best);
  }

 private:
  struct Node {
    int begin, end;
    int left = -1, right = -1;
    Vec3 lo, hi;
  };

  Vec3 corner(int f, int c) const { return row3(mesh_.V, mesh_.F(f, c)); }

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (int i = begin; i < end; ++i)
      for (int c = 0; c < 3; ++c) {
        lo = lo.cwiseMin(corner(order_[i], c));
        hi = hi.cwiseMax(corner(order_[i], c));
      }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= 4) return id;
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroid_(a, axis) < centroid_(b, axis) || (centroid_(a, axis) == centroid_(b, axis) && a < b); });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  double box_dist2(int id, const Vec3& p) const {
    const Node& n = nodes_[id];
    return (n.lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - n.hi).squaredNorm();
  }

  void search(int id, const Vec3& p, double& best, int& arg) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int f = order_[i];
        const double d2 = (p - closest_point_on_triangle(p, corner(f, 0), corner(f, 1), corner(f, 2))).squaredNorm();
        if (d2 < best || (d2 == best && f < arg)) {
          best = d2;
          arg = f;
        }
      }
      return;
    }
    const double dl = box_dist2(n.left, p), dr = box_dist2(n.right, p);
    const int first = dl <= dr ? n.left : n.right, second = dl <= dr ? n.right : n.left;
    if (std::min(dl, dr) <= best) search(first, p, best, arg);
    if (std::max(dl, dr) <= best) search(second, p, best, arg);
  }

  const TriMesh& mesh_;
  std::vector<int> order_;
  Points centroid_;
  std::vector<Node> nodes_;
};

/// Exact distance from each point to the closest point on any face of `reference`.
inline VecX point_to_surface_error(const Points& points, const TriMesh& reference) {
  const TriangleBvh bvh(reference);
  VecX d(points.rows());
  for (Index i = 0; i < points.rows(); ++i) d[i] = bvh.distance(row3(points, i));
  return d;
}

struct ErrorStats {
  double mean = 0, median = 0, max = 0;
};

inline ErrorStats error_stats(const VecX& e) {
  ErrorStats s;
  if (e.size() == 0) return s;
  std::vector<double> v(e.data(), e.data() + e.size());
  std::sort(v.begin(), v.end());
  s.mean = e.mean();
  s.max = v.back();
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

}  // namespace fmreg
