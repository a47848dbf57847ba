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

// Small procedural meshes used by tests and demos.

#include "fmreg/mesh.hpp"

#include <map>

namespace fmreg::shapes {

/// Regular tetrahedron with unit edge length.
inline TriMesh tetrahedron() {
  TriMesh m;
  const double s = 1.0 / std::sqrt(2.0);
  m.V.resize(4, 3);
  m.V << 1, 0, -s, -1, 0, -s, 0, 1, s, 0, -1, s;
  m.V *= 0.5;
  m.F.resize(4, 3);
  m.F << 0, 1, 2, 0, 3, 1, 0, 2, 3, 1, 3, 2;
  return m;
}

/// Unit icosphere; subdivision level 3 has 642 vertices.
inline TriMesh icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
                                       {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> nf;
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      nf.push_back({tri[0], a, c});
      nf.push_back({tri[1], b, a});
      nf.push_back({tri[2], c, b});
      nf.push_back({a, b, c});
    }
    f = std::move(nf);
  }
  TriMesh m;
  m.V.resize(static_cast<Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.V.row(static_cast<Index>(i)) = v[i].transpose();
  m.F.resize(static_cast<Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) m.F.row(static_cast<Index>(i)) << f[i][0], f[i][1], f[i][2];
  return m;
}

/// Planar (nx x ny) vertex grid on [0, sx] x [0, sy] at z = 0, normals +z.
inline TriMesh grid(int nx, int ny, double sx = 1.0, double sy = 1.0) {
  TriMesh m;
  m.V.resize(static_cast<Index>(nx) * ny, 3);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) m.V.row(j * nx + i) << sx * i / (nx - 1), sy * j / (ny - 1), 0.0;
  m.F.resize(2 * static_cast<Index>(nx - 1) * (ny - 1), 3);
  Index f = 0;
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = j * nx + i, b = a + 1, c = a + nx, d = c + 1;
      m.F.row(f++) << a, b, d;
      m.F.row(f++) << a, d, c;
    }
  }
  return m;
}

/// Closed capsule (cylinder with hemispherical caps) along the x axis, centered at `center`.
inline TriMesh capsule(const Vec3& center, double length, double radius, int segments = 16, int rings = 8) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> f;
  // Profile from -x pole to +x pole: (x offset, radius).
  std::vector<std::pair<double, double>> profile;
  for (int r = 1; r <= rings; ++r) {
    const double a = M_PI / 2 * (1.0 - static_cast<double>(r) / rings);
    profile.emplace_back(-length / 2 - radius * std::sin(a), radius * std::cos(a));
  }
  const int body = std::max(1, static_cast<int>(std::round(length / (2 * M_PI * radius / segments))));
  for (int s = 1; s <= body; ++s) profile.emplace_back(-length / 2 + length * s / body, radius);
  for (int r = 1; r < rings; ++r) {
    const double a = M_PI / 2 * static_cast<double>(r) / rings;
    profile.emplace_back(length / 2 + radius * std::sin(a), radius * std::cos(a));
  }
  v.push_back(center + Vec3(-length / 2 - radius, 0, 0));
  for (const auto& [x, r] : profile)
    for (int s = 0; s < segments; ++s) {
      const double a = 2 * M_PI * s / segments;
      v.push_back(center + Vec3(x, r * std::cos(a), r * std::sin(a)));
    }
  v.push_back(center + Vec3(length / 2 + radius, 0, 0));
  const int rows = static_cast<int>(profile.size());
  const int last = static_cast<int>(v.size()) - 1;
  for (int s = 0; s < segments; ++s) f.push_back({0, 1 + (s + 1) % segments, 1 + s});
  for (int r = 0; r + 1 < rows; ++r)
    for (int s = 0; s < segments; ++s) {
      const int a = 1 + r * segments + s, b = 1 + r * segments + (s + 1) % segments;
      const int c = a + segments, d = b + segments;
      f.push_back({a, b, d});
      f.push_back({a, d, c});
    }
  for (int s = 0; s < segments; ++s) {
    const int base = 1 + (rows - 1) * segments;
    f.push_back({last, base + s, base + (s + 1) % segments});
  }
  TriMesh m;
  m.V.resize(static_cast<Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.V.row(static_cast<Index>(i)) = v[i].transpose();
  m.F.resize(static_cast<Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) m.F.row(static_cast<Index>(i)) << f[i][0], f[i][1], f[i][2];
  return m;
}

/// Disjoint union of two meshes.
inline TriMesh merge(const TriMesh& a, const TriMesh& b) {
  TriMesh m;
  m.V.resize(a.V.rows() + b.V.rows(), 3);
  m.V << a.V, b.V;
  m.F.resize(a.F.rows() + b.F.rows(), 3);
  m.F << a.F, (b.F.array() + static_cast<int>(a.V.rows())).matrix();
  return m;
}

}  // namespace fmreg::shapes
