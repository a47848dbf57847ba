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

// As-rigid-as-possible deformation toward point targets. Cells are vertex one-rings with
// unit edge weights:
//   E(x, R) = sum_i sum_{j in N(i)} ||(x_i - x_j) - R_i (p_i - p_j)||^2
//           + lambda sum_k ||x_{a_k} - t_k||^2
// minimized by alternating per-cell rotations (SVD) and a sparse linear solve for x.

#include <Eigen/SparseCholesky>

#include "fmreg/fitting.hpp"

namespace fmreg {

/// Pairs of (vertex, target point) pulling the deformation.
struct PointTargets {
  std::vector<int> vertices;
  Points targets;
};

class ArapSolver {
 public:
  ArapSolver(const TriMesh& rest) : rest_(rest.V), nbrs_(rest.num_vertices()) {
    validate(rest);
    for (const auto& [a, b] : edges(rest)) {
      nbrs_[a].push_back(b);
      nbrs_[b].push_back(a);
    }
    rot_.assign(rest.num_vertices(), Mat3::Identity());
  }

  Index size() const { return rest_.rows(); }
  const std::vector<Mat3>& rotations() const { return rot_; }

  /// Best rotation per cell for positions X.
  void fit_rotations(const Points& X) {
    for (Index i = 0; i < size(); ++i) {
      Mat3 S = Mat3::Zero();
      for (int j : nbrs_[i]) S += (row3(rest_, i) - row3(rest_, j)) * (row3(X, i) - row3(X, j)).transpose();
      const Eigen::JacobiSVD<Mat3> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
      Mat3 U = svd.matrixU();
      Mat3 R = svd.matrixV() * U.transpose();
      if (R.determinant() < 0) {
        U.col(2) *= -1;
        R = svd.matrixV() * U.transpose();
      }
      rot_[i] = R;
    }
  }

  double energy(const Points& X, const PointTargets& pt, double lambda) const {
    double e = 0;
    for (Index i = 0; i < size(); ++i)
      for (int j : nbrs_[i])
        e += ((row3(X, i) - row3(X, j)) - rot_[i] * (row3(rest_, i) - row3(rest_, j))).squaredNorm();
    for (std::size_t k = 0; k < pt.vertices.size(); ++k)
      e += lambda * (X.row(pt.vertices[k]) - pt.targets.row(static_cast<Index>(k))).squaredNorm();
    return e;
  }

  /// Gradient of energy() in X with the rotations held fixed: 2 (A X - b).
  Points gradient(const Points& X, const PointTargets& pt, double lambda) const {
    Points G = Points::Zero(size(), 3);
    for (Index i = 0; i < size(); ++i)
      for (int j : nbrs_[i]) {
        const Vec3 r = (row3(X, i) - row3(X, j)) - rot_[i] * (row3(rest_, i) - row3(rest_, j));
        G.row(i) += 2 * r.transpose();
        G.row(j) -= 2 * r.transpose();
      }
    for (std::size_t k = 0; k < pt.vertices.size(); ++k)
      G.row(pt.vertices[k]) += 2 * lambda * (X.row(pt.vertices[k]) - pt.targets.row(static_cast<Index>(k)));
    return G;
  }

  /// Global step: minimizer of energy() over X for the current rotations.
  Points solve_positions(const PointTargets& pt, double lambda) const {
    const Index n = size();
    std::vector<Triplet> trip;
    Points b = Points::Zero(n, 3);
    for (Index i = 0; i < n; ++i)
      for (int j : nbrs_[i]) {
        // Residual (x_i - x_j) - R_i d_ij contributes (e_i - e_j)(e_i - e_j)^T to A.
        trip.emplace_back(i, i, 1.0);
        trip.emplace_back(j, j, 1.0);
        trip.emplace_back(i, j, -1.0);
        trip.emplace_back(j, i, -1.0);
        const Vec3 d = rot_[i] * (row3(rest_, i) - row3(rest_, j));
        b.row(i) += d.transpose();
        b.row(j) -= d.transpose();
      }
    for (std::size_t k = 0; k < pt.vertices.size(); ++k) {
      trip.emplace_back(pt.vertices[k], pt.vertices[k], lambda);
      b.row(pt.vertices[k]) += lambda * pt.targets.row(static_cast<Index>(k));
    }
    SparseMat A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    const Eigen::SimplicialLDLT<SparseMat> ldlt(A);
    if (ldlt.info() != Eigen::Success) fail(ErrorKind::kRankDeficient, "arap: singular global system");
    Points X(n, 3);
    for (int c = 0; c < 3; ++c) {
      const VecX col = ldlt.solve(VecX(b.col(c)));
      if (ldlt.info() != Eigen::Success || !col.allFinite()) fail(ErrorKind::kRankDeficient, "arap: singular global system");
      X.col(c) = col;
    }
    return X;
  }

 private:
  Points rest_;
  std::vector<std::vector<int>> nbrs_;
  std::vector<Mat3> rot_;
};

struct ArapFixedResult {
  Points V;
  std::vector<double> energy;  // after each local-global iteration
};

/// Local-global iterations with fixed targets until the relative energy change drops below
/// `tol` or `iterations` is reached. lambda = 0 returns the input unchanged.
inline ArapFixedResult arap_deform(const TriMesh& rest, const PointTargets& pt, double lambda, int iterations = 100,
                                   double tol = 1e-14) {
  require(static_cast<Index>(pt.vertices.size()) == pt.targets.rows(), "arap: target count mismatch");
  ArapFixedResult res{rest.V, {}};
  if (lambda == 0 || pt.vertices.empty()) return res;
  ArapSolver solver(rest);
  Points X = rest.V;
  solver.fit_rotations(X);
  double prev = solver.energy(X, pt, lambda);
  for (int it = 0; it < iterations; ++it) {
    X = solver.solve_positions(pt, lambda);
    solver.fit_rotations(X);
    const double e = solver.energy(X, pt, lambda);
    res.energy.push_back(e);
    if (prev - e <= tol * std::max(prev, 1e-300)) break;
    prev = e;
  }
  res.V = std::move(X);
  return res;
}

struct ArapOptions {
  double fit_weight = 1.0;  // lambda
  int outer_iterations = 5;
  int inner_iterations = 5;
  double normal_threshold = M_PI / 2;
  bool use_normals = true;
};

struct ArapRefineResult {
  Points V;
  std::vector<double> error;  // bidirectional error before refinement and after each outer iteration
};

/// Alternates bidirectional nearest neighbours (normal-filtered) with ARAP solves toward
/// them. The rest shape is the input mesh.
inline ArapRefineResult arap_refine(const TriMesh& source, const Points& XN, const Points& normalsN,
                                    const ArapOptions& opt = {}) {
  ArapRefineResult res{source.V, {}};
  if (opt.fit_weight == 0) return res;
  ArapSolver solver(source);
  TriMesh cur = source;
  for (int it = 0; it <= opt.outer_iterations; ++it) {
    const NearestPairs np =
        nearest_pairs(cur.V, vertex_normals(cur), XN, normalsN, opt.normal_threshold, opt.use_normals);
    const double err = bidirectional_error(cur.V, XN, np);
    if (!res.error.empty() && err > res.error.back()) break;  // keep the previous iterate
    res.error.push_back(err);
    res.V = cur.V;
    if (it == opt.outer_iterations) break;
    PointTargets pt;
    pt.vertices = np.fwd_src;
    pt.vertices.insert(pt.vertices.end(), np.bwd_src.begin(), np.bwd_src.end());
    pt.targets.resize(static_cast<Index>(pt.vertices.size()), 3);
    Index row = 0;
    for (int d : np.fwd_dst) pt.targets.row(row++) = XN.row(d);
    for (int d : np.bwd_dst) pt.targets.row(row++) = XN.row(d);
    solver.fit_rotations(cur.V);
    for (int inner = 0; inner < opt.inner_iterations; ++inner) {
      cur.V = solver.solve_positions(pt, opt.fit_weight);
      solver.fit_rotations(cur.V);
    }
  }
  return res;
}

}  // namespace fmreg
