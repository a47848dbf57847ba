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

// Independent dense reference computations used only by the tests.

#include "fmreg/laplacian.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace fmreg::oracle {

/// All generalized eigenpairs of (W, A) through Eigen's dense generalized solver.
inline std::pair<VecX, MatX> dense_generalized_eigen(const LaplacianPair& lap) {
  const MatX W(lap.W);
  const MatX A = lap.mass.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<MatX> es(W, A);
  return {es.eigenvalues(), es.eigenvectors()};
}

/// Pairwise biharmonic distances from the Green's function G = L+ A^-1 L+^T, where
/// L = A^-1 W and L+ is its pseudoinverse with respect to the A inner product,
/// obtained from a complete orthogonal decomposition of A^-1/2 W A^-1/2.
inline MatX biharmonic_pinv(const LaplacianPair& lap) {
  const VecX s = lap.mass.cwiseSqrt();
  const VecX is = s.cwiseInverse();
  const MatX S = is.asDiagonal() * MatX(lap.W) * is.asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<MatX> cod(S);
  cod.setThreshold(1e-10);
  const MatX Splus = cod.pseudoInverse();
  const MatX Lplus = is.asDiagonal() * Splus * s.asDiagonal();
  const MatX G = Lplus * lap.mass.cwiseInverse().asDiagonal() * Lplus.transpose();
  const Index n = G.rows();
  MatX D(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) D(i, j) = std::sqrt(std::max(0.0, G(i, i) + G(j, j) - 2 * G(i, j)));
  return D;
}

/// Exhaustive nearest row of `target` for each row of `query`; ties to the smallest index.
inline std::vector<int> brute_nearest_rows(const MatX& query, const MatX& target) {
  std::vector<int> out(query.rows());
  for (Index i = 0; i < query.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < target.rows(); ++j) {
      const double d = (query.row(i) - target.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        out[i] = static_cast<int>(j);
      }
    }
  }
  return out;
}

/// All-pairs shortest edge-path lengths by Floyd-Warshall.
inline MatX floyd_warshall(const TriMesh& mesh) {
  const Index n = mesh.num_vertices();
  MatX D = MatX::Constant(n, n, std::numeric_limits<double>::infinity());
  D.diagonal().setZero();
  for (Index f = 0; f < mesh.num_faces(); ++f)
    for (int c = 0; c < 3; ++c) {
      const int a = mesh.F(f, c), b = mesh.F(f, (c + 1) % 3);
      const double w = (mesh.V.row(a) - mesh.V.row(b)).norm();
      D(a, b) = std::min(D(a, b), w);
      D(b, a) = D(a, b);
    }
  for (Index k = 0; k < n; ++k)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) D(i, j) = std::min(D(i, j), D(i, k) + D(k, j));
  return D;
}

/// Central finite-difference gradient.
inline VecX central_difference(const std::function<double(const VecX&)>& f, const VecX& x, double h = 1e-6) {
  VecX g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VecX a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

}  // namespace fmreg::oracle
