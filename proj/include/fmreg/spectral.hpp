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

#include "fmreg/io.hpp"
#include "fmreg/laplacian.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <random>

namespace fmreg {

/// Truncated Laplacian eigenbasis: columns of `phi` are A-orthonormal eigenfunctions
/// with ascending eigenvalues `lambda`; `mass` is the diagonal of A.
struct SpectralBasis {
  MatX phi;
  VecX lambda;
  VecX mass;

  Index size() const { return lambda.size(); }
  Index num_vertices() const { return phi.rows(); }
  double area() const { return mass.sum(); }

  /// First k eigenpairs.
  SpectralBasis truncated(Index k) const {
    require(k <= size(), "cannot truncate basis of size ", size(), " to ", k);
    return {phi.leftCols(k), lambda.head(k), mass};
  }
};

struct EigenOptions {
  int dense_limit = 1000;
  double shift = -1e-8;
  double residual_tol = 1e-6;
  int block_size = 4;
  std::uint64_t seed = 7;
};

namespace detail {

// Flips each column so that its entry of largest magnitude is positive (first one on ties).
inline void fix_signs(MatX& phi) {
  for (Index j = 0; j < phi.cols(); ++j) {
    Index arg = 0;
    double best = -1;
    for (Index i = 0; i < phi.rows(); ++i) {
      if (std::abs(phi(i, j)) > best) {
        best = std::abs(phi(i, j));
        arg = i;
      }
    }
    if (phi(arg, j) < 0) phi.col(j) *= -1;
  }
}

inline double sparse_norm(const SparseMat& M) { return std::sqrt(M.squaredNorm()); }

// Max over columns of ||W phi - A phi lambda|| / ||W||_F.
inline double eigen_residual(const SparseMat& W, const VecX& mass, const MatX& phi, const VecX& lambda) {
  const MatX R = W * phi - mass.asDiagonal() * phi * lambda.asDiagonal();
  return R.colwise().norm().maxCoeff() / std::max(1e-300, sparse_norm(W));
}

// Block Krylov subspace of (S - shift I)^-1 followed by Rayleigh-Ritz on S.
inline bool krylov_smallest(const SparseMat& S, int k, const EigenOptions& opt, int max_dim, MatX& vecs, VecX& vals) {
  const Index n = S.rows();
  SparseMat shifted = S;
  for (Index i = 0; i < n; ++i) shifted.coeffRef(i, i) -= opt.shift;
  Eigen::SimplicialLDLT<SparseMat> solver(shifted);
  if (solver.info() != Eigen::Success) fail(ErrorKind::kNotConverged, "factorization of shifted Laplacian failed");

  const int p = opt.block_size;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss;
  MatX Q(n, max_dim);
  int cols = 0;
  auto append = [&](VecX v) {
    for (int pass = 0; pass < 2; ++pass) v -= Q.leftCols(cols) * (Q.leftCols(cols).transpose() * v);
    const double len = v.norm();
    if (len < 1e-10) return false;
    Q.col(cols++) = v / len;
    return true;
  };
  for (int b = 0; b < p && cols < max_dim; ++b) {
    VecX v(n);
    for (Index i = 0; i < n; ++i) v[i] = gauss(rng);
    append(v);
  }
  int block_start = 0;
  while (cols < max_dim) {
    const int block_end = cols;
    if (block_start == block_end) break;
    for (int c = block_start; c < block_end && cols < max_dim; ++c) {
      VecX z = solver.solve(Q.col(c));
      if (!append(z)) {
        VecX v(n);
        for (Index i = 0; i < n; ++i) v[i] = gauss(rng);
        append(v);
      }
    }
    block_start = block_end;
  }
  const MatX Qm = Q.leftCols(cols);
  const MatX H = Qm.transpose() * (S * Qm);
  Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (H + H.transpose()));
  vals = es.eigenvalues().head(k);
  vecs = Qm * es.eigenvectors().leftCols(k);
  const MatX R = S * vecs - vecs * vals.asDiagonal();
  return R.colwise().norm().maxCoeff() <= opt.residual_tol * std::max(1e-300, sparse_norm(S));
}

}  // namespace detail

/// k smallest generalized eigenpairs of (W, A), solved in the symmetric form A^-1/2 W A^-1/2.
inline SpectralBasis eigenbasis(const LaplacianPair& lap, int k, const EigenOptions& opt = {}) {
  const Index n = lap.W.rows();
  require(k >= 1 && k <= n, "eigenbasis: k=", k, " must lie in [1, ", n, "]");
  require(lap.mass.size() == n && lap.mass.minCoeff() > 0, "eigenbasis: mass must be strictly positive");
  const VecX inv_sqrt = lap.mass.cwiseSqrt().cwiseInverse();
  SparseMat S = inv_sqrt.asDiagonal() * lap.W * inv_sqrt.asDiagonal();
  S = 0.5 * (S + SparseMat(S.transpose()));

  MatX vecs;
  VecX vals;
  if (n <= opt.dense_limit) {
    Eigen::SelfAdjointEigenSolver<MatX> es{MatX(S)};
    vals = es.eigenvalues().head(k);
    vecs = es.eigenvectors().leftCols(k);
  } else {
    int dim = std::min<int>(static_cast<int>(n), std::max(3 * k + 40, 2 * k + 8 * opt.block_size));
    bool ok = false;
    while (!ok) {
      ok = detail::krylov_smallest(S, k, opt, dim, vecs, vals);
      if (ok || dim >= n) break;
      dim = std::min<int>(static_cast<int>(n), 2 * dim);
    }
    if (!ok) {
      const MatX R = S * vecs - vecs * vals.asDiagonal();
      fail(ErrorKind::kNotConverged, "eigensolver residual ", R.colwise().norm().maxCoeff(), " exceeds tolerance");
    }
  }
  SpectralBasis basis;
  basis.phi = inv_sqrt.asDiagonal() * vecs;
  basis.lambda = vals.cwiseMax(0.0);
  basis.mass = lap.mass;
  detail::fix_signs(basis.phi);
  return basis;
}

/// Spectral coefficients c = Phi^T A f.
inline VecX fourier_coeffs(const SpectralBasis& basis, const VecX& f) {
  require(f.size() == basis.num_vertices(), "fourier_coeffs: function has ", f.size(), " values, basis has ",
          basis.num_vertices(), " vertices");
  return basis.phi.transpose() * basis.mass.cwiseProduct(f);
}

inline MatX fourier_coeffs(const SpectralBasis& basis, const MatX& F) {
  require(F.rows() == basis.num_vertices(), "fourier_coeffs: row count mismatch");
  return basis.phi.transpose() * (basis.mass.asDiagonal() * F);
}

inline VecX synthesize(const SpectralBasis& basis, const VecX& coeffs) {
  require(coeffs.size() == basis.size(), "synthesize: expected ", basis.size(), " coefficients, got ", coeffs.size());
  return basis.phi * coeffs;
}

inline MatX synthesize(const SpectralBasis& basis, const MatX& coeffs) {
  require(coeffs.rows() == basis.size(), "synthesize: coefficient row mismatch");
  return basis.phi * coeffs;
}

/// Rows are the biharmonic embedding phi_j(x) / lambda_j, j >= 2, so that
/// d_B(x, y) = ||e(x) - e(y)||.
inline MatX biharmonic_embedding(const SpectralBasis& basis) {
  require(basis.size() >= 2, "biharmonic distance needs at least 2 eigenpairs");
  const double scale = std::max(1e-300, basis.lambda.maxCoeff());
  int zero = 0;
  for (Index j = 0; j < basis.size(); ++j)
    if (basis.lambda[j] <= 1e-8 * scale) ++zero;
  if (zero > 1) fail(ErrorKind::kDisconnected, "surface has ", zero, " connected components (lambda_2 = 0)");
  const Index m = basis.size() - 1;
  return basis.phi.rightCols(m) * basis.lambda.tail(m).cwiseInverse().asDiagonal();
}

/// Biharmonic distances from each source vertex (rows) to all vertices (columns).
inline MatX biharmonic_distance(const SpectralBasis& basis, const std::vector<int>& sources) {
  const MatX E = biharmonic_embedding(basis);
  MatX D(static_cast<Index>(sources.size()), E.rows());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    require(sources[s] >= 0 && sources[s] < E.rows(), "biharmonic_distance: source ", sources[s], " out of range");
    D.row(static_cast<Index>(s)) = (E.rowwise() - E.row(sources[s])).rowwise().norm().transpose();
    D(static_cast<Index>(s), sources[s]) = 0.0;
  }
  return D;
}

/// Farthest point sampling in a row-embedding. Starts at `start`; ties go to the smaller index.
inline std::vector<int> farthest_point_sampling(const MatX& E, int m, int start) {
  const Index n = E.rows();
  m = static_cast<int>(std::min<Index>(m, n));
  std::vector<int> out;
  if (m <= 0) return out;
  VecX d = VecX::Constant(n, std::numeric_limits<double>::infinity());
  int cur = start;
  for (int s = 0; s < m; ++s) {
    out.push_back(cur);
    d = d.cwiseMin((E.rowwise() - E.row(cur)).rowwise().squaredNorm());
    Index arg = 0;
    d.maxCoeff(&arg);
    cur = static_cast<int>(arg);
  }
  return out;
}

/// Vertex farthest from the area-weighted centroid of the embedding. Independent of
/// vertex order and rigid motion, so it is used to seed deterministic samplings.
inline int embedding_extreme(const MatX& E, const VecX& mass) {
  const Eigen::RowVectorXd centroid = (mass.transpose() * E) / mass.sum();
  Index arg = 0;
  (E.rowwise() - centroid).rowwise().squaredNorm().maxCoeff(&arg);
  return static_cast<int>(arg);
}

/// Max pairwise biharmonic distance among m farthest-point samples (plus `extra` vertices).
inline double biharmonic_diameter(const SpectralBasis& basis, int m, const std::vector<int>& extra = {}) {
  require(m >= 2, "biharmonic_diameter: need at least 2 samples");
  const MatX E = biharmonic_embedding(basis);
  std::vector<int> samples = farthest_point_sampling(E, m, embedding_extreme(E, basis.mass));
  samples.insert(samples.end(), extra.begin(), extra.end());
  double best = 0.0;
  for (std::size_t a = 0; a < samples.size(); ++a)
    for (std::size_t b = a + 1; b < samples.size(); ++b)
      best = std::max(best, (E.row(samples[a]) - E.row(samples[b])).norm());
  return best;
}

/// Basis cache file: "k n", eigenvalues, vertex areas, then one line per eigenfunction.
inline void save_basis(const std::string& path, const SpectralBasis& basis) {
  auto out = detail::open_out(path);
  out << basis.size() << ' ' << basis.num_vertices() << '\n';
  for (Index j = 0; j < basis.size(); ++j) out << (j ? " " : "") << basis.lambda[j];
  out << '\n';
  for (Index i = 0; i < basis.num_vertices(); ++i) out << (i ? " " : "") << basis.mass[i];
  out << '\n';
  for (Index j = 0; j < basis.size(); ++j) {
    for (Index i = 0; i < basis.num_vertices(); ++i) out << (i ? " " : "") << basis.phi(i, j);
    out << '\n';
  }
}

inline SpectralBasis load_basis(const std::string& path) {
  auto in = detail::open_in(path);
  detail::Tokenizer tok(in);
  const long k = tok.integer("k"), n = tok.integer("vertex count");
  if (k < 0 || n < 0) fail(ErrorKind::kParse, "negative basis size");
  SpectralBasis b;
  b.lambda.resize(k);
  b.mass.resize(n);
  b.phi.resize(n, k);
  for (long j = 0; j < k; ++j) b.lambda[j] = tok.number("eigenvalue");
  for (long i = 0; i < n; ++i) b.mass[i] = tok.number("vertex area");
  for (long j = 0; j < k; ++j)
    for (long i = 0; i < n; ++i) b.phi(i, j) = tok.number("eigenfunction value");
  return b;
}

/// Convenience: Laplacian of a mesh or point cloud.
inline LaplacianPair laplacian(const Surface& s, int k_neighbors = 10) {
  if (const auto* m = std::get_if<TriMesh>(&s)) return cotangent_laplacian(*m);
  return pointcloud_laplacian(std::get<PointCloud>(s), k_neighbors);
}

}  // namespace fmreg
