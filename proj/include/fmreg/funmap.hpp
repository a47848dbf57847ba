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

// Functional maps between two surfaces with truncated bases Phi (source M, k_M functions)
// and Psi (target N, k_N functions). C is k_N x k_M and transports coefficients from M to N.
// Point maps assign an N vertex to every M vertex.

#include <vector>

#include "fmreg/descriptors.hpp"
#include "fmreg/knn.hpp"

namespace fmreg {

using PointMap = std::vector<int>;

/// Band-limited multiplication operator X_f = Phi^T A diag(f) Phi.
inline MatX mult_operator(const SpectralBasis& basis, const VecX& f) {
  require(f.size() == basis.num_vertices(), "mult_operator: function has ", f.size(), " values, basis has ",
          basis.num_vertices(), " vertices");
  return basis.phi.transpose() * (basis.mass.cwiseProduct(f).asDiagonal() * basis.phi);
}

/// Quadratic map objective
///   sum_i ||C X_i - Y_i C||^2 + l1 ||C F - G||^2 + l2 ||C Lm - Ln C||^2
/// with X_i, Y_i multiplication operators of matched probes and F, G their coefficients.
struct MapProblem {
  std::vector<MatX> X, Y;
  MatX F, G;
  VecX lambda_m, lambda_n;
  double l1 = 0.1, l2 = 0.001;

  Index kn() const { return lambda_n.size(); }
  Index km() const { return lambda_m.size(); }

  double objective(const MatX& C) const {
    double total = 0;
    for (std::size_t i = 0; i < X.size(); ++i) total += (C * X[i] - Y[i] * C).squaredNorm();
    total += l1 * (C * F - G).squaredNorm();
    total += l2 * (C * lambda_m.asDiagonal() - lambda_n.asDiagonal() * C).squaredNorm();
    return total;
  }

  /// H and b of objective(C) = c^T H c - 2 b^T c + const, c = vec(C) column-major.
  void normal_equations(MatX& H, VecX& b) const {
    const Index kn_ = kn(), km_ = km(), dim = kn_ * km_;
    H.setZero(dim, dim);
    MatX XX = l1 * F * F.transpose();
    MatX YY = MatX::Zero(kn_, kn_);
    for (std::size_t i = 0; i < X.size(); ++i) {
      XX.noalias() += X[i] * X[i];
      YY.noalias() += Y[i] * Y[i];
      for (Index j = 0; j < km_; ++j)
        for (Index jj = 0; jj < km_; ++jj) H.block(kn_ * j, kn_ * jj, kn_, kn_) -= (2 * X[i](j, jj)) * Y[i];
    }
    for (Index j = 0; j < km_; ++j)
      for (Index jj = 0; jj < km_; ++jj) H.block(kn_ * j, kn_ * jj, kn_, kn_).diagonal().array() += XX(j, jj);
    for (Index j = 0; j < km_; ++j) {
      H.block(kn_ * j, kn_ * j, kn_, kn_) += YY;
      for (Index i = 0; i < kn_; ++i) {
        const double d = lambda_m[j] - lambda_n[i];
        H(kn_ * j + i, kn_ * j + i) += l2 * d * d;
      }
    }
    const MatX B = l1 * G * F.transpose();
    b = Eigen::Map<const VecX>(B.data(), dim);
  }
};

/// Builds the map problem from probe functions (columns of descM / descN, same count).
inline MapProblem make_map_problem(const SpectralBasis& basisM, const SpectralBasis& basisN, const MatX& descM,
                                   const MatX& descN, double l1 = 0.1, double l2 = 0.001) {
  require(descM.cols() == descN.cols(), "estimate_fmap: probe counts differ (", descM.cols(), " vs ", descN.cols(),
          ")");
  require(descM.rows() == basisM.num_vertices() && descN.rows() == basisN.num_vertices(),
          "estimate_fmap: probe rows do not match vertex counts");
  MapProblem p;
  p.l1 = l1;
  p.l2 = l2;
  p.lambda_m = basisM.lambda;
  p.lambda_n = basisN.lambda;
  p.F = fourier_coeffs(basisM, descM);
  p.G = fourier_coeffs(basisN, descN);
  for (Index i = 0; i < descM.cols(); ++i) {
    p.X.push_back(mult_operator(basisM, descM.col(i)));
    p.Y.push_back(mult_operator(basisN, descN.col(i)));
  }
  return p;
}

struct FunctionalMap {
  MatX C;
  int iterations = 0;
  double relative_gradient = 0;  // final / initial residual norm of the normal equations
  bool converged = true;
};

struct CgOptions {
  double tolerance = 1e-7;
  int max_iterations = 2000;
};

/// Jacobi-preconditioned linear CG on H c = b from c = 0. Keeps the iterate with the
/// smallest residual.
inline FunctionalMap solve_map_problem(const MapProblem& p, const CgOptions& opt = {}) {
  MatX H;
  VecX b;
  p.normal_equations(H, b);
  const Index dim = b.size();
  const VecX inv_diag = H.diagonal().cwiseMax(1e-300).cwiseInverse();
  VecX c = VecX::Zero(dim), r = b, z = inv_diag.cwiseProduct(r), d = z;
  const double r0 = r.norm();
  FunctionalMap out;
  VecX best = c;
  double best_res = r0;
  double rz = r.dot(z);
  int it = 0;
  if (r0 > 0) {
    for (; it < opt.max_iterations && best_res > opt.tolerance * r0; ++it) {
      const VecX Hd = H * d;
      const double dHd = d.dot(Hd);
      if (!(dHd > 0)) break;
      const double alpha = rz / dHd;
      c += alpha * d;
      r -= alpha * Hd;
      const double res = r.norm();
      if (res < best_res) {
        best_res = res;
        best = c;
      }
      z = inv_diag.cwiseProduct(r);
      const double rz_next = r.dot(z);
      d = z + (rz_next / rz) * d;
      rz = rz_next;
    }
  }
  out.C = Eigen::Map<const MatX>(best.data(), p.kn(), p.km());
  out.iterations = it;
  out.relative_gradient = r0 > 0 ? best_res / r0 : 0.0;
  out.converged = out.relative_gradient <= opt.tolerance;
  return out;
}

/// Map estimate from matched probe functions.
inline FunctionalMap estimate_fmap(const SpectralBasis& basisM, const SpectralBasis& basisN, const MatX& descM,
                                   const MatX& descN, double l1 = 0.1, double l2 = 0.001, const CgOptions& opt = {}) {
  return solve_map_problem(make_map_problem(basisM, basisN, descM, descN, l1, l2), opt);
}

/// For every M vertex, the N vertex whose spectral coordinates are nearest to C phi(x).
inline PointMap fmap_to_pointmap(const MatX& C, const SpectralBasis& basisM, const SpectralBasis& basisN) {
  require(C.rows() == basisN.size() && C.cols() == basisM.size(), "fmap_to_pointmap: C is ", C.rows(), "x", C.cols(),
          ", bases have ", basisN.size(), " and ", basisM.size(), " functions");
  return nearest_rows(basisM.phi * C.transpose(), basisN.phi);
}

/// For every N vertex, the M vertex whose transported coordinates C phi(x) are nearest.
inline PointMap fmap_to_pointmap_inverse(const MatX& C, const SpectralBasis& basisM, const SpectralBasis& basisN) {
  require(C.rows() == basisN.size() && C.cols() == basisM.size(), "fmap_to_pointmap_inverse: dimension mismatch");
  return nearest_rows(basisN.phi, basisM.phi * C.transpose());
}

inline void validate_pointmap(const PointMap& pi, Index n_source, Index n_target) {
  require(static_cast<Index>(pi.size()) == n_source, "point map has ", pi.size(), " entries, expected ", n_source);
  for (int t : pi) require(t >= 0 && t < n_target, "point map entry ", t, " out of range [0, ", n_target, ")");
}

/// C = Psi^T A_N Pi Phi, with Pi(pi(x), x) = 1.
inline MatX pointmap_to_fmap(const PointMap& pi, const SpectralBasis& basisM, const SpectralBasis& basisN) {
  validate_pointmap(pi, basisM.num_vertices(), basisN.num_vertices());
  MatX C = MatX::Zero(basisN.size(), basisM.size());
  for (std::size_t x = 0; x < pi.size(); ++x) {
    const int y = pi[x];
    C.noalias() += (basisN.mass[y] * basisN.phi.row(y).transpose()) * basisM.phi.row(static_cast<Index>(x));
  }
  return C;
}

struct IcpResult {
  MatX C;
  PointMap map;
  std::vector<double> objective;  // before each Procrustes step
};

/// Alternates nearest-neighbour matching in spectral coordinates with an orthogonal
/// Procrustes update, starting from the polar factor of C0. Works on the leading k = min(k_M, k_N) block, where C is square
/// orthogonal and the objective sum_x ||C phi(x) - psi(pi(x))||^2 decreases monotonically;
/// remaining columns of the returned C are zero.
inline IcpResult spectral_icp(const MatX& C0, const SpectralBasis& basisM, const SpectralBasis& basisN,
                              int iters = 10) {
  require(C0.rows() == basisN.size() && C0.cols() == basisM.size(), "spectral_icp: dimension mismatch");
  const Index k = std::min(basisM.size(), basisN.size());
  const MatX Phi = basisM.phi.leftCols(k), Psi = basisN.phi.leftCols(k);
  // Nearest orthogonal matrix to the leading block; least-squares estimates are often
  // uniformly shrunk, which would bias the first nearest-neighbour step toward the origin.
  const Eigen::JacobiSVD<MatX> polar(C0.topLeftCorner(k, k), Eigen::ComputeFullU | Eigen::ComputeFullV);
  MatX C = polar.matrixU() * polar.matrixV().transpose();
  IcpResult res;
  auto objective = [&](const MatX& Cs, const PointMap& pi) {
    const MatX moved = Phi * Cs.transpose();
    double total = 0;
    for (Index x = 0; x < moved.rows(); ++x) total += (moved.row(x) - Psi.row(pi[x])).squaredNorm();
    return total;
  };
  PointMap pi = nearest_rows(Phi * C.transpose(), Psi);
  for (int it = 0; it < iters; ++it) {
    res.objective.push_back(objective(C, pi));
    MatX Mxy = MatX::Zero(k, k);
    for (Index x = 0; x < Phi.rows(); ++x) Mxy.noalias() += Psi.row(pi[x]).transpose() * Phi.row(x);
    const Eigen::JacobiSVD<MatX> svd(Mxy, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const MatX next = svd.matrixU() * svd.matrixV().transpose();
    PointMap next_pi = nearest_rows(Phi * next.transpose(), Psi);
    const bool same = next_pi == pi && (next - C).norm() <= 1e-12 * std::sqrt(static_cast<double>(k));
    C = next;
    pi = std::move(next_pi);
    if (same) break;
  }
  res.objective.push_back(objective(C, pi));
  res.C = MatX::Zero(basisN.size(), basisM.size());
  res.C.topLeftCorner(k, k) = C;
  res.map = std::move(pi);
  return res;
}

/// Slanted-diagonal penalty. W(i, j) = |i - r j| / sqrt(1 + r^2) / sqrt(k_N^2 + k_M^2): the
/// distance of the index pair from the line i = r j, normalised by the matrix diagonal.
/// Target eigenvalues grow as 1 / area, so the support of C follows i = r j for
/// r = area(N) / area(M).
inline MatX slant_mask(Index kn, Index km, double r) {
  require(r > 0 && r <= 1, "slant_mask: area ratio ", r, " must lie in (0, 1]");
  require(kn > 0 && km > 0, "slant_mask: empty mask");
  const double norm = std::sqrt(1 + r * r) * std::sqrt(static_cast<double>(kn * kn + km * km));
  MatX W(kn, km);
  for (Index i = 0; i < kn; ++i)
    for (Index j = 0; j < km; ++j) W(i, j) = std::abs(static_cast<double>(i) - r * static_cast<double>(j)) / norm;
  return W;
}

struct L21Options {
  int q = 1000;
  double mu = 0.01;
  int outer_iterations = 5;
  int inner_iterations = 20;
  double epsilon = 1e-6;
  double stationarity = 1e-8;
  std::uint64_t seed = 0;
};

struct L21Result {
  MatX C;
  PointMap map;
  std::vector<int> samples;
  std::vector<double> inner_objective;  // smoothed objective after every inner step
  bool converged = true;
};

namespace detail {

// Huber-smoothed column norm: ||r|| above eps, ||r||^2 / (2 eps) + eps / 2 below. IRLS with
// weights 1 / max(||r||, eps) is a majorize-minimize scheme for it.
inline double smoothed_norm(double r, double eps) { return r >= eps ? r : r * r / (2 * eps) + eps / 2; }

}  // namespace detail

/// Smoothed l2,1 objective sum_c h(||(C F - G)_c||) + mu ||C o W||^2.
inline double l21_objective(const MatX& C, const MatX& F, const MatX& G, const MatX& W, double mu, double eps) {
  const VecX norms = (C * F - G).colwise().norm();
  double total = 0;
  for (Index c = 0; c < norms.size(); ++c) total += detail::smoothed_norm(norms[c], eps);
  return total + mu * C.cwiseProduct(W).squaredNorm();
}

/// One convex l2,1 problem solved by IRLS from C. Each row of C has its own linear system
/// (F D F^T + 2 mu diag(W_r^2)) c_r = F D g_r with D the column weights.
inline MatX solve_l21(MatX C, const MatX& F, const MatX& G, const MatX& W, const L21Options& opt,
                      std::vector<double>* history, bool* converged) {
  const Index kn = C.rows(), km = C.cols();
  bool ok = false;
  for (int it = 0; it < opt.inner_iterations; ++it) {
    const VecX norms = (C * F - G).colwise().norm();
    const VecX w = norms.cwiseMax(opt.epsilon).cwiseInverse();
    const MatX FD = F * w.asDiagonal();
    const MatX FDF = FD * F.transpose();
    const MatX rhs = G * FD.transpose();  // kn x km, row r is (F D g_r)^T
    MatX next(kn, km);
    for (Index r = 0; r < kn; ++r) {
      MatX Hr = FDF;
      Hr.diagonal() += 2 * opt.mu * W.row(r).transpose().cwiseAbs2();
      next.row(r) = Hr.ldlt().solve(rhs.row(r).transpose()).transpose();
    }
    const double change = (next - C).norm() / std::max(1.0, C.norm());
    C = std::move(next);
    if (history) history->push_back(l21_objective(C, F, G, W, opt.mu, opt.epsilon));
    if (change <= opt.stationarity) {
      ok = true;
      break;
    }
  }
  if (converged) *converged = ok;
  return C;
}

/// Mismatch-robust refinement: at q farthest-point samples of M (fixed per call), delta
/// probes are paired through the current point map, C is re-estimated under the l2,1 loss
/// and slanted mask W, and the point map is recomputed.
inline L21Result refine_l21(const PointMap& initial, const SpectralBasis& basisM, const SpectralBasis& basisN,
                            const Points& positionsM, const MatX& W, const L21Options& opt = {}) {
  validate_pointmap(initial, basisM.num_vertices(), basisN.num_vertices());
  require(positionsM.rows() == basisM.num_vertices(), "refine_l21: positions do not match the source basis");
  require(W.rows() == basisN.size() && W.cols() == basisM.size(), "refine_l21: mask is ", W.rows(), "x", W.cols(),
          ", expected ", basisN.size(), "x", basisM.size());
  require(opt.q >= 1 && opt.q <= basisM.num_vertices(), "refine_l21: q = ", opt.q, " must lie in [1, ",
          basisM.num_vertices(), "]");
  L21Result res;
  res.samples = uniform_samples(positionsM, opt.q, opt.seed);
  const MatX F = delta_descriptors(basisM, res.samples);
  PointMap pi = initial;
  MatX C = pointmap_to_fmap(pi, basisM, basisN);
  for (int t = 0; t < opt.outer_iterations; ++t) {
    std::vector<int> matched(res.samples.size());
    for (std::size_t s = 0; s < res.samples.size(); ++s) matched[s] = pi[res.samples[s]];
    const MatX G = delta_descriptors(basisN, matched);
    bool ok = true;
    C = solve_l21(C, F, G, W, opt, &res.inner_objective, &ok);
    res.converged = res.converged && ok;
    pi = fmap_to_pointmap(C, basisM, basisN);
  }
  res.C = std::move(C);
  res.map = std::move(pi);
  return res;
}

/// Same, starting from a functional map.
inline L21Result refine_l21(const MatX& C0, const SpectralBasis& basisM, const SpectralBasis& basisN,
                            const Points& positionsM, const MatX& W, const L21Options& opt = {}) {
  return refine_l21(fmap_to_pointmap(C0, basisM, basisN), basisM, basisN, positionsM, W, opt);
}

inline void save_pointmap(const std::string& path, const PointMap& pi) { save_index_list(path, pi); }

inline PointMap load_pointmap(const std::string& path) { return load_index_list(path); }

}  // namespace fmreg
