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

// Shape and pose fitting of the parametric model: composite energy with analytic
// gradients, a dogleg trust-region minimizer, and non-rigid ICP.
//
// Data terms use unsquared Frobenius norms w ||r(x)||. The minimizer's local model replaces
// each by its majorizer w (||r||^2 + ||r0||^2) / (2 ||r0||), so the model Hessian is
// w J^T J / ||r0||.

#include <functional>

#include "fmreg/body_model.hpp"
#include "fmreg/knn.hpp"

namespace fmreg {

/// w ||X_M[vertices] - targets||_F
struct VertexTerm {
  std::string name;
  double weight = 0;
  std::vector<int> vertices;
  Points targets;
};

struct FitProblem {
  const ParametricModel* model = nullptr;
  double w_skeleton = 0;  // w_S ||R X_M - joints||_F
  Points joints;
  std::vector<VertexTerm> terms;
  double w_beta = 0;   // w_beta ||beta||^2
  double w_theta = 0;  // w_theta sum_j (alpha_j / (pi c_j))^12
};

struct EnergyBreakdown {
  double total = 0, skeleton = 0, beta = 0, theta = 0;
  std::vector<double> terms;  // unweighted norms, in FitProblem::terms order
};

namespace detail {

inline void check_problem(const FitProblem& p) {
  require(p.model != nullptr, "fit problem has no model");
  const Index n = p.model->num_vertices();
  if (p.w_skeleton != 0)
    require(p.joints.rows() == p.model->num_joints(), "skeleton target has ", p.joints.rows(), " joints, model has ",
            p.model->num_joints());
  for (const auto& t : p.terms) {
    require(static_cast<Index>(t.vertices.size()) == t.targets.rows(), "term '", t.name, "': ", t.vertices.size(),
            " vertices vs ", t.targets.rows(), " targets");
    for (int v : t.vertices) require(v >= 0 && v < n, "term '", t.name, "': vertex ", v, " out of range");
  }
}

// Adds w ||r|| to the energy; its gradient and majorizer Hessian when requested.
inline double add_norm_term(double w, const VecX& r, const MatX* J, VecX* g, MatX* B) {
  const double nr = r.norm();
  if (w == 0) return 0.0;
  if (J && nr > 0) {
    if (g) g->noalias() += (w / nr) * (J->transpose() * r);
    if (B) B->noalias() += (w / nr) * (J->transpose() * *J);
  }
  return w * nr;
}

}  // namespace detail

/// Energy at flat parameters x, with gradient g and a positive semidefinite model Hessian B
/// when the pointers are non-null.
inline EnergyBreakdown fit_energy(const FitProblem& p, const VecX& x, VecX* g = nullptr, MatX* B = nullptr) {
  detail::check_problem(p);
  const ParametricModel& m = *p.model;
  const int P = m.num_params(), nb = m.num_shapes(), J = m.num_joints();
  const BodyParams bp = BodyParams::from_flat(m, x);
  const bool derivs = g || B;
  MatX jac;
  const Points X = pose(m, bp, derivs ? &jac : nullptr);
  if (g) g->setZero(P);
  if (B) B->setZero(P, P);
  EnergyBreakdown e;

  if (p.w_skeleton != 0) {
    const Points S = regress_joints(m, X);
    VecX r(3 * J);
    for (int j = 0; j < J; ++j) r.segment<3>(3 * j) = (S.row(j) - p.joints.row(j)).transpose();
    MatX JS;
    if (derivs) {
      JS.setZero(3 * J, P);
      for (Index i = 0; i < m.num_vertices(); ++i)
        for (int j = 0; j < J; ++j) {
          const double w = m.regressor(j, i);
          if (w != 0) JS.middleRows<3>(3 * j).noalias() += w * jac.middleRows<3>(3 * i);
        }
    }
    e.skeleton = r.norm();
    e.total += detail::add_norm_term(p.w_skeleton, r, derivs ? &JS : nullptr, g, B);
  }
  for (const auto& t : p.terms) {
    const Index k = static_cast<Index>(t.vertices.size());
    VecX r(3 * k);
    MatX Jt;
    if (derivs) Jt.resize(3 * k, P);
    for (Index a = 0; a < k; ++a) {
      r.segment<3>(3 * a) = (X.row(t.vertices[a]) - t.targets.row(a)).transpose();
      if (derivs) Jt.middleRows<3>(3 * a) = jac.middleRows<3>(3 * t.vertices[a]);
    }
    e.terms.push_back(r.norm());
    e.total += detail::add_norm_term(t.weight, r, derivs ? &Jt : nullptr, g, B);
  }
  if (p.w_beta != 0) {
    e.beta = bp.beta.squaredNorm();
    e.total += p.w_beta * e.beta;
    if (g) g->head(nb) += 2 * p.w_beta * bp.beta;
    if (B) B->diagonal().head(nb).array() += 2 * p.w_beta;
  }
  if (p.w_theta != 0) {
    // (alpha / (pi c))^12 = s^2 with s = (alpha / (pi c))^6, Gauss-Newton Hessian 2 grad(s) grad(s)^T.
    for (int j = 0; j < J; ++j) {
      const Vec3 th = row3(bp.theta, j);
      const double a = th.norm(), lim = M_PI * m.pose_limits[j];
      const double s = std::pow(a / lim, 6);
      e.theta += s * s;
      if (derivs && a > 0) {
        const Vec3 ds = (6 * std::pow(a / lim, 5) / lim / a) * th;
        if (g) g->segment<3>(nb + 3 * j) += p.w_theta * 2 * s * ds;
        if (B) B->block<3, 3>(nb + 3 * j, nb + 3 * j) += p.w_theta * 2 * ds * ds.transpose();
      }
    }
    e.total += p.w_theta * e.theta;
  }
  return e;
}

struct DoglegOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-6;  // relative to max(1, initial energy)
  double initial_radius = 0.1;
  double min_radius = 1e-12;
  double damping = 1e-9;       // relative Levenberg term; resolves the global/root rotation redundancy
  int stall_iterations = 8;    // stop after this many accepted steps with relative decrease < stall_tol
  double stall_tol = 1e-9;
};

struct DoglegResult {
  VecX x;
  double energy = 0;
  double initial_energy = 0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> history;  // energy after every accepted step, starting with the initial value
};

struct FitResult {
  BodyParams params;
  DoglegResult solve;
};

/// Trust-region dogleg on a generic energy; `eval(x, g, B)` returns the energy and, when
/// g/B are non-null, the gradient and a positive semidefinite model Hessian.
inline DoglegResult dogleg_minimize(const std::function<double(const VecX&, VecX*, MatX*)>& eval, VecX x,
                                   const DoglegOptions& opt = {}) {
  DoglegResult res;
  VecX g;
  MatX B;
  double E = eval(x, &g, &B);
  res.initial_energy = E;
  res.history.assign(1, E);
  const double scale = std::max(1.0, E);
  double radius = opt.initial_radius;
  int stall = 0;
  res.stop_reason = "iteration limit";
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.norm() < opt.gradient_tol * scale) {
      res.converged = true;
      res.stop_reason = "gradient";
      break;
    }
    MatX Bd = B;
    Bd.diagonal().array() += opt.damping * std::max(1e-12, B.diagonal().maxCoeff());
    const VecX p_gn = -Bd.ldlt().solve(g);
    const double gBg = g.dot(Bd * g);
    const VecX p_sd = -(g.squaredNorm() / std::max(gBg, 1e-300)) * g;
    VecX step;
    if (p_gn.allFinite() && p_gn.norm() <= radius) {
      step = p_gn;
    } else if (p_sd.norm() >= radius || !p_gn.allFinite()) {
      step = -(radius / g.norm()) * g;
    } else {
      // Point on the segment p_sd -> p_gn at distance radius.
      const VecX d = p_gn - p_sd;
      const double a = d.squaredNorm(), b = 2 * p_sd.dot(d), c = p_sd.squaredNorm() - radius * radius;
      const double tau = (-b + std::sqrt(std::max(0.0, b * b - 4 * a * c))) / (2 * a);
      step = p_sd + tau * d;
    }
    const double predicted = -(g.dot(step) + 0.5 * step.dot(Bd * step));
    const VecX trial = x + step;
    const double Et = eval(trial, nullptr, nullptr);
    const double actual = E - Et;
    const double rho = predicted > 0 ? actual / predicted : -1;
    if (std::isfinite(Et) && actual > 0) {
      const double rel = actual / std::max(1e-300, std::abs(E));
      x = trial;
      E = eval(x, &g, &B);
      res.history.push_back(E);
      stall = rel < opt.stall_tol ? stall + 1 : 0;
      if (rho > 0.75 && step.norm() > 0.99 * radius) radius *= 2;
      else if (rho < 0.25) radius *= 0.25;
      if (stall >= opt.stall_iterations) {
        res.converged = true;
        res.stop_reason = "stalled";
        ++it;
        break;
      }
    } else {
      radius *= 0.25;
      if (radius < opt.min_radius * (1 + x.norm())) {
        res.converged = true;
        res.stop_reason = "trust region collapsed";
        ++it;
        break;
      }
    }
  }
  res.iterations = it;
  res.energy = E;
  res.x = std::move(x);
  return res;
}

/// Dogleg minimization of the composite energy from `init`.
inline FitResult fit_pose_shape(const FitProblem& p, const BodyParams& init, const DoglegOptions& opt = {}) {
  detail::check_problem(p);
  auto eval = [&](const VecX& x, VecX* g, MatX* B) { return fit_energy(p, x, g, B).total; };
  FitResult r;
  r.solve = dogleg_minimize(eval, init.flat(), opt);
  r.params = BodyParams::from_flat(*p.model, r.solve.x);
  return r;
}

/// Nearest-neighbour pairs in both directions between a source and a target point set,
/// dropping pairs whose normals differ by more than `max_angle` (normals optional).
struct NearestPairs {
  std::vector<int> fwd_src, fwd_dst;  // source vertex -> nearest target vertex
  std::vector<int> bwd_src, bwd_dst;  // target vertex -> nearest source vertex (src = source index)
};

inline NearestPairs nearest_pairs(const Points& S, const Points& NS, const Points& T, const Points& NT,
                                  double max_angle, bool use_normals) {
  const bool filter = use_normals && NS.rows() == S.rows() && NT.rows() == T.rows();
  const double min_cos = std::cos(max_angle);
  auto ok = [&](Index a, Index b) { return !filter || row3(NS, a).dot(row3(NT, b)) >= min_cos; };
  NearestPairs out;
  const KdTree3 tree_t(T), tree_s(S);
  for (Index i = 0; i < S.rows(); ++i) {
    const int j = tree_t.nearest(row3(S, i));
    if (ok(i, j)) {
      out.fwd_src.push_back(static_cast<int>(i));
      out.fwd_dst.push_back(j);
    }
  }
  for (Index j = 0; j < T.rows(); ++j) {
    const int i = tree_s.nearest(row3(T, j));
    if (ok(i, j)) {
      out.bwd_src.push_back(i);
      out.bwd_dst.push_back(static_cast<int>(j));
    }
  }
  return out;
}

/// ||S[fwd_src] - T[fwd_dst]||_F + ||S[bwd_src] - T[bwd_dst]||_F
inline double bidirectional_error(const Points& S, const Points& T, const NearestPairs& np) {
  double f = 0, b = 0;
  for (std::size_t k = 0; k < np.fwd_src.size(); ++k) f += (S.row(np.fwd_src[k]) - T.row(np.fwd_dst[k])).squaredNorm();
  for (std::size_t k = 0; k < np.bwd_src.size(); ++k) b += (S.row(np.bwd_src[k]) - T.row(np.bwd_dst[k])).squaredNorm();
  return std::sqrt(f) + std::sqrt(b);
}

struct IcpOptions {
  int iterations = 10;
  double normal_threshold = M_PI / 2;
  bool use_normals = true;
  double w_beta = 0;
  double w_theta = 1;
  DoglegOptions dogleg;
};

struct NonrigidIcpResult {
  BodyParams params;
  std::vector<double> error;  // bidirectional error at the start of every outer iteration, then final
  std::string stop_reason;
};

/// Alternates bidirectional nearest neighbours (with the normal filter) and dogleg fits of
/// the model to them. Keeps the best parameters seen and stops when the error stalls.
inline NonrigidIcpResult nonrigid_icp(const ParametricModel& m, const BodyParams& init, const Points& XN,
                                      const Points& normalsN, const IcpOptions& opt = {}) {
  require(XN.rows() > 0, "nonrigid_icp: empty target");
  NonrigidIcpResult res;
  res.params = init;
  res.stop_reason = "iteration limit";
  auto pairs_at = [&](const BodyParams& p, Points& X) {
    const TriMesh posed = posed_mesh(m, p);
    X = posed.V;
    return nearest_pairs(X, vertex_normals(posed), XN, normalsN, opt.normal_threshold, opt.use_normals);
  };
  Points X;
  NearestPairs np = pairs_at(res.params, X);
  double best = bidirectional_error(X, XN, np);
  for (int it = 0; it < opt.iterations; ++it) {
    res.error.push_back(best);
    if (np.fwd_src.empty() && np.bwd_src.empty())
      fail(ErrorKind::kEmptyResult, "nonrigid_icp: every nearest-neighbour pair was filtered by the normal test");
    FitProblem prob;
    prob.model = &m;
    prob.w_beta = opt.w_beta;
    prob.w_theta = opt.w_theta;
    VertexTerm fwd{"forward", 1.0, np.fwd_src, Points(static_cast<Index>(np.fwd_dst.size()), 3)};
    for (std::size_t k = 0; k < np.fwd_dst.size(); ++k) fwd.targets.row(static_cast<Index>(k)) = XN.row(np.fwd_dst[k]);
    VertexTerm bwd{"backward", 1.0, np.bwd_src, Points(static_cast<Index>(np.bwd_dst.size()), 3)};
    for (std::size_t k = 0; k < np.bwd_dst.size(); ++k) bwd.targets.row(static_cast<Index>(k)) = XN.row(np.bwd_dst[k]);
    prob.terms = {std::move(fwd), std::move(bwd)};
    const FitResult fit = fit_pose_shape(prob, res.params, opt.dogleg);
    NearestPairs next = pairs_at(fit.params, X);
    const double err = bidirectional_error(X, XN, next);
    if (!(err < best * (1 - 1e-9))) {
      res.stop_reason = "stalled";
      if (err < best) {
        res.params = fit.params;
        best = err;
      }
      break;
    }
    res.params = fit.params;
    best = err;
    np = std::move(next);
  }
  res.error.push_back(best);
  return res;
}

}  // namespace fmreg
