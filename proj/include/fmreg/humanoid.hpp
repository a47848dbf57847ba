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

// Procedural 16-joint humanoid built from tapered capsules, used as the default body
// model and as the source of synthetic targets. Units are metres, y up, the body faces +z
// and its left side is +x.

#include "fmreg/body_model.hpp"
#include "fmreg/knn.hpp"
#include "fmreg/remesh.hpp"

#include <random>

namespace fmreg {

namespace humanoid {

enum Joint {
  kPelvis, kChest, kNeck, kHead,
  kLShoulder, kLElbow, kLWrist, kRShoulder, kRElbow, kRWrist,
  kLHip, kLKnee, kLAnkle, kRHip, kRKnee, kRAnkle,
  kNumJoints
};

inline const std::array<const char*, kNumJoints> kJointNames = {
    "pelvis", "chest", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
    "r_elbow", "r_wrist", "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle"};

inline const std::array<int, kNumJoints> kParents = {-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14};

/// Tapered capsule: segment a-b with linearly interpolated radius; `zscale` flattens the
/// cross-section front to back.
struct Part {
  Vec3 a, b;
  double ra, rb;
  double zscale = 1.0;

  /// Closest axis point to p and its parameter.
  Vec3 axis_point(const Vec3& p, double* t_out = nullptr) const {
    Vec3 q = p, aa = a, bb = b;
    q.z() /= zscale;
    aa.z() /= zscale;
    bb.z() /= zscale;
    const Vec3 ab = bb - aa;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0 ? std::clamp((q - aa).dot(ab) / len2, 0.0, 1.0) : 0.0;
    if (t_out) *t_out = t;
    return a + t * (b - a);
  }

  double distance(const Vec3& p) const {
    double t = 0;
    const Vec3 c = axis_point(p, &t);
    Vec3 d = p - c;
    d.z() /= zscale;
    return d.norm() - (ra + t * (rb - ra));
  }
};

inline double smooth_min(double a, double b, double k) {
  const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
  return b + h * (a - b) - k * h * (1 - h);
}

/// Rest-pose skeleton and one part per joint.
struct Layout {
  Points joints;
  std::vector<Part> parts;
  Vec3 head_center;
};

inline Layout rest_layout() {
  Layout L;
  L.joints.resize(kNumJoints, 3);
  const double s45 = std::sqrt(0.5);
  const Vec3 left_arm(s45, -s45, 0), right_arm(-s45, -s45, 0);
  // Slight intrinsic asymmetry: the left arm is 2% longer, the right leg 3% thicker.
  const double la = 1.02;
  L.joints.row(kPelvis) << 0, 0.93, 0;
  L.joints.row(kChest) << 0, 1.15, 0;
  L.joints.row(kNeck) << 0, 1.42, 0;
  L.joints.row(kHead) << 0, 1.54, 0;
  L.joints.row(kLShoulder) << 0.17, 1.39, 0;
  L.joints.row(kLElbow) = L.joints.row(kLShoulder) + 0.27 * la * left_arm.transpose();
  L.joints.row(kLWrist) = L.joints.row(kLElbow) + 0.24 * la * left_arm.transpose();
  L.joints.row(kRShoulder) << -0.17, 1.39, 0;
  L.joints.row(kRElbow) = L.joints.row(kRShoulder) + 0.27 * right_arm.transpose();
  L.joints.row(kRWrist) = L.joints.row(kRElbow) + 0.24 * right_arm.transpose();
  L.joints.row(kLHip) << 0.095, 0.88, 0;
  L.joints.row(kLKnee) << 0.115, 0.49, 0.01;
  L.joints.row(kLAnkle) << 0.13, 0.10, 0;
  L.joints.row(kRHip) << -0.095, 0.88, 0;
  L.joints.row(kRKnee) << -0.115, 0.49, 0.01;
  L.joints.row(kRAnkle) << -0.13, 0.10, 0;
  L.head_center = Vec3(0, 1.66, 0.01);

  auto J = [&](int j) { return row3(L.joints, j); };
  const double rl = 1.03;
  L.parts.resize(kNumJoints);
  L.parts[kPelvis] = {Vec3(0, 0.86, 0), Vec3(0, 1.08, 0), 0.15, 0.14, 0.72};
  L.parts[kChest] = {Vec3(0, 1.08, 0), Vec3(0, 1.31, 0), 0.14, 0.16, 0.72};
  L.parts[kNeck] = {Vec3(0, 1.36, 0), Vec3(0, 1.56, 0.005), 0.052, 0.048};
  L.parts[kHead] = {L.head_center, L.head_center, 0.105, 0.105};
  L.parts[kLShoulder] = {J(kLShoulder), J(kLElbow), 0.052, 0.043};
  L.parts[kLElbow] = {J(kLElbow), J(kLWrist), 0.041, 0.034};
  L.parts[kLWrist] = {J(kLWrist), J(kLWrist) + 0.15 * la * left_arm, 0.036, 0.03};
  L.parts[kRShoulder] = {J(kRShoulder), J(kRElbow), 0.052, 0.043};
  L.parts[kRElbow] = {J(kRElbow), J(kRWrist), 0.041, 0.034};
  L.parts[kRWrist] = {J(kRWrist), J(kRWrist) + 0.15 * right_arm, 0.036, 0.03};
  L.parts[kLHip] = {J(kLHip), J(kLKnee), 0.08, 0.056};
  L.parts[kLKnee] = {J(kLKnee), J(kLAnkle), 0.053, 0.04};
  L.parts[kLAnkle] = {J(kLAnkle) + Vec3(0, -0.03, -0.04), J(kLAnkle) + Vec3(0.01, -0.05, 0.15), 0.045, 0.035};
  L.parts[kRHip] = {J(kRHip), J(kRKnee), 0.08 * rl, 0.056 * rl};
  L.parts[kRKnee] = {J(kRKnee), J(kRAnkle), 0.053 * rl, 0.04 * rl};
  L.parts[kRAnkle] = {J(kRAnkle) + Vec3(0, -0.03, -0.04), J(kRAnkle) + Vec3(-0.01, -0.05, 0.15), 0.045, 0.035};
  return L;
}

inline double body_sdf(const Layout& L, const Vec3& p) {
  double d = L.parts[0].distance(p);
  for (std::size_t j = 1; j < L.parts.size(); ++j) d = smooth_min(d, L.parts[j].distance(p), 0.02);
  return d;
}

inline bool in_arm(int j) { return (j >= kLShoulder && j <= kRWrist); }
inline bool in_leg(int j) { return j >= kLHip; }
inline int limb_root(int j) {
  if (j >= kLShoulder && j <= kLWrist) return kLShoulder;
  if (j >= kRShoulder && j <= kRWrist) return kRShoulder;
  if (j >= kLHip && j <= kLAnkle) return kLHip;
  return kRHip;
}

}  // namespace humanoid

struct HumanoidOptions {
  int target_vertices = 1500;
  double grid_spacing = 0.012;
  double skin_temperature = 0.02;
};

/// Deterministic procedural humanoid: implicit capsule body meshed at `target_vertices`,
/// softmax skinning over the three closest parts, four shape directions (height, girth,
/// limb length, head size), and a masked regressor that is exact on the template and along
/// every shape direction.
inline ParametricModel make_toy_humanoid(const HumanoidOptions& opt = {}) {
  using namespace humanoid;
  const Layout L = rest_layout();
  const ScalarField sdf = [&L](const Vec3& p) { return body_sdf(L, p); };
  const double h = opt.grid_spacing;
  TriMesh fine = surface_nets(sdf, Vec3(-0.8, -0.05, -0.25), Vec3(0.8, 1.85, 0.3), h);
  project_to_level_set(sdf, fine.V, h);
  auto place = [&](const Vec3& p) {
    Points q(1, 3);
    q.row(0) = p.transpose();
    project_to_level_set(sdf, q, h, 3);
    return Vec3(row3(q, 0));
  };
  TriMesh mesh = decimate(fine, opt.target_vertices, place);
  tangential_relax(mesh, 3, 0.5, place);
  mesh.N = vertex_normals(mesh);

  ParametricModel m;
  m.mesh = mesh;
  const Index n = mesh.num_vertices();
  m.joint_names.assign(kJointNames.begin(), kJointNames.end());
  m.parent.assign(kParents.begin(), kParents.end());
  m.rest_joints = L.joints;
  m.pose_limits.resize(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    if (j == kPelvis) m.pose_limits[j] = 2.0;
    else if (j == kNeck || j == kHead) m.pose_limits[j] = 1.0 / 36;
    else if (j == kLWrist || j == kRWrist || j == kLAnkle || j == kRAnkle) m.pose_limits[j] = 2.0 / 18;
    else m.pose_limits[j] = 5.0 / 18;
  }

  // Skinning: softmax of negative part distances over the three closest parts.
  m.weights = MatX::Zero(n, kNumJoints);
  for (Index i = 0; i < n; ++i) {
    const Vec3 p = row3(mesh.V, i);
    std::array<std::pair<double, int>, kNumJoints> d;
    for (int j = 0; j < kNumJoints; ++j) d[j] = {L.parts[j].distance(p), j};
    std::partial_sort(d.begin(), d.begin() + 3, d.end());
    double sum = 0;
    for (int a = 0; a < 3; ++a) sum += std::exp(-(d[a].first - d[0].first) / opt.skin_temperature);
    for (int a = 0; a < 3; ++a) m.weights(i, d[a].second) = std::exp(-(d[a].first - d[0].first) / opt.skin_temperature) / sum;
  }

  // Shape directions and the matching joint displacements.
  std::vector<Points> joint_dirs;
  {
    Points height(n, 3), girth(n, 3), limbs(n, 3), head(n, 3);
    for (Index i = 0; i < n; ++i) {
      const Vec3 p = row3(mesh.V, i);
      height.row(i) << 0, 0.08 * p.y(), 0;
      Vec3 g = Vec3::Zero(), l = Vec3::Zero();
      for (int j = 0; j < kNumJoints; ++j) {
        const double w = m.weights(i, j);
        if (w == 0) continue;
        if (j != kHead) g += w * 0.12 * (p - L.parts[j].axis_point(p));
        if (in_arm(j) || in_leg(j)) l += w * 0.1 * (p - row3(L.joints, limb_root(j)));
      }
      girth.row(i) = g.transpose();
      limbs.row(i) = l.transpose();
      head.row(i) = (m.weights(i, kHead) * 0.12 * (p - L.head_center)).transpose();
    }
    m.shape_dirs = {height, girth, limbs, head};
    Points jh(kNumJoints, 3), jl = Points::Zero(kNumJoints, 3);
    for (int j = 0; j < kNumJoints; ++j) {
      jh.row(j) << 0, 0.08 * L.joints(j, 1), 0;
      if ((in_arm(j) || in_leg(j)) && limb_root(j) != j) jl.row(j) = 0.1 * (L.joints.row(j) - L.joints.row(limb_root(j)));
    }
    joint_dirs = {jh, Points::Zero(kNumJoints, 3), jl, Points::Zero(kNumJoints, 3)};
  }

  // Regressor mask: vertices substantially skinned to the joint or to its parent.
  MatX mask = MatX::Zero(kNumJoints, n);
  for (int j = 0; j < kNumJoints; ++j)
    for (Index i = 0; i < n; ++i) {
      double w = m.weights(i, j);
      if (m.parent[j] >= 0) w = std::max(w, m.weights(i, m.parent[j]));
      if (w >= 0.1) mask(j, i) = 1;
    }
  std::vector<Points> X{mesh.V}, S{L.joints};
  for (int b = 0; b < 4; ++b) {
    X.push_back(mesh.V + m.shape_dirs[b]);
    S.push_back(L.joints + joint_dirs[b]);
  }
  m.regressor = fit_joint_regressor(mask, X, S).regressor;

  // Annotations.
  std::vector<int> owner(n);
  for (Index i = 0; i < n; ++i) {
    Index arg = 0;
    m.weights.row(i).maxCoeff(&arg);
    owner[i] = static_cast<int>(arg);
  }
  auto extreme = [&](const std::vector<int>& joints, const Vec3& dir, const Vec3& origin) {
    int best = -1;
    double bv = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (std::find(joints.begin(), joints.end(), owner[i]) == joints.end()) continue;
      const double v = (row3(mesh.V, i) - origin).dot(dir);
      if (v > bv) {
        bv = v;
        best = static_cast<int>(i);
      }
    }
    return best;
  };
  const double s45 = std::sqrt(0.5);
  m.landmarks.head = extreme({kHead}, Vec3::UnitY(), Vec3::Zero());
  m.landmarks.hands = {extreme({kLWrist}, Vec3(s45, -s45, 0), row3(L.joints, kLWrist)),
                       extreme({kRWrist}, Vec3(-s45, -s45, 0), row3(L.joints, kRWrist))};
  m.landmarks.feet = {extreme({kLAnkle}, Vec3::UnitZ(), Vec3::Zero()), extreme({kRAnkle}, Vec3::UnitZ(), Vec3::Zero())};
  m.landmarks.hand_sides = {Side::kLeft, Side::kRight};
  m.landmarks.foot_sides = {Side::kLeft, Side::kRight};
  for (Index i = 0; i < n; ++i) {
    if (owner[i] == kHead) m.regions["head"].push_back(static_cast<int>(i));
    if (owner[i] == kLWrist || owner[i] == kRWrist) m.regions["hands"].push_back(static_cast<int>(i));
  }
  validate_model(m);
  return m;
}

/// Random parameters: shape coefficients uniform in [-beta_range, beta_range], each joint
/// rotated about a random axis by an angle uniform in [0, min(max_angle, 0.7 pi c_j)].
inline BodyParams sample_params(const ParametricModel& m, std::uint64_t seed, double max_angle = M_PI / 4,
                                double beta_range = 1.0) {
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> u(-1.0, 1.0), u01(0.0, 1.0);
  std::normal_distribution<double> g;
  BodyParams p = BodyParams::zeros(m);
  for (int b = 0; b < m.num_shapes(); ++b) p.beta[b] = beta_range * u(rng);
  for (int j = 0; j < m.num_joints(); ++j) {
    Vec3 axis(g(rng), g(rng), g(rng));
    axis.normalize();
    const double limit = std::min(max_angle, 0.7 * M_PI * m.pose_limits[j]);
    p.theta.row(j) = (u01(rng) * limit * axis).transpose();
  }
  return p;
}

/// Pose in which the left arm is lowered (about the body's front axis) until the left hand
/// comes within `gap` of the rest of the body (any vertex outside the left arm). Used to
/// build self-contact fixtures.
inline BodyParams touching_hand_pose(const ParametricModel& m, double gap = 0.004) {
  using namespace humanoid;
  std::vector<int> hand, body;
  for (Index i = 0; i < m.num_vertices(); ++i) {
    Index arg = 0;
    m.weights.row(i).maxCoeff(&arg);
    if (arg == kLWrist) hand.push_back(static_cast<int>(i));
    else if (arg != kLShoulder && arg != kLElbow) body.push_back(static_cast<int>(i));
  }
  auto contact = [&](double angle) {
    BodyParams p = BodyParams::zeros(m);
    p.theta.row(kLShoulder) << 0, 0, -angle;
    const Points X = pose(m, p);
    Points L(static_cast<Index>(body.size()), 3);
    for (std::size_t k = 0; k < body.size(); ++k) L.row(static_cast<Index>(k)) = X.row(body[k]);
    const KdTree3 tree(L);
    double best = std::numeric_limits<double>::infinity();
    for (int v : hand) best = std::min(best, (row3(L, tree.nearest(row3(X, v))) - row3(X, v)).norm());
    return std::pair{best, p};
  };
  // Forward scan: the distance is not monotone once the arm passes the body, so stop at the
  // first angle within `gap`, or at the first local minimum.
  constexpr double step = 0.005;
  auto prev = contact(0.0);
  for (double angle = step; angle <= 0.5 * M_PI; angle += step) {
    auto cur = contact(angle);
    if (cur.first <= gap) return cur.second;
    if (cur.first > prev.first) return prev.second;
    prev = std::move(cur);
  }
  return prev.second;
}

}  // namespace fmreg
