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

// Skeleton transport through a functional map, left/right labelling, rigid alignment.

#include <Eigen/Geometry>

#include "fmreg/body_model.hpp"
#include "fmreg/funmap.hpp"

namespace fmreg {

struct TransportedSkeleton {
  Points joints;        // J x 3
  Points coordinates;   // data coordinates expressed on the template, n_M x 3
  double condition = 0; // sigma_max / sigma_min of C
};

/// Maps the coordinate functions of N onto M with C^T, synthesizes them on M and applies
/// the joint regressor.
inline TransportedSkeleton transport_skeleton(const MatX& C, const SpectralBasis& basisM, const SpectralBasis& basisN,
                                              const Points& XN, const MatX& regressor) {
  require(C.rows() == basisN.size() && C.cols() == basisM.size(), "transport_skeleton: C is ", C.rows(), "x",
          C.cols(), ", bases have ", basisN.size(), " and ", basisM.size(), " functions");
  require(XN.rows() == basisN.num_vertices(), "transport_skeleton: data has ", XN.rows(), " vertices, basis has ",
          basisN.num_vertices());
  require(regressor.cols() == basisM.num_vertices(), "transport_skeleton: regressor/template size mismatch");
  const Eigen::JacobiSVD<MatX> svd(C);
  const VecX sv = svd.singularValues();
  TransportedSkeleton out;
  out.condition = sv.size() && sv[sv.size() - 1] > 0 ? sv[0] / sv[sv.size() - 1]
                                                     : std::numeric_limits<double>::infinity();
  const MatX coeffs = fourier_coeffs(basisN, MatX(XN));
  out.coordinates = basisM.phi * (C.transpose() * coeffs);
  out.joints = regress_joints(regressor, out.coordinates);
  return out;
}

struct SideLabels {
  LandmarkSet landmarks;
  Vec3 front = Vec3::Zero();
  Vec3 up = Vec3::Zero();
  bool degenerate = false;
};

/// Joint indices the labelling relies on, looked up by name in the model.
struct SkeletonRoles {
  int pelvis = -1, neck = -1;
  std::array<int, 2> ankles{-1, -1};
};

inline SkeletonRoles skeleton_roles(const ParametricModel& m) {
  SkeletonRoles r;
  for (int j = 0; j < m.num_joints(); ++j) {
    const std::string& s = m.joint_names[j];
    if (s == "pelvis") r.pelvis = j;
    else if (s == "neck") r.neck = j;
    else if (s == "l_ankle") r.ankles[0] = j;
    else if (s == "r_ankle") r.ankles[1] = j;
  }
  if (r.pelvis < 0) r.pelvis = 0;
  require(r.neck >= 0 && r.ankles[0] >= 0 && r.ankles[1] >= 0,
          "model needs joints named neck, l_ankle and r_ankle for left/right labelling");
  return r;
}

/// Front = mean of (foot tip - nearest ankle joint) orthogonal to the spine u = neck - pelvis.
/// A limb point p is on the left when det[u, front, p - pelvis] > 0 (right-handed body
/// frame: up x front = left). Within each pair the two points get opposite sides, ordered
/// by that determinant.
inline SideLabels label_left_right(const Points& skeleton, const LandmarkSet& landmarks, const Points& XN,
                                   const SkeletonRoles& roles) {
  SideLabels out;
  out.landmarks = landmarks;
  out.landmarks.hand_sides = out.landmarks.foot_sides = {Side::kUnknown, Side::kUnknown};
  const Vec3 pelvis = row3(skeleton, roles.pelvis);
  const Vec3 spine = row3(skeleton, roles.neck) - pelvis;
  if (spine.norm() < 1e-12) {
    out.degenerate = true;
    return out;
  }
  out.up = spine.normalized();
  Vec3 front = Vec3::Zero();
  for (int foot : landmarks.feet) {
    const Vec3 tip = row3(XN, foot);
    const Vec3 a0 = row3(skeleton, roles.ankles[0]), a1 = row3(skeleton, roles.ankles[1]);
    front += tip - ((tip - a0).norm() <= (tip - a1).norm() ? a0 : a1);
  }
  front -= front.dot(out.up) * out.up;
  const double scale = spine.norm();
  if (front.norm() < 1e-3 * scale) {
    out.degenerate = true;
    return out;
  }
  out.front = front.normalized();
  auto side_value = [&](int v) { return out.up.dot(out.front.cross(row3(XN, v) - pelvis)); };
  auto assign = [&](const std::array<int, 2>& pts, std::array<Side, 2>& sides) {
    const double a = side_value(pts[0]), b = side_value(pts[1]);
    if (a == b) return false;
    sides = a > b ? std::array<Side, 2>{Side::kLeft, Side::kRight} : std::array<Side, 2>{Side::kRight, Side::kLeft};
    return true;
  };
  if (!assign(landmarks.hands, out.landmarks.hand_sides) || !assign(landmarks.feet, out.landmarks.foot_sides)) {
    out.landmarks.hand_sides = out.landmarks.foot_sides = {Side::kUnknown, Side::kUnknown};
    out.degenerate = true;
  }
  return out;
}

/// Landmarks reordered as head, left hand, right hand, left foot, right foot.
inline std::array<int, 5> ordered_landmarks(const LandmarkSet& L) {
  for (Side s : {L.hand_sides[0], L.hand_sides[1], L.foot_sides[0], L.foot_sides[1]})
    require(s != Side::kUnknown, "landmark sides are unknown");
  const int lh = L.hand_sides[0] == Side::kLeft ? 0 : 1, lf = L.foot_sides[0] == Side::kLeft ? 0 : 1;
  return {L.head, L.hands[lh], L.hands[1 - lh], L.feet[lf], L.feet[1 - lf]};
}

struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Points apply(const Points& P) const {
    Points out = (P * R.transpose()).rowwise() + t.transpose();
    return out;
  }
};

/// Least-squares rotation and translation taking src rows onto dst rows (det R = +1).
inline RigidTransform rigid_align(const Points& src, const Points& dst) {
  require(src.rows() == dst.rows(), "rigid_align: ", src.rows(), " source points vs ", dst.rows(), " targets");
  require(src.rows() >= 3, "rigid_align: need at least 3 pairs");
  const Vec3 mu = src.colwise().mean().transpose();
  const Points centered = src.rowwise() - mu.transpose();
  const Eigen::JacobiSVD<MatX> sv{MatX(centered)};
  const VecX s = sv.singularValues();
  if (s[0] <= 0 || s[1] <= 1e-9 * s[0])
    fail(ErrorKind::kDegenerateGeometry, "rigid_align: source points are collinear");
  const Eigen::Matrix4d T = Eigen::umeyama(MatX(src.transpose()), MatX(dst.transpose()), false);
  RigidTransform out;
  out.R = T.topLeftCorner<3, 3>();
  out.t = T.topRightCorner<3, 1>();
  return out;
}

}  // namespace fmreg
