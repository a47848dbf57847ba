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

// Linear blend skinning body model: shape blend, kinematic tree, joint regressor.

#include "fmreg/io.hpp"
#include "fmreg/mesh.hpp"

#include <map>

namespace fmreg {

enum class Side { kUnknown, kLeft, kRight };

inline const char* to_string(Side s) {
  switch (s) {
    case Side::kLeft: return "left";
    case Side::kRight: return "right";
    default: return "unknown";
  }
}

inline Side parse_side(const std::string& s) {
  if (s == "left") return Side::kLeft;
  if (s == "right") return Side::kRight;
  if (s == "unknown") return Side::kUnknown;
  fail(ErrorKind::kParse, "unknown side '", s, "'");
}

/// Five body landmarks. Hands and feet come in unordered pairs until sides are known.
struct LandmarkSet {
  int head = -1;
  std::array<int, 2> hands{-1, -1};
  std::array<int, 2> feet{-1, -1};
  std::array<Side, 2> hand_sides{Side::kUnknown, Side::kUnknown};
  std::array<Side, 2> foot_sides{Side::kUnknown, Side::kUnknown};

  /// head, hand 0, hand 1, foot 0, foot 1
  std::array<int, 5> vertices() const { return {head, hands[0], hands[1], feet[0], feet[1]}; }
};

struct ParametricModel {
  TriMesh mesh;                      // template X0 and connectivity
  std::vector<Points> shape_dirs;    // n_beta displacement fields
  std::vector<std::string> joint_names;
  std::vector<int> parent;           // parent[0] == -1
  Points rest_joints;                // J x 3, joints of the template
  MatX weights;                      // n x J skinning weights, rows sum to 1
  MatX regressor;                    // J x n joint regressor
  VecX pose_limits;                  // c per joint; angle limit is pi * c
  LandmarkSet landmarks;             // with sides
  std::map<std::string, std::vector<int>> regions;  // "head", "hands"

  Index num_vertices() const { return mesh.num_vertices(); }
  int num_joints() const { return static_cast<int>(parent.size()); }
  int num_shapes() const { return static_cast<int>(shape_dirs.size()); }
  int num_params() const { return num_shapes() + 3 * num_joints() + 6; }
};

/// Shape coefficients, per-joint axis-angle rotations, and a global rigid transform
/// applied after skinning (x -> R x + t).
struct BodyParams {
  VecX beta;
  Points theta;
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  static BodyParams zeros(const ParametricModel& m) {
    BodyParams p;
    p.beta = VecX::Zero(m.num_shapes());
    p.theta = Points::Zero(m.num_joints(), 3);
    return p;
  }

  /// [beta, theta (row-major), rotation, translation]
  VecX flat() const {
    VecX x(beta.size() + theta.size() + 6);
    x << beta, Eigen::Map<const VecX>(theta.data(), theta.size()), rotation, translation;
    return x;
  }

  static BodyParams from_flat(const ParametricModel& m, const VecX& x) {
    require(x.size() == m.num_params(), "parameter vector has ", x.size(), " entries, model needs ", m.num_params());
    BodyParams p = zeros(m);
    const int nb = m.num_shapes(), J = m.num_joints();
    p.beta = x.head(nb);
    p.theta = Eigen::Map<const Points>(x.data() + nb, J, 3);
    p.rotation = x.segment<3>(nb + 3 * J);
    p.translation = x.segment<3>(nb + 3 * J + 3);
    return p;
  }
};

/// Angle of each joint rotation.
inline VecX joint_angles(const BodyParams& p) { return p.theta.rowwise().norm(); }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Rotation matrix of an axis-angle vector.
inline Mat3 rotation_from_axis_angle(const Vec3& w) {
  const double a = w.norm();
  if (a < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(a, w / a).toRotationMatrix();
}

/// Right Jacobian of the exponential map: exp(w + d) ~ exp(w) exp(Jr(w) d).
inline Mat3 right_jacobian(const Vec3& w) {
  const double a = w.norm();
  const Mat3 K = skew(w);
  if (a < 1e-5) return Mat3::Identity() - 0.5 * K + K * K / 6.0;
  return Mat3::Identity() - (1 - std::cos(a)) / (a * a) * K + (a - std::sin(a)) / (a * a * a) * K * K;
}

/// Axis-angle vector of a rotation matrix.
inline Vec3 axis_angle_from_rotation(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

inline std::vector<std::vector<int>> children_of(const std::vector<int>& parent) {
  std::vector<std::vector<int>> ch(parent.size());
  for (std::size_t j = 0; j < parent.size(); ++j)
    if (parent[j] >= 0) ch[parent[j]].push_back(static_cast<int>(j));
  return ch;
}

/// Checks tree structure, weight and regressor normalization.
inline void validate_model(const ParametricModel& m) {
  validate(m.mesh);
  const Index n = m.num_vertices();
  const int J = m.num_joints();
  require(J >= 1 && m.parent[0] == -1, "model: joint 0 must be the root");
  for (int j = 1; j < J; ++j)
    require(m.parent[j] >= 0 && m.parent[j] < j, "model: joint ", j, " must have an earlier parent");
  require(m.rest_joints.rows() == J && m.pose_limits.size() == J && static_cast<int>(m.joint_names.size()) == J,
          "model: per-joint arrays must have ", J, " entries");
  require(m.weights.rows() == n && m.weights.cols() == J, "model: weights must be ", n, "x", J);
  require(m.regressor.rows() == J && m.regressor.cols() == n, "model: regressor must be ", J, "x", n);
  for (const auto& d : m.shape_dirs) require(d.rows() == n, "model: shape direction size mismatch");
  const double wsum = (m.weights.rowwise().sum().array() - 1).abs().maxCoeff();
  require(wsum <= 1e-9, "model: skinning rows must sum to 1 (max deviation ", wsum, ")");
  require(m.weights.minCoeff() >= 0, "model: negative skinning weight");
  const double rsum = (m.regressor.rowwise().sum().array() - 1).abs().maxCoeff();
  require(rsum <= 1e-6, "model: regressor rows must sum to 1 (max deviation ", rsum, ")");
  require(m.pose_limits.minCoeff() > 0, "model: pose limits must be positive");
}

/// Template vertices plus shape displacement.
inline Points shaped_vertices(const ParametricModel& m, const VecX& beta) {
  require(beta.size() == m.num_shapes(), "beta has ", beta.size(), " entries, model has ", m.num_shapes(), " shapes");
  Points X = m.mesh.V;
  for (int b = 0; b < m.num_shapes(); ++b) X += beta[b] * m.shape_dirs[b];
  return X;
}

/// Joint positions S = R X.
inline Points regress_joints(const MatX& regressor, const Points& X) {
  require(regressor.cols() == X.rows(), "regressor expects ", regressor.cols(), " vertices, got ", X.rows());
  return regressor * X;
}

inline Points regress_joints(const ParametricModel& m, const Points& X) { return regress_joints(m.regressor, X); }

/// Posed vertices. When `jac` is given it receives d vec(X) / d params, with X flattened
/// row-major (row 3 i + c) and parameters ordered as in BodyParams::flat().
inline Points pose(const ParametricModel& m, const BodyParams& p, MatX* jac = nullptr) {
  const Index n = m.num_vertices();
  const int J = m.num_joints(), nb = m.num_shapes();
  require(p.theta.rows() == J, "theta has ", p.theta.rows(), " joints, model has ", J);
  const Points Xs = shaped_vertices(m, p.beta);
  const Points Js = regress_joints(m, Xs);

  // Written as offsets from the shaped rest pose (dJ = posed joint - rest joint) so that
  // zero rotations reproduce the template bit for bit.
  std::vector<Mat3> Rl(J), Rg(J);
  std::vector<Vec3> Jg(J), dJ(J);
  for (int j = 0; j < J; ++j) {
    Rl[j] = rotation_from_axis_angle(row3(p.theta, j));
    const int q = m.parent[j];
    if (q < 0) {
      Rg[j] = Rl[j];
      dJ[j] = Vec3::Zero();
    } else {
      Rg[j] = Rg[q] * Rl[j];
      dJ[j] = (Rg[q] - Mat3::Identity()) * (row3(Js, j) - row3(Js, q)) + dJ[q];
    }
    Jg[j] = row3(Js, j) + dJ[j];
  }
  const Mat3 Rglob = rotation_from_axis_angle(p.rotation);

  Points P(n, 3), X(n, 3);
  for (Index i = 0; i < n; ++i) {
    Vec3 v = row3(Xs, i);
    for (int l = 0; l < J; ++l) {
      const double w = m.weights(i, l);
      if (w != 0) v += w * ((Rg[l] - Mat3::Identity()) * (row3(Xs, i) - row3(Js, l)) + dJ[l]);
    }
    P.row(i) = v.transpose();
    X.row(i) = (Rglob * v + p.translation).transpose();
  }
  if (!jac) return X;

  jac->setZero(3 * n, m.num_params());
  // Shape: derivatives of vertices, regressed joints and chained joint positions.
  for (int b = 0; b < nb; ++b) {
    const Points& dx = m.shape_dirs[b];
    const Points dJ = regress_joints(m, dx);
    std::vector<Vec3> dJg(J);
    for (int j = 0; j < J; ++j) {
      const int q = m.parent[j];
      dJg[j] = q < 0 ? Vec3(row3(dJ, j)) : Vec3(Rg[q] * (row3(dJ, j) - row3(dJ, q)) + dJg[q]);
    }
    for (Index i = 0; i < n; ++i) {
      Vec3 d = Vec3::Zero();
      for (int l = 0; l < J; ++l) {
        const double w = m.weights(i, l);
        if (w != 0) d += w * (Rg[l] * (row3(dx, i) - row3(dJ, l)) + dJg[l]);
      }
      jac->block<3, 1>(3 * i, b) = Rglob * d;
    }
  }
  // Pose: a right perturbation of joint j rotates every descendant about Jg[j].
  std::vector<Mat3> omega(J);
  for (int j = 0; j < J; ++j) omega[j] = Rg[j] * right_jacobian(row3(p.theta, j));
  std::vector<Vec3> acc(J);
  for (Index i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), Vec3::Zero());
    std::vector<char> touched(J, 0);
    for (int l = 0; l < J; ++l) {
      const double w = m.weights(i, l);
      if (w == 0) continue;
      const Vec3 q = Rg[l] * (row3(Xs, i) - row3(Js, l)) + Jg[l];
      for (int j = l; j >= 0; j = m.parent[j]) {
        acc[j] += w * (q - Jg[j]);
        touched[j] = 1;
      }
    }
    for (int j = 0; j < J; ++j) {
      if (!touched[j]) continue;
      // d/dk (omega e_k x acc) = -skew(acc) omega e_k
      jac->block<3, 3>(3 * i, nb + 3 * j) = -Rglob * skew(acc[j]) * omega[j];
    }
  }
  const Mat3 Jr = right_jacobian(p.rotation);
  for (Index i = 0; i < n; ++i) {
    jac->block<3, 3>(3 * i, nb + 3 * J) = -Rglob * skew(row3(P, i)) * Jr;
    jac->block<3, 3>(3 * i, nb + 3 * J + 3) = Mat3::Identity();
  }
  return X;
}

inline TriMesh posed_mesh(const ParametricModel& m, const BodyParams& p) {
  TriMesh out;
  out.V = pose(m, p);
  out.F = m.mesh.F;
  return out;
}

struct RegressorFit {
  MatX regressor;
  double residual = 0;    // Frobenius norm of (W o R) X - S
  bool rank_deficient = false;
};

/// Least-squares joint regressor restricted to the sparsity pattern `mask` (J x n, nonzero =
/// allowed), with rows summing to one. Several training shapes can be stacked: X_k and S_k
/// share the regressor. Among minimizers the one closest to the uniform row is returned.
inline RegressorFit fit_joint_regressor(const MatX& mask, const std::vector<Points>& X, const std::vector<Points>& S,
                                        bool row_sum_one = true) {
  require(!X.empty() && X.size() == S.size(), "fit_joint_regressor: need matching shape/joint lists");
  const Index J = mask.rows(), n = mask.cols();
  for (std::size_t k = 0; k < X.size(); ++k)
    require(X[k].rows() == n && S[k].rows() == J, "fit_joint_regressor: sample ", k, " has wrong size");
  RegressorFit out;
  out.regressor = MatX::Zero(J, n);
  double res2 = 0;
  for (Index j = 0; j < J; ++j) {
    std::vector<Index> cols;
    for (Index i = 0; i < n; ++i)
      if (mask(j, i) != 0) cols.push_back(i);
    if (cols.empty()) fail(ErrorKind::kRankDeficient, "joint ", j, " has no vertices in its regressor mask");
    const Index m = static_cast<Index>(cols.size());
    const Index rows = 3 * static_cast<Index>(X.size());
    MatX A(rows, m);
    VecX b(rows);
    for (std::size_t k = 0; k < X.size(); ++k)
      for (int c = 0; c < 3; ++c) {
        for (Index a = 0; a < m; ++a) A(3 * k + c, a) = X[k](cols[a], c);
        b[3 * k + c] = S[k](j, c);
      }
    VecX r;
    if (row_sum_one) {
      // r = r0 + N z with r0 uniform and N an orthonormal basis of the zero-sum subspace.
      const VecX r0 = VecX::Constant(m, 1.0 / m);
      MatX N;
      if (m > 1) {
        Eigen::HouseholderQR<MatX> qr(VecX::Ones(m));
        N = MatX(qr.householderQ()).rightCols(m - 1);
      }
      if (m == 1) {
        r = r0;
      } else {
        Eigen::CompleteOrthogonalDecomposition<MatX> cod(A * N);
        if (cod.rank() < std::min(A.rows(), m - 1)) out.rank_deficient = true;
        r = r0 + N * cod.solve(b - A * r0);
      }
    } else {
      Eigen::CompleteOrthogonalDecomposition<MatX> cod(A);
      if (cod.rank() < std::min(A.rows(), m)) out.rank_deficient = true;
      r = cod.solve(b);
    }
    for (Index a = 0; a < m; ++a) out.regressor(j, cols[a]) = r[a];
    res2 += (A * r - b).squaredNorm();
  }
  out.residual = std::sqrt(res2);
  return out;
}

// --- files ---

/// Landmark record: one "name vertex side" line per landmark.
inline void save_landmarks(const std::string& path, const LandmarkSet& L) {
  auto out = detail::open_out(path);
  out << "head " << L.head << " unknown\n";
  for (int a = 0; a < 2; ++a) out << "hand " << L.hands[a] << ' ' << to_string(L.hand_sides[a]) << '\n';
  for (int a = 0; a < 2; ++a) out << "foot " << L.feet[a] << ' ' << to_string(L.foot_sides[a]) << '\n';
}

inline LandmarkSet read_landmarks(detail::Tokenizer& tok) {
  LandmarkSet L;
  int hands = 0, feet = 0;
  for (int k = 0; k < 5; ++k) {
    const std::string name = tok.expect("landmark name");
    const int v = static_cast<int>(tok.integer("landmark vertex"));
    const Side side = parse_side(tok.expect("landmark side"));
    if (name == "head") {
      L.head = v;
    } else if (name == "hand" && hands < 2) {
      L.hands[hands] = v;
      L.hand_sides[hands++] = side;
    } else if (name == "foot" && feet < 2) {
      L.feet[feet] = v;
      L.foot_sides[feet++] = side;
    } else {
      fail(ErrorKind::kParse, "unexpected landmark '", name, "'");
    }
  }
  if (L.head < 0 || hands != 2 || feet != 2) fail(ErrorKind::kParse, "landmark record needs head, 2 hands, 2 feet");
  return L;
}

inline LandmarkSet load_landmarks(const std::string& path) {
  auto in = detail::open_in(path);
  detail::Tokenizer tok(in);
  return read_landmarks(tok);
}

/// BodyParams record: "beta n ...", "theta J" + J rows, "rotation x y z", "translation x y z".
inline void save_params(const std::string& path, const BodyParams& p) {
  auto out = detail::open_out(path);
  out << "beta " << p.beta.size();
  for (Index b = 0; b < p.beta.size(); ++b) out << ' ' << p.beta[b];
  out << "\ntheta " << p.theta.rows() << '\n';
  for (Index j = 0; j < p.theta.rows(); ++j) out << p.theta(j, 0) << ' ' << p.theta(j, 1) << ' ' << p.theta(j, 2) << '\n';
  out << "rotation " << p.rotation.x() << ' ' << p.rotation.y() << ' ' << p.rotation.z() << '\n';
  out << "translation " << p.translation.x() << ' ' << p.translation.y() << ' ' << p.translation.z() << '\n';
}

namespace detail {

inline void expect_keyword(Tokenizer& tok, const char* word) {
  const std::string t = tok.expect(word);
  if (t != word) fail(ErrorKind::kParse, "expected '", word, "', found '", t, "'");
}

}  // namespace detail

inline BodyParams load_params(const std::string& path) {
  auto in = detail::open_in(path);
  detail::Tokenizer tok(in);
  BodyParams p;
  detail::expect_keyword(tok, "beta");
  p.beta.resize(tok.integer("shape count"));
  for (Index b = 0; b < p.beta.size(); ++b) p.beta[b] = tok.number("beta");
  detail::expect_keyword(tok, "theta");
  p.theta.resize(tok.integer("joint count"), 3);
  for (Index j = 0; j < p.theta.rows(); ++j)
    for (int c = 0; c < 3; ++c) p.theta(j, c) = tok.number("theta");
  detail::expect_keyword(tok, "rotation");
  for (int c = 0; c < 3; ++c) p.rotation[c] = tok.number("rotation");
  detail::expect_keyword(tok, "translation");
  for (int c = 0; c < 3; ++c) p.translation[c] = tok.number("translation");
  return p;
}

/// Model file, ASCII, '#' comments allowed:
///   fmreg-model 1
///   counts <vertices> <faces> <joints> <shapes>
///   vertices: one "x y z" per line
///   faces: one "a b c" per line
///   joints: one "name parent x y z limit" per line (parent -1 for the root)
///   shapes: for each shape, one "dx dy dz" per vertex
///   weights <nnz> then "vertex joint value" lines
///   regressor <nnz> then "joint vertex value" lines
///   landmarks: five "name vertex side" lines (head, hand, hand, foot, foot)
///   regions <count> then per region "name size v1 v2 ..."
inline void save_model(const std::string& path, const ParametricModel& m) {
  auto out = detail::open_out(path);
  const Index n = m.num_vertices();
  const int J = m.num_joints();
  out << "fmreg-model 1\n";
  out << "counts " << n << ' ' << m.mesh.num_faces() << ' ' << J << ' ' << m.num_shapes() << '\n';
  for (Index i = 0; i < n; ++i) out << m.mesh.V(i, 0) << ' ' << m.mesh.V(i, 1) << ' ' << m.mesh.V(i, 2) << '\n';
  for (Index f = 0; f < m.mesh.num_faces(); ++f) out << m.mesh.F(f, 0) << ' ' << m.mesh.F(f, 1) << ' ' << m.mesh.F(f, 2) << '\n';
  for (int j = 0; j < J; ++j)
    out << m.joint_names[j] << ' ' << m.parent[j] << ' ' << m.rest_joints(j, 0) << ' ' << m.rest_joints(j, 1) << ' '
        << m.rest_joints(j, 2) << ' ' << m.pose_limits[j] << '\n';
  for (const auto& d : m.shape_dirs)
    for (Index i = 0; i < n; ++i) out << d(i, 0) << ' ' << d(i, 1) << ' ' << d(i, 2) << '\n';
  out << "weights " << (m.weights.array() != 0).count() << '\n';
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < J; ++j)
      if (m.weights(i, j) != 0) out << i << ' ' << j << ' ' << m.weights(i, j) << '\n';
  out << "regressor " << (m.regressor.array() != 0).count() << '\n';
  for (int j = 0; j < J; ++j)
    for (Index i = 0; i < n; ++i)
      if (m.regressor(j, i) != 0) out << j << ' ' << i << ' ' << m.regressor(j, i) << '\n';
  const LandmarkSet& L = m.landmarks;
  out << "head " << L.head << " unknown\n";
  for (int a = 0; a < 2; ++a) out << "hand " << L.hands[a] << ' ' << to_string(L.hand_sides[a]) << '\n';
  for (int a = 0; a < 2; ++a) out << "foot " << L.feet[a] << ' ' << to_string(L.foot_sides[a]) << '\n';
  out << "regions " << m.regions.size() << '\n';
  for (const auto& [name, verts] : m.regions) {
    out << name << ' ' << verts.size();
    for (int v : verts) out << ' ' << v;
    out << '\n';
  }
}

inline ParametricModel load_model(const std::string& path) {
  auto in = detail::open_in(path);
  detail::Tokenizer tok(in);
  detail::expect_keyword(tok, "fmreg-model");
  if (tok.integer("version") != 1) fail(ErrorKind::kParse, "unsupported model version");
  detail::expect_keyword(tok, "counts");
  const long n = tok.integer("vertex count"), nf = tok.integer("face count");
  const long J = tok.integer("joint count"), nb = tok.integer("shape count");
  if (n <= 0 || nf <= 0 || J <= 0 || nb < 0) fail(ErrorKind::kParse, "invalid model counts");
  ParametricModel m;
  m.mesh.V.resize(n, 3);
  for (long i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) m.mesh.V(i, c) = tok.number("vertex coordinate");
  m.mesh.F.resize(nf, 3);
  for (long f = 0; f < nf; ++f)
    for (int c = 0; c < 3; ++c) m.mesh.F(f, c) = static_cast<int>(tok.integer("face index"));
  m.rest_joints.resize(J, 3);
  m.pose_limits.resize(J);
  for (long j = 0; j < J; ++j) {
    m.joint_names.push_back(tok.expect("joint name"));
    m.parent.push_back(static_cast<int>(tok.integer("joint parent")));
    for (int c = 0; c < 3; ++c) m.rest_joints(j, c) = tok.number("joint position");
    m.pose_limits[j] = tok.number("pose limit");
  }
  for (long b = 0; b < nb; ++b) {
    Points d(n, 3);
    for (long i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) d(i, c) = tok.number("shape displacement");
    m.shape_dirs.push_back(std::move(d));
  }
  detail::expect_keyword(tok, "weights");
  m.weights = MatX::Zero(n, J);
  for (long k = tok.integer("weight count"); k > 0; --k) {
    const long i = tok.integer("weight vertex"), j = tok.integer("weight joint");
    if (i < 0 || i >= n || j < 0 || j >= J) fail(ErrorKind::kIndexOutOfRange, "weight entry (", i, ", ", j, ") out of range");
    m.weights(i, j) = tok.number("weight");
  }
  detail::expect_keyword(tok, "regressor");
  m.regressor = MatX::Zero(J, n);
  for (long k = tok.integer("regressor count"); k > 0; --k) {
    const long j = tok.integer("regressor joint"), i = tok.integer("regressor vertex");
    if (i < 0 || i >= n || j < 0 || j >= J) fail(ErrorKind::kIndexOutOfRange, "regressor entry (", j, ", ", i, ") out of range");
    m.regressor(j, i) = tok.number("regressor value");
  }
  m.landmarks = read_landmarks(tok);
  detail::expect_keyword(tok, "regions");
  for (long r = tok.integer("region count"); r > 0; --r) {
    const std::string name = tok.expect("region name");
    std::vector<int> verts(tok.integer("region size"));
    for (int& v : verts) v = static_cast<int>(tok.integer("region vertex"));
    m.regions[name] = std::move(verts);
  }
  m.mesh.N = vertex_normals(m.mesh);
  validate_model(m);
  return m;
}

}  // namespace fmreg
