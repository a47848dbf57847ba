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

// Two-round registration of a parametric body model to a surface, plus evaluation
// helpers (correspondence curves, landmark stability, ablations).

#include <chrono>
#include <numeric>
#include <filesystem>
#include <sstream>

#include "fmreg/arap.hpp"
#include "fmreg/distance.hpp"
#include "fmreg/fitting.hpp"
#include "fmreg/io.hpp"
#include "fmreg/landmarks.hpp"
#include "fmreg/perturb.hpp"
#include "fmreg/skeleton.hpp"

namespace fmreg {

struct PipelineConfig {
  int k_m = 50, k_n = 30;
  double lambda1 = 0.1, lambda2 = 0.001;
  double mu = 0.01;
  int refine_T = 5, q = 1000;
  int spectral_icp_iterations = 10;
  int wks_dims = 20;
  double tau1 = 0.05, tau2 = 1.0;
  double cluster_thresh = 0.9;
  int dep_T = 10;
  double w_S = 10, w_L = 1, w_V = 0.1, w_beta = 0.5, w_theta = 1;
  double w_head = 1, w_hands = 1;
  double region_radius = 0.1;  // head/hands balls, fraction of the biharmonic diameter
  double normal_thresh = M_PI / 2;
  int icp_iterations = 10;
  double arap_weight = 1.0;
  int arap_iterations = 5;
  std::uint64_t seed = 0;
  // Ablation switches.
  bool use_normals = true;
  bool head_hands = true;
  bool round2 = true;
  bool local_refinement = true;

  /// Sets one key; throws on unknown keys or malformed values.
  void set(const std::string& key, const std::string& value) {
    auto as_double = [&] {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) fail(ErrorKind::kParse, "config: '", key, "' expects a number, got '", value, "'");
      return v;
    };
    auto as_int = [&] {
      const double v = as_double();
      if (v != std::floor(v)) fail(ErrorKind::kParse, "config: '", key, "' expects an integer, got '", value, "'");
      return static_cast<int>(v);
    };
    auto as_bool = [&] {
      if (value == "1" || value == "true") return true;
      if (value == "0" || value == "false") return false;
      fail(ErrorKind::kParse, "config: '", key, "' expects true/false, got '", value, "'");
    };
    for (auto& [name, ptr] : doubles())
      if (key == name) {
        this->*ptr = as_double();
        return;
      }
    for (auto& [name, ptr] : ints())
      if (key == name) {
        this->*ptr = as_int();
        return;
      }
    for (auto& [name, ptr] : bools())
      if (key == name) {
        this->*ptr = as_bool();
        return;
      }
    if (key == "seed") {
      seed = static_cast<std::uint64_t>(as_int());
      return;
    }
    fail(ErrorKind::kParse, "config: unknown key '", key, "'");
  }

  /// "key=value" pairs, one per line; '#' starts a comment.
  void parse(std::istream& in) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = line.substr(0, line.find('#'));
      const auto eq = line.find('=');
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      if (trim(line).empty()) continue;
      if (eq == std::string::npos) fail(ErrorKind::kParse, "config line ", lineno, ": expected key=value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  static PipelineConfig load(const std::string& path) {
    auto in = detail::open_in(path);
    PipelineConfig c;
    c.parse(in);
    return c;
  }

  std::string to_string() const {
    std::ostringstream out;
    out.precision(17);
    for (auto& [name, ptr] : doubles()) out << name << '=' << this->*ptr << '\n';
    for (auto& [name, ptr] : ints()) out << name << '=' << this->*ptr << '\n';
    for (auto& [name, ptr] : bools()) out << name << '=' << (this->*ptr ? "true" : "false") << '\n';
    out << "seed=" << seed << '\n';
    return out.str();
  }

 private:
  static const std::vector<std::pair<std::string, double PipelineConfig::*>>& doubles() {
    static const std::vector<std::pair<std::string, double PipelineConfig::*>> t = {
        {"lambda1", &PipelineConfig::lambda1},     {"lambda2", &PipelineConfig::lambda2},
        {"mu", &PipelineConfig::mu},               {"tau1", &PipelineConfig::tau1},
        {"tau2", &PipelineConfig::tau2},           {"cluster_thresh", &PipelineConfig::cluster_thresh},
        {"w_S", &PipelineConfig::w_S},             {"w_L", &PipelineConfig::w_L},
        {"w_V", &PipelineConfig::w_V},             {"w_beta", &PipelineConfig::w_beta},
        {"w_theta", &PipelineConfig::w_theta},     {"w_head", &PipelineConfig::w_head},
        {"w_hands", &PipelineConfig::w_hands},     {"region_radius", &PipelineConfig::region_radius},
        {"normal_thresh", &PipelineConfig::normal_thresh}, {"arap_weight", &PipelineConfig::arap_weight}};
    return t;
  }
  static const std::vector<std::pair<std::string, int PipelineConfig::*>>& ints() {
    static const std::vector<std::pair<std::string, int PipelineConfig::*>> t = {
        {"k_m", &PipelineConfig::k_m},
        {"k_n", &PipelineConfig::k_n},
        {"refine_T", &PipelineConfig::refine_T},
        {"q", &PipelineConfig::q},
        {"spectral_icp_iterations", &PipelineConfig::spectral_icp_iterations},
        {"wks_dims", &PipelineConfig::wks_dims},
        {"dep_T", &PipelineConfig::dep_T},
        {"icp_iterations", &PipelineConfig::icp_iterations},
        {"arap_iterations", &PipelineConfig::arap_iterations}};
    return t;
  }
  static const std::vector<std::pair<std::string, bool PipelineConfig::*>>& bools() {
    static const std::vector<std::pair<std::string, bool PipelineConfig::*>> t = {
        {"use_normals", &PipelineConfig::use_normals},
        {"head_hands", &PipelineConfig::head_hands},
        {"round2", &PipelineConfig::round2},
        {"local_refinement", &PipelineConfig::local_refinement}};
    return t;
  }
};

/// Single-flag ablations.
enum class Ablation { kNoShapePrior, kNoSkeleton, kNoNormals, kNoHeadHands, kNoPosePrior, kRound1Only };

inline const std::vector<Ablation>& all_ablations() {
  static const std::vector<Ablation> a = {Ablation::kNoShapePrior, Ablation::kNoSkeleton, Ablation::kNoNormals,
                                          Ablation::kNoHeadHands,  Ablation::kNoPosePrior, Ablation::kRound1Only};
  return a;
}

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::kNoShapePrior: return "w_beta=0";
    case Ablation::kNoSkeleton: return "w_S=0";
    case Ablation::kNoNormals: return "no-normals";
    case Ablation::kNoHeadHands: return "no-head-hands";
    case Ablation::kNoPosePrior: return "w_theta=0";
    case Ablation::kRound1Only: return "round1-only";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  for (Ablation a : all_ablations())
    if (s == to_string(a)) return a;
  fail(ErrorKind::kParse, "unknown ablation '", s, "'");
}

inline PipelineConfig with_ablation(PipelineConfig c, Ablation a) {
  switch (a) {
    case Ablation::kNoShapePrior: c.w_beta = 0; break;
    case Ablation::kNoSkeleton: c.w_S = 0; break;
    case Ablation::kNoNormals: c.use_normals = false; break;
    case Ablation::kNoHeadHands: c.head_hands = false; break;
    case Ablation::kNoPosePrior: c.w_theta = 0; break;
    case Ablation::kRound1Only: c.round2 = false; break;
  }
  return c;
}

inline LandmarkConfig landmark_config(const PipelineConfig& cfg) {
  LandmarkConfig lc;
  lc.tau1 = cfg.tau1;
  lc.tau2 = cfg.tau2;
  lc.T = cfg.dep_T;
  lc.cluster_thresh = cfg.cluster_thresh;
  return lc;
}

struct StageReport {
  std::string name;
  double seconds = 0;
  bool has_error = false;
  ErrorStats error;       // model units
  double mean_pct = 0;    // mean error, % of the target bbox diagonal
  std::string note;
};

struct RegistrationReport {
  PipelineConfig config;
  std::vector<StageReport> stages;
  double bbox_diagonal = 0;
  Index target_vertices = 0;
  Index dropped_vertices = 0;  // removed by taking the largest component
  LandmarkSet target_landmarks;
  bool sides_degenerate = false;
  BodyParams round1, round2;
  Points final_vertices;
  PointMap final_map;          // template vertex -> target vertex (last functional map)
  VecX final_error;            // per template vertex, point-to-surface
  std::vector<std::string> artifacts;  // files written, in order

  const StageReport& stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return s;
    fail(ErrorKind::kPrecondition, "report has no stage '", name, "'");
  }
  const StageReport& last_with_error() const {
    for (auto it = stages.rbegin(); it != stages.rend(); ++it)
      if (it->has_error) return *it;
    fail(ErrorKind::kPrecondition, "report has no error statistics");
  }

  std::string to_text() const {
    std::ostringstream out;
    out.precision(10);
    out << "# registration report\n";
    out << "target_vertices=" << target_vertices << "\ndropped_vertices=" << dropped_vertices
        << "\nbbox_diagonal=" << bbox_diagonal << "\nsides_degenerate=" << (sides_degenerate ? "true" : "false") << '\n';
    out << "landmarks=" << target_landmarks.head << ' ' << target_landmarks.hands[0] << ':'
        << to_string(target_landmarks.hand_sides[0]) << ' ' << target_landmarks.hands[1] << ':'
        << to_string(target_landmarks.hand_sides[1]) << ' ' << target_landmarks.feet[0] << ':'
        << to_string(target_landmarks.foot_sides[0]) << ' ' << target_landmarks.feet[1] << ':'
        << to_string(target_landmarks.foot_sides[1]) << '\n';
    out << "# stage,seconds,mean,median,max,mean_pct_bbox,note\n";
    for (const auto& s : stages) {
      out << "stage=" << s.name << ',' << s.seconds << ',';
      if (s.has_error) out << s.error.mean << ',' << s.error.median << ',' << s.error.max << ',' << s.mean_pct;
      else out << ",,,";
      out << ',' << s.note << '\n';
    }
    for (const auto& a : artifacts) out << "artifact=" << a << '\n';
    out << "# config\n" << config.to_string();
    return out.str();
  }
};

/// Error of model vertices against the target: exact point-to-surface for meshes, nearest
/// point for clouds.
inline VecX target_error(const Points& X, const Surface& target) {
  if (std::holds_alternative<TriMesh>(target)) return point_to_surface_error(X, std::get<TriMesh>(target));
  const KdTree3 tree(std::get<PointCloud>(target).P);
  VecX d(X.rows());
  for (Index i = 0; i < X.rows(); ++i) {
    double d2 = 0;
    tree.nearest(row3(X, i), &d2);
    d[i] = std::sqrt(d2);
  }
  return d;
}

inline Points surface_normals(const Surface& s) {
  if (std::holds_alternative<TriMesh>(s)) return vertex_normals(std::get<TriMesh>(s));
  return std::get<PointCloud>(s).N;
}

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(RegistrationReport& r) : report_(r), start_(std::chrono::steady_clock::now()) {}

  StageReport& finish(const std::string& name, const std::string& note = {}) {
    const auto now = std::chrono::steady_clock::now();
    StageReport s;
    s.name = name;
    s.seconds = std::chrono::duration<double>(now - start_).count();
    s.note = note;
    start_ = now;
    report_.stages.push_back(s);
    return report_.stages.back();
  }

  StageReport& finish_with_error(const std::string& name, const Points& X, const Surface& target,
                                 const std::string& note = {}) {
    StageReport& s = finish(name, note);
    report_.final_error = target_error(X, target);
    s.has_error = true;
    s.error = error_stats(report_.final_error);
    s.mean_pct = 100.0 * s.error.mean / report_.bbox_diagonal;
    return s;
  }

 private:
  RegistrationReport& report_;
  std::chrono::steady_clock::time_point start_;
};

// Hands and feet reordered by biharmonic distance to the head (closest first), matching the
// convention of landmark extraction on unlabelled data.
inline std::vector<int> distance_ordered(const LandmarkSet& L, const SpectralBasis& basis) {
  const VecX dh = biharmonic_distance(basis, {L.head}).row(0).transpose();
  auto pair = [&](std::array<int, 2> p) {
    if (dh[p[1]] < dh[p[0]] || (dh[p[1]] == dh[p[0]] && p[1] < p[0])) std::swap(p[0], p[1]);
    return p;
  };
  const auto h = pair(L.hands), f = pair(L.feet);
  return {L.head, h[0], h[1], f[0], f[1]};
}

struct MapStage {
  MatX C;
  PointMap map;
};

inline MapStage estimate_map(const SpectralBasis& bM, const SpectralBasis& bN, const Points& XM,
                             const std::vector<int>& lmM, const std::vector<int>& lmN, const PipelineConfig& cfg) {
  WaveKernelOptions wo;
  wo.num_dims = cfg.wks_dims;
  const DescriptorSet dM = landmark_probes(bM, lmM, wo), dN = landmark_probes(bN, lmN, wo);
  const FunctionalMap fm = estimate_fmap(bM, bN, dM.F, dN.F, cfg.lambda1, cfg.lambda2);
  const IcpResult icp = spectral_icp(fm.C, bM, bN, cfg.spectral_icp_iterations);
  const double ratio = std::min(1.0, bN.area() / bM.area());
  L21Options lo;
  lo.q = std::min<int>(cfg.q, static_cast<int>(bM.num_vertices()));
  lo.mu = cfg.mu;
  lo.outer_iterations = cfg.refine_T;
  lo.seed = cfg.seed;
  const L21Result ref = refine_l21(icp.map, bM, bN, XM, slant_mask(bN.size(), bM.size(), ratio), lo);
  return {ref.C, ref.map};
}

// Vertices of `basis` within biharmonic distance radius of `center`.
inline std::vector<int> biharmonic_ball(const SpectralBasis& basis, int center, double radius) {
  const VecX d = biharmonic_distance(basis, {center}).row(0).transpose();
  std::vector<int> out;
  for (Index i = 0; i < d.size(); ++i)
    if (d[i] <= radius) out.push_back(static_cast<int>(i));
  return out;
}

// For every template region vertex, the nearest target vertex among `pool`.
inline VertexTerm region_term(const std::string& name, double weight, const std::vector<int>& region, const Points& XM,
                              const std::vector<int>& pool, const Points& XN) {
  VertexTerm t{name, weight, region, Points(static_cast<Index>(region.size()), 3)};
  Points P(static_cast<Index>(pool.size()), 3);
  for (std::size_t k = 0; k < pool.size(); ++k) P.row(static_cast<Index>(k)) = XN.row(pool[k]);
  const KdTree3 tree(P);
  for (std::size_t k = 0; k < region.size(); ++k)
    t.targets.row(static_cast<Index>(k)) = P.row(tree.nearest(row3(XM, region[k])));
  return t;
}

}  // namespace detail

/// Full registration. Stage meshes are written to out_dir when it is non-empty.
inline RegistrationReport register_surface(const ParametricModel& model, Surface target, const PipelineConfig& cfg,
                                           const std::string& out_dir = {}) {
  validate_model(model);
  RegistrationReport rep;
  rep.config = cfg;
  detail::StageTimer timer(rep);
  auto save_stage = [&](const std::string& name, const Points& X) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    rep.artifacts.push_back(out_dir + "/" + name + ".ply");
    save_ply(rep.artifacts.back(), X, model.mesh.F, nullptr);
  };
  auto run = [&](const std::string& stage, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      const std::string what = e.what();
      const auto colon = what.find(": ");
      fail(e.kind(), "stage ", stage, ": ", colon == std::string::npos ? what : what.substr(colon + 2));
    }
  };

  // Preprocessing.
  if (auto* mesh = std::get_if<TriMesh>(&target)) {
    int comps = 0;
    vertex_components(*mesh, &comps);
    if (comps > 1) {
      const Index before = mesh->num_vertices();
      *mesh = largest_component(*mesh);
      rep.dropped_vertices = before - mesh->num_vertices();
    }
  }
  const Points& XN = positions(target);
  const Points NN = cfg.use_normals ? surface_normals(target) : Points();
  rep.target_vertices = XN.rows();
  rep.bbox_diagonal = bbox_diagonal(XN);
  const SpectralBasis bM = run("preprocess", [&] { return eigenbasis(cotangent_laplacian(model.mesh), cfg.k_m); });
  const SpectralBasis bN = run("preprocess", [&] { return eigenbasis(laplacian(target), cfg.k_n); });
  timer.finish("preprocess", rep.dropped_vertices ? "largest component taken" : "");

  // Landmarks on the target.
  const LandmarkConfig lc = landmark_config(cfg);
  const LandmarkResult lr = run("landmarks", [&] { return extract_landmarks(target, bN, lc); });
  std::ostringstream lnote;
  lnote << "cluster threshold " << lr.cluster_thresh;
  timer.finish("landmarks", lnote.str());

  // Unlabelled map, skeleton, sides.
  const std::vector<int> unsided_m = detail::distance_ordered(model.landmarks, bM);
  const auto v5 = lr.landmarks.vertices();
  const std::vector<int> unsided_n(v5.begin(), v5.end());
  detail::MapStage map1 =
      run("map", [&] { return detail::estimate_map(bM, bN, model.mesh.V, unsided_m, unsided_n, cfg); });
  timer.finish("map");
  const TransportedSkeleton sk1 =
      run("skeleton", [&] { return transport_skeleton(map1.C, bM, bN, XN, model.regressor); });
  timer.finish("skeleton");
  const SideLabels sides =
      run("left-right", [&] { return label_left_right(sk1.joints, lr.landmarks, XN, skeleton_roles(model)); });
  rep.target_landmarks = sides.landmarks;
  rep.sides_degenerate = sides.degenerate;
  std::vector<int> sided_m, sided_n;
  if (!sides.degenerate) {
    const auto a = ordered_landmarks(model.landmarks), b = ordered_landmarks(sides.landmarks);
    sided_m.assign(a.begin(), a.end());
    sided_n.assign(b.begin(), b.end());
    map1 = run("left-right", [&] { return detail::estimate_map(bM, bN, model.mesh.V, sided_m, sided_n, cfg); });
  } else {
    sided_m = unsided_m;
    sided_n = unsided_n;
  }
  const TransportedSkeleton sk =
      run("left-right", [&] { return transport_skeleton(map1.C, bM, bN, XN, model.regressor); });
  timer.finish("left-right", sides.degenerate ? "degenerate front direction, sides unknown" : "");

  // Rigid initialization from the point map.
  BodyParams params = BodyParams::zeros(model);
  {
    Points dst(model.num_vertices(), 3);
    for (Index i = 0; i < model.num_vertices(); ++i) dst.row(i) = XN.row(map1.map[i]);
    const RigidTransform T = run("rigid", [&] { return rigid_align(model.mesh.V, dst); });
    params.rotation = axis_angle_from_rotation(T.R);
    params.translation = T.t;
  }
  save_stage("rigid", pose(model, params));
  timer.finish_with_error("rigid", pose(model, params), target);

  // Round 1.
  auto base_problem = [&](const Points& joints, const PointMap& pi) {
    FitProblem p;
    p.model = &model;
    p.w_skeleton = cfg.w_S;
    p.joints = joints;
    p.w_beta = cfg.w_beta;
    p.w_theta = cfg.w_theta;
    Points LT(static_cast<Index>(sided_n.size()), 3);
    for (std::size_t k = 0; k < sided_n.size(); ++k) LT.row(static_cast<Index>(k)) = XN.row(sided_n[k]);
    p.terms.push_back({"landmarks", cfg.w_L, sided_m, LT});
    std::vector<int> all(model.num_vertices());
    std::iota(all.begin(), all.end(), 0);
    Points VT(model.num_vertices(), 3);
    for (Index i = 0; i < model.num_vertices(); ++i) VT.row(i) = XN.row(pi[i]);
    p.terms.push_back({"vertices", cfg.w_V, all, VT});
    return p;
  };
  IcpOptions io;
  io.iterations = cfg.icp_iterations;
  io.normal_threshold = cfg.normal_thresh;
  io.use_normals = cfg.use_normals;
  io.w_theta = cfg.w_theta;
  {
    const FitResult fit = run("round1-fit", [&] { return fit_pose_shape(base_problem(sk.joints, map1.map), params); });
    params = fit.params;
    timer.finish_with_error("round1-fit", pose(model, params), target, fit.solve.stop_reason);
    const NonrigidIcpResult icp = run("round1-icp", [&] { return nonrigid_icp(model, params, XN, NN, io); });
    params = icp.params;
    rep.round1 = params;
    save_stage("round1", pose(model, params));
    timer.finish_with_error("round1-icp", pose(model, params), target, icp.stop_reason);
  }
  rep.final_map = map1.map;

  // Round 2: map from the deformed template, head and hands terms.
  if (cfg.round2) {
    const TriMesh deformed = posed_mesh(model, params);
    const SpectralBasis bD = run("round2-map", [&] { return eigenbasis(cotangent_laplacian(deformed), cfg.k_m); });
    const detail::MapStage map2 =
        run("round2-map", [&] { return detail::estimate_map(bD, bN, deformed.V, sided_m, sided_n, cfg); });
    const TransportedSkeleton sk2 =
        run("round2-map", [&] { return transport_skeleton(map2.C, bD, bN, XN, model.regressor); });
    rep.final_map = map2.map;
    timer.finish("round2-map");
    FitProblem p = base_problem(sk2.joints, map2.map);
    if (cfg.head_hands && !sides.degenerate) {
      const double radius = cfg.region_radius * biharmonic_diameter(bN, 256);
      auto region = [&](const char* name) {
        auto it = model.regions.find(name);
        return it == model.regions.end() ? std::vector<int>() : it->second;
      };
      const std::vector<int> head = region("head");
      if (!head.empty())
        p.terms.push_back(detail::region_term("head", cfg.w_head, head, deformed.V,
                                              detail::biharmonic_ball(bN, sided_n[0], radius), XN));
      // Split the template hand region by the nearer hand landmark; match within the
      // corresponding target ball.
      std::array<std::vector<int>, 2> hands;
      for (int v : region("hands")) {
        const double dl = (row3(model.mesh.V, v) - row3(model.mesh.V, sided_m[1])).norm();
        const double dr = (row3(model.mesh.V, v) - row3(model.mesh.V, sided_m[2])).norm();
        hands[dl <= dr ? 0 : 1].push_back(v);
      }
      VertexTerm hand_term{"hands", cfg.w_hands, {}, Points(0, 3)};
      for (int s = 0; s < 2; ++s) {
        if (hands[s].empty()) continue;
        const VertexTerm t = detail::region_term("hand", cfg.w_hands, hands[s], deformed.V,
                                                 detail::biharmonic_ball(bN, sided_n[1 + s], radius), XN);
        hand_term.vertices.insert(hand_term.vertices.end(), t.vertices.begin(), t.vertices.end());
        Points joined(hand_term.targets.rows() + t.targets.rows(), 3);
        joined << hand_term.targets, t.targets;
        hand_term.targets = std::move(joined);
      }
      if (!hand_term.vertices.empty()) p.terms.push_back(std::move(hand_term));
    }
    const FitResult fit = run("round2-fit", [&] { return fit_pose_shape(p, params); });
    params = fit.params;
    timer.finish_with_error("round2-fit", pose(model, params), target, fit.solve.stop_reason);
    const NonrigidIcpResult icp = run("round2-icp", [&] { return nonrigid_icp(model, params, XN, NN, io); });
    params = icp.params;
    save_stage("round2", pose(model, params));
    timer.finish_with_error("round2-icp", pose(model, params), target, icp.stop_reason);
  }
  rep.round2 = params;
  rep.final_vertices = pose(model, params);

  if (cfg.local_refinement) {
    ArapOptions ao;
    ao.fit_weight = cfg.arap_weight;
    ao.outer_iterations = cfg.arap_iterations;
    ao.normal_threshold = cfg.normal_thresh;
    ao.use_normals = cfg.use_normals;
    TriMesh cur = posed_mesh(model, params);
    const ArapRefineResult ar = run("refinement", [&] { return arap_refine(cur, XN, NN, ao); });
    rep.final_vertices = ar.V;
    save_stage("refined", ar.V);
    timer.finish_with_error("refinement", ar.V, target);
  }
  if (!out_dir.empty()) {
    for (const char* f : {"final_error.ply", "map.txt", "params.txt", "report.txt"})
      rep.artifacts.push_back(out_dir + "/" + f);
    save_ply(out_dir + "/final_error.ply", rep.final_vertices, model.mesh.F, &rep.final_error, 1.0);
    save_pointmap(out_dir + "/map.txt", rep.final_map);
    save_params(out_dir + "/params.txt", params);
    detail::open_out(out_dir + "/report.txt") << rep.to_text();
  }
  return rep;
}

/// Cumulative geodesic error curve of a point map against ground truth on the target mesh.
struct CorrespondenceCurve {
  VecX errors;      // per source vertex, normalized by the target's geodesic diameter
  VecX thresholds;
  VecX fraction;    // fraction of vertices with error <= threshold
  double diameter = 0;
};

/// Geodesic diameter estimate by repeated double sweeps of Dijkstra (a lower bound that
/// is exact on most meshes).
inline double geodesic_diameter(const TriMesh& mesh, int sweeps = 4) {
  const auto adj = adjacency(mesh);
  int v = 0;
  double best = 0;
  for (int s = 0; s < sweeps; ++s) {
    const VecX d = dijkstra(adj, {v});
    Index arg = 0;
    double far = -1;
    for (Index i = 0; i < d.size(); ++i)
      if (std::isfinite(d[i]) && d[i] > far) {
        far = d[i];
        arg = i;
      }
    best = std::max(best, far);
    v = static_cast<int>(arg);
  }
  return best;
}

inline CorrespondenceCurve eval_correspondence(const PointMap& map, const PointMap& truth, const TriMesh& target,
                                               int bins = 100, double max_threshold = 0.25) {
  require(map.size() == truth.size(), "eval: map has ", map.size(), " entries, ground truth has ", truth.size());
  validate_pointmap(map, static_cast<Index>(map.size()), target.num_vertices());
  validate_pointmap(truth, static_cast<Index>(truth.size()), target.num_vertices());
  CorrespondenceCurve c;
  c.diameter = geodesic_diameter(target);
  require(c.diameter > 0, "eval: target mesh has zero diameter");
  const auto adj = adjacency(target);
  c.errors = VecX::Zero(static_cast<Index>(map.size()));
  std::map<int, std::vector<std::size_t>> by_truth;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map[i] != truth[i]) by_truth[truth[i]].push_back(i);
  for (const auto& [src, items] : by_truth) {
    const VecX d = dijkstra(adj, {src});
    for (std::size_t i : items) c.errors[static_cast<Index>(i)] = d[map[i]] / c.diameter;
  }
  c.thresholds = VecX::LinSpaced(bins + 1, 0.0, max_threshold);
  c.fraction.resize(bins + 1);
  for (int b = 0; b <= bins; ++b)
    c.fraction[b] = (c.errors.array() <= c.thresholds[b]).cast<double>().mean();
  return c;
}

inline void save_curve_csv(const std::string& path, const CorrespondenceCurve& c) {
  auto out = detail::open_out(path);
  out << "threshold,fraction\n";
  out.precision(10);
  for (Index b = 0; b < c.thresholds.size(); ++b) out << c.thresholds[b] << ',' << c.fraction[b] << '\n';
}

/// First seed at or after `start` whose hole of the given magnitude keeps the mesh
/// connected and stays at least two hole radii (geodesic) away from every listed vertex.
inline std::uint64_t hole_seed_avoiding(const TriMesh& mesh, const std::vector<int>& protect, double magnitude,
                                        std::uint64_t start = 0, int attempts = 1000) {
  const auto adj = adjacency(mesh);
  const double radius = magnitude * bbox_diagonal(mesh.V);
  const VecX guard = dijkstra(adj, protect, 2 * radius);
  for (std::uint64_t s = start; s < start + static_cast<std::uint64_t>(attempts); ++s) {
    const auto center = static_cast<Index>(mix_seed(s) % static_cast<std::uint64_t>(mesh.num_vertices()));
    if (guard[center] <= 2 * radius) continue;
    const PerturbResult r = perturb(mesh, {PerturbKind::kHole, magnitude, s});
    int comps = 0;
    vertex_components(std::get<TriMesh>(r.surface), &comps);
    if (comps == 1) return s;
  }
  fail(ErrorKind::kEmptyResult, "no hole seed in [", start, ", ", start + attempts, ") avoids the protected vertices");
}

/// Landmark stability under one perturbation.
struct StabilityRow {
  std::string name;
  bool ok = false;
  std::string message;
  std::array<double, 5> displacement{};  // head, hands, feet; / biharmonic diameter of the clean mesh
  double max_displacement = 0;
  double seconds = 0;
  Index vertices = 0;
};

/// Landmarks on a surface (meshes are reduced to their largest component first); vertex
/// indices refer to the input surface.
inline LandmarkSet landmarks_on(const Surface& s, const PipelineConfig& cfg, int k) {
  const LandmarkConfig lc = landmark_config(cfg);
  if (const auto* mesh = std::get_if<TriMesh>(&s)) {
    std::vector<int> src;
    const TriMesh main = largest_component(*mesh, &src);
    const SpectralBasis b = eigenbasis(cotangent_laplacian(main), k);
    LandmarkSet L = extract_landmarks(main, b, lc).landmarks;
    L.head = src[L.head];
    for (int& v : L.hands) v = src[v];
    for (int& v : L.feet) v = src[v];
    return L;
  }
  return extract_landmarks(s, eigenbasis(laplacian(s), k), lc).landmarks;
}

/// Extracts landmarks on the clean mesh and on each perturbed copy, and measures how far
/// each perturbed landmark (mapped back through the perturbation's correspondence) lies
/// from its clean counterpart. Hands and feet are compared as unordered pairs.
inline std::vector<StabilityRow> bench_landmarks(const TriMesh& clean, const std::vector<PerturbationSpec>& perturbations,
                                                 const PipelineConfig& cfg = {}, int k = 50) {
  const SpectralBasis b = eigenbasis(cotangent_laplacian(clean), k);
  const double diam = biharmonic_diameter(b, 256);
  const LandmarkSet ref = landmarks_on(clean, cfg, k);
  std::vector<StabilityRow> rows;
  for (const auto& spec : perturbations) {
    StabilityRow row;
    std::ostringstream name;
    name << to_string(spec.kind) << ':' << spec.magnitude << ':' << spec.seed;
    row.name = name.str();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const PerturbResult pr = perturb(clean, spec);
      row.vertices = positions(pr.surface).rows();
      const LandmarkSet L = landmarks_on(pr.surface, cfg, k);
      auto dist = [&](int clean_v, int pert_v) {
        return biharmonic_distance(b, {clean_v})(0, pr.source[pert_v]) / diam;
      };
      row.displacement[0] = dist(ref.head, L.head);
      auto pair = [&](const std::array<int, 2>& a, const std::array<int, 2>& p, int slot) {
        const double same = std::max(dist(a[0], p[0]), dist(a[1], p[1]));
        const double swapped = std::max(dist(a[0], p[1]), dist(a[1], p[0]));
        if (same <= swapped) {
          row.displacement[slot] = dist(a[0], p[0]);
          row.displacement[slot + 1] = dist(a[1], p[1]);
        } else {
          row.displacement[slot] = dist(a[0], p[1]);
          row.displacement[slot + 1] = dist(a[1], p[0]);
        }
      };
      pair(ref.hands, L.hands, 1);
      pair(ref.feet, L.feet, 3);
      row.max_displacement = *std::max_element(row.displacement.begin(), row.displacement.end());
      row.ok = true;
    } catch (const Error& e) {
      row.message = e.what();
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  return rows;
}

inline void save_stability_csv(const std::string& path, const std::vector<StabilityRow>& rows) {
  auto out = detail::open_out(path);
  out << "perturbation,ok,vertices,head,hand0,hand1,foot0,foot1,max,seconds,message\n";
  out.precision(8);
  for (const auto& r : rows) {
    out << r.name << ',' << (r.ok ? 1 : 0) << ',' << r.vertices;
    for (double d : r.displacement) out << ',' << d;
    out << ',' << r.max_displacement << ',' << r.seconds << ',' << r.message << '\n';
  }
}

struct AblationRow {
  std::string flag;  // "full" or an ablation name
  double final_mean = 0, final_mean_pct = 0;
  double head_mean = 0;  // mean error on the template head region
  PointMap final_map;
  bool ok = false;
  std::string message;
};

/// Registers with the full configuration and with every requested single-flag ablation.
inline std::vector<AblationRow> ablate(const ParametricModel& model, const Surface& target, const PipelineConfig& cfg,
                                       const std::vector<Ablation>& flags) {
  std::vector<AblationRow> rows;
  auto run = [&](const std::string& flag, const PipelineConfig& c) {
    AblationRow row;
    row.flag = flag;
    try {
      const RegistrationReport r = register_surface(model, target, c);
      const StageReport& last = r.last_with_error();
      row.final_mean = last.error.mean;
      row.final_mean_pct = last.mean_pct;
      row.final_map = r.final_map;
      auto it = model.regions.find("head");
      if (it != model.regions.end() && !it->second.empty()) {
        double s = 0;
        for (int v : it->second) s += r.final_error[v];
        row.head_mean = s / static_cast<double>(it->second.size());
      }
      row.ok = true;
    } catch (const Error& e) {
      row.message = e.what();
    }
    rows.push_back(row);
  };
  run("full", cfg);
  for (Ablation a : flags) run(to_string(a), with_ablation(cfg, a));
  return rows;
}

}  // namespace fmreg
