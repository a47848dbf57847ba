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

// Command-line front end. Errors go to stderr as "fmreg <subcommand>: <kind>: <message>"
// with exit code 1.

#include <CLI11.hpp>
#include <iostream>

#include "fmreg/fmreg.hpp"

namespace {

using namespace fmreg;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key=value configuration file");
    app->add_option("--set", overrides, "override one key, e.g. --set k_n=40 (repeatable)");
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = file.empty() ? PipelineConfig{} : PipelineConfig::load(file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) fail(ErrorKind::kParse, "--set expects key=value, got '", kv, "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
  }
};

std::vector<int> read_landmark_vertices(const std::string& path) {
  const auto v = load_landmarks(path).vertices();
  return {v.begin(), v.end()};
}

// "kind:magnitude:seed"; a hole seed of "auto" picks a hole away from the clean landmarks.
PerturbationSpec parse_perturbation(const std::string& text, const TriMesh& mesh, const LandmarkSet* clean) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) fail(ErrorKind::kParse, "perturbation '", text, "' is not kind:magnitude:seed");
  PerturbationSpec spec;
  spec.kind = parse_perturb_kind(parts[0]);
  try {
    spec.magnitude = std::stod(parts[1]);
    if (parts[2] == "auto") {
      if (spec.kind != PerturbKind::kHole || !clean) fail(ErrorKind::kParse, "seed 'auto' applies to holes only");
      const auto v = clean->vertices();
      spec.seed = hole_seed_avoiding(mesh, {v.begin(), v.end()}, spec.magnitude);
    } else {
      spec.seed = std::stoull(parts[2]);
    }
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::kParse, "perturbation '", text, "' has a malformed number");
  }
  return spec;
}

void print_stats(const char* label, const ErrorStats& s, double diag) {
  std::cout << label << " mean=" << s.mean << " median=" << s.median << " max=" << s.max
            << " mean_pct_bbox=" << 100.0 * s.mean / diag << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral registration of a parametric body model to surfaces"};
  app.require_subcommand(1);
  std::string current = "fmreg";

  // spectrum
  auto* spectrum = app.add_subcommand("spectrum", "Laplace-Beltrami eigenbasis of a surface");
  std::string sp_in, sp_out;
  int sp_k = 50;
  spectrum->add_option("input", sp_in, "mesh or point cloud (OFF/OBJ/PLY)")->required();
  spectrum->add_option("-k,--eigenpairs", sp_k, "number of eigenpairs");
  spectrum->add_option("-o,--out", sp_out, "write the basis to this file");

  // landmarks
  auto* landmarks = app.add_subcommand("landmarks", "Extract head, hand and foot landmarks");
  std::string lm_in, lm_out;
  int lm_k = 50;
  ConfigArgs lm_cfg;
  landmarks->add_option("input", lm_in, "mesh or point cloud")->required();
  landmarks->add_option("-k,--eigenpairs", lm_k, "basis size");
  landmarks->add_option("-o,--out", lm_out, "landmark file");
  lm_cfg.attach(landmarks);

  // match
  auto* match = app.add_subcommand("match", "Functional map + spectral ICP between two surfaces");
  std::string mt_src, mt_dst, mt_src_lm, mt_dst_lm, mt_out, mt_fmap;
  ConfigArgs mt_cfg;
  match->add_option("source", mt_src, "source surface M")->required();
  match->add_option("target", mt_dst, "target surface N")->required();
  match->add_option("--source-landmarks", mt_src_lm, "ordered landmark file for M (enables landmark probes)");
  match->add_option("--target-landmarks", mt_dst_lm, "ordered landmark file for N");
  match->add_option("-o,--out", mt_out, "point map M -> N")->required();
  match->add_option("--fmap", mt_fmap, "write the functional map matrix");
  mt_cfg.attach(match);

  // refine
  auto* refine = app.add_subcommand("refine", "Mismatch-robust refinement of a point map");
  std::string rf_src, rf_dst, rf_in, rf_out;
  ConfigArgs rf_cfg;
  refine->add_option("source", rf_src, "source mesh M")->required();
  refine->add_option("target", rf_dst, "target surface N")->required();
  refine->add_option("-m,--map", rf_in, "initial point map M -> N")->required();
  refine->add_option("-o,--out", rf_out, "refined point map")->required();
  rf_cfg.attach(refine);

  // register
  auto* reg = app.add_subcommand("register", "Fit the body model to a target surface");
  std::string rg_model, rg_target, rg_out;
  ConfigArgs rg_cfg;
  reg->add_option("model", rg_model, "body model file")->required();
  reg->add_option("target", rg_target, "target surface")->required();
  reg->add_option("-o,--out", rg_out, "output directory for stage meshes, map, parameters and report")->required();
  rg_cfg.attach(reg);

  // perturb
  auto* pert = app.add_subcommand("perturb", "Apply a seeded perturbation to a mesh");
  std::string pt_in, pt_out, pt_src, pt_kind = "noise";
  double pt_mag = 0.005;
  std::uint64_t pt_seed = 0;
  pert->add_option("input", pt_in, "mesh")->required();
  pert->add_option("--kind", pt_kind, "noise|hole|glue|downsample|to-point-cloud|frontal-view");
  pert->add_option("--magnitude", pt_mag, "kind-dependent magnitude");
  pert->add_option("--seed", pt_seed, "seed");
  pert->add_option("-o,--out", pt_out, "perturbed surface")->required();
  pert->add_option("--source-map", pt_src, "write, per output vertex, the input vertex index");

  // bench-landmarks
  auto* bench = app.add_subcommand("bench-landmarks", "Landmark stability under perturbations");
  std::string bl_in, bl_out;
  std::vector<std::string> bl_perturb = {"noise:0.005:1", "downsample:0.5:2", "hole:0.05:auto", "glue:0.005:3",
                                         "to-point-cloud:0:0"};
  int bl_k = 50;
  ConfigArgs bl_cfg;
  bench->add_option("input", bl_in, "clean mesh")->required();
  bench->add_option("-p,--perturb", bl_perturb, "kind:magnitude:seed (repeatable)");
  bench->add_option("-k,--eigenpairs", bl_k, "basis size");
  bench->add_option("-o,--out", bl_out, "CSV table");
  bl_cfg.attach(bench);

  // eval
  auto* eval = app.add_subcommand("eval", "Cumulative geodesic error of a point map");
  std::string ev_map, ev_truth, ev_mesh, ev_out;
  int ev_bins = 100;
  double ev_max = 0.25;
  eval->add_option("map", ev_map, "point map")->required();
  eval->add_option("truth", ev_truth, "ground-truth point map")->required();
  eval->add_option("mesh", ev_mesh, "target mesh of both maps")->required();
  eval->add_option("-o,--out", ev_out, "CSV curve");
  eval->add_option("--bins", ev_bins, "number of threshold bins");
  eval->add_option("--max-threshold", ev_max, "largest threshold (fraction of the geodesic diameter)");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Register with the full configuration and each single-flag ablation");
  std::string ab_model, ab_target, ab_out;
  std::vector<std::string> ab_flags;
  ConfigArgs ab_cfg;
  abl->add_option("model", ab_model, "body model file")->required();
  abl->add_option("target", ab_target, "target surface")->required();
  abl->add_option("--flag", ab_flags, "w_beta=0|w_S=0|no-normals|no-head-hands|w_theta=0|round1-only (default: all)");
  abl->add_option("-o,--out", ab_out, "CSV table");
  ab_cfg.attach(abl);

  // toy-model (fixture helper)
  auto* toy = app.add_subcommand("toy-model", "Write the procedural humanoid model and, optionally, a posed target");
  std::string ty_out, ty_target;
  int ty_vertices = 1500;
  std::uint64_t ty_seed = 1;
  double ty_angle = 45;
  toy->add_option("-o,--out", ty_out, "model file")->required();
  toy->add_option("--vertices", ty_vertices, "approximate template vertex count");
  toy->add_option("--target", ty_target, "also write a randomly posed and shaped mesh here");
  toy->add_option("--seed", ty_seed, "seed for the posed target");
  toy->add_option("--max-angle", ty_angle, "largest joint angle of the target, degrees");

  CLI11_PARSE(app, argc, argv);

  try {
    if (spectrum->parsed()) {
      current = "spectrum";
      const Surface s = load_surface(sp_in);
      const SpectralBasis b = eigenbasis(laplacian(s), sp_k);
      std::cout.precision(10);
      for (Index i = 0; i < b.size(); ++i) std::cout << b.lambda[i] << '\n';
      if (!sp_out.empty()) save_basis(sp_out, b);
    } else if (landmarks->parsed()) {
      current = "landmarks";
      const PipelineConfig cfg = lm_cfg.resolve();
      const Surface s = load_surface(lm_in);
      const SpectralBasis b = eigenbasis(laplacian(s), lm_k);
      const LandmarkResult r = extract_landmarks(s, b, landmark_config(cfg));
      std::cout << "head " << r.landmarks.head << "\nhands " << r.landmarks.hands[0] << ' ' << r.landmarks.hands[1]
                << "\nfeet " << r.landmarks.feet[0] << ' ' << r.landmarks.feet[1] << "\ncluster_thresh "
                << r.cluster_thresh << '\n';
      if (!lm_out.empty()) save_landmarks(lm_out, r.landmarks);
    } else if (match->parsed()) {
      current = "match";
      const PipelineConfig cfg = mt_cfg.resolve();
      const Surface M = load_surface(mt_src), N = load_surface(mt_dst);
      const SpectralBasis bM = eigenbasis(laplacian(M), cfg.k_m), bN = eigenbasis(laplacian(N), cfg.k_n);
      WaveKernelOptions wo;
      wo.num_dims = cfg.wks_dims;
      DescriptorSet dM, dN;
      if (!mt_src_lm.empty() || !mt_dst_lm.empty()) {
        if (mt_src_lm.empty() || mt_dst_lm.empty())
          fail(ErrorKind::kPrecondition, "landmark probes need both --source-landmarks and --target-landmarks");
        dM = landmark_probes(bM, read_landmark_vertices(mt_src_lm), wo);
        dN = landmark_probes(bN, read_landmark_vertices(mt_dst_lm), wo);
      } else {
        dM = wks(bM, wo);
        dN = wks(bN, wo);
        normalize_columns(dM, bM.mass);
        normalize_columns(dN, bN.mass);
      }
      const FunctionalMap fm = estimate_fmap(bM, bN, dM.F, dN.F, cfg.lambda1, cfg.lambda2);
      const IcpResult icp = spectral_icp(fm.C, bM, bN, cfg.spectral_icp_iterations);
      std::cout << "cg_iterations " << fm.iterations << " converged " << fm.converged << "\nicp_objective "
                << icp.objective.front() << " -> " << icp.objective.back() << '\n';
      save_pointmap(mt_out, icp.map);
      if (!mt_fmap.empty()) save_matrix(mt_fmap, icp.C);
    } else if (refine->parsed()) {
      current = "refine";
      const PipelineConfig cfg = rf_cfg.resolve();
      const Surface M = load_surface(rf_src), N = load_surface(rf_dst);
      const SpectralBasis bM = eigenbasis(laplacian(M), cfg.k_m), bN = eigenbasis(laplacian(N), cfg.k_n);
      L21Options lo;
      lo.q = std::min<int>(cfg.q, static_cast<int>(bM.num_vertices()));
      lo.mu = cfg.mu;
      lo.outer_iterations = cfg.refine_T;
      lo.seed = cfg.seed;
      const double ratio = std::min(1.0, bN.area() / bM.area());
      const L21Result r =
          refine_l21(load_pointmap(rf_in), bM, bN, positions(M), slant_mask(bN.size(), bM.size(), ratio), lo);
      std::cout << "converged " << r.converged << '\n';
      save_pointmap(rf_out, r.map);
    } else if (reg->parsed()) {
      current = "register";
      const PipelineConfig cfg = rg_cfg.resolve();
      const RegistrationReport r = register_surface(load_model(rg_model), load_surface(rg_target), cfg, rg_out);
      std::cout << r.to_text();
    } else if (pert->parsed()) {
      current = "perturb";
      const PerturbResult r = perturb(load_mesh(pt_in), {parse_perturb_kind(pt_kind), pt_mag, pt_seed});
      save_surface(pt_out, r.surface);
      if (!pt_src.empty()) save_index_list(pt_src, r.source);
      std::cout << "vertices " << positions(r.surface).rows() << '\n';
    } else if (bench->parsed()) {
      current = "bench-landmarks";
      const PipelineConfig cfg = bl_cfg.resolve();
      const TriMesh mesh = load_mesh(bl_in);
      std::vector<PerturbationSpec> specs;
      const LandmarkSet clean = landmarks_on(mesh, cfg, bl_k);
      for (const auto& p : bl_perturb) specs.push_back(parse_perturbation(p, mesh, &clean));
      const auto rows = bench_landmarks(mesh, specs, cfg, bl_k);
      for (const auto& r : rows)
        std::cout << r.name << (r.ok ? " max_displacement=" + std::to_string(r.max_displacement) : " failed: " + r.message)
                  << " seconds=" << r.seconds << '\n';
      if (!bl_out.empty()) save_stability_csv(bl_out, rows);
    } else if (eval->parsed()) {
      current = "eval";
      const CorrespondenceCurve c = eval_correspondence(load_pointmap(ev_map), load_pointmap(ev_truth), load_mesh(ev_mesh),
                                                        ev_bins, ev_max);
      std::cout << "mean_error " << c.errors.mean() << " exact " << (c.errors.array() == 0).cast<double>().mean()
                << '\n';
      if (!ev_out.empty()) save_curve_csv(ev_out, c);
    } else if (abl->parsed()) {
      current = "ablate";
      const PipelineConfig cfg = ab_cfg.resolve();
      std::vector<Ablation> flags;
      if (ab_flags.empty()) flags = all_ablations();
      for (const auto& f : ab_flags) flags.push_back(parse_ablation(f));
      const ParametricModel model = load_model(ab_model);
      const auto rows = ablate(model, load_surface(ab_target), cfg, flags);
      std::ostringstream csv;
      csv.precision(10);
      csv << "flag,ok,final_mean,final_mean_pct_bbox,head_mean,message\n";
      for (const auto& r : rows)
        csv << r.flag << ',' << r.ok << ',' << r.final_mean << ',' << r.final_mean_pct << ',' << r.head_mean << ','
            << r.message << '\n';
      std::cout << csv.str();
      if (!ab_out.empty()) detail::open_out(ab_out) << csv.str();
    } else if (toy->parsed()) {
      current = "toy-model";
      HumanoidOptions ho;
      ho.target_vertices = ty_vertices;
      const ParametricModel m = make_toy_humanoid(ho);
      save_model(ty_out, m);
      if (!ty_target.empty()) {
        const BodyParams p = sample_params(m, ty_seed, ty_angle * M_PI / 180.0);
        save_off(ty_target, posed_mesh(m, p));
      }
      std::cout << "vertices " << m.num_vertices() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "fmreg " << current << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fmreg " << current << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}
