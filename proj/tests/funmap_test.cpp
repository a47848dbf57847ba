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

#include "fmreg/funmap.hpp"
#include "fmreg/humanoid.hpp"
#include "fmreg/landmarks.hpp"
#include "fmreg/laplacian.hpp"
#include "fmreg/shapes.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fmreg {
namespace {

// Template M and a vertex-permuted copy N; truth[x] is the N vertex of M vertex x.
struct IsometricPair {
  TriMesh M, N;
  PointMap truth;
};

IsometricPair make_pair(const TriMesh& mesh, std::uint64_t seed) {
  IsometricPair p;
  p.M = mesh;
  const auto perm = testing::random_permutation(static_cast<int>(mesh.num_vertices()), seed);
  p.N = permuted(mesh, perm);
  p.truth.resize(perm.size());
  for (std::size_t y = 0; y < perm.size(); ++y) p.truth[perm[y]] = static_cast<int>(y);
  return p;
}

const ParametricModel& small_humanoid() {
  static const ParametricModel m = [] {
    HumanoidOptions o;
    o.target_vertices = 500;
    return make_toy_humanoid(o);
  }();
  return m;
}

struct HumanoidFixture {
  IsometricPair pair;
  SpectralBasis bM, bN;
};

const HumanoidFixture& humanoid_fixture() {
  static const HumanoidFixture f = [] {
    HumanoidFixture h;
    h.pair = make_pair(small_humanoid().mesh, 42);
    h.bM = eigenbasis(cotangent_laplacian(h.pair.M), 50);
    h.bN = eigenbasis(cotangent_laplacian(h.pair.N), 50);
    return h;
  }();
  return f;
}

double exact_fraction(const PointMap& a, const PointMap& b) {
  int same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double mean_geodesic_error(const PointMap& map, const PointMap& truth, const TriMesh& N,
                           const std::vector<int>* subset = nullptr) {
  const auto adj = adjacency(N);
  std::vector<int> idx;
  if (subset) idx = *subset;
  else {
    idx.resize(map.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  double total = 0;
  for (int x : idx)
    if (map[x] != truth[x]) total += dijkstra(adj, {truth[x]})[map[x]];
  return total / static_cast<double>(idx.size());
}

std::vector<int> landmark_list(const TriMesh& mesh, const SpectralBasis& b) {
  const auto v = extract_landmarks(mesh, b).landmarks.vertices();
  return {v.begin(), v.end()};
}

// ---------------------------------------------------------------------------------------

TEST(MultOperator, OneIsIdentityAndLinear) {
  const SpectralBasis b = eigenbasis(cotangent_laplacian(shapes::icosphere(2)), 20);
  EXPECT_LT((mult_operator(b, VecX::Ones(b.num_vertices())) - MatX::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-8);
  const VecX f = b.phi.col(3) + VecX::LinSpaced(b.num_vertices(), 0, 1), g = b.phi.col(5).cwiseAbs();
  EXPECT_LT((mult_operator(b, 2 * f - 3 * g) - (2 * mult_operator(b, f) - 3 * mult_operator(b, g))).norm(), 1e-12);
}

TEST(MultOperator, FullBasisIsPointwiseProduct) {
  const SpectralBasis b = eigenbasis(cotangent_laplacian(shapes::icosphere(1)), 42);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  VecX f(42), c(42);
  for (int i = 0; i < 42; ++i) f[i] = g(rng), c[i] = g(rng);
  const VecX lhs = b.phi * (mult_operator(b, f) * c), rhs = f.cwiseProduct(b.phi * c);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EstimateFmap, SelfMapBeatsIdentityAndRecoversIdentity) {
  const auto& h = humanoid_fixture();
  const auto lm = landmark_list(h.pair.M, h.bM);
  const DescriptorSet d = landmark_probes(h.bM, lm);
  const FunctionalMap fm = estimate_fmap(h.bM, h.bM, d.F, d.F);
  const MapProblem p = make_map_problem(h.bM, h.bM, d.F, d.F);
  EXPECT_LE(p.objective(fm.C), p.objective(MatX::Identity(50, 50)) + 1e-8);
  PointMap id(h.pair.M.num_vertices());
  std::iota(id.begin(), id.end(), 0);
  EXPECT_GE(exact_fraction(fmap_to_pointmap(fm.C, h.bM, h.bM), id), 0.99);
}

TEST(EstimateFmap, IsometricPairRecoversPermutation) {
  const auto& h = humanoid_fixture();
  const DescriptorSet dM = landmark_probes(h.bM, landmark_list(h.pair.M, h.bM));
  const DescriptorSet dN = landmark_probes(h.bN, landmark_list(h.pair.N, h.bN));
  const FunctionalMap fm = estimate_fmap(h.bM, h.bN, dM.F, dN.F);
  EXPECT_TRUE(fm.converged);
  const IcpResult icp = spectral_icp(fm.C, h.bM, h.bN);
  EXPECT_GE(exact_fraction(icp.map, h.pair.truth), 0.99);
}

TEST(EstimateFmap, ObjectiveBelowZeroAndTruncatedIdentity) {
  const auto& h = humanoid_fixture();
  const SpectralBasis bN = h.bN.truncated(30);
  const DescriptorSet dM = landmark_probes(h.bM, landmark_list(h.pair.M, h.bM));
  const DescriptorSet dN = landmark_probes(bN, landmark_list(h.pair.N, bN));
  const MapProblem p = make_map_problem(h.bM, bN, dM.F, dN.F);
  const MatX C = solve_map_problem(p).C;
  EXPECT_LE(p.objective(C), p.objective(MatX::Zero(30, 50)));
  EXPECT_LE(p.objective(C), p.objective(MatX::Identity(30, 50)));
}

TEST(EstimateFmap, NormalEquationsMatchObjective) {
  // Independent check of the assembled quadratic: c^T H c - 2 b^T c + const.
  const SpectralBasis bM = eigenbasis(cotangent_laplacian(shapes::icosphere(2)), 7);
  const SpectralBasis bN = eigenbasis(cotangent_laplacian(shapes::icosphere(2)), 5);
  MatX probes(bM.num_vertices(), 3);
  probes << bM.phi.col(1).cwiseAbs2(), bM.phi.col(4), VecX::LinSpaced(bM.num_vertices(), -1, 1);
  const MapProblem p = make_map_problem(bM, bN, probes, probes, 0.3, 0.02);
  MatX H;
  VecX b;
  p.normal_equations(H, b);
  const double c0 = p.objective(MatX::Zero(5, 7));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int t = 0; t < 5; ++t) {
    MatX C(5, 7);
    for (Index i = 0; i < C.size(); ++i) C.data()[i] = g(rng);
    const VecX c = Eigen::Map<const VecX>(C.data(), C.size());
    EXPECT_NEAR(p.objective(C), c.dot(H * c) - 2 * b.dot(c) + c0, 1e-9 * std::max(1.0, p.objective(C)));
  }
}

TEST(EstimateFmap, LargeCommutativityWeightGivesCommutingMap) {
  const auto& h = humanoid_fixture();
  const SpectralBasis b = h.bM.truncated(20);
  const DescriptorSet d = landmark_probes(b, landmark_list(h.pair.M, h.bM));
  const FunctionalMap fm = estimate_fmap(b, b, d.F, d.F, 0.1, 1e9);
  const MatX L = b.lambda.asDiagonal();
  EXPECT_LT((fm.C * L - L * fm.C).norm() / fm.C.norm(), 1e-6);
}

TEST(EstimateFmap, MismatchedProbeCountIsAnError) {
  const auto& h = humanoid_fixture();
  EXPECT_THROW(estimate_fmap(h.bM, h.bN, MatX::Ones(500, 3), MatX::Ones(500, 4)), Error);
}

TEST(SpectralIcp, ExactMapIsAFixedPoint) {
  const IsometricPair p = make_pair(shapes::icosphere(1), 4);
  const SpectralBasis bM = eigenbasis(cotangent_laplacian(p.M), 42), bN = eigenbasis(cotangent_laplacian(p.N), 42);
  const MatX C = pointmap_to_fmap(p.truth, bM, bN);
  const IcpResult r = spectral_icp(C, bM, bN);
  EXPECT_LT((r.C - C).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(r.map, p.truth);
}

TEST(SpectralIcp, ImprovesNoisyGroundTruthMonotonically) {
  const auto& h = humanoid_fixture();
  const MatX truth = pointmap_to_fmap(h.pair.truth, h.bM, h.bN);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.05);
  MatX noisy = truth;
  for (Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += g(rng);
  const double before = exact_fraction(fmap_to_pointmap(noisy, h.bM, h.bN), h.pair.truth);
  const IcpResult r = spectral_icp(noisy, h.bM, h.bN);
  EXPECT_GT(exact_fraction(r.map, h.pair.truth), before);
  for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1] * (1 + 1e-12));
}

TEST(FmapToPointmap, MatchesExhaustiveOracle) {
  const IsometricPair p = make_pair(shapes::icosphere(2), 6);
  const SpectralBasis bM = eigenbasis(cotangent_laplacian(p.M), 12), bN = eigenbasis(cotangent_laplacian(p.N), 10);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  MatX C(10, 12);
  for (Index i = 0; i < C.size(); ++i) C.data()[i] = g(rng);
  EXPECT_EQ(fmap_to_pointmap(C, bM, bN), oracle::brute_nearest_rows(bM.phi * C.transpose(), bN.phi));
  EXPECT_EQ(fmap_to_pointmap_inverse(C, bM, bN), oracle::brute_nearest_rows(bN.phi, bM.phi * C.transpose()));
}

TEST(FmapToPointmap, IdentityOnFullBasis) {
  const SpectralBasis b = eigenbasis(cotangent_laplacian(shapes::icosphere(1)), 42);
  PointMap id(42);
  std::iota(id.begin(), id.end(), 0);
  EXPECT_EQ(fmap_to_pointmap(MatX::Identity(42, 42), b, b), id);
}

TEST(PointmapToFmap, IdentityGivesIdentityMatrix) {
  const SpectralBasis b = eigenbasis(cotangent_laplacian(shapes::icosphere(1)), 42);
  PointMap id(42);
  std::iota(id.begin(), id.end(), 0);
  EXPECT_LT((pointmap_to_fmap(id, b, b) - MatX::Identity(42, 42)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PointmapToFmap, FullBasisRoundTripIsExactAndIdempotent) {
  const IsometricPair p = make_pair(shapes::icosphere(1), 8);
  const SpectralBasis bM = eigenbasis(cotangent_laplacian(p.M), 42), bN = eigenbasis(cotangent_laplacian(p.N), 42);
  const PointMap back = fmap_to_pointmap(pointmap_to_fmap(p.truth, bM, bN), bM, bN);
  EXPECT_EQ(back, p.truth);
  // A non-isometric map: still a fixed point of convert-and-back at full basis.
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(0, 41);
  PointMap arbitrary(42);
  for (int& v : arbitrary) v = u(rng);
  const PointMap once = fmap_to_pointmap(pointmap_to_fmap(arbitrary, bM, bN), bM, bN);
  EXPECT_EQ(fmap_to_pointmap(pointmap_to_fmap(once, bM, bN), bM, bN), once);
}

TEST(PointmapToFmap, TruncatedRoundTripOnHumanoid) {
  const auto& h = humanoid_fixture();
  const PointMap back = fmap_to_pointmap(pointmap_to_fmap(h.pair.truth, h.bM, h.bN), h.bM, h.bN);
  EXPECT_GE(exact_fraction(back, h.pair.truth), 0.95);
}

TEST(PointmapToFmap, InvalidMapIsRejected) {
  const SpectralBasis b = eigenbasis(cotangent_laplacian(shapes::icosphere(1)), 5);
  EXPECT_THROW(pointmap_to_fmap(PointMap(41, 0), b, b), Error);
  PointMap bad(42, 0);
  bad[3] = 42;
  EXPECT_THROW(pointmap_to_fmap(bad, b, b), Error);
}

TEST(SlantMask, ZeroLineAndMonotone) {
  const MatX W1 = slant_mask(30, 30, 1.0);
  for (Index i = 0; i < 30; ++i) EXPECT_EQ(W1(i, i), 0.0);
  EXPECT_GT(W1.minCoeff(), -1e-300);
  // r = 0.5: zero where i = r j.
  const MatX W = slant_mask(30, 50, 0.5);
  for (Index j = 0; j < 50; j += 2) EXPECT_EQ(W(j / 2, j), 0.0);
  for (Index i = 0; i < 30; ++i)
    for (Index j = 0; j < 50; ++j)
      for (Index jj = 0; jj < 50; ++jj)
        if (std::abs(i - 0.5 * j) < std::abs(i - 0.5 * jj)) ASSERT_LT(W(i, j), W(i, jj));
  EXPECT_THROW(slant_mask(30, 50, 0.0), Error);
  EXPECT_THROW(slant_mask(30, 50, 1.5), Error);
}

TEST(RefineL21, GroundTruthIsKept) {
  const auto& h = humanoid_fixture();
  L21Options o;
  o.q = 500;
  const L21Result r = refine_l21(h.pair.truth, h.bM, h.bN, h.pair.M.V, slant_mask(50, 50, 1.0), o);
  EXPECT_GE(exact_fraction(r.map, h.pair.truth), 0.99);
}

TEST(RefineL21, CorruptedMatchesAreFiltered) {
  const auto& h = humanoid_fixture();
  L21Options o;
  o.q = 500;
  PointMap input = h.pair.truth;
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> u(0, 499);
  auto samples = uniform_samples(h.pair.M.V, o.q, o.seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  for (int i = 0; i < o.q / 5; ++i) input[samples[i]] = u(rng);
  const L21Result r = refine_l21(input, h.bM, h.bN, h.pair.M.V, slant_mask(50, 50, 1.0), o);
  EXPECT_LT(mean_geodesic_error(r.map, h.pair.truth, h.pair.N),
            0.5 * mean_geodesic_error(input, h.pair.truth, h.pair.N));
  for (std::size_t i = 1; i < r.inner_objective.size(); ++i)
    if (i % static_cast<std::size_t>(o.inner_iterations) != 0)  // objective changes between outer steps
      EXPECT_LE(r.inner_objective[i], r.inner_objective[i - 1] * (1 + 1e-10) + 1e-14);
}

TEST(RefineL21, InnerIrlsIsMonotoneOnRandomProblem) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  MatX F(8, 40), G(6, 40);
  for (Index i = 0; i < F.size(); ++i) F.data()[i] = g(rng);
  for (Index i = 0; i < G.size(); ++i) G.data()[i] = g(rng);
  L21Options o;
  o.inner_iterations = 50;
  std::vector<double> hist;
  bool ok = false;
  const MatX C = solve_l21(MatX::Zero(6, 8), F, G, slant_mask(6, 8, 0.75), o, &hist, &ok);
  ASSERT_GE(hist.size(), 2u);
  for (std::size_t i = 1; i < hist.size(); ++i) EXPECT_LE(hist[i], hist[i - 1] * (1 + 1e-12));
  EXPECT_TRUE(C.allFinite());
}

TEST(RefineL21, RejectsBadArguments) {
  const auto& h = humanoid_fixture();
  L21Options o;
  o.q = 501;
  EXPECT_THROW(refine_l21(h.pair.truth, h.bM, h.bN, h.pair.M.V, slant_mask(50, 50, 1.0), o), Error);
  o.q = 10;
  EXPECT_THROW(refine_l21(h.pair.truth, h.bM, h.bN, h.pair.M.V, slant_mask(30, 50, 1.0), o), Error);
}

TEST(FunctionalMaps, EigenvectorSignFlipsLeavePointMapUnchanged) {
  const auto& h = humanoid_fixture();
  const auto lmM = landmark_list(h.pair.M, h.bM), lmN = landmark_list(h.pair.N, h.bN);
  auto run = [&](const SpectralBasis& bM, const SpectralBasis& bN) {
    const DescriptorSet dM = landmark_probes(bM, lmM), dN = landmark_probes(bN, lmN);
    return spectral_icp(estimate_fmap(bM, bN, dM.F, dN.F).C, bM, bN).map;
  };
  SpectralBasis fM = h.bM, fN = h.bN;
  std::mt19937_64 rng(13);
  for (Index j = 0; j < 50; ++j) {
    if (rng() & 1) fM.phi.col(j) *= -1;
    if (rng() & 1) fN.phi.col(j) *= -1;
  }
  EXPECT_EQ(run(fM, fN), run(h.bM, h.bN));
}

TEST(RefineL21, AreaMatchedMaskHelpsOnPartialShape) {
  // N = humanoid without its right arm. Ground truth on the shared part is the source map of
  // the cut; removed template vertices start at their nearest remaining vertex in 3D.
  using namespace humanoid;
  const ParametricModel& m = small_humanoid();
  std::vector<char> keep(m.mesh.num_faces(), 1);
  for (Index f = 0; f < m.mesh.num_faces(); ++f)
    for (int c = 0; c < 3; ++c) {
      Index arg = 0;
      m.weights.row(m.mesh.F(f, c)).maxCoeff(&arg);
      if (arg == kRShoulder || arg == kRElbow || arg == kRWrist) keep[f] = 0;
    }
  std::vector<int> src;
  const TriMesh cut = compact(m.mesh, keep, &src);
  std::vector<int> comp_src;
  const TriMesh N = largest_component(cut, &comp_src);
  std::vector<int> to_n(m.num_vertices(), -1);
  for (std::size_t y = 0; y < comp_src.size(); ++y) to_n[src[comp_src[y]]] = static_cast<int>(y);
  PointMap truth(m.num_vertices());
  std::vector<int> shared;
  const KdTree3 tree(N.V);
  for (Index x = 0; x < m.num_vertices(); ++x) {
    if (to_n[x] >= 0) {
      truth[x] = to_n[x];
      shared.push_back(static_cast<int>(x));
    } else {
      truth[x] = tree.nearest(row3(m.mesh.V, x));
    }
  }
  const SpectralBasis bM = eigenbasis(cotangent_laplacian(m.mesh), 50), bN = eigenbasis(cotangent_laplacian(N), 30);
  // Start from the truth with 20% of the shared matches scrambled.
  PointMap input = truth;
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> u(0, static_cast<int>(N.num_vertices()) - 1);
  std::vector<int> order = shared;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < order.size() / 5; ++i) input[order[i]] = u(rng);
  L21Options o;
  o.q = static_cast<int>(m.num_vertices());
  // With q delta probes the data term outweighs mu ||C o W||^2 by about five orders of
  // magnitude at mu = 0.01, where both masks return the same map; the mask shape is
  // exercised at a weight where it is active.
  o.mu = 1e5;
  const double r = bN.area() / bM.area();
  ASSERT_LT(r, 0.95);
  const PointMap matched = refine_l21(input, bM, bN, m.mesh.V, slant_mask(30, 50, r), o).map;
  const PointMap square = refine_l21(input, bM, bN, m.mesh.V, slant_mask(30, 50, 1.0), o).map;
  EXPECT_LT(mean_geodesic_error(matched, truth, N, &shared), mean_geodesic_error(square, truth, N, &shared));
}

TEST(PointMapFile, RoundTrip) {
  const PointMap p = {3, 0, 2, 2, 1};
  const auto path = (testing::scratch_dir() / "map.txt").string();
  save_pointmap(path, p);
  EXPECT_EQ(load_pointmap(path), p);
}

}  // namespace
}  // namespace fmreg
