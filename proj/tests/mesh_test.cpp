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

#include "fmreg/distance.hpp"
#include "fmreg/io.hpp"
#include "fmreg/perturb.hpp"
#include "fmreg/shapes.hpp"
#include "test_util.hpp"

using namespace fmreg;
using fmreg::testing::read_file;
using fmreg::testing::scratch_dir;
using fmreg::testing::write_file;

namespace {

const char* kTetraOff =
    "OFF\n# regular tetrahedron\n4 4 6\n"
    "0.5 0 -0.35355339059327373\n-0.5 0 -0.35355339059327373\n"
    "0 0.5 0.35355339059327373\n0 -0.5 0.35355339059327373\n"
    "3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

ErrorKind error_kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected fmreg::Error";
  return ErrorKind::kIo;
}

}  // namespace

TEST(LoadSurface, OffTetrahedron) {
  const Surface s = load_surface(write_file("tetra.off", kTetraOff));
  ASSERT_TRUE(std::holds_alternative<TriMesh>(s));
  const auto& m = std::get<TriMesh>(s);
  EXPECT_EQ(m.num_vertices(), 4);
  EXPECT_EQ(m.num_faces(), 4);
  EXPECT_DOUBLE_EQ(m.V(2, 1), 0.5);
}

TEST(LoadSurface, IndexOutOfRange) {
  const std::string path = write_file("bad.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 7\n");
  EXPECT_EQ(error_kind_of([&] { load_surface(path); }), ErrorKind::kIndexOutOfRange);
}

TEST(LoadSurface, DegenerateFaceListsIndices) {
  const std::string path = write_file("deg.off", "OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n3 0 0 2\n");
  try {
    load_surface(path);
    FAIL() << "expected degenerate face error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateFace);
    EXPECT_NE(std::string(e.what()).find(" 1"), std::string::npos);
  }
}

TEST(LoadSurface, MalformedIsParseError) {
  const std::string path = write_file("junk.off", "OFF\n3 1 0\n0 0 zero\n");
  EXPECT_EQ(error_kind_of([&] { load_surface(path); }), ErrorKind::kParse);
}

TEST(LoadSurface, PlyWithoutFacesIsPointCloud) {
  const std::string path = write_file("pts.ply",
                                      "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                                      "property float z\nelement face 0\nproperty list uchar int vertex_indices\n"
                                      "end_header\n0 0 0\n1 0 0\n0 1 0\n");
  const Surface s = load_surface(path);
  ASSERT_TRUE(std::holds_alternative<PointCloud>(s));
  EXPECT_EQ(std::get<PointCloud>(s).size(), 3);
}

TEST(LoadSurface, ObjQuadIsTriangulatedAndOrderPreserved) {
  const std::string path = write_file("quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1 4/1\n");
  const auto m = std::get<TriMesh>(load_surface(path));
  EXPECT_EQ(m.num_faces(), 2);
  EXPECT_DOUBLE_EQ(m.V(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.V(3, 1), 1.0);
}

TEST(LoadSurface, SaveRoundTripKeepsCoordinates) {
  TriMesh m = shapes::icosphere(1);
  m.V.col(0) *= 1.0 / 3.0;
  const auto dir = scratch_dir();
  save_off((dir / "a.off").string(), m);
  save_ply((dir / "a.ply").string(), m.V, m.F);
  for (const char* name : {"a.off", "a.ply"}) {
    const auto back = std::get<TriMesh>(load_surface((dir / name).string()));
    EXPECT_EQ(back.F, m.F);
    EXPECT_EQ((back.V - m.V).cwiseAbs().maxCoeff(), 0.0) << name;
  }
}

TEST(VertexAreas, RegularTetrahedron) {
  const VecX a = vertex_areas(shapes::tetrahedron());
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(a[i], std::sqrt(3.0) / 4.0, 1e-12);
}

TEST(VertexAreas, RightTriangleAndScaling) {
  TriMesh m;
  m.V.resize(3, 3);
  m.V << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  m.F.resize(1, 3);
  m.F << 0, 1, 2;
  const VecX a = vertex_areas(m);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(a[i], 1.0 / 6.0, 1e-15);
  m.V *= 2.0;
  EXPECT_NEAR(vertex_areas(m).sum(), 4 * a.sum(), 1e-14);
}

TEST(VertexAreas, SumsToTotalArea) {
  const TriMesh m = shapes::capsule(Vec3(0.1, 0.2, 0.3), 1.3, 0.2);
  const double total = total_area(m);
  EXPECT_LT(std::abs(vertex_areas(m).sum() - total) / total, 1e-12);
}

TEST(VertexAreas, IsolatedVertexGetsZeroAndIsFlagged) {
  TriMesh m = shapes::tetrahedron();
  m.V.conservativeResize(5, 3);
  m.V.row(4) << 3, 3, 3;
  EXPECT_EQ(vertex_areas(m)[4], 0.0);
  EXPECT_EQ(isolated_vertices(m), std::vector<Index>{4});
}

TEST(VertexNormals, IcosphereMatchesPositions) {
  // Level 3 deviates by 0.0118 at the 5-valent vertices; level 4 halves that.
  const TriMesh m = shapes::icosphere(4);
  const Points N = vertex_normals(m);
  for (Index i = 0; i < m.num_vertices(); ++i) EXPECT_LT((N.row(i) - m.V.row(i)).norm(), 1e-2);
}

TEST(VertexNormals, PlanarGridAndInversion) {
  TriMesh m = shapes::grid(5, 4);
  Points N = vertex_normals(m);
  for (Index i = 0; i < N.rows(); ++i) EXPECT_LT((row3(N, i) - Vec3(0, 0, 1)).norm(), 1e-12);
  m.F.col(1).swap(m.F.col(2));
  N = vertex_normals(m);
  for (Index i = 0; i < N.rows(); ++i) EXPECT_LT((row3(N, i) - Vec3(0, 0, -1)).norm(), 1e-12);
}

TEST(VertexNormals, CapsuleIsOutwardOriented) {
  const TriMesh m = shapes::capsule(Vec3::Zero(), 1.0, 0.25);
  const Points N = vertex_normals(m);
  for (Index i = 0; i < m.num_vertices(); ++i) {
    Vec3 axis_point(std::clamp(m.V(i, 0), -0.5, 0.5), 0, 0);
    EXPECT_GT(row3(N, i).dot(row3(m.V, i) - axis_point), 0.0);
  }
}

TEST(VertexNormals, FlatStarIsFlagged) {
  TriMesh m;
  m.V.resize(3, 3);
  m.V << 0, 0, 0, 1, 0, 0, 2, 0, 0;  // collinear
  m.F.resize(1, 3);
  m.F << 0, 1, 2;
  std::vector<Index> flagged;
  const Points N = vertex_normals(m, &flagged);
  EXPECT_EQ(flagged.size(), 3u);
  EXPECT_EQ(N.norm(), 0.0);
}

TEST(Perturb, ZeroNoiseIsIdentity) {
  const TriMesh m = shapes::icosphere(2);
  const auto r = perturb(m, {PerturbKind::kNoise, 0.0, 11});
  EXPECT_EQ(std::get<TriMesh>(r.surface).V, m.V);
}

TEST(Perturb, DownsampleRespectsRatio) {
  const TriMesh m = shapes::grid(40, 25);
  ASSERT_EQ(m.num_vertices(), 1000);
  const auto r = perturb(m, {PerturbKind::kDownsample, 0.3, 1});
  const auto& out = std::get<TriMesh>(r.surface);
  EXPECT_LE(out.num_vertices(), 300);
  EXPECT_GT(out.num_vertices(), 100);
  EXPECT_EQ(r.source.size(), static_cast<std::size_t>(out.num_vertices()));
  EXPECT_NO_THROW(validate(out));
}

TEST(Perturb, GlueJoinsTouchingCapsules) {
  const double r = 0.1, gap = 0.004;
  const TriMesh a = shapes::capsule(Vec3::Zero(), 1.0, r);
  const TriMesh b = shapes::capsule(Vec3(0, 2 * r + gap, 0), 1.0, r);
  const TriMesh two = shapes::merge(a, b);
  int before = 0, after = 0;
  vertex_components(two, &before);
  ASSERT_EQ(before, 2);
  const double magnitude = 2 * gap / bbox_diagonal(two.V);
  const auto res = perturb(two, {PerturbKind::kGlue, magnitude, 0});
  const auto& glued = std::get<TriMesh>(res.surface);
  vertex_components(glued, &after);
  EXPECT_EQ(after, 1);
  EXPECT_LT(glued.num_vertices(), two.num_vertices());
  EXPECT_NO_THROW(validate(glued));
}

TEST(Perturb, HoleAndFrontalViewRemoveFaces) {
  const TriMesh m = shapes::icosphere(3);
  const auto hole = perturb(m, {PerturbKind::kHole, 0.2, 5});
  const auto& h = std::get<TriMesh>(hole.surface);
  EXPECT_LT(h.num_faces(), m.num_faces());
  for (std::size_t i = 0; i < hole.source.size(); ++i) EXPECT_EQ(h.V.row(i), m.V.row(hole.source[i]));
  const auto front = perturb(m, {PerturbKind::kFrontalView, 0, 5});
  const auto& f = std::get<TriMesh>(front.surface);
  EXPECT_NEAR(static_cast<double>(f.num_faces()) / m.num_faces(), 0.5, 0.05);
}

TEST(Perturb, PointCloudDropsFaces) {
  const TriMesh m = shapes::icosphere(2);
  const auto r = perturb(m, {PerturbKind::kPointCloud, 0, 0});
  ASSERT_TRUE(std::holds_alternative<PointCloud>(r.surface));
  EXPECT_EQ(std::get<PointCloud>(r.surface).P, m.V);
}

TEST(Perturb, EmptyResultIsAnError) {
  const TriMesh m = shapes::icosphere(2);
  EXPECT_EQ(error_kind_of([&] { perturb(m, {PerturbKind::kHole, 10.0, 0}); }), ErrorKind::kEmptyResult);
}

TEST(Perturb, DeterministicUnderSeed) {
  const TriMesh m = shapes::icosphere(3);
  const auto dir = scratch_dir();
  for (auto kind : {PerturbKind::kNoise, PerturbKind::kHole, PerturbKind::kDownsample, PerturbKind::kFrontalView}) {
    const double mag = kind == PerturbKind::kDownsample ? 0.5 : 0.05;
    const auto a = perturb(m, {kind, mag, 42});
    const auto b = perturb(m, {kind, mag, 42});
    save_surface((dir / "a.ply").string(), a.surface);
    save_surface((dir / "b.ply").string(), b.surface);
    EXPECT_EQ(read_file((dir / "a.ply").string()), read_file((dir / "b.ply").string())) << to_string(kind);
    EXPECT_EQ(a.source, b.source);
  }
}

TEST(PointToSurface, VerticesHaveZeroError) {
  const TriMesh m = shapes::capsule(Vec3(0, 1, 0), 0.8, 0.3);
  EXPECT_LT(point_to_surface_error(m.V, m).maxCoeff(), 1e-9);
}

TEST(PointToSurface, HeightAboveFlatPatch) {
  const TriMesh m = shapes::grid(11, 11, 100.0, 100.0);
  Points p(2, 3);
  p << 50.3, 47.1, 2.5, 10.0, 90.0, -0.75;
  const VecX d = point_to_surface_error(p, m);
  EXPECT_NEAR(d[0], 2.5, 1e-12);
  EXPECT_NEAR(d[1], 0.75, 1e-12);
}

TEST(PointToSurface, MatchesBruteForce) {
  const TriMesh m = shapes::icosphere(2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Points p(200, 3);
  for (Index i = 0; i < p.rows(); ++i) p.row(i) << u(rng), u(rng), u(rng);
  const VecX d = point_to_surface_error(p, m);
  for (Index i = 0; i < p.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index f = 0; f < m.num_faces(); ++f)
      best = std::min(best, point_triangle_distance(row3(p, i), row3(m.V, m.F(f, 0)), row3(m.V, m.F(f, 1)),
                                                    row3(m.V, m.F(f, 2))));
    EXPECT_NEAR(d[i], best, 1e-12);
  }
}

TEST(PointToSurface, TriangleRegions) {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  EXPECT_NEAR(point_triangle_distance(Vec3(-1, -1, 0), a, b, c), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(point_triangle_distance(Vec3(0.5, -2, 0), a, b, c), 2.0, 1e-15);
  EXPECT_NEAR(point_triangle_distance(Vec3(1, 1, 0), a, b, c), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(point_triangle_distance(Vec3(0.2, 0.2, -3), a, b, c), 3.0, 1e-15);
}
