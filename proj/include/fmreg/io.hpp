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

// ASCII surface and matrix I/O.
//
// Matrix file:  "rows cols" header, then one line per row.
// Point map:    one target vertex index per line, line i belongs to source vertex i.

#include "fmreg/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>

namespace fmreg {

enum class SurfaceFormat { kAuto, kOff, kObj, kPly };

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline SurfaceFormat format_from_path(const std::string& path) {
  const std::string ext = lower(std::filesystem::path(path).extension().string());
  if (ext == ".off") return SurfaceFormat::kOff;
  if (ext == ".obj") return SurfaceFormat::kObj;
  if (ext == ".ply") return SurfaceFormat::kPly;
  fail(ErrorKind::kParse, "cannot infer surface format from '", path, "'");
}

// Reads whitespace separated tokens, skipping '#' comments.
class Tokenizer {
 public:
  explicit Tokenizer(std::istream& in) : in_(in) {}

  bool next(std::string& tok) {
    while (true) {
      if (line_ >> tok) {
        if (tok[0] == '#') {
          line_.clear();
          line_.str("");
          continue;
        }
        return true;
      }
      std::string raw;
      if (!std::getline(in_, raw)) return false;
      ++line_no_;
      line_.clear();
      line_.str(raw);
    }
  }

  std::string expect(const char* what) {
    std::string tok;
    if (!next(tok)) fail(ErrorKind::kParse, "unexpected end of file while reading ", what);
    return tok;
  }

  double number(const char* what) {
    const std::string tok = expect(what);
    try {
      std::size_t pos = 0;
      const double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::kParse, "line ", line_no_, ": expected ", what, ", got '", tok, "'");
    }
  }

  long integer(const char* what) {
    const double v = number(what);
    if (v != std::floor(v)) fail(ErrorKind::kParse, "line ", line_no_, ": expected integer ", what);
    return static_cast<long>(v);
  }

  int line() const { return line_no_; }

 private:
  std::istream& in_;
  std::istringstream line_;
  int line_no_ = 0;
};

inline Surface finish_surface(Points V, const std::vector<std::array<int, 3>>& tris, Points N) {
  if (tris.empty()) {
    PointCloud pc;
    pc.P = std::move(V);
    if (N.rows() == pc.P.rows()) pc.N = std::move(N);
    return pc;
  }
  TriMesh mesh;
  mesh.V = std::move(V);
  mesh.F.resize(static_cast<Index>(tris.size()), 3);
  for (std::size_t f = 0; f < tris.size(); ++f)
    for (int c = 0; c < 3; ++c) mesh.F(static_cast<Index>(f), c) = tris[f][c];
  if (N.rows() == mesh.V.rows()) mesh.N = std::move(N);
  validate(mesh);
  return mesh;
}

inline void push_polygon(const std::vector<int>& poly, std::vector<std::array<int, 3>>& tris) {
  if (poly.size() < 3) fail(ErrorKind::kParse, "polygon with fewer than 3 vertices");
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) tris.push_back({poly[0], poly[i], poly[i + 1]});
}

inline Surface read_off(std::istream& in) {
  Tokenizer tok(in);
  std::string head = tok.expect("OFF header");
  if (head.size() < 3 || head.substr(head.size() - 3) != "OFF")
    fail(ErrorKind::kParse, "missing OFF header (got '", head, "')");
  const long nv = tok.integer("vertex count");
  const long nf = tok.integer("face count");
  tok.integer("edge count");
  if (nv < 0 || nf < 0) fail(ErrorKind::kParse, "negative element count");
  Points V(nv, 3);
  for (long i = 0; i < nv; ++i)
    for (int c = 0; c < 3; ++c) V(i, c) = tok.number("vertex coordinate");
  std::vector<std::array<int, 3>> tris;
  for (long f = 0; f < nf; ++f) {
    const long k = tok.integer("face size");
    std::vector<int> poly(k);
    for (long j = 0; j < k; ++j) poly[j] = static_cast<int>(tok.integer("face index"));
    push_polygon(poly, tris);
  }
  return finish_surface(std::move(V), tris, Points());
}

inline Surface read_obj(std::istream& in) {
  std::vector<Vec3> verts, normals;
  std::vector<std::array<int, 3>> tris;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v" || tag == "vn") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) fail(ErrorKind::kParse, "line ", line_no, ": malformed '", tag, "'");
      (tag == "v" ? verts : normals).push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string item;
      while (ls >> item) {
        const std::string head = item.substr(0, item.find('/'));
        long idx = 0;
        try {
          idx = std::stol(head);
        } catch (const std::exception&) {
          fail(ErrorKind::kParse, "line ", line_no, ": bad face index '", item, "'");
        }
        if (idx < 0) idx = static_cast<long>(verts.size()) + idx + 1;
        poly.push_back(static_cast<int>(idx - 1));
      }
      push_polygon(poly, tris);
    }
  }
  Points V(static_cast<Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) V.row(static_cast<Index>(i)) = verts[i].transpose();
  Points N;
  if (normals.size() == verts.size()) {
    N.resize(V.rows(), 3);
    for (std::size_t i = 0; i < normals.size(); ++i) N.row(static_cast<Index>(i)) = normals[i].transpose();
  }
  return finish_surface(std::move(V), tris, std::move(N));
}

inline Surface read_ply(std::istream& in) {
  std::string raw;
  if (!std::getline(in, raw) || raw.rfind("ply", 0) != 0) fail(ErrorKind::kParse, "missing ply magic");
  long nv = 0, nf = 0;
  std::vector<std::string> vprops;
  std::string current;
  bool ascii = false;
  while (std::getline(in, raw)) {
    std::istringstream ls(raw);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (tag == "element") {
      long count = 0;
      ls >> current >> count;
      if (current == "vertex") nv = count;
      else if (current == "face") nf = count;
      else if (count != 0) fail(ErrorKind::kParse, "unsupported ply element '", current, "'");
    } else if (tag == "property" && current == "vertex") {
      std::string type, name;
      ls >> type >> name;
      vprops.push_back(name);
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!ascii) fail(ErrorKind::kParse, "only ascii ply is supported");
  auto find = [&](const char* name) {
    auto it = std::find(vprops.begin(), vprops.end(), name);
    return it == vprops.end() ? -1 : static_cast<int>(it - vprops.begin());
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz");
  if (ix < 0 || iy < 0 || iz < 0) fail(ErrorKind::kParse, "ply vertex lacks x/y/z");
  const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;
  Tokenizer tok(in);
  Points V(nv, 3), N;
  if (has_normals) N.resize(nv, 3);
  std::vector<double> vals(vprops.size());
  for (long i = 0; i < nv; ++i) {
    for (auto& v : vals) v = tok.number("vertex property");
    V.row(i) << vals[ix], vals[iy], vals[iz];
    if (has_normals) N.row(i) << vals[inx], vals[iny], vals[inz];
  }
  std::vector<std::array<int, 3>> tris;
  for (long f = 0; f < nf; ++f) {
    const long k = tok.integer("face size");
    std::vector<int> poly(k);
    for (long j = 0; j < k; ++j) poly[j] = static_cast<int>(tok.integer("face index"));
    push_polygon(poly, tris);
  }
  return finish_surface(std::move(V), tris, std::move(N));
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot open '", path, "' for writing");
  out << std::setprecision(17);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '", path, "'");
  return in;
}

}  // namespace detail

/// Loads an ASCII OFF/OBJ/PLY file. Files without faces become point clouds.
inline Surface load_surface(const std::string& path, SurfaceFormat format = SurfaceFormat::kAuto) {
  if (format == SurfaceFormat::kAuto) format = detail::format_from_path(path);
  auto in = detail::open_in(path);
  switch (format) {
    case SurfaceFormat::kOff: return detail::read_off(in);
    case SurfaceFormat::kObj: return detail::read_obj(in);
    case SurfaceFormat::kPly: return detail::read_ply(in);
    default: break;
  }
  fail(ErrorKind::kParse, "unknown format");
}

inline TriMesh load_mesh(const std::string& path) {
  Surface s = load_surface(path);
  if (!std::holds_alternative<TriMesh>(s)) fail(ErrorKind::kParse, "'", path, "' has no faces");
  return std::get<TriMesh>(std::move(s));
}

inline void save_off(const std::string& path, const TriMesh& mesh) {
  auto out = detail::open_out(path);
  out << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_faces() << " 0\n";
  for (Index i = 0; i < mesh.num_vertices(); ++i) out << mesh.V(i, 0) << ' ' << mesh.V(i, 1) << ' ' << mesh.V(i, 2) << '\n';
  for (Index f = 0; f < mesh.num_faces(); ++f) out << "3 " << mesh.F(f, 0) << ' ' << mesh.F(f, 1) << ' ' << mesh.F(f, 2) << '\n';
}

/// Maps scalars to a blue-to-red ramp, saturating at `saturate`.
inline Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> heat_colors(const VecX& values, double saturate) {
  Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> rgb(values.size(), 3);
  for (Index i = 0; i < values.size(); ++i) {
    const double t = std::clamp(saturate > 0 ? values[i] / saturate : 0.0, 0.0, 1.0);
    rgb(i, 0) = static_cast<int>(std::lround(255 * t));
    rgb(i, 1) = static_cast<int>(std::lround(255 * (1.0 - std::abs(2 * t - 1))));
    rgb(i, 2) = static_cast<int>(std::lround(255 * (1 - t)));
  }
  return rgb;
}

/// ASCII PLY writer. Either positions/faces only, or with per-vertex scalar and RGB heatmap.
inline void save_ply(const std::string& path, const Points& V, const Faces& F, const VecX* scalar = nullptr,
                     double saturate = 1.0) {
  auto out = detail::open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << V.rows() << "\nproperty double x\nproperty double y\nproperty double z\n";
  Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor> rgb;
  if (scalar) {
    out << "property double quality\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n";
    rgb = heat_colors(*scalar, saturate);
  }
  out << "element face " << F.rows() << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (Index i = 0; i < V.rows(); ++i) {
    out << V(i, 0) << ' ' << V(i, 1) << ' ' << V(i, 2);
    if (scalar) out << ' ' << (*scalar)[i] << ' ' << rgb(i, 0) << ' ' << rgb(i, 1) << ' ' << rgb(i, 2);
    out << '\n';
  }
  for (Index f = 0; f < F.rows(); ++f) out << "3 " << F(f, 0) << ' ' << F(f, 1) << ' ' << F(f, 2) << '\n';
}

inline void save_surface(const std::string& path, const Surface& s) {
  const SurfaceFormat fmt = detail::format_from_path(path);
  if (const auto* mesh = std::get_if<TriMesh>(&s)) {
    if (fmt == SurfaceFormat::kPly) save_ply(path, mesh->V, mesh->F);
    else if (fmt == SurfaceFormat::kOff) save_off(path, *mesh);
    else fail(ErrorKind::kIo, "mesh output supports .off and .ply");
  } else {
    if (fmt != SurfaceFormat::kPly) fail(ErrorKind::kIo, "point clouds are written as .ply");
    save_ply(path, std::get<PointCloud>(s).P, Faces());
  }
}

inline void save_matrix(const std::string& path, const MatX& M) {
  auto out = detail::open_out(path);
  out << M.rows() << ' ' << M.cols() << '\n';
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) out << (j ? " " : "") << M(i, j);
    out << '\n';
  }
}

inline MatX load_matrix(const std::string& path) {
  auto in = detail::open_in(path);
  detail::Tokenizer tok(in);
  const long rows = tok.integer("rows"), cols = tok.integer("cols");
  if (rows < 0 || cols < 0) fail(ErrorKind::kParse, "negative matrix size");
  MatX M(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) M(i, j) = tok.number("matrix entry");
  return M;
}

inline void save_index_list(const std::string& path, const std::vector<int>& idx) {
  auto out = detail::open_out(path);
  for (int i : idx) out << i << '\n';
}

inline std::vector<int> load_index_list(const std::string& path) {
  auto in = detail::open_in(path);
  detail::Tokenizer tok(in);
  std::vector<int> out;
  std::string t;
  while (tok.next(t)) {
    try {
      std::size_t pos = 0;
      const long v = std::stol(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      out.push_back(static_cast<int>(v));
    } catch (const std::exception&) {
      fail(ErrorKind::kParse, "bad index '", t, "' in ", path);
    }
  }
  return out;
}

}  // namespace fmreg
