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

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fmreg {

using Index = Eigen::Index;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class ErrorKind {
  kParse,
  kIndexOutOfRange,
  kDegenerateFace,
  kNonManifold,
  kPrecondition,
  kDisconnected,
  kNotConverged,
  kDegenerateGeometry,
  kSizeMismatch,
  kEmptyResult,
  kRankDeficient,
  kIo,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kIndexOutOfRange: return "index out of range";
    case ErrorKind::kDegenerateFace: return "degenerate face";
    case ErrorKind::kNonManifold: return "non-manifold edge";
    case ErrorKind::kPrecondition: return "precondition violated";
    case ErrorKind::kDisconnected: return "disconnected surface";
    case ErrorKind::kNotConverged: return "not converged";
    case ErrorKind::kDegenerateGeometry: return "degenerate geometry";
    case ErrorKind::kSizeMismatch: return "size mismatch";
    case ErrorKind::kEmptyResult: return "empty result";
    case ErrorKind::kRankDeficient: return "rank deficient";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <typename... Args>
[[noreturn]] inline void fail(ErrorKind kind, Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  throw Error(kind, oss.str());
}

template <typename... Args>
inline void require(bool cond, Args&&... args) {
  if (!cond) fail(ErrorKind::kPrecondition, std::forward<Args>(args)...);
}

// splitmix64; used to turn user seeds into indices and directions.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Vec3 row3(const Points& P, Index i) { return P.row(i).transpose(); }

}  // namespace fmreg
