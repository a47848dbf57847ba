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

// Probe functions for map estimation: wave kernel signatures, wave kernel maps around a
// vertex, and delta functions.

#include "fmreg/spectral.hpp"

namespace fmreg {

/// Probe functions as columns, with a tag per column ("wks:e", "wkm:<vertex>:e",
/// "delta:<vertex>").
struct DescriptorSet {
  MatX F;
  std::vector<std::string> tags;

  Index size() const { return F.cols(); }
};

struct WaveKernelOptions {
  int num_dims = 20;
  double variance_factor = 7.0;  // sigma in units of the energy spacing
  double margin_factor = 2.0;    // grid margin in units of sigma
};

/// Log-energy grid and bandwidth: spacing d = R / (N - 1 + 2 m v), sigma = v d, where R is
/// the log-eigenvalue range over j >= 2, v the variance factor and m the margin factor.
struct EnergyGrid {
  VecX energies;
  double sigma = 0;
};

inline EnergyGrid energy_grid(const SpectralBasis& basis, const WaveKernelOptions& opt) {
  require(basis.size() >= 3, "wave kernel descriptors need at least 3 eigenpairs");
  require(opt.num_dims >= 1, "wave kernel descriptors: num_dims must be positive");
  if (!(basis.lambda[1] > 0)) fail(ErrorKind::kDegenerateGeometry, "wave kernel descriptors: lambda_2 = 0");
  const double lo = std::log(basis.lambda[1]), hi = std::log(basis.lambda[basis.size() - 1]);
  const double spacing = (hi - lo) / (opt.num_dims - 1 + 2 * opt.margin_factor * opt.variance_factor);
  EnergyGrid g;
  g.sigma = opt.variance_factor * spacing;
  const double start = lo + opt.margin_factor * g.sigma;
  g.energies = VecX::LinSpaced(opt.num_dims, start, start + spacing * (opt.num_dims - 1));
  if (opt.num_dims == 1) g.energies[0] = 0.5 * (lo + hi);
  return g;
}

namespace detail {

// Band-pass filter values exp(-(e - log lambda_j)^2 / (2 sigma^2)) for j >= 2 (columns are energies).
inline MatX band_filters(const SpectralBasis& basis, const EnergyGrid& g) {
  const Index k = basis.size();
  MatX G(k - 1, g.energies.size());
  for (Index j = 1; j < k; ++j) {
    const double l = std::log(std::max(basis.lambda[j], 1e-300));
    for (Index e = 0; e < g.energies.size(); ++e)
      G(j - 1, e) = std::exp(-(g.energies[e] - l) * (g.energies[e] - l) / (2 * g.sigma * g.sigma));
  }
  return G;
}

}  // namespace detail

/// Wave kernel signature, scaled by the total area so that it is invariant to uniform scaling.
inline DescriptorSet wks(const SpectralBasis& basis, const WaveKernelOptions& opt = {}) {
  const EnergyGrid g = energy_grid(basis, opt);
  const MatX G = detail::band_filters(basis, g);
  const Index k = basis.size();
  const MatX phi2 = basis.phi.rightCols(k - 1).array().square();
  DescriptorSet d;
  d.F = basis.area() * phi2 * G;
  for (Index e = 0; e < G.cols(); ++e) {
    d.F.col(e) /= G.col(e).sum();
    d.tags.push_back("wks:" + std::to_string(e));
  }
  return d;
}

/// Wave kernel map around vertex p: sum_j phi_j(x) phi_j(p) g_e(lambda_j), area-scaled.
inline DescriptorSet wave_kernel_map(const SpectralBasis& basis, int p, const WaveKernelOptions& opt = {}) {
  require(p >= 0 && p < basis.num_vertices(), "wave_kernel_map: vertex ", p, " out of range");
  const EnergyGrid g = energy_grid(basis, opt);
  const MatX G = detail::band_filters(basis, g);
  const Index k = basis.size();
  const VecX at_p = basis.phi.row(p).tail(k - 1).transpose();
  DescriptorSet d;
  d.F = basis.area() * basis.phi.rightCols(k - 1) * (at_p.asDiagonal() * G);
  for (Index e = 0; e < G.cols(); ++e) d.tags.push_back("wkm:" + std::to_string(p) + ":" + std::to_string(e));
  return d;
}

/// Spectral coefficients of delta functions at the given vertices: column i is
/// (phi_1(x_i), ..., phi_k(x_i)).
inline MatX delta_descriptors(const SpectralBasis& basis, const std::vector<int>& vertices) {
  MatX out(basis.size(), static_cast<Index>(vertices.size()));
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    require(vertices[i] >= 0 && vertices[i] < basis.num_vertices(), "delta_descriptors: vertex ", vertices[i],
            " out of range");
    out.col(static_cast<Index>(i)) = basis.phi.row(vertices[i]).transpose();
  }
  return out;
}

/// q farthest-point samples of a point set, starting from a seeded vertex.
inline std::vector<int> uniform_samples(const Points& P, int q, std::uint64_t seed) {
  require(P.rows() > 0, "uniform_samples: empty point set");
  const int start = static_cast<int>(mix_seed(seed) % static_cast<std::uint64_t>(P.rows()));
  return farthest_point_sampling(MatX(P), q, start);
}

inline DescriptorSet concat(const std::vector<DescriptorSet>& parts) {
  DescriptorSet d;
  Index cols = 0, rows = parts.empty() ? 0 : parts[0].F.rows();
  for (const auto& p : parts) {
    require(p.F.rows() == rows, "concat: descriptor row mismatch");
    cols += p.F.cols();
  }
  d.F.resize(rows, cols);
  Index c = 0;
  for (const auto& p : parts) {
    d.F.middleCols(c, p.F.cols()) = p.F;
    c += p.F.cols();
    d.tags.insert(d.tags.end(), p.tags.begin(), p.tags.end());
  }
  return d;
}

/// Scales every column to unit norm in the mass inner product (zero columns are left as is).
inline void normalize_columns(DescriptorSet& d, const VecX& mass) {
  for (Index c = 0; c < d.F.cols(); ++c) {
    const double nrm = std::sqrt(d.F.col(c).cwiseAbs2().dot(mass));
    if (nrm > 0) d.F.col(c) /= nrm;
  }
}

/// Probes used for the first map estimate: WKS plus a wave kernel map per landmark.
inline DescriptorSet landmark_probes(const SpectralBasis& basis, const std::vector<int>& landmarks,
                                     const WaveKernelOptions& opt = {}) {
  std::vector<DescriptorSet> parts{wks(basis, opt)};
  for (int p : landmarks) parts.push_back(wave_kernel_map(basis, p, opt));
  DescriptorSet d = concat(parts);
  normalize_columns(d, basis.mass);
  return d;
}

}  // namespace fmreg
