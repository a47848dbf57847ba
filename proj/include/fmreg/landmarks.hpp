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

// Diffusion-style score fields over a thresholded biharmonic potential, and the
// head/hands/feet landmark detector built on them.

#include "fmreg/body_model.hpp"
#include "fmreg/knn.hpp"
#include "fmreg/spectral.hpp"

namespace fmreg {

/// d(x, y) = 1 - t(x, y) where t is the biharmonic distance divided by the diameter when
/// that ratio is at most tau, and 1 otherwise. Materialized densely up to `kDenseLimit`
/// vertices; larger surfaces evaluate rows on the fly from the embedding.
class PairwisePotential {
 public:
  static constexpr Index kDenseLimit = 8000;

  PairwisePotential(const SpectralBasis& basis, double tau) : tau_(tau) {
    require(tau > 0 && tau <= 1, "pairwise potential: tau must lie in (0, 1], got ", tau);
    E_ = biharmonic_embedding(basis);
    const Index n = E_.rows();
    if (n <= kDenseLimit) {
      MatX dist(n, n);
      const VecX sq = E_.rowwise().squaredNorm();
      dist = (-2.0 * E_ * E_.transpose()).colwise() + sq;
      dist.rowwise() += sq.transpose();
      dist = dist.cwiseMax(0.0).cwiseSqrt();
      dist.diagonal().setZero();
      dist = 0.5 * (dist + dist.transpose()).eval();
      diameter_ = dist.maxCoeff();
      require(diameter_ > 0, "pairwise potential: zero biharmonic diameter");
      dense_ = dist.unaryExpr([&](double d) { return potential(d); });
    } else {
      diameter_ = biharmonic_diameter(basis, 256);
    }
  }

  Index size() const { return E_.rows(); }
  double tau() const { return tau_; }
  double diameter() const { return diameter_; }
  bool materialized() const { return dense_.size() > 0; }

  /// D v
  VecX apply(const VecX& v) const {
    if (materialized()) return dense_ * v;
    const Index n = size();
    VecX out(n);
    const Index block = 512;
    for (Index r0 = 0; r0 < n; r0 += block) {
      const Index rows = std::min(block, n - r0);
      for (Index r = r0; r < r0 + rows; ++r) {
        const VecX d = (E_.rowwise() - E_.row(r)).rowwise().norm();
        double acc = 0;
        for (Index c = 0; c < n; ++c) acc += (c == r ? 1.0 : potential(d[c])) * v[c];
        out[r] = acc;
      }
    }
    return out;
  }

  /// Full matrix (computed on demand when not materialized).
  MatX matrix() const {
    if (materialized()) return dense_;
    MatX D(size(), size());
    for (Index c = 0; c < size(); ++c) D.col(c) = apply(VecX::Unit(size(), c));
    return D;
  }

 private:
  double potential(double d) const {
    const double t = d / diameter_;
    return t <= tau_ ? std::clamp(1.0 - t, 0.0, 1.0) : 0.0;
  }

  double tau_;
  double diameter_ = 0;
  MatX E_;
  MatX dense_;
};

struct ScoreField {
  VecX s;                 // normalized to [0, 1]
  int steps = 0;          // evolution steps actually used
  bool constant = false;  // raw score had no spread; s is all zeros
  double raw_spread = 0;  // (max - min) / max of the raw score
};

namespace detail {

inline std::vector<int> rank_order(const VecX& s, const std::vector<int>& sample) {
  std::vector<int> order = sample;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s[a] < s[b]; });
  return order;
}

}  // namespace detail

/// Accumulated evolution f_{t+1} = D A f_t from f_0 = 1, each f_t rescaled to unit maximum.
/// Stops early once the ranking of a fixed 512-vertex sample stops changing.
inline ScoreField dep_score(const PairwisePotential& D, const VecX& mass, int T = 10) {
  require(T >= 1, "dep_score: T must be >= 1");
  const Index n = D.size();
  require(mass.size() == n, "dep_score: mass size mismatch");
  std::vector<int> sample;
  const Index m = std::min<Index>(n, 512);
  for (Index k = 0; k < m; ++k) sample.push_back(static_cast<int>(k * n / m));

  VecX f = VecX::Ones(n);
  VecX raw = f;
  std::vector<int> previous = detail::rank_order(raw, sample);
  ScoreField out;
  for (int t = 1; t <= T; ++t) {
    f = D.apply(mass.cwiseProduct(f));
    const double top = f.maxCoeff();
    if (top > 0) f /= top;
    raw += f;
    out.steps = t;
    std::vector<int> current = detail::rank_order(raw, sample);
    if (t > 1 && current == previous) break;
    previous = std::move(current);
  }
  const double lo = raw.minCoeff(), hi = raw.maxCoeff();
  out.raw_spread = (hi - lo) / std::max(1e-300, std::abs(hi));
  if (out.raw_spread <= 1e-9) {
    out.constant = true;
    out.s = VecX::Zero(n);
  } else {
    out.s = (raw.array() - lo) / (hi - lo);
  }
  return out;
}

struct LandmarkConfig {
  double tau1 = 0.05;
  double tau2 = 1.0;
  int T = 10;
  double cluster_thresh = 0.9;
  double relax_step = 0.05;        // threshold decrement while fewer than 4 limb clusters exist
  double min_cluster_thresh = 0.5;
  double head_quantile = 0.9;  // head candidates: s^tau1 in the top decile
  int head_eigenfunctions = 5;
  int cloud_neighbors = 8;     // graph used for connected regions on point clouds
};

/// Vertex graph used for region growing: mesh edges, or a symmetric k-nearest-neighbour
/// graph on point clouds.
inline std::vector<std::vector<int>> neighbor_graph(const Surface& s, int k = 8) {
  if (const auto* m = std::get_if<TriMesh>(&s)) {
    std::vector<std::vector<int>> g(m->num_vertices());
    for (const auto& [a, b] : edges(*m)) {
      g[a].push_back(b);
      g[b].push_back(a);
    }
    return g;
  }
  const Points& P = std::get<PointCloud>(s).P;
  const KdTree3 tree(P);
  std::vector<std::vector<int>> g(P.rows());
  for (Index i = 0; i < P.rows(); ++i)
    for (int j : tree.knn(row3(P, i), k + 1))
      if (j != i) {
        g[i].push_back(j);
        g[j].push_back(static_cast<int>(i));
      }
  for (auto& nb : g) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return g;
}

/// Connected components of the vertices with `member` set; label -1 elsewhere.
inline std::vector<int> label_regions(const std::vector<std::vector<int>>& graph, const std::vector<char>& member,
                                      int* count) {
  const Index n = static_cast<Index>(graph.size());
  std::vector<int> label(n, -1);
  int c = 0;
  for (Index s = 0; s < n; ++s) {
    if (!member[s] || label[s] >= 0) continue;
    std::vector<int> stack{static_cast<int>(s)};
    label[s] = c;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : graph[v])
        if (member[w] && label[w] < 0) {
          label[w] = c;
          stack.push_back(w);
        }
    }
    ++c;
  }
  if (count) *count = c;
  return label;
}

struct LandmarkResult {
  LandmarkSet landmarks;
  ScoreField local_score;   // s^tau1
  ScoreField global_score;  // s^tau2
  std::vector<int> head_region;
  int clusters = 0;           // limb clusters found at the final threshold
  double cluster_thresh = 0;  // threshold actually used
};

/// Head from eigenfunction extrema inside the local-score head region; hands and feet as
/// the points farthest from the head in the four largest low global-score clusters; the
/// two limb tips closest to the head are hands.
inline LandmarkResult extract_landmarks(const Surface& surface, const SpectralBasis& basis, const LandmarkConfig& cfg = {}) {
  const Index n = basis.num_vertices();
  require(n >= 5, "extract_landmarks: need at least 5 vertices");
  require(basis.size() >= cfg.head_eigenfunctions + 1, "extract_landmarks: basis needs at least ",
          cfg.head_eigenfunctions + 1, " eigenpairs");
  require(positions(surface).rows() == n, "extract_landmarks: surface and basis sizes differ");
  LandmarkResult res;
  const auto graph = neighbor_graph(surface, cfg.cloud_neighbors);
  res.local_score = dep_score(PairwisePotential(basis, cfg.tau1), basis.mass, cfg.T);
  res.global_score = dep_score(PairwisePotential(basis, cfg.tau2), basis.mass, cfg.T);

  // Head region: largest-area connected component of the top quantile of s^tau1.
  const VecX& s1 = res.local_score.s;
  std::vector<double> sorted(s1.data(), s1.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double cut = sorted[static_cast<std::size_t>(std::floor(cfg.head_quantile * (n - 1)))];
  std::vector<char> top(n);
  for (Index i = 0; i < n; ++i) top[i] = s1[i] >= cut;
  int regions = 0;
  const std::vector<int> label = label_regions(graph, top, &regions);
  std::vector<double> area(regions, 0.0);
  for (Index i = 0; i < n; ++i)
    if (label[i] >= 0) area[label[i]] += basis.mass[i];
  const int best_region = static_cast<int>(std::max_element(area.begin(), area.end()) - area.begin());
  for (Index i = 0; i < n; ++i)
    if (label[i] == best_region) res.head_region.push_back(static_cast<int>(i));

  double best = -1;
  for (int i : res.head_region) {
    const double v = basis.phi.row(i).segment(1, cfg.head_eigenfunctions).cwiseAbs().maxCoeff();
    if (v > best) {
      best = v;
      res.landmarks.head = i;
    }
  }

  // Limb clusters, relaxing the threshold until four clusters apart from the head's appear.
  const VecX& s2 = res.global_score.s;
  std::vector<int> cl, order;
  for (double thresh = cfg.cluster_thresh;; thresh -= cfg.relax_step) {
    std::vector<char> low(n);
    for (Index i = 0; i < n; ++i) low[i] = s2[i] < thresh;
    int clusters = 0;
    cl = label_regions(graph, low, &clusters);
    std::vector<double> carea(clusters, 0.0);
    for (Index i = 0; i < n; ++i)
      if (cl[i] >= 0) carea[cl[i]] += basis.mass[i];
    const int head_cluster = cl[res.landmarks.head];
    order.clear();
    for (int c = 0; c < clusters; ++c)
      if (c != head_cluster) order.push_back(c);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return carea[a] > carea[b]; });
    res.clusters = static_cast<int>(order.size());
    res.cluster_thresh = thresh;
    if (order.size() >= 4) break;
    if (cfg.relax_step <= 0 || thresh - cfg.relax_step < cfg.min_cluster_thresh - 1e-12)
      fail(ErrorKind::kEmptyResult, "found ", order.size(), " limb clusters with score below ", thresh, ", need 4");
  }
  order.resize(4);

  const VecX dh = biharmonic_distance(basis, {res.landmarks.head}).row(0).transpose();
  std::array<int, 4> tips{-1, -1, -1, -1};
  for (int k = 0; k < 4; ++k) {
    double far = -1;
    for (Index i = 0; i < n; ++i)
      if (cl[i] == order[k] && dh[i] > far) {
        far = dh[i];
        tips[k] = static_cast<int>(i);
      }
  }
  std::sort(tips.begin(), tips.end(), [&](int a, int b) { return dh[a] < dh[b] || (dh[a] == dh[b] && a < b); });
  res.landmarks.hands = {tips[0], tips[1]};
  res.landmarks.feet = {tips[2], tips[3]};
  return res;
}

}  // namespace fmreg
