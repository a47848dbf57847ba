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

#include "fmreg/common.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace fmreg {

/// Static 3D kd-tree. Queries return exact results; equal distances resolve to the
/// smaller point index.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(const Points& pts) : pts_(pts) {
    idx_.resize(pts.rows());
    std::iota(idx_.begin(), idx_.end(), 0);
    nodes_.reserve(2 * idx_.size() / kLeaf + 2);
    if (!idx_.empty()) build(0, static_cast<int>(idx_.size()));
  }

  Index size() const { return pts_.rows(); }

  /// Index of the nearest point, optionally restricted by `accept(index)`.
  template <typename Pred>
  int nearest(const Vec3& q, Pred accept, double* dist2 = nullptr) const {
    Best best{-1, std::numeric_limits<double>::infinity()};
    if (!nodes_.empty()) search(0, q, best, accept);
    if (dist2) *dist2 = best.d2;
    return best.index;
  }

  int nearest(const Vec3& q, double* dist2 = nullptr) const {
    return nearest(q, [](int) { return true; }, dist2);
  }

  /// All points within `radius` of q, unsorted.
  std::vector<int> within(const Vec3& q, double radius) const {
    std::vector<int> out;
    if (!nodes_.empty()) radius_search(0, q, radius * radius, out);
    return out;
  }

  /// k nearest, sorted by (distance, index).
  std::vector<int> knn(const Vec3& q, int k) const {
    using Item = std::pair<double, int>;
    std::priority_queue<Item> heap;  // max-heap on (d2, index)
    if (!nodes_.empty()) knn_search(0, q, k, heap);
    std::vector<int> out(heap.size());
    for (int i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
      out[i] = heap.top().second;
      heap.pop();
    }
    return out;
  }

 private:
  static constexpr int kLeaf = 8;

  struct Node {
    int begin, end;
    int axis = -1;
    double split = 0;
    int left = -1, right = -1;
    Vec3 lo, hi;
  };

  struct Best {
    int index;
    double d2;
  };

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int i = begin; i < end; ++i) {
      lo = lo.cwiseMin(row3(pts_, idx_[i]));
      hi = hi.cwiseMax(row3(pts_, idx_[i]));
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= kLeaf) return id;
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                     [&](int a, int b) { return pts_(a, axis) < pts_(b, axis) || (pts_(a, axis) == pts_(b, axis) && a < b); });
    nodes_[id].axis = axis;
    nodes_[id].split = pts_(idx_[mid], axis);
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  double box_dist2(const Node& n, const Vec3& q) const {
    const Vec3 d = (n.lo - q).cwiseMax(Vec3::Zero()).cwiseMax(q - n.hi);
    return d.squaredNorm();
  }

  template <typename Pred>
  void search(int id, const Vec3& q, Best& best, Pred& accept) const {
    const Node& n = nodes_[id];
    if (box_dist2(n, q) > best.d2) return;
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int p = idx_[i];
        if (!accept(p)) continue;
        const double d2 = (row3(pts_, p) - q).squaredNorm();
        if (d2 < best.d2 || (d2 == best.d2 && p < best.index)) best = {p, d2};
      }
      return;
    }
    const bool go_left = q[n.axis] < n.split;
    search(go_left ? n.left : n.right, q, best, accept);
    search(go_left ? n.right : n.left, q, best, accept);
  }

  void radius_search(int id, const Vec3& q, double r2, std::vector<int>& out) const {
    const Node& n = nodes_[id];
    if (box_dist2(n, q) > r2) return;
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i)
        if ((row3(pts_, idx_[i]) - q).squaredNorm() <= r2) out.push_back(idx_[i]);
      return;
    }
    radius_search(n.left, q, r2, out);
    radius_search(n.right, q, r2, out);
  }

  void knn_search(int id, const Vec3& q, int k, std::priority_queue<std::pair<double, int>>& heap) const {
    const Node& n = nodes_[id];
    if (static_cast<int>(heap.size()) == k && box_dist2(n, q) > heap.top().first) return;
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int p = idx_[i];
        const std::pair<double, int> item{(row3(pts_, p) - q).squaredNorm(), p};
        if (static_cast<int>(heap.size()) < k) heap.push(item);
        else if (item < heap.top()) {
          heap.pop();
          heap.push(item);
        }
      }
      return;
    }
    const bool go_left = q[n.axis] < n.split;
    knn_search(go_left ? n.left : n.right, q, k, heap);
    knn_search(go_left ? n.right : n.left, q, k, heap);
  }

  Points pts_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
};

/// Exhaustive nearest row of `target` for every row of `query` (Euclidean, any dimension).
/// Ties resolve to the smallest target index.
inline std::vector<int> nearest_rows(const MatX& query, const MatX& target, VecX* dist2 = nullptr) {
  require(query.cols() == target.cols(), "nearest_rows: dimension mismatch");
  std::vector<int> out(query.rows(), -1);
  if (dist2) dist2->resize(query.rows());
  // Row-major copies keep the inner loop contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Q = query, T = target;
  const Index d = Q.cols();
  for (Index i = 0; i < Q.rows(); ++i) {
    const double* q = Q.data() + i * d;
    double best = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (Index j = 0; j < T.rows(); ++j) {
      const double* t = T.data() + j * d;
      double s = 0.0;
      for (Index c = 0; c < d && s < best; ++c) {
        const double diff = q[c] - t[c];
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        arg = static_cast<int>(j);
      }
    }
    out[i] = arg;
    if (dist2) (*dist2)[i] = best;
  }
  return out;
}

}  // namespace fmreg
