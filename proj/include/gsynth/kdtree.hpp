#pragma once

#include <gsynth/types.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace gsynth::detail {

/// Static 3-d tree over a point set, used for k-nearest-neighbour queries.
/// Nodes are stored implicitly: the subtree [lo, hi) is split at its midpoint.
class KdTree {
public:
  explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    axis_.assign(points_.size(), 0);
    build(0, order_.size());
  }

  /// Euclidean distances to the k nearest points other than `self`, ascending.
  /// Ties between equidistant points do not affect the returned distances.
  std::vector<double> knn_distances(std::size_t self, std::size_t k) const {
    Heap heap;
    search(0, order_.size(), points_[self], self, k, heap);
    std::vector<double> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(std::sqrt(heap.top()));
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

private:
  using Heap = std::priority_queue<double>;

  void build(std::size_t lo, std::size_t hi) {
    if (hi - lo <= 1) {
      return;
    }
    Vec3 mn = points_[order_[lo]];
    Vec3 mx = mn;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      mn = mn.cwiseMin(points_[order_[i]]);
      mx = mx.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::uint32_t a, std::uint32_t b) {
                       const double pa = points_[a][axis];
                       const double pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    axis_[mid] = static_cast<std::uint8_t>(axis);
    build(lo, mid);
    build(mid + 1, hi);
  }

  void search(std::size_t lo, std::size_t hi, const Vec3& q, std::size_t self, std::size_t k, Heap& heap) const {
    if (lo >= hi) {
      return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    const std::uint32_t idx = order_[mid];
    if (idx != self) {
      const double d2 = (points_[idx] - q).squaredNorm();
      if (heap.size() < k) {
        heap.push(d2);
      } else if (d2 < heap.top()) {
        heap.pop();
        heap.push(d2);
      }
    }
    if (hi - lo == 1) {
      return;
    }
    const int axis = axis_[mid];
    const double diff = q[axis] - points_[idx][axis];
    const bool left_first = diff <= 0.0;
    if (left_first) {
      search(lo, mid, q, self, k, heap);
    } else {
      search(mid + 1, hi, q, self, k, heap);
    }
    if (heap.size() < k || diff * diff <= heap.top()) {
      if (left_first) {
        search(mid + 1, hi, q, self, k, heap);
      } else {
        search(lo, mid, q, self, k, heap);
      }
    }
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<std::uint8_t> axis_;
};

} // namespace gsynth::detail
