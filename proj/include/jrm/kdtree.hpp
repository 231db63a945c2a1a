#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "jrm/common.hpp"

namespace jrm {

struct Neighbor {
  std::size_t index = 0;
  double dist2 = std::numeric_limits<double>::infinity();
};

// Lexicographic (distance, index) order. Nearest-neighbour ties resolve to the
// lowest index, which makes the tree agree exactly with a linear scan.
inline bool closer(double d2, std::size_t i, const Neighbor& best) {
  return d2 < best.dist2 || (d2 == best.dist2 && i < best.index);
}

/// Static 3D kd-tree over a borrowed point array.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 8)
      : points_(points), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points.empty()) {
      nodes_.reserve(2 * points.size() / leaf_size_ + 2);
      build(0, points.size());
    }
  }

  [[nodiscard]] std::size_t size() const { return points_.size(); }

  [[nodiscard]] Neighbor nearest(const Vec3& q) const {
    Neighbor best;
    if (!nodes_.empty()) search(0, q, best);
    return best;
  }

 private:
  struct Node {
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({static_cast<std::uint32_t>(begin),
                      static_cast<std::uint32_t>(end)});
    if (end - begin <= leaf_size_) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    const double split = points_[order_[mid]][axis];
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::int32_t id, const Vec3& q, Neighbor& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (closer(d2, idx, best)) best = {idx, d2};
      }
      return;
    }
    // Left holds coordinates <= split, right holds >= split.
    const double diff = q[node.axis] - node.split;
    const std::int32_t first = diff <= 0.0 ? node.left : node.right;
    const std::int32_t second = diff <= 0.0 ? node.right : node.left;
    search(first, q, best);
    if (diff * diff <= best.dist2) search(second, q, best);
  }

  std::span<const Vec3> points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace jrm
