#include "efemb/spatial_index.hpp"

#include <algorithm>
#include <numeric>

namespace efemb {

KdTree::KdTree(std::vector<std::array<double, 3>> points) : points_(std::move(points)) {
    std::vector<std::uint32_t> ids(points_.size());
    std::iota(ids.begin(), ids.end(), 0u);
    nodes_.reserve(points_.size());
    root_ = build(ids, 0, ids.size(), 0);
}

std::int32_t KdTree::build(std::vector<std::uint32_t>& ids, std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    // Split on the axis of largest spread; cycling axes degrades on flat layouts.
    std::array<double, 3> mn{points_[ids[lo]]}, mx{points_[ids[lo]]};
    for (std::size_t i = lo; i < hi; ++i) {
        for (int a = 0; a < 3; ++a) {
            mn[a] = std::min(mn[a], points_[ids[i]][a]);
            mx[a] = std::max(mx[a], points_[ids[i]][a]);
        }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
        if (mx[a] - mn[a] > mx[axis] - mn[axis]) axis = a;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(ids.begin() + lo, ids.begin() + mid, ids.begin() + hi,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    const auto idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{ids[mid], -1, -1, static_cast<std::uint8_t>(axis)});
    const std::int32_t left = build(ids, lo, mid, depth + 1);
    const std::int32_t right = build(ids, mid + 1, hi, depth + 1);
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
}

std::vector<KdTree::Hit> KdTree::query(const std::array<double, 3>& q, std::size_t k, std::uint32_t exclude) const {
    std::vector<Hit> heap;
    heap.reserve(k + 1);
    if (k > 0) search(root_, q, k, exclude, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
}

void KdTree::search(std::int32_t node, const std::array<double, 3>& q, std::size_t k, std::uint32_t exclude,
                    std::vector<Hit>& heap) const {
    if (node < 0) return;
    const Node& nd = nodes_[node];
    const auto& p = points_[nd.point];
    if (nd.point != exclude) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) d2 += (p[a] - q[a]) * (p[a] - q[a]);
        Hit h{d2, nd.point};
        if (heap.size() < k) {
            heap.push_back(h);
            std::push_heap(heap.begin(), heap.end());
        } else if (h < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = h;
            std::push_heap(heap.begin(), heap.end());
        }
    }
    const double diff = q[nd.axis] - p[nd.axis];
    const std::int32_t near = diff < 0 ? nd.left : nd.right;
    const std::int32_t far = diff < 0 ? nd.right : nd.left;
    search(near, q, k, exclude, heap);
    // Equal plane distance can still hold a lower-id tie, so only prune on strict >.
    if (heap.size() < k || diff * diff <= heap.front().dist2) search(far, q, k, exclude, heap);
}

}  // namespace efemb
