#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace efemb {

/// Static 3-D k-d tree for exact k-nearest-neighbor queries.
///
/// Results are ordered by (squared distance, id); equal distances resolve to
/// the lower id, so the answer is identical to a brute-force sort.
class KdTree {
public:
    struct Hit {
        double dist2;
        std::uint32_t id;
        friend bool operator<(const Hit& a, const Hit& b) {
            return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.id < b.id);
        }
    };

    explicit KdTree(std::vector<std::array<double, 3>> points);

    /// The k nearest points to `q`, excluding the point with id `exclude`.
    std::vector<Hit> query(const std::array<double, 3>& q, std::size_t k, std::uint32_t exclude) const;

private:
    struct Node {
        std::uint32_t point;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::uint8_t axis = 0;
    };

    std::int32_t build(std::vector<std::uint32_t>& ids, std::size_t lo, std::size_t hi, int depth);
    void search(std::int32_t node, const std::array<double, 3>& q, std::size_t k, std::uint32_t exclude,
                std::vector<Hit>& heap) const;

    std::vector<std::array<double, 3>> points_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

}  // namespace efemb
