#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "efemb/model.hpp"

namespace efemb {

/// Immutable per-index context sets c_i, stored in compressed rows over the
/// flattened (row, col) grid of the owning DataMatrix.
class ContextMap {
public:
    class Builder;

    ContextMap() = default;

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return n_cols_; }
    const std::string& provenance() const { return provenance_; }

    std::span<const DataIndex> members(DataIndex i) const;
    std::size_t size(DataIndex i) const { return members(i).size(); }
    std::size_t total_members() const { return members_.size(); }

    /// Copy keeping only members for which keep(owner, member) holds.
    ContextMap filtered(const std::function<bool(DataIndex, DataIndex)>& keep) const;

    /// Owners of each index: reverse(j) lists every i with j in c_i.
    ContextMap reverse() const;

private:
    std::size_t flat(DataIndex i) const { return static_cast<std::size_t>(i.row) * n_cols_ + i.col; }

    std::size_t n_rows_ = 0;
    std::size_t n_cols_ = 0;
    std::string provenance_;
    std::vector<std::size_t> offsets_{0};
    std::vector<DataIndex> members_;
};

/// Fills a ContextMap one index at a time in row-major order.
class ContextMap::Builder {
public:
    Builder(std::size_t n_rows, std::size_t n_cols, std::string provenance);

    /// Members for the next index in row-major order. Rejects self-membership
    /// and out-of-range members.
    void push(std::span<const DataIndex> members);
    ContextMap finish();

private:
    ContextMap map_;
    std::size_t next_ = 0;
};

struct SpatialLayout {
    std::vector<std::array<double, 3>> positions;
    std::size_t k = 1;
};

struct WindowSpec {
    std::size_t w = 1;
};

/// k nearest entities to each entity by Euclidean distance, nearest first,
/// ties broken by lower entity id. Uses a k-d tree.
std::vector<std::vector<std::uint32_t>> nearest_neighbors(const SpatialLayout& layout);

/// c_(n,t) = {(m,t) : m in KNN(n)} for every index of an N x T grid.
ContextMap build_knn_context(const SpatialLayout& layout, const DataMatrix& data);

/// c_(n,t) = nonzero entries of column t other than (n,t).
ContextMap build_basket_context(const DataMatrix& data);

/// Symmetric window over a single sequence of `length` positions. The map is
/// keyed by (position, 0).
ContextMap build_window_context(std::size_t length, WindowSpec spec);

/// As above, over consecutive sentences; windows never cross a boundary.
ContextMap build_window_context(std::span<const std::size_t> sentence_lengths, WindowSpec spec);

/// Lifts a position window onto a one-hot corpus (positions x vocabulary):
/// c_(n,v) = {(j, word_j) : j in window(n)} for every term v.
ContextMap expand_text_context(const ContextMap& positions, const DataMatrix& corpus);

}  // namespace efemb
