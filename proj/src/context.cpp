#include "efemb/context.hpp"

#include <algorithm>
#include <string>

#include "efemb/error.hpp"
#include "efemb/spatial_index.hpp"

namespace efemb {

std::span<const DataIndex> ContextMap::members(DataIndex i) const {
    if (i.row >= n_rows_ || i.col >= n_cols_) throw IndexError("context lookup outside map");
    const std::size_t f = flat(i);
    return {members_.data() + offsets_[f], offsets_[f + 1] - offsets_[f]};
}

ContextMap ContextMap::filtered(const std::function<bool(DataIndex, DataIndex)>& keep) const {
    Builder b(n_rows_, n_cols_, provenance_ + "+filtered");
    std::vector<DataIndex> kept;
    for (std::uint32_t r = 0; r < n_rows_; ++r) {
        for (std::uint32_t c = 0; c < n_cols_; ++c) {
            kept.clear();
            DataIndex owner{r, c};
            for (DataIndex j : members(owner)) {
                if (keep(owner, j)) kept.push_back(j);
            }
            b.push(kept);
        }
    }
    return b.finish();
}

ContextMap ContextMap::reverse() const {
    std::vector<std::vector<DataIndex>> owners(n_rows_ * n_cols_);
    for (std::uint32_t r = 0; r < n_rows_; ++r) {
        for (std::uint32_t c = 0; c < n_cols_; ++c) {
            for (DataIndex j : members({r, c})) owners[flat(j)].push_back({r, c});
        }
    }
    ContextMap out;
    out.n_rows_ = n_rows_;
    out.n_cols_ = n_cols_;
    out.provenance_ = provenance_ + "+reverse";
    out.offsets_.assign(1, 0);
    out.offsets_.reserve(owners.size() + 1);
    out.members_.reserve(members_.size());
    for (const auto& o : owners) {
        out.members_.insert(out.members_.end(), o.begin(), o.end());
        out.offsets_.push_back(out.members_.size());
    }
    return out;
}

ContextMap::Builder::Builder(std::size_t n_rows, std::size_t n_cols, std::string provenance) {
    map_.n_rows_ = n_rows;
    map_.n_cols_ = n_cols;
    map_.provenance_ = std::move(provenance);
    map_.offsets_.reserve(n_rows * n_cols + 1);
}

void ContextMap::Builder::push(std::span<const DataIndex> members) {
    const std::size_t total = map_.n_rows_ * map_.n_cols_;
    if (next_ >= total) throw IndexError("context builder overflow");
    const DataIndex self{static_cast<std::uint32_t>(next_ / map_.n_cols_),
                         static_cast<std::uint32_t>(next_ % map_.n_cols_)};
    for (DataIndex j : members) {
        if (j == self) throw DataError("context of an index may not contain the index itself");
        if (j.row >= map_.n_rows_ || j.col >= map_.n_cols_) throw IndexError("context member outside grid");
    }
    map_.members_.insert(map_.members_.end(), members.begin(), members.end());
    map_.offsets_.push_back(map_.members_.size());
    ++next_;
}

ContextMap ContextMap::Builder::finish() {
    if (next_ != map_.n_rows_ * map_.n_cols_) throw DataError("context builder incomplete");
    return std::move(map_);
}

std::vector<std::vector<std::uint32_t>> nearest_neighbors(const SpatialLayout& layout) {
    const std::size_t n = layout.positions.size();
    if (layout.k >= n && n > 0) {
        throw ConfigError("k-NN needs k < number of entities (k=" + std::to_string(layout.k) +
                          ", N=" + std::to_string(n) + ")");
    }
    KdTree tree(layout.positions);
    std::vector<std::vector<std::uint32_t>> out(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(n); ++q) {
        auto hits = tree.query(layout.positions[q], layout.k, static_cast<std::uint32_t>(q));
        out[q].reserve(hits.size());
        for (const auto& h : hits) out[q].push_back(h.id);
    }
    return out;
}

ContextMap build_knn_context(const SpatialLayout& layout, const DataMatrix& data) {
    if (layout.positions.size() != data.n_rows()) {
        throw DataError("layout has " + std::to_string(layout.positions.size()) + " positions for " +
                        std::to_string(data.n_rows()) + " entities");
    }
    const auto knn = nearest_neighbors(layout);
    ContextMap::Builder b(data.n_rows(), data.n_cols(), "knn:k=" + std::to_string(layout.k));
    std::vector<DataIndex> members;
    for (std::uint32_t n = 0; n < data.n_rows(); ++n) {
        for (std::uint32_t t = 0; t < data.n_cols(); ++t) {
            members.clear();
            for (std::uint32_t m : knn[n]) members.push_back({m, t});
            b.push(members);
        }
    }
    return b.finish();
}

ContextMap build_basket_context(const DataMatrix& data) {
    if (!data.implicit_zero()) throw DataError("basket context needs implicit-zero count data");
    // Row-major push order needs per-column nonzero lists up front.
    std::vector<std::vector<std::uint32_t>> baskets(data.n_cols());
    for (std::size_t t = 0; t < data.n_cols(); ++t) {
        for (const auto& e : data.column(t)) {
            if (e.value != 0.0) baskets[t].push_back(e.row);
        }
    }
    ContextMap::Builder b(data.n_rows(), data.n_cols(), "basket");
    std::vector<DataIndex> members;
    for (std::uint32_t n = 0; n < data.n_rows(); ++n) {
        for (std::uint32_t t = 0; t < data.n_cols(); ++t) {
            members.clear();
            for (std::uint32_t m : baskets[t]) {
                if (m != n) members.push_back({m, t});
            }
            b.push(members);
        }
    }
    return b.finish();
}

ContextMap build_window_context(std::size_t length, WindowSpec spec) {
    const std::size_t one[] = {length};
    return build_window_context(one, spec);
}

ContextMap build_window_context(std::span<const std::size_t> sentence_lengths, WindowSpec spec) {
    if (spec.w < 1) throw ConfigError("window half-size must be at least 1");
    std::size_t total = 0;
    for (std::size_t len : sentence_lengths) {
        if (len < 1) throw ConfigError("sentence length must be at least 1");
        total += len;
    }
    ContextMap::Builder b(total, 1, "window:w=" + std::to_string(spec.w));
    std::vector<DataIndex> members;
    std::size_t start = 0;
    for (std::size_t len : sentence_lengths) {
        for (std::size_t p = 0; p < len; ++p) {
            members.clear();
            const std::size_t lo = p >= spec.w ? p - spec.w : 0;
            const std::size_t hi = std::min(len - 1, p + spec.w);
            for (std::size_t j = lo; j <= hi; ++j) {
                if (j != p) members.push_back({static_cast<std::uint32_t>(start + j), 0});
            }
            b.push(members);
        }
        start += len;
    }
    return b.finish();
}

ContextMap expand_text_context(const ContextMap& positions, const DataMatrix& corpus) {
    if (positions.n_rows() != corpus.n_rows() || positions.n_cols() != 1) {
        throw DataError("position window does not match corpus length");
    }
    std::vector<std::int64_t> word(corpus.n_rows(), -1);
    corpus.for_each([&](DataIndex i, double v) {
        if (v == 0.0) return;
        if (word[i.row] >= 0) throw DataError("corpus position " + std::to_string(i.row) + " has two words");
        word[i.row] = i.col;
    });
    ContextMap::Builder b(corpus.n_rows(), corpus.n_cols(), positions.provenance() + "+text");
    std::vector<DataIndex> members;
    for (std::uint32_t n = 0; n < corpus.n_rows(); ++n) {
        members.clear();
        for (DataIndex j : positions.members({n, 0})) {
            if (word[j.row] >= 0) members.push_back({j.row, static_cast<std::uint32_t>(word[j.row])});
        }
        for (std::uint32_t v = 0; v < corpus.n_cols(); ++v) b.push(members);
    }
    return b.finish();
}

}  // namespace efemb
