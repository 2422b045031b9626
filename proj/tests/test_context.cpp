#include <doctest.h>

#include <algorithm>
#include <set>

#include "efemb/context.hpp"
#include "efemb/error.hpp"
#include "efemb/spatial_index.hpp"
#include "support.hpp"

using namespace efemb;
using namespace efemb::testing;

namespace {

std::vector<std::uint32_t> rows_of(std::span<const DataIndex> m) {
    std::vector<std::uint32_t> r;
    for (auto j : m) r.push_back(j.row);
    return r;
}

SpatialLayout line(std::initializer_list<double> xs, std::size_t k) {
    SpatialLayout l;
    l.k = k;
    for (double x : xs) l.positions.push_back({x, 0.0, 0.0});
    return l;
}

// All-pairs oracle with the same tie rule: (distance, id).
std::vector<std::uint32_t> brute_knn(const SpatialLayout& l, std::uint32_t n) {
    std::vector<std::pair<double, std::uint32_t>> d;
    for (std::uint32_t m = 0; m < l.positions.size(); ++m) {
        if (m == n) continue;
        double s = 0.0;
        for (int a = 0; a < 3; ++a) s += (l.positions[n][a] - l.positions[m][a]) * (l.positions[n][a] - l.positions[m][a]);
        d.push_back({s, m});
    }
    std::sort(d.begin(), d.end());
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < l.k; ++i) out.push_back(d[i].second);
    return out;
}

void check_invariants(const ContextMap& ctx) {
    for (std::uint32_t n = 0; n < ctx.n_rows(); ++n) {
        for (std::uint32_t t = 0; t < ctx.n_cols(); ++t) {
            for (DataIndex j : ctx.members({n, t})) {
                CHECK(j != DataIndex{n, t});
                CHECK(j.row < ctx.n_rows());
                CHECK(j.col < ctx.n_cols());
            }
        }
    }
}

}  // namespace

TEST_CASE("k nearest neighbors on a line") {
    const auto nn = nearest_neighbors(line({0, 1, 3}, 1));
    CHECK(nn[0] == std::vector<std::uint32_t>{1});
    CHECK(nn[1] == std::vector<std::uint32_t>{0});
    CHECK(nn[2] == std::vector<std::uint32_t>{1});
}

TEST_CASE("equal distances resolve to the lower id") {
    const auto nn = nearest_neighbors(line({0, -1, 1, 2}, 2));
    CHECK(nn[0] == std::vector<std::uint32_t>{1, 2});
    CHECK(nn[2] == std::vector<std::uint32_t>{0, 3});
    // Duplicate coordinates.
    const auto dup = nearest_neighbors(line({5, 5, 5, 5}, 2));
    CHECK(dup[2] == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("k-d tree agrees with brute force") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        SpatialLayout l = random_layout(rng, 100, 10);
        // Snap some points to a grid to force distance ties.
        for (std::size_t i = 0; i < 30; ++i) {
            for (auto& c : l.positions[i]) c = std::round(c * 4.0) / 4.0;
        }
        const auto nn = nearest_neighbors(l);
        for (std::uint32_t n = 0; n < 100; ++n) CHECK(nn[n] == brute_knn(l, n));
    }
}

TEST_CASE("k-d tree query excludes the requested point") {
    KdTree tree({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
    const auto hits = tree.query({0, 0, 0}, 2, 0);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].id == 1);
    CHECK(hits[0].dist2 == 1.0);
    CHECK(hits[1].id == 2);
}

TEST_CASE("knn contexts pair neighbors with the same column") {
    DataMatrix d(4, 3, false);
    const ContextMap ctx = build_knn_context(line({0, 1, 2, 10}, 3), d);
    check_invariants(ctx);
    for (std::uint32_t n = 0; n < 4; ++n) {
        std::vector<std::uint32_t> others;
        for (std::uint32_t m = 0; m < 4; ++m) if (m != n) others.push_back(m);
        for (std::uint32_t t = 0; t < 3; ++t) {
            auto r = rows_of(ctx.members({n, t}));
            std::sort(r.begin(), r.end());
            CHECK(r == others);  // k = N - 1
            for (DataIndex j : ctx.members({n, t})) CHECK(j.col == t);
            CHECK(rows_of(ctx.members({n, t})) == rows_of(ctx.members({n, 0})));
        }
    }
    CHECK_THROWS_AS(build_knn_context(line({0, 1}, 2), DataMatrix(2, 1, false)), ConfigError);
    CHECK_THROWS_AS(build_knn_context(line({0, 1, 2}, 1), DataMatrix(4, 1, false)), DataError);
}

TEST_CASE("basket contexts are the other items of the basket") {
    DataMatrix d(10, 2, true);
    for (std::uint32_t r : {2u, 5u, 9u}) d.set({r, 0}, 1.0);
    d.set({4, 1}, 3.0);
    const ContextMap ctx = build_basket_context(d);
    check_invariants(ctx);
    CHECK(rows_of(ctx.members({2, 0})) == std::vector<std::uint32_t>{5, 9});
    CHECK(ctx.members({4, 1}).empty());
    // Zero entries see the whole basket.
    CHECK(rows_of(ctx.members({0, 0})) == std::vector<std::uint32_t>{2, 5, 9});
}

TEST_CASE("basket contexts are symmetric on nonzero pairs") {
    Rng rng(6);
    DataMatrix d(12, 8, true);
    for (std::uint32_t t = 0; t < 8; ++t) {
        for (std::uint32_t n = 0; n < 12; ++n) {
            if (uniform01(rng) < 0.4) d.set({n, t}, 1.0);
        }
    }
    const ContextMap ctx = build_basket_context(d);
    d.for_each([&](DataIndex i, double) {
        for (DataIndex j : ctx.members(i)) {
            const auto back = ctx.members(j);
            CHECK(std::find(back.begin(), back.end(), i) != back.end());
        }
    });
}

TEST_CASE("window contexts") {
    const ContextMap w1 = build_window_context(5, WindowSpec{1});
    CHECK(rows_of(w1.members({2, 0})) == std::vector<std::uint32_t>{1, 3});
    const ContextMap w2 = build_window_context(5, WindowSpec{2});
    CHECK(rows_of(w2.members({0, 0})) == std::vector<std::uint32_t>{1, 2});
    const ContextMap w5 = build_window_context(3, WindowSpec{5});
    CHECK(rows_of(w5.members({1, 0})) == std::vector<std::uint32_t>{0, 2});
    CHECK_THROWS_AS(build_window_context(3, WindowSpec{0}), ConfigError);
}

TEST_CASE("window sizes stay within their bounds") {
    for (std::size_t len = 1; len <= 9; ++len) {
        for (std::size_t w = 1; w <= 4; ++w) {
            const ContextMap c = build_window_context(len, WindowSpec{w});
            check_invariants(c);
            for (std::uint32_t i = 0; i < len; ++i) {
                const std::size_t s = c.size({i, 0});
                CHECK(s <= std::min(2 * w, len - 1));
                CHECK(s >= std::min(w, len - 1));
            }
        }
    }
}

TEST_CASE("windows stop at sentence boundaries") {
    const std::size_t lengths[] = {3, 2};
    const ContextMap c = build_window_context(lengths, WindowSpec{2});
    CHECK(rows_of(c.members({2, 0})) == std::vector<std::uint32_t>{0, 1});
    CHECK(rows_of(c.members({3, 0})) == std::vector<std::uint32_t>{4});
}

TEST_CASE("text expansion attaches each context position's word") {
    DataMatrix corpus(4, 3, true);
    const std::uint32_t words[] = {2, 0, 2, 1};
    for (std::uint32_t p = 0; p < 4; ++p) corpus.set({p, words[p]}, 1.0);
    const ContextMap c = expand_text_context(build_window_context(4, WindowSpec{1}), corpus);
    check_invariants(c);
    for (std::uint32_t v = 0; v < 3; ++v) {
        const auto m = c.members({1, v});
        REQUIRE(m.size() == 2);
        CHECK(m[0] == DataIndex{0, 2});
        CHECK(m[1] == DataIndex{2, 2});
    }
    DataMatrix bad(2, 2, true);
    bad.set({0, 0}, 1.0);
    bad.set({0, 1}, 1.0);
    CHECK_THROWS_AS(expand_text_context(build_window_context(2, WindowSpec{1}), bad), DataError);
}

TEST_CASE("builder rejects self membership and bad indices") {
    ContextMap::Builder b(2, 1, "bad");
    const DataIndex self[] = {{0, 0}};
    CHECK_THROWS(b.push(self));
    ContextMap::Builder b2(2, 1, "bad");
    const DataIndex out[] = {{5, 0}};
    CHECK_THROWS(b2.push(out));
}

TEST_CASE("filtered and reverse maps") {
    const ContextMap w = build_window_context(4, WindowSpec{1});
    const ContextMap even = w.filtered([](DataIndex, DataIndex m) { return m.row % 2 == 0; });
    CHECK(rows_of(even.members({1, 0})) == std::vector<std::uint32_t>{0, 2});
    CHECK(rows_of(even.members({2, 0})).empty());
    const ContextMap r = even.reverse();
    auto owners = rows_of(r.members({2, 0}));
    std::sort(owners.begin(), owners.end());
    CHECK(owners == std::vector<std::uint32_t>{1, 3});
}
