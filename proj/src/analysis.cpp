#include "efemb/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "efemb/error.hpp"

namespace efemb {

namespace {

std::vector<double> row_of(const EmbeddingBank& bank, VectorSpace space, std::size_t r) {
    const auto src = space == VectorSpace::Embedding ? bank.rho_row(r) : bank.alpha_row(r);
    std::vector<double> v(src.begin(), src.end());
    for (double& x : v) x = bank.effective(x);
    return v;
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

std::vector<Scored> top_similar(const EmbeddingBank& bank, const SimilarityQuery& query) {
    const std::size_t N = bank.n_rows();
    if (query.entity >= N) throw IndexError("unknown entity " + std::to_string(query.entity));
    if (query.top_k >= N) throw ConfigError("top_k must be below the number of entities");
    const auto q = row_of(bank, query.space, query.entity);
    const double qn = norm(q);
    if (qn == 0.0) throw DomainError("query entity " + std::to_string(query.entity) + " has a zero vector");
    std::vector<Scored> all;
    all.reserve(N - 1);
    for (std::uint32_t m = 0; m < N; ++m) {
        if (m == query.entity) continue;
        const auto v = row_of(bank, query.space, m);
        const double vn = norm(v);
        double dot = 0.0;
        for (std::size_t d = 0; d < v.size(); ++d) dot += q[d] * v[d];
        all.push_back({m, vn == 0.0 ? 0.0 : dot / (qn * vn)});
    }
    auto better = [](const Scored& a, const Scored& b) { return a.score != b.score ? a.score > b.score : a.id < b.id; };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(query.top_k), all.end(), better);
    all.resize(query.top_k);
    return all;
}

double interaction(const EmbeddingBank& bank, std::uint32_t a, std::uint32_t b) {
    const auto r = bank.rho_row(a);
    const auto al = bank.alpha_row(b);
    double s = 0.0;
    for (std::size_t d = 0; d < bank.k(); ++d) s += bank.effective(r[d]) * bank.effective(al[d]);
    return s;
}

std::vector<PairScore> interaction_pairs(const EmbeddingBank& bank, PairDirection direction, std::size_t count) {
    const std::size_t N = bank.n_rows();
    const double sign = direction == PairDirection::Highest ? 1.0 : -1.0;
    // "before" orders pairs most extreme first; the heap top is the least extreme kept.
    auto before = [sign](const PairScore& x, const PairScore& y) {
        const double sx = sign * x.score, sy = sign * y.score;
        if (sx != sy) return sx > sy;
        return x.a != y.a ? x.a < y.a : x.b < y.b;
    };
    std::priority_queue<PairScore, std::vector<PairScore>, decltype(before)> heap(before);
    if (count == 0) return {};
    const auto rho = bank.effective_rho();
    const auto alpha = bank.effective_alpha();
    const std::size_t K = bank.k();
    for (std::uint32_t a = 0; a < N; ++a) {
        for (std::uint32_t b = 0; b < N; ++b) {
            if (a == b) continue;
            double s = 0.0;
            for (std::size_t d = 0; d < K; ++d) s += rho[a * K + d] * alpha[b * K + d];
            const PairScore ps{a, b, s};
            if (heap.size() < count) {
                heap.push(ps);
            } else if (before(ps, heap.top())) {
                heap.pop();
                heap.push(ps);
            }
        }
    }
    std::vector<PairScore> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<Scored> dimension_ranking(const EmbeddingBank& bank, std::size_t k, std::size_t top, RankMode mode,
                                      VectorSpace space) {
    if (k >= bank.k()) {
        throw ConfigError("dimension " + std::to_string(k) + " out of range for K = " + std::to_string(bank.k()));
    }
    std::vector<Scored> all;
    all.reserve(bank.n_rows());
    for (std::uint32_t n = 0; n < bank.n_rows(); ++n) {
        const auto row = space == VectorSpace::Embedding ? bank.rho_row(n) : bank.alpha_row(n);
        const double v = bank.effective(row[k]);
        all.push_back({n, v});
    }
    auto key = [mode](const Scored& s) { return mode == RankMode::Absolute ? std::abs(s.score) : s.score; };
    std::stable_sort(all.begin(), all.end(), [&](const Scored& a, const Scored& b) { return key(a) > key(b); });
    all.resize(std::min(top, all.size()));
    return all;
}

std::vector<Edge> neighbor_weight_graph(const EmbeddingBank& bank, const SpatialLayout& layout) {
    if (layout.positions.size() != bank.n_rows()) {
        throw DataError("layout has " + std::to_string(layout.positions.size()) + " positions, model has " +
                        std::to_string(bank.n_rows()) + " rows");
    }
    const auto nn = nearest_neighbors(layout);
    std::vector<Edge> edges;
    for (std::uint32_t n = 0; n < nn.size(); ++n) {
        for (std::uint32_t m : nn[n]) edges.push_back({n, m, interaction(bank, n, m)});
    }
    return edges;
}

}  // namespace efemb
