#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "efemb/context.hpp"
#include "efemb/model.hpp"

namespace efemb {

enum class VectorSpace { Embedding, Context };

struct SimilarityQuery {
    std::uint32_t entity = 0;
    std::size_t top_k = 10;
    VectorSpace space = VectorSpace::Embedding;
};

struct Scored {
    std::uint32_t id;
    double score;
};

/// Cosine similarity of effective vectors, highest first, query excluded,
/// ties by lower id. Throws DomainError for a zero query vector and
/// ConfigError when top_k >= N.
std::vector<Scored> top_similar(const EmbeddingBank& bank, const SimilarityQuery& query);

/// rho_a^T alpha_b on effective vectors.
struct PairScore {
    std::uint32_t a;
    std::uint32_t b;
    double score;
};

enum class PairDirection { Highest, Lowest };

double interaction(const EmbeddingBank& bank, std::uint32_t a, std::uint32_t b);

/// The `count` most extreme ordered pairs a != b, most extreme first, ties by
/// (a, b). Keeps a bounded heap rather than sorting all N^2 pairs.
std::vector<PairScore> interaction_pairs(const EmbeddingBank& bank, PairDirection direction, std::size_t count);

enum class RankMode { Signed, Absolute };

/// Entities by their value in dimension k of the chosen vectors, highest
/// first, ties by id. Throws ConfigError when k >= K.
std::vector<Scored> dimension_ranking(const EmbeddingBank& bank, std::size_t k, std::size_t top,
                                      RankMode mode = RankMode::Signed, VectorSpace space = VectorSpace::Context);

struct Edge {
    std::uint32_t from;
    std::uint32_t to;
    double weight;  // rho_from^T alpha_to
};

/// One edge per (n, m) with m among the k nearest neighbors of n.
std::vector<Edge> neighbor_weight_graph(const EmbeddingBank& bank, const SpatialLayout& layout);

}  // namespace efemb
