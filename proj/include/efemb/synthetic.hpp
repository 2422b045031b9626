#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "efemb/context.hpp"
#include "efemb/model.hpp"

namespace efemb {

/// Gaussian embedding model planted on a clustered 3-D layout. Entities sit
/// in tight, well separated clusters of neighbors + 1, so every k-NN set is
/// the rest of the entity's cluster and the neighbor relation is symmetric.
/// The columns are draws of a Gaussian Markov random field whose full
/// conditionals are exactly the planted model: x_n | rest ~ N(rho_n^T
/// sum_{m in KNN(n)} alpha_m x_m, noise_sd^2).
struct GaussianPlantedSpec {
    std::size_t n_rows = 30;
    std::size_t n_cols = 500;
    std::size_t k = 2;
    std::size_t neighbors = 5;
    double noise_sd = 0.1;
    // Target mean marginal variance, in units of noise_sd^2; sets the coupling strength.
    double variance_ratio = 3.5;
    std::uint64_t seed = 1;
};

struct PlantedGaussian {
    DataMatrix data;
    SpatialLayout layout;
    EmbeddingBank truth;
    double noise_variance = 0.0;
};

PlantedGaussian generate_gaussian(const GaussianPlantedSpec& spec);

/// Baskets from a Poisson embedding model with a context-mean link. Items
/// fall into groups; rho_n is the indicator of n's group and alpha_m scores
/// `within` against its own group and `across` against the others. Each
/// basket starts from one seed item and is refined by Gibbs sweeps over all
/// items. With zero_inflation > 0, each sampled nonzero entry other than the
/// seed is erased with that probability afterwards.
struct BasketSpec {
    std::size_t groups = 5;
    std::size_t items_per_group = 10;
    std::size_t baskets = 2000;
    double within = -0.3;
    double across = -3.0;
    std::size_t sweeps = 3;
    double zero_inflation = 0.0;
    std::uint64_t seed = 1;
};

struct PlantedBaskets {
    DataMatrix data;  // items x baskets, implicit zero
    EmbeddingBank truth;
    std::vector<std::uint32_t> item_group;
};

PlantedBaskets generate_baskets(const BasketSpec& spec);

/// Corpus of sentences, each drawn uniformly from a single word cluster.
struct CorpusSpec {
    std::size_t clusters = 2;
    std::size_t words_per_cluster = 10;
    std::size_t sentences = 300;
    std::size_t sentence_length = 10;
    std::uint64_t seed = 1;
};

struct PlantedCorpus {
    DataMatrix corpus;  // positions x vocabulary, one-hot
    std::vector<std::size_t> sentence_lengths;
    std::vector<std::uint32_t> word_cluster;
};

PlantedCorpus generate_corpus(const CorpusSpec& spec);

}  // namespace efemb
