#include "efemb/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "efemb/error.hpp"
#include "efemb/random.hpp"

namespace efemb {

namespace {

// Mean of diag(inverse(I - c W)); infinity when I - c W is not positive definite.
double mean_marginal(const Eigen::MatrixXd& W, double c) {
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(W.rows(), W.cols()) - c * W;
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(W.rows(), W.cols()));
    return inv.diagonal().mean();
}

}  // namespace

PlantedGaussian generate_gaussian(const GaussianPlantedSpec& spec) {
    const std::size_t N = spec.n_rows, K = spec.k, group = spec.neighbors + 1;
    if (N == 0 || spec.n_cols == 0 || K == 0) throw ConfigError("generator sizes must be positive");
    if (N % group != 0) {
        throw ConfigError("n_rows must be a multiple of neighbors + 1 (" + std::to_string(group) + ")");
    }
    if (!(spec.noise_sd > 0.0) || !(spec.variance_ratio > 1.0)) {
        throw ConfigError("noise_sd must be positive and variance_ratio above 1");
    }
    Rng rng(spec.seed);
    PlantedGaussian out;
    out.noise_variance = spec.noise_sd * spec.noise_sd;

    // Clusters 20 apart along a line, members jittered within a unit cube.
    out.layout.k = spec.neighbors;
    out.layout.positions.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
        const double cx = 20.0 * static_cast<double>(n / group);
        out.layout.positions[n] = {cx + uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    }

    // alpha = S rho with S symmetric, so W_nm = rho_n^T S rho_m is symmetric.
    Eigen::MatrixXd rho(N, K);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t d = 0; d < K; ++d) rho(n, d) = normal(rng);
    }
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(K, K);
    for (std::size_t d = 0; d < K; ++d) S(d, d) = (d % 2 == 0 ? 1.0 : -1.0) * uniform(rng, 0.5, 1.0);
    const Eigen::MatrixXd alpha = rho * S;
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t m = 0; m < N; ++m) {
            if (n != m && n / group == m / group) W(n, m) = rho.row(n).dot(alpha.row(m));
        }
    }

    // Bisection on the coupling scale for the requested marginal variance.
    const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W).eigenvalues().maxCoeff();
    double lo = 0.0, hi = lmax > 0.0 ? 1.0 / lmax : 1.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_marginal(W, mid) < spec.variance_ratio ? lo : hi) = mid;
    }
    const double c = lo;
    const double root = std::sqrt(c);

    out.truth = EmbeddingBank(N, K, false);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t d = 0; d < K; ++d) {
            out.truth.rho_row(n)[d] = root * rho(n, d);
            out.truth.alpha_row(n)[d] = root * alpha(n, d);
        }
    }

    // x = sd * L^{-T} z has covariance sd^2 (L L^T)^{-1} = sd^2 (I - cW)^{-1}.
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(N, N) - c * W;
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) throw NumericError("planted precision matrix is not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    out.data = DataMatrix(N, spec.n_cols, false);
    Eigen::VectorXd z(N);
    for (std::size_t t = 0; t < spec.n_cols; ++t) {
        for (std::size_t n = 0; n < N; ++n) z(n) = normal(rng);
        const Eigen::VectorXd x = L.transpose().triangularView<Eigen::Upper>().solve(z) * spec.noise_sd;
        for (std::uint32_t n = 0; n < N; ++n) out.data.set({n, static_cast<std::uint32_t>(t)}, x(n));
    }
    return out;
}

PlantedBaskets generate_baskets(const BasketSpec& spec) {
    const std::size_t G = spec.groups, N = spec.groups * spec.items_per_group;
    if (G < 2 || spec.items_per_group < 2 || spec.baskets == 0) throw ConfigError("basket generator sizes too small");
    if (spec.zero_inflation < 0.0 || spec.zero_inflation >= 1.0) throw ConfigError("zero_inflation must be in [0, 1)");
    Rng rng(spec.seed);
    PlantedBaskets out;
    out.item_group.resize(N);
    out.truth = EmbeddingBank(N, G, false);
    for (std::size_t n = 0; n < N; ++n) {
        const std::size_t g = n / spec.items_per_group;
        out.item_group[n] = static_cast<std::uint32_t>(g);
        out.truth.rho_row(n)[g] = 1.0;
        for (std::size_t d = 0; d < G; ++d) out.truth.alpha_row(n)[d] = spec.across + (d == g ? spec.within - spec.across : 0.0);
    }
    // Inner products are two-valued; no need for the vectors themselves.
    auto score = [&](std::size_t n, std::size_t m) {
        return out.item_group[n] == out.item_group[m] ? spec.within : spec.across;
    };

    out.data = DataMatrix(N, spec.baskets, true);
    std::vector<std::uint64_t> x(N);
    std::vector<std::size_t> order(N);
    for (std::size_t b = 0; b < spec.baskets; ++b) {
        std::fill(x.begin(), x.end(), 0);
        const std::size_t seed_item = uniform_index(rng, N);
        x[seed_item] = 1;
        for (std::size_t sweep = 0; sweep < spec.sweeps; ++sweep) {
            for (std::size_t n = 0; n < N; ++n) order[n] = n;
            shuffle(order, rng);
            for (std::size_t n : order) {
                if (n == seed_item) continue;
                double s = 0.0;
                std::size_t members = 0;
                for (std::size_t m = 0; m < N; ++m) {
                    if (m == n || x[m] == 0) continue;
                    s += static_cast<double>(x[m]) * score(n, m);
                    ++members;
                }
                x[n] = poisson(rng, std::exp(s / static_cast<double>(members)));
            }
        }
        for (std::size_t n = 0; n < N; ++n) {
            if (x[n] == 0) continue;
            if (n != seed_item && spec.zero_inflation > 0.0 && uniform01(rng) < spec.zero_inflation) continue;
            out.data.set({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(b)}, static_cast<double>(x[n]));
        }
    }
    return out;
}

PlantedCorpus generate_corpus(const CorpusSpec& spec) {
    if (spec.clusters < 2 || spec.words_per_cluster < 1 || spec.sentences == 0 || spec.sentence_length < 2) {
        throw ConfigError("corpus generator sizes too small");
    }
    Rng rng(spec.seed);
    const std::size_t D = spec.clusters * spec.words_per_cluster;
    PlantedCorpus out;
    out.word_cluster.resize(D);
    for (std::size_t v = 0; v < D; ++v) out.word_cluster[v] = static_cast<std::uint32_t>(v / spec.words_per_cluster);
    out.corpus = DataMatrix(spec.sentences * spec.sentence_length, D, true);
    out.sentence_lengths.assign(spec.sentences, spec.sentence_length);
    std::uint32_t pos = 0;
    for (std::size_t s = 0; s < spec.sentences; ++s) {
        const std::size_t c = uniform_index(rng, spec.clusters);
        for (std::size_t j = 0; j < spec.sentence_length; ++j, ++pos) {
            const auto v = static_cast<std::uint32_t>(c * spec.words_per_cluster + uniform_index(rng, spec.words_per_cluster));
            out.corpus.set({pos, v}, 1.0);
        }
    }
    return out;
}

}  // namespace efemb
