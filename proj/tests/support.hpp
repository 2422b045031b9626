// Shared fixtures for the test suites: small random instances of every
// family, an objective written directly from the model definition, and
// central finite differences over it.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "efemb/context.hpp"
#include "efemb/families.hpp"
#include "efemb/kernels.hpp"
#include "efemb/model.hpp"
#include "efemb/random.hpp"
#include "efemb/trainer.hpp"

namespace efemb::testing {

struct Instance {
    std::string name;
    DataMatrix data;
    ContextMap ctx;
    EmbeddingBank bank;
    FamilySpec family;
    SharingScheme sharing = SharingScheme::PerRow;
    double lambda = 0.0;
};

inline SpatialLayout random_layout(Rng& rng, std::size_t n, std::size_t k) {
    SpatialLayout l;
    l.k = k;
    for (std::size_t i = 0; i < n; ++i) l.positions.push_back({uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)});
    return l;
}

inline EmbeddingBank random_bank(Rng& rng, std::size_t rows, std::size_t k, bool log_space, double scale) {
    EmbeddingBank b(rows, k, log_space);
    for (double& v : b.rho()) v = uniform(rng, -scale, scale);
    for (double& v : b.alpha()) v = uniform(rng, -scale, scale);
    return b;
}

/// One-hot corpus of `positions` words over a vocabulary of `vocab`.
inline DataMatrix random_corpus(Rng& rng, std::size_t positions, std::size_t vocab) {
    DataMatrix d(positions, vocab, true);
    for (std::uint32_t n = 0; n < positions; ++n) d.set({n, static_cast<std::uint32_t>(uniform_index(rng, vocab))}, 1.0);
    return d;
}

/// Random instance of `family` on an N x T grid with K latent dimensions.
/// Text families use T positions over a vocabulary of N terms, window 2.
inline Instance make_instance(Family family, std::uint64_t seed, std::size_t N, std::size_t T, std::size_t K,
                              double lambda, bool context_mean = false) {
    Rng rng(seed);
    Instance in;
    in.family.family = family;
    in.family.link = default_link(family);
    in.lambda = lambda;
    in.name = std::string(to_string(family)) + (context_mean ? "/mean" : "") + " seed " + std::to_string(seed) +
              " lambda " + std::to_string(lambda);
    switch (family) {
    case Family::Gaussian:
    case Family::NonnegGaussian: {
        in.family.sigma2 = uniform(rng, 0.5, 2.0);
        if (context_mean) in.family.link = LinkSpec::ContextMeanIdentity;
        // Dense with a few missing cells.
        in.data = DataMatrix(N, T, false);
        for (std::uint32_t t = 0; t < T; ++t) {
            for (std::uint32_t n = 0; n < N; ++n) {
                if (uniform01(rng) < 0.15) continue;
                const double v = family == Family::Gaussian ? normal(rng) : uniform(rng, 0.0, 2.0);
                in.data.set({n, t}, v);
            }
        }
        in.ctx = build_knn_context(random_layout(rng, N, 2), in.data);
        const bool log_space = family == Family::NonnegGaussian;
        in.bank = random_bank(rng, N, K, log_space, log_space ? 0.5 : 0.7);
        break;
    }
    case Family::Poisson:
    case Family::AdditivePoisson: {
        if (context_mean) {
            in.family.link = family == Family::Poisson ? LinkSpec::ContextMeanIdentity : LinkSpec::ContextMeanLog;
        }
        in.data = DataMatrix(N, T, true);
        for (std::uint32_t t = 0; t < T; ++t) {
            for (std::uint32_t n = 0; n < N; ++n) {
                const auto c = poisson(rng, 1.2);
                if (c > 0) in.data.set({n, t}, static_cast<double>(c));
            }
        }
        in.ctx = build_basket_context(in.data);
        const bool log_space = family == Family::AdditivePoisson;
        in.bank = random_bank(rng, N, K, log_space, 0.5);
        break;
    }
    case Family::Bernoulli:
    case Family::Categorical: {
        in.sharing = SharingScheme::Global;
        in.data = random_corpus(rng, T, N);
        in.family.vocab_size = family == Family::Categorical ? N : 0;
        if (context_mean && family == Family::Bernoulli) in.family.link = LinkSpec::ContextMeanIdentity;
        in.ctx = expand_text_context(build_window_context(T, WindowSpec{2}), in.data);
        in.bank = random_bank(rng, N, K, false, 0.7);
        break;
    }
    }
    return in;
}

/// Objective written straight from the definition: natural_parameter and
/// log_likelihood per data point plus the Gaussian prior, no kernels.
inline double direct_objective(const Instance& in, const EmbeddingBank& bank) {
    const auto& d = in.data;
    double ll = 0.0;
    if (in.family.family == Family::Categorical) {
        const std::size_t V = d.n_cols();
        std::vector<double> eta(V);
        d.for_each([&](DataIndex i, double v) {
            if (v == 0.0) return;
            for (std::uint32_t w = 0; w < V; ++w) {
                eta[w] = natural_parameter({i.row, w}, d, in.ctx, bank, in.sharing, in.family.link);
            }
            ll += categorical_log_likelihood(eta, i.col);
        });
    } else {
        for (std::uint32_t n = 0; n < d.n_rows(); ++n) {
            for (std::uint32_t t = 0; t < d.n_cols(); ++t) {
                const auto x = d.value({n, t});
                if (!x) continue;
                if (is_context_mean(in.family.link) && in.ctx.members({n, t}).empty()) continue;
                bool any = false;
                for (DataIndex j : in.ctx.members({n, t})) any = any || d.value(j).has_value();
                if (is_context_mean(in.family.link) && !any) continue;
                double eta = natural_parameter({n, t}, d, in.ctx, bank, in.sharing, in.family.link);
                if (in.family.family == Family::AdditivePoisson && !(std::exp(eta) > kAdditiveRateFloor)) {
                    eta = std::log(kAdditiveRateFloor);
                }
                ll += log_likelihood(*x, eta, in.family);
            }
        }
    }
    double prior = 0.0;
    auto sq = [&](double v) {
        const double e = bank.log_space() ? std::exp(v) : v;
        return e * e;
    };
    for (double v : bank.rho()) prior += sq(v);
    if (in.sharing != SharingScheme::Tied) {
        for (double v : bank.alpha()) prior += sq(v);
    }
    return ll - 0.5 * in.lambda * prior;
}

/// Central differences of direct_objective in stored coordinates. Tied banks
/// perturb rho and alpha together, matching the combined Tied gradient.
inline GradientTables finite_difference(const Instance& in, double h = 1e-5) {
    GradientTables g(in.bank);
    EmbeddingBank b = in.bank;
    const bool tied = in.sharing == SharingScheme::Tied;
    auto probe = [&](std::vector<double>& table, std::vector<double>* twin, std::size_t i) {
        const double orig = table[i];
        table[i] = orig + h;
        if (twin) (*twin)[i] = table[i];
        const double up = direct_objective(in, b);
        table[i] = orig - h;
        if (twin) (*twin)[i] = table[i];
        const double down = direct_objective(in, b);
        table[i] = orig;
        if (twin) (*twin)[i] = orig;
        return (up - down) / (2.0 * h);
    };
    for (std::size_t i = 0; i < g.rho.size(); ++i) {
        g.rho[i] = probe(b.rho(), tied ? &b.alpha() : nullptr, i);
        g.alpha[i] = tied ? g.rho[i] : probe(b.alpha(), nullptr, i);
    }
    return g;
}

struct Comparison {
    double worst_rel = 0.0;  // max over coordinates of |a-b| / max(|a|,|b|), ignoring |a-b| <= abs_floor
    bool ok = true;
};

/// Coordinate-wise relative agreement. Pairs whose absolute difference is at
/// most `abs_floor` count as equal (finite-difference noise near zero).
inline Comparison compare(const GradientTables& a, const GradientTables& b, double rel_tol, double abs_floor = 1e-9) {
    Comparison c;
    auto one = [&](double x, double y) {
        const double diff = std::abs(x - y);
        if (diff <= abs_floor) return;
        const double rel = diff / std::max(std::abs(x), std::abs(y));
        c.worst_rel = std::max(c.worst_rel, rel);
        if (rel > rel_tol) c.ok = false;
    };
    for (std::size_t i = 0; i < a.rho.size(); ++i) one(a.rho[i], b.rho[i]);
    for (std::size_t i = 0; i < a.alpha.size(); ++i) one(a.alpha[i], b.alpha[i]);
    return c;
}

/// Per-family closed-form gradient.
inline GradientTables reference_gradient(const Instance& in) {
    switch (in.family.family) {
    case Family::Gaussian: return grad_gaussian(in.data, in.ctx, in.bank, in.family, in.lambda);
    case Family::NonnegGaussian: return grad_nonneg_gaussian(in.data, in.ctx, in.bank, in.family, in.lambda);
    case Family::Poisson: return grad_poisson(in.data, in.ctx, in.bank, in.family, in.lambda);
    case Family::AdditivePoisson: return grad_additive_poisson(in.data, in.ctx, in.bank, in.family, in.lambda);
    case Family::Bernoulli: return grad_bernoulli(in.data, in.ctx, in.bank, in.family, in.lambda);
    case Family::Categorical: return grad_categorical(in.data, in.ctx, in.bank, in.family, in.lambda);
    }
    return {};
}

/// Kernel-path full gradient.
inline GradientTables kernel_gradient(const Instance& in) {
    const Problem p = Problem::build(in.data, in.ctx, in.family, in.sharing);
    TrainConfig cfg;
    cfg.reg = {Regularizer::L2, in.lambda};
    return full_gradient(p, in.bank, cfg);
}

inline const std::vector<Family>& all_families() {
    static const std::vector<Family> f = {Family::Gaussian,        Family::NonnegGaussian, Family::Poisson,
                                          Family::AdditivePoisson, Family::Bernoulli,      Family::Categorical};
    return f;
}

}  // namespace efemb::testing
