#include "efemb/families.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "efemb/error.hpp"

namespace efemb {

namespace {

double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double logistic(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

std::string_view to_string(Family f) {
    switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::NonnegGaussian: return "nonneg_gaussian";
    case Family::Poisson: return "poisson";
    case Family::AdditivePoisson: return "additive_poisson";
    case Family::Bernoulli: return "bernoulli";
    case Family::Categorical: return "categorical";
    }
    return "?";
}

Family parse_family(std::string_view s) {
    for (Family f : {Family::Gaussian, Family::NonnegGaussian, Family::Poisson, Family::AdditivePoisson,
                     Family::Bernoulli, Family::Categorical}) {
        if (to_string(f) == s) return f;
    }
    throw ConfigError("unknown family '" + std::string(s) +
                      "' (expected gaussian, nonneg_gaussian, poisson, additive_poisson, bernoulli, categorical)");
}

LinkSpec default_link(Family f) { return f == Family::AdditivePoisson ? LinkSpec::Log : LinkSpec::Identity; }

void FamilySpec::validate() const {
    const bool log_link = is_log_link(link);
    switch (family) {
    case Family::Gaussian:
    case Family::NonnegGaussian:
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ConfigError("sigma2 must be positive");
        [[fallthrough]];
    case Family::Poisson:
    case Family::Bernoulli:
    case Family::Categorical:
        if (log_link) throw ConfigError(std::string(to_string(family)) + " takes an identity link");
        break;
    case Family::AdditivePoisson:
        if (!log_link) throw ConfigError("additive_poisson takes a log link");
        break;
    }
    if (family == Family::Categorical && vocab_size < 2) throw ConfigError("categorical needs vocab_size >= 2");
}

void check_support(double x, const FamilySpec& spec) {
    if (!std::isfinite(x)) throw DomainError("non-finite observation");
    switch (spec.family) {
    case Family::Gaussian:
    case Family::NonnegGaussian: return;
    case Family::Poisson:
    case Family::AdditivePoisson:
        if (x < 0.0 || x != std::floor(x)) {
            throw DomainError("Poisson observation must be a nonnegative integer, got " + std::to_string(x));
        }
        return;
    case Family::Bernoulli:
    case Family::Categorical:
        if (x != 0.0 && x != 1.0) throw DomainError("binary observation must be 0 or 1, got " + std::to_string(x));
        return;
    }
}

double log_likelihood(double x, double eta, const FamilySpec& spec) {
    check_support(x, spec);
    if (!std::isfinite(eta)) {
        if (spec.family == Family::AdditivePoisson) throw DomainError("additive Poisson rate must be positive");
        throw DomainError("non-finite natural parameter");
    }
    switch (spec.family) {
    case Family::Gaussian:
    case Family::NonnegGaussian: {
        const double r = x - eta;
        return -0.5 * r * r / spec.sigma2 - 0.5 * std::log(2.0 * std::numbers::pi * spec.sigma2);
    }
    case Family::Poisson:
    case Family::AdditivePoisson: return x * eta - std::exp(eta) - std::lgamma(x + 1.0);
    case Family::Bernoulli: return x * eta - softplus(eta);
    case Family::Categorical: break;
    }
    throw ConfigError("categorical log-likelihood is not scalar; use categorical_log_likelihood");
}

double log_normalizer(double eta, const FamilySpec& spec) {
    switch (spec.family) {
    case Family::Gaussian:
    case Family::NonnegGaussian: return 0.5 * eta * eta;
    case Family::Poisson:
    case Family::AdditivePoisson: return std::exp(eta);
    case Family::Bernoulli: return softplus(eta);
    case Family::Categorical: break;
    }
    throw ConfigError("categorical log-normalizer is not scalar");
}

double expected_sufficient_statistic(double eta, const FamilySpec& spec) {
    if (!std::isfinite(eta)) throw DomainError("non-finite natural parameter");
    switch (spec.family) {
    case Family::Gaussian:
    case Family::NonnegGaussian: return eta;
    case Family::Poisson:
    case Family::AdditivePoisson: return std::exp(eta);
    case Family::Bernoulli: return logistic(eta);
    case Family::Categorical: break;
    }
    throw ConfigError("categorical expected statistic is a softmax vector");
}

double categorical_log_likelihood(std::span<const double> eta, std::size_t active) {
    if (active >= eta.size()) throw IndexError("active term outside vocabulary");
    const double mx = *std::max_element(eta.begin(), eta.end());
    double z = 0.0;
    for (double e : eta) z += std::exp(e - mx);
    return eta[active] - mx - std::log(z);
}

TermScore score_term(double x, double s, const FamilySpec& spec) {
    TermScore out;
    switch (spec.family) {
    case Family::Gaussian:
    case Family::NonnegGaussian: {
        const double r = x - s;
        out.log_lik = -0.5 * r * r / spec.sigma2 - 0.5 * std::log(2.0 * std::numbers::pi * spec.sigma2);
        out.dlds = r / spec.sigma2;
        return out;
    }
    case Family::Poisson: {
        double eta = s;
        if (eta > kPoissonEtaClamp || eta < -kPoissonEtaClamp) {
            eta = std::clamp(eta, -kPoissonEtaClamp, kPoissonEtaClamp);
            out.clamped = true;
        }
        const double rate = std::exp(eta);
        out.log_lik = x * eta - rate - std::lgamma(x + 1.0);
        out.dlds = x - rate;
        return out;
    }
    case Family::AdditivePoisson: {
        double rate = s;
        if (!(rate > kAdditiveRateFloor)) {
            rate = kAdditiveRateFloor;
            out.clamped = true;
        }
        out.log_lik = x * std::log(rate) - rate - std::lgamma(x + 1.0);
        out.dlds = x / rate - 1.0;
        return out;
    }
    case Family::Bernoulli:
        out.log_lik = x * s - softplus(s);
        out.dlds = x - logistic(s);
        return out;
    case Family::Categorical: break;
    }
    throw ConfigError("categorical terms are scored per position");
}

namespace {

// Which indices are objective terms: every grid cell for implicit-zero data,
// stored cells otherwise.
bool is_term(const DataMatrix& data, DataIndex i) { return data.implicit_zero() || data.contains(i); }

template <class Fn>
void for_each_index_of_row(std::size_t p, SharingScheme scheme, const DataMatrix& data, Fn&& fn) {
    if (scheme == SharingScheme::Global) {
        for (std::uint32_t n = 0; n < data.n_rows(); ++n) fn(DataIndex{n, static_cast<std::uint32_t>(p)});
    } else {
        for (std::uint32_t t = 0; t < data.n_cols(); ++t) fn(DataIndex{static_cast<std::uint32_t>(p), t});
    }
}

void add_regularizer(GradientTables& g, const EmbeddingBank& bank, double lambda) {
    if (lambda == 0.0) return;
    for (std::size_t i = 0; i < g.rho.size(); ++i) {
        const double r = bank.rho()[i], a = bank.alpha()[i];
        g.rho[i] -= lambda * (bank.log_space() ? std::exp(2.0 * r) : r);
        g.alpha[i] -= lambda * (bank.log_space() ? std::exp(2.0 * a) : a);
    }
}

// Residual form shared by the scalar families: d/ds of the term log-likelihood.
template <class Residual>
GradientTables pull_gradient(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                             SharingScheme scheme, LinkSpec link, double lambda, Residual residual) {
    if (ctx.n_rows() != data.n_rows() || ctx.n_cols() != data.n_cols()) {
        throw DataError("context map does not match data dimensions");
    }
    const std::size_t K = bank.k();
    const std::vector<double> rho = bank.effective_rho();
    const std::vector<double> alpha = bank.effective_alpha();
    const std::size_t cells = data.n_rows() * data.n_cols();
    auto flat = [&](DataIndex i) { return static_cast<std::size_t>(i.row) * data.n_cols() + i.col; };

    // Pass 1: per-term residual, scale and context sum.
    std::vector<double> resid(cells, 0.0), scale(cells, 0.0), usum(cells * K, 0.0);
    std::vector<char> active(cells, 0);
    for (std::uint32_t n = 0; n < data.n_rows(); ++n) {
        for (std::uint32_t t = 0; t < data.n_cols(); ++t) {
            const DataIndex i{n, t};
            if (!is_term(data, i)) continue;
            double* u = &usum[flat(i) * K];
            std::size_t m = 0;
            for (DataIndex j : ctx.members(i)) {
                const auto xj = data.value(j);
                if (!xj) continue;
                ++m;
                const double* a = &alpha[param_row(j, scheme) * K];
                for (std::size_t d = 0; d < K; ++d) u[d] += *xj * a[d];
            }
            if (is_context_mean(link)) {
                if (m == 0) continue;
                for (std::size_t d = 0; d < K; ++d) u[d] /= static_cast<double>(m);
                scale[flat(i)] = 1.0 / static_cast<double>(m);
            } else {
                scale[flat(i)] = 1.0;
            }
            const double* r = &rho[param_row(i, scheme) * K];
            double s = 0.0;
            for (std::size_t d = 0; d < K; ++d) s += r[d] * u[d];
            resid[flat(i)] = residual(*data.value(i), s);
            active[flat(i)] = 1;
        }
    }

    GradientTables g(bank);
    const ContextMap owners = ctx.reverse();
    for (std::size_t p = 0; p < bank.n_rows(); ++p) {
        double* gr = &g.rho[p * K];
        double* ga = &g.alpha[p * K];
        for_each_index_of_row(p, scheme, data, [&](DataIndex i) {
            // Embedding: residual times own context sum.
            if (active[flat(i)]) {
                const double* u = &usum[flat(i) * K];
                for (std::size_t d = 0; d < K; ++d) gr[d] += resid[flat(i)] * u[d];
            }
            // Context vector: every term whose context holds i.
            const auto xi = data.value(i);
            if (!xi || *xi == 0.0) return;
            for (DataIndex m : owners.members(i)) {
                if (!active[flat(m)]) continue;
                const double c = resid[flat(m)] * scale[flat(m)] * *xi;
                const double* r = &rho[param_row(m, scheme) * K];
                for (std::size_t d = 0; d < K; ++d) ga[d] += c * r[d];
            }
        });
    }
    if (bank.log_space()) {
        for (std::size_t i = 0; i < g.rho.size(); ++i) {
            g.rho[i] *= rho[i];
            g.alpha[i] *= alpha[i];
        }
    }
    add_regularizer(g, bank, lambda);
    return g;
}

void require(bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace

GradientTables grad_gaussian(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                             const FamilySpec& spec, double lambda) {
    require(spec.family == Family::Gaussian && !bank.log_space(), "grad_gaussian needs a plain Gaussian model");
    spec.validate();
    const double s2 = spec.sigma2;
    return pull_gradient(data, ctx, bank, SharingScheme::PerRow, spec.link, lambda,
                         [s2](double x, double s) { return (x - s) / s2; });
}

GradientTables grad_nonneg_gaussian(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                                    const FamilySpec& spec, double lambda) {
    require(spec.family == Family::NonnegGaussian && bank.log_space(),
            "grad_nonneg_gaussian needs a log-space nonnegative Gaussian model");
    spec.validate();
    const double s2 = spec.sigma2;
    return pull_gradient(data, ctx, bank, SharingScheme::PerRow, spec.link, lambda,
                         [s2](double x, double s) { return (x - s) / s2; });
}

GradientTables grad_poisson(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                            const FamilySpec& spec, double lambda) {
    require(spec.family == Family::Poisson && !bank.log_space(), "grad_poisson needs a plain Poisson model");
    spec.validate();
    return pull_gradient(data, ctx, bank, SharingScheme::PerRow, spec.link, lambda, [](double x, double s) {
        return x - std::exp(std::clamp(s, -kPoissonEtaClamp, kPoissonEtaClamp));
    });
}

GradientTables grad_additive_poisson(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                                     const FamilySpec& spec, double lambda) {
    require(spec.family == Family::AdditivePoisson && bank.log_space(),
            "grad_additive_poisson needs a log-space additive Poisson model");
    spec.validate();
    return pull_gradient(data, ctx, bank, SharingScheme::PerRow, spec.link, lambda,
                         [](double x, double s) { return x / std::max(s, kAdditiveRateFloor) - 1.0; });
}

GradientTables grad_bernoulli(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                              const FamilySpec& spec, double lambda) {
    require(spec.family == Family::Bernoulli && !bank.log_space(), "grad_bernoulli needs a Bernoulli model");
    spec.validate();
    return pull_gradient(data, ctx, bank, SharingScheme::Global, spec.link, lambda,
                         [](double x, double s) { return x - logistic(s); });
}

GradientTables grad_categorical(const DataMatrix& corpus, const ContextMap& ctx, const EmbeddingBank& bank,
                                const FamilySpec& spec, double lambda) {
    require(spec.family == Family::Categorical && !bank.log_space(), "grad_categorical needs a categorical model");
    spec.validate();
    const std::size_t K = bank.k(), D = corpus.n_cols(), L = corpus.n_rows();
    require(bank.n_rows() == D, "categorical bank needs one row per vocabulary term");

    std::vector<std::int64_t> word(L, -1);
    corpus.for_each([&](DataIndex i, double v) {
        if (v != 0.0) word[i.row] = i.col;
    });

    // Pass 1: per-position softmax residual (one-hot minus probabilities).
    std::vector<double> usum(L * K, 0.0), resid(L * D, 0.0), scale(L, 0.0);
    std::vector<char> active(L, 0);
    std::vector<double> eta(D);
    for (std::uint32_t n = 0; n < L; ++n) {
        if (word[n] < 0) continue;
        const DataIndex self{n, static_cast<std::uint32_t>(word[n])};
        double* u = &usum[n * K];
        std::size_t m = 0;
        for (DataIndex j : ctx.members(self)) {
            const double xj = *corpus.value(j);
            ++m;
            for (std::size_t d = 0; d < K; ++d) u[d] += xj * bank.alpha()[j.col * K + d];
        }
        if (is_context_mean(spec.link)) {
            if (m == 0) continue;
            for (std::size_t d = 0; d < K; ++d) u[d] /= static_cast<double>(m);
            scale[n] = 1.0 / static_cast<double>(m);
        } else {
            scale[n] = 1.0;
        }
        for (std::size_t v = 0; v < D; ++v) {
            eta[v] = 0.0;
            for (std::size_t d = 0; d < K; ++d) eta[v] += bank.rho()[v * K + d] * u[d];
        }
        const double mx = *std::max_element(eta.begin(), eta.end());
        double z = 0.0;
        for (std::size_t v = 0; v < D; ++v) z += std::exp(eta[v] - mx);
        for (std::size_t v = 0; v < D; ++v) {
            resid[n * D + v] = (v == static_cast<std::size_t>(word[n]) ? 1.0 : 0.0) - std::exp(eta[v] - mx) / z;
        }
        active[n] = 1;
    }

    GradientTables g(bank);
    const ContextMap owners = ctx.reverse();
    for (std::size_t v = 0; v < D; ++v) {
        double* gr = &g.rho[v * K];
        for (std::size_t n = 0; n < L; ++n) {
            if (!active[n]) continue;
            for (std::size_t d = 0; d < K; ++d) gr[d] += resid[n * D + v] * usum[n * K + d];
        }
        // alpha_v collects from every position whose window holds a v.
        double* ga = &g.alpha[v * K];
        for (std::uint32_t j = 0; j < L; ++j) {
            if (word[j] != static_cast<std::int64_t>(v)) continue;
            for (DataIndex owner : owners.members({j, static_cast<std::uint32_t>(v)})) {
                const std::size_t n = owner.row;
                // Each position owns D identical context lists; count it once.
                if (!active[n] || owner.col != static_cast<std::uint32_t>(word[n])) continue;
                for (std::size_t w = 0; w < D; ++w) {
                    const double c = resid[n * D + w] * scale[n];
                    for (std::size_t d = 0; d < K; ++d) ga[d] += c * bank.rho()[w * K + d];
                }
            }
        }
    }
    add_regularizer(g, bank, lambda);
    return g;
}

}  // namespace efemb
