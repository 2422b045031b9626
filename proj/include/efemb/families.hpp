#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "efemb/context.hpp"
#include "efemb/model.hpp"

namespace efemb {

enum class Family { Gaussian, NonnegGaussian, Poisson, AdditivePoisson, Bernoulli, Categorical };

std::string_view to_string(Family f);
Family parse_family(std::string_view s);

/// Conditional family plus its link and fixed hyperparameters.
struct FamilySpec {
    Family family = Family::Gaussian;
    double sigma2 = 1.0;  // Gaussian variance, Gaussian families only
    LinkSpec link = LinkSpec::Identity;
    std::size_t vocab_size = 0;  // Categorical only

    /// Nonnegative families keep parameters in log space.
    bool needs_log_space() const {
        return family == Family::NonnegGaussian || family == Family::AdditivePoisson;
    }
    /// Throws ConfigError on an inconsistent combination.
    void validate() const;
};

/// Default link for each family: identity everywhere except the additive
/// Poisson, whose natural parameter is the log of the linear combination.
LinkSpec default_link(Family f);

// Clamp and floor constants; see trainer telemetry for the counters.
inline constexpr double kPoissonEtaClamp = 30.0;
inline constexpr double kAdditiveRateFloor = 1e-8;

/// log p(x | eta) including the base measure.
///
/// Natural-parameter conventions: Gaussian families use the mean (eta = mu,
/// sigma2 fixed); Poisson families use the log rate; Bernoulli uses the logit.
/// Throws DomainError for x outside the support or a non-finite eta.
double log_likelihood(double x, double eta, const FamilySpec& spec);

/// a(eta) under the conventions above (Gaussian: eta^2 / 2 in mean form).
double log_normalizer(double eta, const FamilySpec& spec);

/// E[t(x)] = a'(eta).
double expected_sufficient_statistic(double eta, const FamilySpec& spec);

/// Categorical log mass of `active` under logits `eta`.
double categorical_log_likelihood(std::span<const double> eta, std::size_t active);

/// Per-term contribution as a function of the linear predictor
/// s = rho^T (context sum) (already divided by |c| for ContextMean links).
struct TermScore {
    double log_lik = 0.0;
    double dlds = 0.0;       // d log_lik / d s
    bool clamped = false;    // Poisson eta clamp or additive rate floor engaged
};

/// Scalar families only.
TermScore score_term(double x, double s, const FamilySpec& spec);

/// Checks x is in the family support; throws DomainError otherwise.
void check_support(double x, const FamilySpec& spec);

// Closed-form gradients of the objective, one routine per family. Each one
// walks the data entity by entity (pulling through the reverse context map)
// and is kept as a reference for the parallel kernels. Regularizer terms are
// the ones that go with each family: -lambda * theta on plain banks,
// -lambda * exp(theta) o exp(theta) on log-space banks.

/// Gaussian, PerRow sharing, identity or context-mean identity link.
GradientTables grad_gaussian(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                             const FamilySpec& spec, double lambda);
/// Nonnegative Gaussian: log-space bank, PerRow; gradients in stored coordinates.
GradientTables grad_nonneg_gaussian(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                                    const FamilySpec& spec, double lambda);
/// Poisson with rate exp(rho^T sum x alpha), PerRow.
GradientTables grad_poisson(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                            const FamilySpec& spec, double lambda);
/// Additive Poisson with rate rho^T sum x alpha on effective parameters.
GradientTables grad_additive_poisson(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                                     const FamilySpec& spec, double lambda);
/// Bernoulli over (position, term) indices with Global sharing.
GradientTables grad_bernoulli(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                              const FamilySpec& spec, double lambda);
/// Softmax regression over positions of a one-hot corpus, Global sharing.
GradientTables grad_categorical(const DataMatrix& corpus, const ContextMap& ctx, const EmbeddingBank& bank,
                                const FamilySpec& spec, double lambda);

}  // namespace efemb
