#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "efemb/kernels.hpp"
#include "efemb/random.hpp"

namespace efemb {

/// Prior on the parameters. L2 is an l2 penalty on effective values (on
/// exp(theta) for log-space banks, matching the -lambda exp(theta)^2 gradient);
/// LogNormal is an l2 penalty on the stored log values.
enum class Regularizer { L2, LogNormal, None };

struct Regularization {
    Regularizer kind = Regularizer::L2;
    double lambda = 0.0;
};

enum class ZeroEstimator { Unbiased, NegativeSampling, Downweight };

struct TrainConfig {
    double step_size = 0.1;
    double adagrad_epsilon = 1e-6;
    std::optional<std::size_t> minibatch_size;  // nullopt: full batch
    std::size_t n_iterations = 500;
    // Zero terms drawn per nonzero term; 0 disables the sparse estimator.
    std::size_t negative_samples = 0;
    ZeroEstimator zero_estimator = ZeroEstimator::Unbiased;
    double downweight = 0.1;  // gamma for ZeroEstimator::Downweight
    Regularization reg;
    std::uint64_t seed = 1;
    std::size_t log_interval = 100;  // 0: log only the final iteration
    int threads = 0;                 // 0: OpenMP default
    double init_scale = 0.1;         // init uniform in +-init_scale/sqrt(K)

    void validate() const;
};

/// Adagrad accumulators and the estimator RNG.
struct OptimizerState {
    std::vector<double> g2_rho;
    std::vector<double> g2_alpha;
    std::uint64_t iteration = 0;
    Rng rng;

    OptimizerState() = default;
    OptimizerState(const EmbeddingBank& bank, std::uint64_t seed);
};

/// log p(theta) for the bank under `reg`. Tied banks count rho once.
double log_prior(const EmbeddingBank& bank, SharingScheme sharing, const Regularization& reg);

/// Sum of term log-likelihoods plus log p(rho) + log p(alpha).
double objective(const Problem& p, const EmbeddingBank& bank, const Regularization& reg, int threads = 0);
double objective(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank, const FamilySpec& family,
                 SharingScheme sharing, const Regularization& reg);

/// Adds the prior gradient, in stored coordinates.
void add_prior_gradient(GradientTables& g, const EmbeddingBank& bank, SharingScheme sharing,
                        const Regularization& reg);

/// Exact gradient of the objective (stored coordinates).
GradientTables full_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config);

/// Data terms sampled uniformly without replacement, data sum scaled by
/// I/|S|, prior gradient added once. Downweight applies gamma to zero terms.
GradientTables minibatch_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config, Rng& rng);

/// Gradient over an explicit subsample (term positions into p.terms()).
GradientTables minibatch_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                                  std::span<const std::uint32_t> subsample);

/// The two halves of the sparse estimator before weighting: the exact sum
/// over nonzero terms and the unweighted sum over the drawn zero terms.
struct SparseParts {
    GradientTables nonzero;
    GradientTables zero_sum;
    std::size_t n_zeros = 0;
    std::size_t n_drawn = 0;
};

/// Number of zero terms the sparse estimator draws.
std::size_t sparse_draw_size(const Problem& p, const TrainConfig& config);

/// Draws zero terms without replacement; returns positions into p.terms().
std::vector<std::uint32_t> draw_zero_terms(const Problem& p, const TrainConfig& config, Rng& rng);

SparseParts sparse_parts(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                         std::span<const std::uint32_t> drawn_zeros);

/// Weight on the drawn zero sum: #zeros/#drawn (Unbiased), 1 (NegativeSampling),
/// gamma * #zeros/#drawn (Downweight).
double zero_weight(const SparseParts& parts, const TrainConfig& config);

/// nonzero + zero_weight * zero_sum, chain rule, prior.
GradientTables combine_sparse(const SparseParts& parts, const Problem& p, const EmbeddingBank& bank,
                              const TrainConfig& config);

GradientTables sparse_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config, Rng& rng);
GradientTables sparse_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                               std::span<const std::uint32_t> drawn_zeros);

/// Adagrad ascent: G += g^2, theta += step * g / (eps + sqrt(G)).
void adagrad_step(const GradientTables& grads, OptimizerState& state, EmbeddingBank& bank,
                  const TrainConfig& config);

/// Seeded uniform init in +-init_scale/sqrt(K). Tied banks start with alpha == rho.
EmbeddingBank initialize_bank(std::size_t n_rows, std::size_t k, bool log_space, SharingScheme sharing,
                              const TrainConfig& config);

struct LogRecord {
    std::size_t iteration = 0;
    double objective = 0.0;
    std::uint64_t clamp_events = 0;  // since the previous record
    double wall_seconds = 0.0;
    double min_effective = 0.0;      // smallest effective parameter in the bank
};

struct TrainResult {
    EmbeddingBank bank;
    std::vector<LogRecord> log;
};

/// Called after each logged iteration.
using TrainObserver = std::function<void(const LogRecord&, const EmbeddingBank&)>;

/// Runs n_iterations of (estimator, adagrad_step) from `init`. Throws
/// NumericError naming the iteration and coordinate if a parameter turns
/// non-finite.
TrainResult train(const Problem& p, EmbeddingBank init, const TrainConfig& config,
                  const TrainObserver& observer = {});

/// Convenience: initializes the bank from config.seed then trains.
TrainResult train(const Problem& p, std::size_t k, const TrainConfig& config, const TrainObserver& observer = {});

/// Tab-delimited training log with a header line.
void write_log(std::ostream& os, const std::vector<LogRecord>& log);

}  // namespace efemb
