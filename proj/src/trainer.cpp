#include "efemb/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <string>

#include "efemb/error.hpp"

namespace efemb {

namespace {

constexpr std::uint64_t kEstimatorStream = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kLoggingStream = 0xD1B54A32D192ED03ull;

double zero_term_weight(const TrainConfig& c) {
    return c.zero_estimator == ZeroEstimator::Downweight ? c.downweight : 1.0;
}

GradientTables data_gradient(const Problem& p, const EmbeddingBank& bank, const EffectiveParams& eff,
                             std::span<const WeightedTerm> terms, const TrainConfig& config, ClampCounters& clamps) {
    GradientTables g(bank);
    accumulate_parallel(p, eff, terms, g, clamps, config.threads);
    return g;
}

GradientTables full_gradient_impl(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                                  ClampCounters& clamps) {
    const EffectiveParams eff(bank, p.sharing());
    const double zw = zero_term_weight(config);
    std::vector<WeightedTerm> terms(p.terms().size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        terms[i] = {static_cast<std::uint32_t>(i), p.terms()[i].x == 0.0 ? zw : 1.0};
    }
    GradientTables g = data_gradient(p, bank, eff, terms, config, clamps);
    finish_data_gradient(g, bank, eff, p.sharing());
    add_prior_gradient(g, bank, p.sharing(), config.reg);
    return g;
}

GradientTables minibatch_impl(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                              std::span<const std::uint32_t> subsample, ClampCounters& clamps) {
    const EffectiveParams eff(bank, p.sharing());
    const double zw = zero_term_weight(config);
    const double scale = subsample.empty()
                             ? 0.0
                             : static_cast<double>(p.terms().size()) / static_cast<double>(subsample.size());
    std::vector<WeightedTerm> terms;
    terms.reserve(subsample.size());
    for (std::uint32_t t : subsample) terms.push_back({t, scale * (p.terms()[t].x == 0.0 ? zw : 1.0)});
    GradientTables g = data_gradient(p, bank, eff, terms, config, clamps);
    finish_data_gradient(g, bank, eff, p.sharing());
    add_prior_gradient(g, bank, p.sharing(), config.reg);
    return g;
}

std::vector<std::uint32_t> draw_minibatch(const Problem& p, const TrainConfig& config, Rng& rng) {
    const std::size_t n = p.terms().size();
    const std::size_t m = std::min(config.minibatch_size.value_or(n), n);
    std::vector<std::uint32_t> out;
    out.reserve(m);
    for (std::size_t i : sample_without_replacement(rng, n, m)) out.push_back(static_cast<std::uint32_t>(i));
    return out;
}

SparseParts sparse_parts_impl(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                              std::span<const std::uint32_t> drawn, ClampCounters& clamps) {
    const EffectiveParams eff(bank, p.sharing());
    SparseParts parts;
    parts.n_zeros = p.zero_terms().size();
    parts.n_drawn = drawn.size();
    std::vector<WeightedTerm> nz, zs;
    nz.reserve(p.nonzero_terms().size());
    for (std::uint32_t t : p.nonzero_terms()) nz.push_back({t, 1.0});
    zs.reserve(drawn.size());
    for (std::uint32_t t : drawn) {
        if (p.terms()[t].x != 0.0) throw DataError("drawn zero term holds a nonzero value");
        zs.push_back({t, 1.0});
    }
    parts.nonzero = data_gradient(p, bank, eff, nz, config, clamps);
    parts.zero_sum = data_gradient(p, bank, eff, zs, config, clamps);
    return parts;
}

double min_effective(const EmbeddingBank& bank) {
    double m = std::numeric_limits<double>::infinity();
    for (double v : bank.rho()) m = std::min(m, bank.effective(v));
    for (double v : bank.alpha()) m = std::min(m, bank.effective(v));
    return m;
}

void check_finite(const EmbeddingBank& bank, std::size_t iteration) {
    auto scan = [&](const std::vector<double>& table, const char* name) {
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (!std::isfinite(table[i])) {
                throw NumericError("non-finite " + std::string(name) + "[" + std::to_string(i / bank.k()) + "][" +
                                   std::to_string(i % bank.k()) + "] at iteration " + std::to_string(iteration));
            }
        }
    };
    scan(bank.rho(), "rho");
    scan(bank.alpha(), "alpha");
}

// Objective estimate for logging: exact on the dense path; on the sparse path
// nonzero terms exactly plus an unbiased estimate of the zero terms.
double logged_objective(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config, Rng& rng,
                        ClampCounters& clamps) {
    const EffectiveParams eff(bank, p.sharing());
    const double zw = zero_term_weight(config);
    std::vector<WeightedTerm> terms;
    if (config.negative_samples == 0) {
        terms.resize(p.terms().size());
        for (std::size_t i = 0; i < terms.size(); ++i) {
            terms[i] = {static_cast<std::uint32_t>(i), p.terms()[i].x == 0.0 ? zw : 1.0};
        }
    } else {
        for (std::uint32_t t : p.nonzero_terms()) terms.push_back({t, 1.0});
        const auto drawn = draw_zero_terms(p, config, rng);
        if (!drawn.empty()) {
            const double w = zw * static_cast<double>(p.zero_terms().size()) / static_cast<double>(drawn.size());
            for (std::uint32_t t : drawn) terms.push_back({t, w});
        }
    }
    return loglik_parallel(p, eff, terms, clamps, config.threads) + log_prior(bank, p.sharing(), config.reg);
}

}  // namespace

void TrainConfig::validate() const {
    if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
    if (!(adagrad_epsilon > 0.0)) throw ConfigError("adagrad_epsilon must be positive");
    if (zero_estimator == ZeroEstimator::Downweight && !(downweight > 0.0 && downweight <= 1.0)) {
        throw ConfigError("downweight gamma must lie in (0, 1]");
    }
    if (zero_estimator == ZeroEstimator::NegativeSampling && negative_samples == 0) {
        throw ConfigError("negative sampling needs negative_samples >= 1");
    }
    if (minibatch_size && *minibatch_size == 0) throw ConfigError("minibatch size must be positive");
    if (minibatch_size && negative_samples > 0) {
        throw ConfigError("minibatch subsampling and the sparse zero estimator are exclusive");
    }
    if (reg.lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be nonnegative");
}

OptimizerState::OptimizerState(const EmbeddingBank& bank, std::uint64_t seed)
    : g2_rho(bank.rho().size(), 0.0), g2_alpha(bank.alpha().size(), 0.0), rng(seed ^ kEstimatorStream) {}

double log_prior(const EmbeddingBank& bank, SharingScheme sharing, const Regularization& reg) {
    if (reg.kind == Regularizer::None || reg.lambda == 0.0) return 0.0;
    const bool on_effective = reg.kind == Regularizer::L2 && bank.log_space();
    auto sq = [&](const std::vector<double>& table) {
        double s = 0.0;
        for (double v : table) {
            const double e = on_effective ? std::exp(v) : v;
            s += e * e;
        }
        return s;
    };
    double total = sq(bank.rho());
    if (sharing != SharingScheme::Tied) total += sq(bank.alpha());
    return -0.5 * reg.lambda * total;
}

void add_prior_gradient(GradientTables& g, const EmbeddingBank& bank, SharingScheme sharing,
                        const Regularization& reg) {
    if (reg.kind == Regularizer::None || reg.lambda == 0.0) return;
    const bool on_effective = reg.kind == Regularizer::L2 && bank.log_space();
    auto grad = [&](double v) { return -reg.lambda * (on_effective ? std::exp(2.0 * v) : v); };
    for (std::size_t i = 0; i < g.rho.size(); ++i) {
        const double gr = grad(bank.rho()[i]);
        g.rho[i] += gr;
        g.alpha[i] += sharing == SharingScheme::Tied ? gr : grad(bank.alpha()[i]);
    }
}

double objective(const Problem& p, const EmbeddingBank& bank, const Regularization& reg, int threads) {
    const EffectiveParams eff(bank, p.sharing());
    std::vector<WeightedTerm> terms(p.terms().size());
    for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = {static_cast<std::uint32_t>(i), 1.0};
    ClampCounters c;
    return loglik_parallel(p, eff, terms, c, threads) + log_prior(bank, p.sharing(), reg);
}

double objective(const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank, const FamilySpec& family,
                 SharingScheme sharing, const Regularization& reg) {
    return objective(Problem::build(data, ctx, family, sharing), bank, reg);
}

GradientTables full_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config) {
    ClampCounters c;
    return full_gradient_impl(p, bank, config, c);
}

GradientTables minibatch_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config, Rng& rng) {
    const auto s = draw_minibatch(p, config, rng);
    ClampCounters c;
    return minibatch_impl(p, bank, config, s, c);
}

GradientTables minibatch_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                                  std::span<const std::uint32_t> subsample) {
    ClampCounters c;
    return minibatch_impl(p, bank, config, subsample, c);
}

std::size_t sparse_draw_size(const Problem& p, const TrainConfig& config) {
    return std::min(p.nonzero_terms().size() * config.negative_samples, p.zero_terms().size());
}

std::vector<std::uint32_t> draw_zero_terms(const Problem& p, const TrainConfig& config, Rng& rng) {
    const auto zeros = p.zero_terms();
    std::vector<std::uint32_t> out;
    const std::size_t m = sparse_draw_size(p, config);
    out.reserve(m);
    for (std::size_t i : sample_without_replacement(rng, zeros.size(), m)) out.push_back(zeros[i]);
    return out;
}

SparseParts sparse_parts(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                         std::span<const std::uint32_t> drawn_zeros) {
    ClampCounters c;
    return sparse_parts_impl(p, bank, config, drawn_zeros, c);
}

double zero_weight(const SparseParts& parts, const TrainConfig& config) {
    if (parts.n_drawn == 0) return 0.0;
    const double rescale = static_cast<double>(parts.n_zeros) / static_cast<double>(parts.n_drawn);
    switch (config.zero_estimator) {
    case ZeroEstimator::Unbiased: return rescale;
    case ZeroEstimator::NegativeSampling: return 1.0;
    case ZeroEstimator::Downweight: return config.downweight * rescale;
    }
    return rescale;
}

GradientTables combine_sparse(const SparseParts& parts, const Problem& p, const EmbeddingBank& bank,
                              const TrainConfig& config) {
    const double w = zero_weight(parts, config);
    GradientTables g = parts.nonzero;
    for (std::size_t i = 0; i < g.rho.size(); ++i) {
        g.rho[i] += w * parts.zero_sum.rho[i];
        g.alpha[i] += w * parts.zero_sum.alpha[i];
    }
    const EffectiveParams eff(bank, p.sharing());
    finish_data_gradient(g, bank, eff, p.sharing());
    add_prior_gradient(g, bank, p.sharing(), config.reg);
    return g;
}

GradientTables sparse_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config, Rng& rng) {
    const auto drawn = draw_zero_terms(p, config, rng);
    return sparse_gradient(p, bank, config, drawn);
}

GradientTables sparse_gradient(const Problem& p, const EmbeddingBank& bank, const TrainConfig& config,
                               std::span<const std::uint32_t> drawn_zeros) {
    return combine_sparse(sparse_parts(p, bank, config, drawn_zeros), p, bank, config);
}

void adagrad_step(const GradientTables& grads, OptimizerState& state, EmbeddingBank& bank,
                  const TrainConfig& config) {
    if (grads.rho.size() != bank.rho().size() || grads.alpha.size() != bank.alpha().size()) {
        throw DataError("gradient tables do not match the bank shape");
    }
    if (state.g2_rho.size() != bank.rho().size()) {
        state.g2_rho.assign(bank.rho().size(), 0.0);
        state.g2_alpha.assign(bank.alpha().size(), 0.0);
    }
    auto update = [&](std::vector<double>& theta, std::vector<double>& g2, const std::vector<double>& g) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (g[i] == 0.0) continue;
            g2[i] += g[i] * g[i];
            theta[i] += config.step_size * g[i] / (config.adagrad_epsilon + std::sqrt(g2[i]));
        }
    };
    update(bank.rho(), state.g2_rho, grads.rho);
    update(bank.alpha(), state.g2_alpha, grads.alpha);
    ++state.iteration;
}

EmbeddingBank initialize_bank(std::size_t n_rows, std::size_t k, bool log_space, SharingScheme sharing,
                              const TrainConfig& config) {
    if (k == 0) throw ConfigError("latent dimension K must be positive");
    EmbeddingBank bank(n_rows, k, log_space);
    Rng rng(config.seed);
    const double half = config.init_scale / std::sqrt(static_cast<double>(k));
    for (double& v : bank.rho()) v = uniform(rng, -half, half);
    for (double& v : bank.alpha()) v = uniform(rng, -half, half);
    if (sharing == SharingScheme::Tied) bank.alpha() = bank.rho();
    return bank;
}

TrainResult train(const Problem& p, EmbeddingBank init, const TrainConfig& config, const TrainObserver& observer) {
    config.validate();
    if (init.n_rows() != p.n_param_rows()) {
        throw DataError("bank has " + std::to_string(init.n_rows()) + " rows, model needs " +
                        std::to_string(p.n_param_rows()));
    }
    if (init.log_space() != p.family().needs_log_space()) {
        throw ConfigError("bank parameter space does not match the family");
    }
    TrainResult result;
    result.bank = std::move(init);
    EmbeddingBank& bank = result.bank;
    OptimizerState state(bank, config.seed);
    Rng log_rng(config.seed ^ kLoggingStream);
    const auto start = std::chrono::steady_clock::now();
    ClampCounters clamps;

    auto record = [&](std::size_t it) {
        LogRecord r;
        r.iteration = it;
        r.objective = logged_objective(p, bank, config, log_rng, clamps);
        r.clamp_events = clamps.events;
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        r.min_effective = min_effective(bank);
        clamps.events = 0;
        result.log.push_back(r);
        if (observer) observer(r, bank);
    };

    record(0);
    for (std::size_t it = 1; it <= config.n_iterations; ++it) {
        GradientTables g;
        if (config.negative_samples > 0) {
            const auto drawn = draw_zero_terms(p, config, state.rng);
            g = combine_sparse(sparse_parts_impl(p, bank, config, drawn, clamps), p, bank, config);
        } else if (config.minibatch_size && *config.minibatch_size < p.terms().size()) {
            const auto s = draw_minibatch(p, config, state.rng);
            g = minibatch_impl(p, bank, config, s, clamps);
        } else {
            g = full_gradient_impl(p, bank, config, clamps);
        }
        adagrad_step(g, state, bank, config);
        check_finite(bank, it);
        const bool last = it == config.n_iterations;
        if (last || (config.log_interval > 0 && it % config.log_interval == 0)) record(it);
    }
    return result;
}

TrainResult train(const Problem& p, std::size_t k, const TrainConfig& config, const TrainObserver& observer) {
    EmbeddingBank init = initialize_bank(p.n_param_rows(), k, p.family().needs_log_space(), p.sharing(), config);
    return train(p, std::move(init), config, observer);
}

void write_log(std::ostream& os, const std::vector<LogRecord>& log) {
    os << "iteration\tobjective\tclamp_events\twall_seconds\tmin_effective\n";
    os << std::setprecision(10);
    for (const auto& r : log) {
        os << r.iteration << '\t' << r.objective << '\t' << r.clamp_events << '\t' << r.wall_seconds << '\t'
           << r.min_effective << '\n';
    }
}

}  // namespace efemb
