#include "efemb/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <omp.h>

#include "efemb/error.hpp"

namespace efemb {

Problem Problem::build(const DataMatrix& data, const ContextMap& ctx, const FamilySpec& family,
                       SharingScheme sharing) {
    family.validate();
    if (ctx.n_rows() != data.n_rows() || ctx.n_cols() != data.n_cols()) {
        throw DataError("context map is " + std::to_string(ctx.n_rows()) + " x " + std::to_string(ctx.n_cols()) +
                        " but data is " + std::to_string(data.n_rows()) + " x " + std::to_string(data.n_cols()));
    }
    const bool categorical = family.family == Family::Categorical;
    const bool text = categorical || family.family == Family::Bernoulli;
    if (text && sharing != SharingScheme::Global) throw ConfigError("text families use Global sharing");
    if (!text && sharing == SharingScheme::Global) throw ConfigError("Global sharing is for text families");

    Problem p;
    p.family_ = family;
    p.sharing_ = sharing;
    p.n_param_rows_ = sharing == SharingScheme::Global ? data.n_cols() : data.n_rows();
    if (categorical && family.vocab_size != data.n_cols()) {
        throw DataError("corpus has " + std::to_string(data.n_cols()) + " terms, model expects " +
                        std::to_string(family.vocab_size));
    }
    const bool mean_link = is_context_mean(family.link);

    auto add_term = [&](DataIndex i, double x) {
        check_support(x, family);
        Term t;
        t.index = i;
        t.x = x;
        t.rho_row = param_row(i, sharing);
        t.ctx_begin = static_cast<std::uint32_t>(p.entries_.size());
        std::size_t m = 0;
        for (DataIndex j : ctx.members(i)) {
            const auto xj = data.value(j);
            if (!xj) continue;
            ++m;
            if (*xj != 0.0) p.entries_.push_back({param_row(j, sharing), *xj});
        }
        t.ctx_end = static_cast<std::uint32_t>(p.entries_.size());
        t.ctx_size = static_cast<std::uint32_t>(m);
        if (mean_link) {
            if (m == 0) {
                p.entries_.resize(t.ctx_begin);
                ++p.excluded_;
                return;
            }
            t.ctx_scale = 1.0 / static_cast<double>(m);
        }
        const auto pos = static_cast<std::uint32_t>(p.terms_.size());
        (x != 0.0 ? p.nonzero_ : p.zeros_).push_back(pos);
        p.terms_.push_back(t);
    };

    if (categorical) {
        std::vector<std::int64_t> word(data.n_rows(), -1);
        data.for_each([&](DataIndex i, double v) {
            check_support(v, family);
            if (v == 0.0) return;
            if (word[i.row] >= 0) throw DataError("corpus position " + std::to_string(i.row) + " has two words");
            word[i.row] = i.col;
        });
        for (std::uint32_t n = 0; n < data.n_rows(); ++n) {
            if (word[n] >= 0) add_term({n, static_cast<std::uint32_t>(word[n])}, 1.0);
        }
    } else if (data.implicit_zero()) {
        for (std::uint32_t n = 0; n < data.n_rows(); ++n) {
            for (std::uint32_t t = 0; t < data.n_cols(); ++t) add_term({n, t}, *data.value({n, t}));
        }
    } else {
        std::vector<std::pair<DataIndex, double>> stored;
        stored.reserve(data.n_stored());
        data.for_each([&](DataIndex i, double v) { stored.emplace_back(i, v); });
        std::sort(stored.begin(), stored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [i, v] : stored) add_term(i, v);
    }
    if (p.terms_.size() > std::numeric_limits<std::uint32_t>::max()) throw DataError("too many terms");
    return p;
}

EffectiveParams::EffectiveParams(const EmbeddingBank& bank, SharingScheme sharing)
    : rho(bank.effective_rho()),
      alpha(sharing == SharingScheme::Tied ? rho : bank.effective_alpha()),
      k(bank.k()) {}

double linear_predictor(const Problem& p, const Term& t, const EffectiveParams& eff) {
    const std::size_t K = eff.k;
    const double* r = &eff.rho[static_cast<std::size_t>(t.rho_row) * K];
    double s = 0.0;
    for (const auto& e : p.context(t)) {
        const double* a = &eff.alpha[static_cast<std::size_t>(e.alpha_row) * K];
        double dot = 0.0;
        for (std::size_t d = 0; d < K; ++d) dot += r[d] * a[d];
        s += e.x * dot;
    }
    return s * t.ctx_scale;
}

namespace {

struct Scratch {
    std::vector<double> u, eta, h;
    explicit Scratch(std::size_t K, std::size_t D) : u(K), eta(D), h(K) {}
};

// One term's weighted contribution. `grad` may be null for likelihood-only passes.
double term_kernel(const Problem& p, const EffectiveParams& eff, const Term& t, double w, GradientTables* grad,
                   ClampCounters& clamps, Scratch& s) {
    const std::size_t K = eff.k;
    auto ctx = p.context(t);
    std::fill(s.u.begin(), s.u.end(), 0.0);
    for (const auto& e : ctx) {
        const double* a = &eff.alpha[static_cast<std::size_t>(e.alpha_row) * K];
        for (std::size_t d = 0; d < K; ++d) s.u[d] += e.x * a[d];
    }
    for (std::size_t d = 0; d < K; ++d) s.u[d] *= t.ctx_scale;

    if (p.family().family == Family::Categorical) {
        const std::size_t D = p.n_param_rows();
        for (std::size_t v = 0; v < D; ++v) {
            const double* r = &eff.rho[v * K];
            double e = 0.0;
            for (std::size_t d = 0; d < K; ++d) e += r[d] * s.u[d];
            s.eta[v] = e;
        }
        const double mx = *std::max_element(s.eta.begin(), s.eta.begin() + D);
        double z = 0.0;
        for (std::size_t v = 0; v < D; ++v) z += std::exp(s.eta[v] - mx);
        const double ll = s.eta[t.rho_row] - mx - std::log(z);
        if (grad) {
            std::fill(s.h.begin(), s.h.end(), 0.0);
            for (std::size_t v = 0; v < D; ++v) {
                const double resid = w * ((v == t.rho_row ? 1.0 : 0.0) - std::exp(s.eta[v] - mx) / z);
                double* gr = &grad->rho[v * K];
                const double* r = &eff.rho[v * K];
                for (std::size_t d = 0; d < K; ++d) {
                    gr[d] += resid * s.u[d];
                    s.h[d] += resid * r[d];
                }
            }
            for (const auto& e : ctx) {
                double* ga = &grad->alpha[static_cast<std::size_t>(e.alpha_row) * K];
                const double c = e.x * t.ctx_scale;
                for (std::size_t d = 0; d < K; ++d) ga[d] += c * s.h[d];
            }
        }
        return w * ll;
    }

    const double* r = &eff.rho[static_cast<std::size_t>(t.rho_row) * K];
    double lin = 0.0;
    for (std::size_t d = 0; d < K; ++d) lin += r[d] * s.u[d];
    const TermScore sc = score_term(t.x, lin, p.family());
    if (sc.clamped) ++clamps.events;
    if (grad) {
        const double g = w * sc.dlds;
        double* gr = &grad->rho[static_cast<std::size_t>(t.rho_row) * K];
        for (std::size_t d = 0; d < K; ++d) gr[d] += g * s.u[d];
        for (const auto& e : ctx) {
            double* ga = &grad->alpha[static_cast<std::size_t>(e.alpha_row) * K];
            const double c = g * e.x * t.ctx_scale;
            for (std::size_t d = 0; d < K; ++d) ga[d] += c * r[d];
        }
    }
    return w * sc.log_lik;
}

double run_serial(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                  GradientTables* out, ClampCounters& clamps) {
    Scratch s(eff.k, p.n_param_rows());
    const auto all = p.terms();
    double ll = 0.0;
    for (const auto& wt : terms) ll += term_kernel(p, eff, all[wt.term], wt.weight, out, clamps, s);
    return ll;
}

double run_parallel(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                    GradientTables* out, ClampCounters& clamps, int threads) {
    const int nt = threads > 0 ? threads : omp_get_max_threads();
    std::vector<GradientTables> priv(out ? nt : 0);
    std::vector<double> ll(nt, 0.0);
    std::vector<std::uint64_t> ev(nt, 0);
    const auto all = p.terms();
    const auto n = static_cast<std::ptrdiff_t>(terms.size());
    int used = 1;
#pragma omp parallel num_threads(nt)
    {
        const int tid = omp_get_thread_num();
#pragma omp single
        used = omp_get_num_threads();
        GradientTables* mine = nullptr;
        if (out) {
            priv[tid] = GradientTables(out->n_rows, out->k);
            mine = &priv[tid];
        }
        Scratch s(eff.k, p.n_param_rows());
        ClampCounters c;
        double acc = 0.0;
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            acc += term_kernel(p, eff, all[terms[i].term], terms[i].weight, mine, c, s);
        }
        ll[tid] = acc;
        ev[tid] = c.events;
        // Merge thread tables coordinate-wise, always in thread order.
        if (out) {
            const auto coords = static_cast<std::ptrdiff_t>(out->rho.size());
#pragma omp for schedule(static)
            for (std::ptrdiff_t j = 0; j < coords; ++j) {
                double r = 0.0, a = 0.0;
                for (int q = 0; q < used; ++q) {
                    r += priv[q].rho[j];
                    a += priv[q].alpha[j];
                }
                out->rho[j] += r;
                out->alpha[j] += a;
            }
        }
    }
    double total = 0.0;
    for (int q = 0; q < used; ++q) {
        total += ll[q];
        clamps.events += ev[q];
    }
    return total;
}

}  // namespace

double accumulate_serial(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                         GradientTables& out, ClampCounters& clamps) {
    return run_serial(p, eff, terms, &out, clamps);
}

double accumulate_parallel(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                           GradientTables& out, ClampCounters& clamps, int threads) {
    return run_parallel(p, eff, terms, &out, clamps, threads);
}

double loglik_serial(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                     ClampCounters& clamps) {
    return run_serial(p, eff, terms, nullptr, clamps);
}

double loglik_parallel(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                       ClampCounters& clamps, int threads) {
    return run_parallel(p, eff, terms, nullptr, clamps, threads);
}

void finish_data_gradient(GradientTables& g, const EmbeddingBank& bank, const EffectiveParams& eff,
                          SharingScheme sharing) {
    if (bank.log_space()) {
        for (std::size_t i = 0; i < g.rho.size(); ++i) {
            g.rho[i] *= eff.rho[i];
            g.alpha[i] *= eff.alpha[i];
        }
    }
    if (sharing == SharingScheme::Tied) {
        for (std::size_t i = 0; i < g.rho.size(); ++i) {
            g.rho[i] += g.alpha[i];
            g.alpha[i] = g.rho[i];
        }
    }
}

}  // namespace efemb
