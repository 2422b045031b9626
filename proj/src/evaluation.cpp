#include "efemb/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "efemb/error.hpp"
#include "efemb/kernels.hpp"
#include "efemb/random.hpp"

namespace efemb {

EvalReport summarize(std::string metric, std::span<const double> scores, std::size_t excluded) {
    EvalReport r;
    r.metric = std::move(metric);
    r.n_entries = scores.size();
    r.excluded = excluded;
    if (scores.empty()) return r;
    const double n = static_cast<double>(scores.size());
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    r.estimate = mean;
    if (scores.size() > 1) {
        double ss = 0.0;
        for (double s : scores) ss += (s - mean) * (s - mean);
        r.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return r;
}

void write_report(std::ostream& os, const EvalReport& r, bool header) {
    if (header) os << "metric\testimate\tstderr\tn\texcluded\n";
    char buf[64];
    os << r.metric;
    std::snprintf(buf, sizeof buf, "\t%.10g", r.estimate);
    os << buf;
    std::snprintf(buf, sizeof buf, "\t%.10g", r.std_error);
    os << buf << '\t' << r.n_entries << '\t' << r.excluded << '\n';
}

namespace {

bool is_gaussian(Family f) { return f == Family::Gaussian || f == Family::NonnegGaussian; }
bool is_poisson(Family f) { return f == Family::Poisson || f == Family::AdditivePoisson; }

void require_rows(const DataMatrix& data, const EmbeddingBank& bank) {
    if (bank.n_rows() != data.n_rows()) {
        throw CompatibilityError("model has " + std::to_string(bank.n_rows()) + " rows, data has " +
                                 std::to_string(data.n_rows()));
    }
}

EvalReport squared_errors(std::string metric, const DataMatrix& test, const ContextMap& ctx,
                          const EmbeddingBank& bank, const FamilySpec& family, SharingScheme sharing) {
    if (!is_gaussian(family.family)) throw ConfigError("squared-error protocols need a Gaussian family");
    require_rows(test, bank);
    const Problem p = Problem::build(test, ctx, family, sharing);
    const EffectiveParams eff(bank, sharing);
    std::vector<double> err;
    err.reserve(p.terms().size());
    std::size_t excluded = p.excluded();
    for (const auto& t : p.terms()) {
        if (t.ctx_size == 0) {
            ++excluded;
            continue;
        }
        const double d = t.x - linear_predictor(p, t, eff);
        err.push_back(d * d);
    }
    return summarize(std::move(metric), err, excluded);
}

}  // namespace

EvalReport leave_one_out_mse(const DataMatrix& test, const ContextMap& ctx, const EmbeddingBank& bank,
                             const FamilySpec& family, SharingScheme sharing) {
    return squared_errors("loo_mse", test, ctx, bank, family, sharing);
}

std::vector<std::uint32_t> assign_folds(std::size_t n_rows, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("leave-fraction-out needs at least 2 folds");
    if (folds > n_rows) throw ConfigError("more folds than rows");
    std::vector<std::uint32_t> order(n_rows);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    shuffle(order, rng);
    std::vector<std::uint32_t> fold(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) fold[order[i]] = static_cast<std::uint32_t>(i % folds);
    return fold;
}

EvalReport leave_fraction_out_mse(const DataMatrix& test, const ContextMap& ctx, const EmbeddingBank& bank,
                                  const FamilySpec& family, SharingScheme sharing, std::size_t folds,
                                  std::uint64_t seed) {
    const auto fold = assign_folds(test.n_rows(), folds, seed);
    const ContextMap reduced =
        ctx.filtered([&](DataIndex owner, DataIndex member) { return fold[owner.row] != fold[member.row]; });
    return squared_errors("lfo_mse", test, reduced, bank, family, sharing);
}

EvalReport zero_predictor_mse(const DataMatrix& test, const ContextMap& ctx) {
    const EmbeddingBank zeros(test.n_rows(), 1, false);
    auto r = squared_errors("zero_mse", test, ctx, zeros, FamilySpec{}, SharingScheme::PerRow);
    return r;
}

std::vector<std::optional<double>> column_means(const DataMatrix& data, const ContextMap& ctx,
                                                const EmbeddingBank& bank, const FamilySpec& family,
                                                SharingScheme sharing, std::size_t t) {
    if (!is_poisson(family.family)) throw ConfigError("predictive likelihood needs a Poisson family");
    if (sharing == SharingScheme::Global) throw ConfigError("Global sharing is for text families");
    require_rows(data, bank);
    const EffectiveParams eff(bank, sharing);
    const std::size_t K = eff.k;
    const bool mean_link = is_context_mean(family.link);
    std::vector<std::optional<double>> mu(data.n_rows());
    std::vector<double> u(K);
    for (std::uint32_t m = 0; m < data.n_rows(); ++m) {
        const DataIndex i{m, static_cast<std::uint32_t>(t)};
        std::fill(u.begin(), u.end(), 0.0);
        std::size_t size = 0;
        for (DataIndex j : ctx.members(i)) {
            const auto xj = data.value(j);
            if (!xj) continue;
            ++size;
            const double* a = &eff.alpha[static_cast<std::size_t>(j.row) * K];
            for (std::size_t d = 0; d < K; ++d) u[d] += *xj * a[d];
        }
        if (mean_link) {
            if (size == 0) continue;
            for (double& v : u) v /= static_cast<double>(size);
        }
        const double* r = &eff.rho[static_cast<std::size_t>(m) * K];
        double s = 0.0;
        for (std::size_t d = 0; d < K; ++d) s += r[d] * u[d];
        if (family.family == Family::Poisson) {
            mu[m] = std::exp(std::clamp(s, -kPoissonEtaClamp, kPoissonEtaClamp));
        } else {
            mu[m] = std::max(s, kAdditiveRateFloor);
        }
    }
    return mu;
}

EvalReport normalized_predictive_ll(const DataMatrix& test, const ContextMap& ctx, const EmbeddingBank& bank,
                                    const FamilySpec& family, SharingScheme sharing) {
    std::vector<double> scores;
    std::size_t skipped = 0;
    for (std::size_t t = 0; t < test.n_cols(); ++t) {
        const auto col = test.column(t);
        if (std::none_of(col.begin(), col.end(), [](const auto& e) { return e.value != 0.0; })) continue;
        const auto mu = column_means(test, ctx, bank, family, sharing, t);
        double total = 0.0;
        for (const auto& m : mu) total += m.value_or(0.0);
        for (const auto& e : col) {
            if (e.value == 0.0) continue;
            if (!mu[e.row] || !(total > 0.0) || !(*mu[e.row] > 0.0)) {
                ++skipped;
                continue;
            }
            scores.push_back(std::log(*mu[e.row] / total));
        }
    }
    return summarize("normalized_ll", scores, skipped);
}

EvalReport popularity_predictive_ll(const DataMatrix& train, const DataMatrix& test) {
    if (train.n_rows() != test.n_rows()) throw CompatibilityError("train and test row counts differ");
    std::vector<double> count(train.n_rows(), 1.0);
    train.for_each([&](DataIndex i, double v) {
        if (v != 0.0) count[i.row] += 1.0;
    });
    const double total = std::accumulate(count.begin(), count.end(), 0.0);
    std::vector<double> scores;
    test.for_each([&](DataIndex i, double v) {
        if (v != 0.0) scores.push_back(std::log(count[i.row] / total));
    });
    return summarize("popularity_ll", scores, 0);
}

void SplitSpec::validate() const {
    auto frac = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (variant == Variant::Column) {
        if (!frac(columns.train) || !frac(columns.valid) || !frac(columns.test) ||
            columns.train + columns.valid + columns.test > 1.0 + 1e-12) {
            throw ConfigError("split fractions must lie in [0,1] and sum to at most 1");
        }
    } else if (!frac(ratings.test) || !frac(ratings.valid) || ratings.test + ratings.valid > 1.0 + 1e-12) {
        throw ConfigError("holdout fractions must lie in [0,1] and sum to at most 1");
    }
}

namespace {

// floor(f * n), guarded against products like 0.05 * 20 landing just under 1.
std::size_t floor_count(double f, std::size_t n) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
}

std::size_t distinct_nonzero(std::span<const DataMatrix::Entry> col) {
    std::size_t n = 0;
    for (const auto& e : col) n += e.value != 0.0;
    return n;
}

SplitPart gather_columns(const DataMatrix& data, std::vector<std::uint32_t> cols) {
    SplitPart part;
    std::sort(cols.begin(), cols.end());
    part.data = DataMatrix(data.n_rows(), cols.size(), data.implicit_zero());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        for (const auto& e : data.column(cols[c])) part.data.set({e.row, static_cast<std::uint32_t>(c)}, e.value);
    }
    part.source_cols = std::move(cols);
    return part;
}

}  // namespace

Split make_split(const DataMatrix& data, const SplitSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Split out;
    const std::size_t T = data.n_cols();

    if (spec.variant == SplitSpec::Variant::Column) {
        const auto n_valid = floor_count(spec.columns.valid, T);
        const auto n_test = floor_count(spec.columns.test, T);
        std::vector<std::uint32_t> order(T);
        std::iota(order.begin(), order.end(), 0u);
        shuffle(order, rng);
        std::vector<std::uint32_t> test(order.begin(), order.begin() + n_test);
        std::vector<std::uint32_t> valid(order.begin() + n_test, order.begin() + n_test + n_valid);
        std::vector<std::uint32_t> train(order.begin() + n_test + n_valid, order.end());
        if (data.implicit_zero()) {
            auto drop = [&](std::vector<std::uint32_t>& cols) {
                std::erase_if(cols, [&](std::uint32_t c) {
                    if (distinct_nonzero(data.column(c)) >= 2) return false;
                    ++out.dropped_columns;
                    out.dropped_entries += data.column(c).size();
                    return true;
                });
            };
            drop(test);
            drop(valid);
        }
        if (train.empty()) throw ConfigError("split leaves no training columns");
        if (spec.columns.valid > 0.0 && valid.empty()) throw ConfigError("split leaves no validation columns");
        if (spec.columns.test > 0.0 && test.empty()) throw ConfigError("split leaves no test columns");
        out.train = gather_columns(data, std::move(train));
        out.valid = gather_columns(data, std::move(valid));
        out.test = gather_columns(data, std::move(test));
        return out;
    }

    // Rating holdout over nonzero entries, in row-major order before shuffling.
    std::vector<std::pair<DataIndex, double>> nonzero;
    std::vector<std::pair<DataIndex, double>> rest;
    data.for_each([&](DataIndex i, double v) { (v != 0.0 ? nonzero : rest).emplace_back(i, v); });
    std::sort(nonzero.begin(), nonzero.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    shuffle(nonzero, rng);
    const auto n_test = floor_count(spec.ratings.test, nonzero.size());
    const auto n_valid = floor_count(spec.ratings.valid, nonzero.size());

    std::vector<std::uint32_t> identity(T);
    std::iota(identity.begin(), identity.end(), 0u);
    for (SplitPart* part : {&out.train, &out.valid, &out.test}) {
        part->data = DataMatrix(data.n_rows(), T, data.implicit_zero());
        part->source_cols = identity;
    }
    auto fill = [&](SplitPart& part, std::size_t begin, std::size_t end, bool enforce_minimum) {
        std::vector<std::size_t> per_col(T, 0);
        for (std::size_t k = begin; k < end; ++k) ++per_col[nonzero[k].first.col];
        for (std::size_t k = begin; k < end; ++k) {
            const auto& [i, v] = nonzero[k];
            if (enforce_minimum && data.implicit_zero() && per_col[i.col] < 2) {
                ++out.dropped_entries;
                continue;
            }
            part.data.set(i, v);
        }
        if (enforce_minimum && data.implicit_zero()) {
            for (std::size_t c = 0; c < T; ++c) out.dropped_columns += per_col[c] == 1;
        }
    };
    fill(out.test, 0, n_test, true);
    fill(out.valid, n_test, n_test + n_valid, true);
    fill(out.train, n_test + n_valid, nonzero.size(), false);
    for (const auto& [i, v] : rest) out.train.data.set(i, v);
    if (out.train.data.n_stored() == 0) throw ConfigError("split leaves no training entries");
    if (spec.ratings.valid > 0.0 && out.valid.data.n_stored() == 0) {
        throw ConfigError("split leaves no validation entries");
    }
    if (spec.ratings.test > 0.0 && out.test.data.n_stored() == 0) throw ConfigError("split leaves no test entries");
    return out;
}

}  // namespace efemb
