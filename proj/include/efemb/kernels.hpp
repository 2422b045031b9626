#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "efemb/context.hpp"
#include "efemb/families.hpp"
#include "efemb/model.hpp"

namespace efemb {

/// One data term of the objective, compiled against its context.
struct Term {
    DataIndex index;
    double x = 0.0;
    std::uint32_t rho_row = 0;
    std::uint32_t ctx_begin = 0;  // into Problem::context_entries()
    std::uint32_t ctx_end = 0;
    std::uint32_t ctx_size = 0;   // |c_i| after dropping missing members
    double ctx_scale = 1.0;       // 1/|c_i| for ContextMean links, else 1
};

/// A present context member: its alpha row and observed value. Zero-valued
/// members are dropped (they add nothing to the sum) but still count toward
/// |c_i|.
struct ContextEntry {
    std::uint32_t alpha_row;
    double x;
};

/// Data, context, family and sharing flattened into a term list for the
/// gradient kernels.
///
/// Terms are every grid cell for implicit-zero data and stored cells
/// otherwise; categorical data contributes one term per position. Under a
/// ContextMean link, terms with an empty context are excluded and counted.
class Problem {
public:
    static Problem build(const DataMatrix& data, const ContextMap& ctx, const FamilySpec& family,
                         SharingScheme sharing);

    const FamilySpec& family() const { return family_; }
    SharingScheme sharing() const { return sharing_; }
    std::size_t n_param_rows() const { return n_param_rows_; }

    std::span<const Term> terms() const { return terms_; }
    std::span<const ContextEntry> context(const Term& t) const {
        return {entries_.data() + t.ctx_begin, t.ctx_end - t.ctx_begin};
    }
    /// Positions in terms() holding x != 0 and x == 0 respectively.
    std::span<const std::uint32_t> nonzero_terms() const { return nonzero_; }
    std::span<const std::uint32_t> zero_terms() const { return zeros_; }
    std::size_t excluded() const { return excluded_; }

private:
    FamilySpec family_;
    SharingScheme sharing_ = SharingScheme::PerRow;
    std::size_t n_param_rows_ = 0;
    std::vector<Term> terms_;
    std::vector<ContextEntry> entries_;
    std::vector<std::uint32_t> nonzero_;
    std::vector<std::uint32_t> zeros_;
    std::size_t excluded_ = 0;
};

/// A term position and the weight its contribution is multiplied by.
struct WeightedTerm {
    std::uint32_t term;
    double weight;
};

struct ClampCounters {
    std::uint64_t events = 0;  // Poisson eta clamps or additive rate floors
};

/// Effective parameter tables (exp of stored values on log-space banks).
/// In Tied sharing the alpha table aliases rho.
struct EffectiveParams {
    std::vector<double> rho;
    std::vector<double> alpha;
    std::size_t k = 0;

    EffectiveParams(const EmbeddingBank& bank, SharingScheme sharing);
};

/// Linear predictor s_i = rho[i]^T (scaled context sum) for one term.
double linear_predictor(const Problem& p, const Term& t, const EffectiveParams& eff);

// Data-term gradient kernels: accumulate sum_w w * d log p(x_i)/d theta over
// the listed terms into `out`, in effective-parameter coordinates (no chain
// rule, no regularizer). Returns the weighted log-likelihood of the listed
// terms. The parallel kernel uses per-thread tables merged in thread order,
// so its result is reproducible for a fixed thread count.

double accumulate_serial(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                         GradientTables& out, ClampCounters& clamps);

double accumulate_parallel(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                           GradientTables& out, ClampCounters& clamps, int threads = 0);

/// Weighted log-likelihood only.
double loglik_serial(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                     ClampCounters& clamps);
double loglik_parallel(const Problem& p, const EffectiveParams& eff, std::span<const WeightedTerm> terms,
                       ClampCounters& clamps, int threads = 0);

/// Maps effective-coordinate data gradients to stored coordinates: chain rule
/// through exp on log-space banks, folding alpha into rho for Tied sharing.
void finish_data_gradient(GradientTables& g, const EmbeddingBank& bank, const EffectiveParams& eff,
                          SharingScheme sharing);

}  // namespace efemb
