#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "efemb/context.hpp"
#include "efemb/families.hpp"
#include "efemb/model.hpp"

namespace efemb {

struct EvalReport {
    std::string metric;
    double estimate = 0.0;
    double std_error = 0.0;  // sample sd / sqrt(n_entries)
    std::size_t n_entries = 0;
    std::size_t excluded = 0;
};

/// Mean and standard error of per-entry scores.
EvalReport summarize(std::string metric, std::span<const double> scores, std::size_t excluded);

/// Tab-delimited: metric, estimate, stderr, n, excluded.
void write_report(std::ostream& os, const EvalReport& r, bool header = true);

/// Gaussian families. Each stored test entry is predicted by its conditional
/// mean given the observed values of its context members at the same column.
/// Entries whose context has no observed member are excluded.
EvalReport leave_one_out_mse(const DataMatrix& test, const ContextMap& ctx, const EmbeddingBank& bank,
                             const FamilySpec& family, SharingScheme sharing = SharingScheme::PerRow);

/// As leave_one_out_mse, but rows are shuffled into `folds` groups and each
/// entry is predicted without the members of its own fold.
EvalReport leave_fraction_out_mse(const DataMatrix& test, const ContextMap& ctx, const EmbeddingBank& bank,
                                  const FamilySpec& family, SharingScheme sharing = SharingScheme::PerRow,
                                  std::size_t folds = 4, std::uint64_t seed = 1);

/// Row -> fold assignment used by leave_fraction_out_mse.
std::vector<std::uint32_t> assign_folds(std::size_t n_rows, std::size_t folds, std::uint64_t seed);

/// Poisson mean of every row at column t given that row's context; nullopt
/// entries are rows with no usable context under a ContextMean link.
std::vector<std::optional<double>> column_means(const DataMatrix& data, const ContextMap& ctx,
                                                const EmbeddingBank& bank, const FamilySpec& family,
                                                SharingScheme sharing, std::size_t t);

/// Poisson families. Each nonzero test entry (n,t) scores
/// log(mu_(n,t) / sum_m mu_(m,t)) over all N rows. Entries without a usable
/// context or with zero total mean are skipped and counted.
EvalReport normalized_predictive_ll(const DataMatrix& test, const ContextMap& ctx, const EmbeddingBank& bank,
                                    const FamilySpec& family, SharingScheme sharing = SharingScheme::PerRow);

/// Item-popularity baseline: each nonzero test entry scores
/// log((c_n + 1) / sum_m (c_m + 1)), c_n the number of training columns
/// containing row n.
EvalReport popularity_predictive_ll(const DataMatrix& train, const DataMatrix& test);

/// MSE of predicting 0 for every stored test entry with an observed context member.
EvalReport zero_predictor_mse(const DataMatrix& test, const ContextMap& ctx);

struct ColumnSplit {
    double train = 1.0;
    double valid = 0.0;
    double test = 0.0;
};

struct RatingHoldout {
    double test = 0.2;
    double valid = 0.0;  // fraction of nonzeros
};

struct SplitSpec {
    enum class Variant { Column, Rating } variant = Variant::Column;
    ColumnSplit columns;
    RatingHoldout ratings;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SplitPart {
    DataMatrix data;
    std::vector<std::uint32_t> source_cols;  // column of the input each column came from
};

struct Split {
    SplitPart train;
    SplitPart valid;
    SplitPart test;
    std::size_t dropped_columns = 0;  // validation/test columns under two distinct items
    std::size_t dropped_entries = 0;
};

/// Column splits assign whole columns (floor of each held-out fraction, the
/// remainder to training) and keep columns in their original order. Rating
/// holdouts assign individual nonzero entries and keep the input shape. On
/// implicit-zero data, held-out columns with fewer than two distinct nonzero
/// items are dropped. Throws ConfigError when a requested part comes out empty.
Split make_split(const DataMatrix& data, const SplitSpec& spec);

}  // namespace efemb
