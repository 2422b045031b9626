#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "efemb/config.hpp"
#include "efemb/evaluation.hpp"
#include "efemb/io.hpp"
#include "efemb/trainer.hpp"

namespace efemb {

struct ContextDescriptor {
    ContextKind kind = ContextKind::Knn;
    std::size_t param = 0;  // neighbors or window half-width
};

ContextDescriptor parse_context_descriptor(const std::string& s);

/// Builds the context map for `data`. k-NN contexts need `layout`; window
/// contexts use `sentences` (the whole corpus is one sentence when empty).
ContextMap build_context(const ContextDescriptor& desc, const DataMatrix& data, const SpatialLayout* layout,
                         std::span<const std::size_t> sentences = {});

/// Split part with the row labels of `full` and the column labels of the
/// columns it came from.
LabeledData labeled_part(const LabeledData& full, const SplitPart& part);

/// Validation score for a fitted bank, higher is better: minus the
/// leave-one-out MSE for Gaussian families, the normalized predictive
/// log-likelihood for Poisson families.
double validation_score(const FamilySpec& family, SharingScheme sharing, const EmbeddingBank& bank,
                        const DataMatrix& valid, const ContextMap& valid_ctx);

struct GridPoint {
    double step_size;
    double score;  // NaN when only one step size was run
};

struct FitResult {
    ModelFile model;
    std::vector<LogRecord> log;
    double step_size = 0.0;
    std::vector<GridPoint> grid;
};

/// Trains one model per step size in cfg.step_sizes and keeps the best on the
/// validation data (first step size wins ties). With one step size no
/// validation pass is made. Throws ConfigError for a grid without
/// validation data.
FitResult fit_model(const RunConfig& cfg, const LabeledData& train, const ContextMap& train_ctx,
                    const DataMatrix* valid = nullptr, const ContextMap* valid_ctx = nullptr,
                    const TrainObserver& observer = {});

}  // namespace efemb
