#include "efemb/pipeline.hpp"

#include <cmath>
#include <limits>

#include "efemb/error.hpp"

namespace efemb {

ContextDescriptor parse_context_descriptor(const std::string& s) {
    auto param = [&](const std::string& prefix) -> std::optional<std::size_t> {
        if (s.rfind(prefix, 0) != 0) return std::nullopt;
        const std::string v = s.substr(prefix.size());
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
            throw DataError("bad context descriptor '" + s + "'");
        }
        return static_cast<std::size_t>(std::stoull(v));
    };
    if (s == "basket") return {ContextKind::Basket, 0};
    if (auto k = param("knn:k=")) return {ContextKind::Knn, *k};
    if (auto w = param("window:w=")) return {ContextKind::Window, *w};
    throw DataError("unknown context descriptor '" + s + "'");
}

ContextMap build_context(const ContextDescriptor& desc, const DataMatrix& data, const SpatialLayout* layout,
                         std::span<const std::size_t> sentences) {
    switch (desc.kind) {
    case ContextKind::Knn: {
        if (!layout) throw ConfigError("k-NN contexts need a locations file");
        SpatialLayout l = *layout;
        l.k = desc.param;
        return build_knn_context(l, data);
    }
    case ContextKind::Basket:
        return build_basket_context(data);
    case ContextKind::Window: {
        std::vector<std::size_t> lengths(sentences.begin(), sentences.end());
        if (lengths.empty()) lengths.push_back(data.n_rows());
        std::size_t total = 0;
        for (std::size_t l : lengths) total += l;
        if (total != data.n_rows()) {
            throw DataError("sentence lengths cover " + std::to_string(total) + " positions, corpus has " +
                            std::to_string(data.n_rows()));
        }
        return expand_text_context(build_window_context(lengths, WindowSpec{desc.param}), data);
    }
    }
    throw ConfigError("unknown context kind");
}

LabeledData labeled_part(const LabeledData& full, const SplitPart& part) {
    LabeledData out;
    out.rows = full.rows;
    for (std::uint32_t c : part.source_cols) out.cols.intern(full.cols.label(c));
    out.data = part.data;
    return out;
}

double validation_score(const FamilySpec& family, SharingScheme sharing, const EmbeddingBank& bank,
                        const DataMatrix& valid, const ContextMap& valid_ctx) {
    switch (family.family) {
    case Family::Gaussian:
    case Family::NonnegGaussian:
        return -leave_one_out_mse(valid, valid_ctx, bank, family, sharing).estimate;
    case Family::Poisson:
    case Family::AdditivePoisson:
        return normalized_predictive_ll(valid, valid_ctx, bank, family, sharing).estimate;
    default:
        throw ConfigError("no validation protocol for the " + std::string(to_string(family.family)) + " family");
    }
}

FitResult fit_model(const RunConfig& cfg, const LabeledData& train, const ContextMap& train_ctx,
                    const DataMatrix* valid, const ContextMap* valid_ctx, const TrainObserver& observer) {
    cfg.validate();
    FamilySpec family = cfg.family;
    if (family.family == Family::Categorical) family.vocab_size = train.data.n_cols();
    const Problem p = Problem::build(train.data, train_ctx, family, cfg.sharing);
    if (cfg.step_sizes.size() > 1 && (!valid || !valid_ctx)) {
        throw ConfigError("key 'step_sizes': a step-size grid needs a validation split");
    }

    FitResult best;
    double best_score = -std::numeric_limits<double>::infinity();
    bool have = false;
    for (double step : cfg.step_sizes) {
        TrainConfig tc = cfg.train;
        tc.step_size = step;
        TrainResult r = efemb::train(p, cfg.k, tc, observer);
        double score = std::numeric_limits<double>::quiet_NaN();
        if (cfg.step_sizes.size() > 1) {
            score = validation_score(family, cfg.sharing, r.bank, *valid, *valid_ctx);
        }
        best.grid.push_back({step, score});
        if (!have || score > best_score) {
            have = true;
            best_score = std::isnan(score) ? best_score : score;
            best.model.bank = std::move(r.bank);
            best.log = std::move(r.log);
            best.step_size = step;
        }
    }
    best.model.family = family;
    best.model.sharing = cfg.sharing;
    best.model.seed = cfg.train.seed;
    best.model.config_digest = cfg.digest();
    best.model.context = cfg.context_descriptor();
    best.model.labels = cfg.sharing == SharingScheme::Global ? train.cols.labels() : train.rows.labels();
    return best;
}

}  // namespace efemb
