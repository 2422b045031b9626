#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "efemb/evaluation.hpp"
#include "efemb/families.hpp"
#include "efemb/trainer.hpp"

namespace efemb {

enum class ContextKind { Knn, Basket, Window };

/// Ingestion transforms, applied in this order.
struct Preprocess {
    bool lag = false;                // columns become x_t - x_{t-1}; first column dropped
    bool shift_clamp = false;        // v -> max(v - 2, 0)
    std::size_t min_row_count = 0;   // drop rows with fewer nonzero entries
    std::size_t min_col_count = 0;   // then drop columns with fewer nonzero entries
};

/// Flat key=value run configuration. An `archetype` key (neuro,
/// neuro_nonneg, shopping, movies, text) loads a preset first; every other
/// key overrides it regardless of order.
struct RunConfig {
    std::string archetype;
    FamilySpec family;
    std::size_t k = 10;
    SharingScheme sharing = SharingScheme::PerRow;
    ContextKind context = ContextKind::Knn;
    std::size_t neighbors = 10;
    std::size_t window = 2;
    std::optional<bool> implicit_zero;  // default follows the family
    TrainConfig train;
    std::vector<double> step_sizes{0.01, 0.05, 0.1, 0.5};
    bool split_enabled = false;
    SplitSpec split;
    Preprocess preprocess;

    bool data_implicit_zero() const;
    /// Context descriptor stored in model files: "knn:k=5", "basket", "window:w=2".
    std::string context_descriptor() const;
    /// Every setting as sorted key=value lines; the digest hashes this text.
    std::string canonical() const;
    std::string digest() const;
    void validate() const;
};

/// Keys accepted by parse_config, sorted.
const std::vector<std::string>& config_keys();

RunConfig parse_config(std::istream& in, const std::string& source = "config");
RunConfig load_config(const std::string& path);

/// Applies one key; throws ConfigError naming the key on a bad value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
void apply_archetype(RunConfig& cfg, const std::string& name);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

std::string to_string(SharingScheme s);
SharingScheme parse_sharing(const std::string& s);
std::string to_string(LinkSpec l);
LinkSpec parse_link(const std::string& s);

}  // namespace efemb
