#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "efemb/config.hpp"
#include "efemb/context.hpp"
#include "efemb/families.hpp"
#include "efemb/model.hpp"

namespace efemb {

/// String keys to dense ids in first-seen order.
class IdMap {
public:
    std::uint32_t intern(const std::string& key);
    std::optional<std::uint32_t> find(const std::string& key) const;
    const std::string& label(std::uint32_t id) const { return labels_.at(id); }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }

    static IdMap from_labels(std::vector<std::string> labels);
    /// "0", "1", ... for unlabeled data.
    static IdMap numbered(std::size_t n);

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

struct LabeledData {
    DataMatrix data;
    IdMap rows;
    IdMap cols;
};

/// Triplet text: a header line, then row_key, col_key, value per line. The
/// delimiter (tab or comma) is taken from the header. Keys get dense ids in
/// first-seen order; with `row_ids` given, rows are looked up there instead
/// and unknown keys raise CompatibilityError. Malformed lines and duplicate
/// keys raise DataError with the line number.
LabeledData read_triplets(std::istream& in, bool implicit_zero, const std::string& source = "triplets",
                          const IdMap* row_ids = nullptr);
LabeledData load_triplets(const std::string& path, bool implicit_zero, const IdMap* row_ids = nullptr);
/// Tab-delimited, stored entries in column-major order.
void write_triplets(std::ostream& os, const LabeledData& d);

/// Locations text: entity key and up to three coordinates per line (missing
/// axes are 0). An optional header is recognized by a non-numeric second
/// field. Every entity of `rows` must appear exactly once.
SpatialLayout read_locations(std::istream& in, const IdMap& rows, std::size_t k,
                             const std::string& source = "locations");
SpatialLayout load_locations(const std::string& path, const IdMap& rows, std::size_t k);
void write_locations(std::ostream& os, const SpatialLayout& layout, const IdMap& rows);

/// One sentence length per line.
std::vector<std::size_t> read_sentence_lengths(std::istream& in, const std::string& source = "sentences");
std::vector<std::size_t> load_sentence_lengths(const std::string& path);

/// Corpus rows are positions: row keys must be the integers 0..P-1, in any
/// order in the file. Returns the data with row id == position.
LabeledData order_positions(const LabeledData& d);

/// Applies lag, shift-and-clamp and the min-count filters in that order.
LabeledData preprocess(LabeledData d, const Preprocess& p);

struct ModelFile {
    FamilySpec family;
    SharingScheme sharing = SharingScheme::PerRow;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string context;  // e.g. "knn:k=5", "basket", "window:w=2"
    EmbeddingBank bank;
    std::vector<std::string> labels;  // one per bank row
};

inline constexpr int kModelFormatVersion = 1;

/// Text model format: "key value" header lines, a "rows" marker, then one
/// tab-delimited line per bank row: label, rho_1..rho_K, alpha_1..alpha_K
/// (stored values, %.17g). Reading back is bit-exact.
void write_model(std::ostream& os, const ModelFile& m);
ModelFile read_model(std::istream& in, const std::string& source = "model");
void save_model(const std::string& path, const ModelFile& m);
ModelFile load_model(const std::string& path);

/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::string& path, const std::function<void(std::ostream&)>& body);

}  // namespace efemb
