#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace efemb {

class ContextMap;

/// Position of one scalar observation: row entity n, column occasion t.
struct DataIndex {
    std::uint32_t row = 0;
    std::uint32_t col = 0;

    friend bool operator==(DataIndex, DataIndex) = default;
    friend auto operator<=>(DataIndex, DataIndex) = default;
};

/// Sparse N x T observation matrix.
///
/// With `implicit_zero` set, absent entries read as 0 (count and binary data).
/// Otherwise absent entries are missing and take no part in any objective.
class DataMatrix {
public:
    struct Entry {
        std::uint32_t row;
        double value;
    };

    DataMatrix() = default;
    DataMatrix(std::size_t n_rows, std::size_t n_cols, bool implicit_zero);

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return n_cols_; }
    bool implicit_zero() const { return implicit_zero_; }
    std::size_t n_stored() const { return n_stored_; }

    /// Inserts a value. Duplicate keys and out-of-range indices throw.
    void set(DataIndex i, double value);

    bool contains(DataIndex i) const;
    /// Stored value, 0 for absent implicit-zero entries, nullopt when missing.
    std::optional<double> value(DataIndex i) const;

    /// Stored entries of column t, sorted by row.
    std::span<const Entry> column(std::size_t t) const { return columns_.at(t); }

    bool valid(DataIndex i) const { return i.row < n_rows_ && i.col < n_cols_; }

    template <class Fn>
    void for_each(Fn&& fn) const {
        for (std::size_t t = 0; t < n_cols_; ++t) {
            for (const auto& e : columns_[t]) fn(DataIndex{e.row, static_cast<std::uint32_t>(t)}, e.value);
        }
    }

private:
    std::size_t n_rows_ = 0;
    std::size_t n_cols_ = 0;
    bool implicit_zero_ = false;
    std::size_t n_stored_ = 0;
    std::vector<std::vector<Entry>> columns_;
};

/// How data indices map onto parameter rows.
///   PerRow: rho[i] = rho_n, alpha[i] = alpha_n
///   Global: rho[i] = rho_v, alpha[i] = alpha_v, v the column (vocabulary term)
///   Tied:   PerRow mapping with alpha[i] = rho[i]
enum class SharingScheme { PerRow, Global, Tied };

inline std::uint32_t param_row(DataIndex i, SharingScheme s) {
    return s == SharingScheme::Global ? i.col : i.row;
}

/// Link applied to the context-weighted inner product. The ContextMean
/// variants divide the context sum by |c_i| before applying the base link.
enum class LinkSpec { Identity, Log, ContextMeanIdentity, ContextMeanLog };

inline bool is_context_mean(LinkSpec l) {
    return l == LinkSpec::ContextMeanIdentity || l == LinkSpec::ContextMeanLog;
}
inline bool is_log_link(LinkSpec l) { return l == LinkSpec::Log || l == LinkSpec::ContextMeanLog; }

/// Embedding (rho) and context (alpha) vectors, row-major N x K each.
/// With `log_space` the stored values are logarithms of the effective ones.
class EmbeddingBank {
public:
    EmbeddingBank() = default;
    EmbeddingBank(std::size_t n_rows, std::size_t k, bool log_space);

    std::size_t n_rows() const { return n_rows_; }
    std::size_t k() const { return k_; }
    bool log_space() const { return log_space_; }

    std::span<double> rho_row(std::size_t r);
    std::span<const double> rho_row(std::size_t r) const;
    std::span<double> alpha_row(std::size_t r);
    std::span<const double> alpha_row(std::size_t r) const;

    std::vector<double>& rho() { return rho_; }
    const std::vector<double>& rho() const { return rho_; }
    std::vector<double>& alpha() { return alpha_; }
    const std::vector<double>& alpha() const { return alpha_; }

    double effective(double stored) const { return log_space_ ? std::exp(stored) : stored; }
    std::vector<double> effective_rho() const;
    std::vector<double> effective_alpha() const;

    bool all_finite() const;

    friend bool operator==(const EmbeddingBank&, const EmbeddingBank&) = default;

private:
    std::size_t n_rows_ = 0;
    std::size_t k_ = 0;
    bool log_space_ = false;
    std::vector<double> rho_;
    std::vector<double> alpha_;
};

/// Gradient (or any per-coordinate quantity) shaped like an EmbeddingBank.
struct GradientTables {
    std::size_t n_rows = 0;
    std::size_t k = 0;
    std::vector<double> rho;
    std::vector<double> alpha;

    GradientTables() = default;
    GradientTables(std::size_t rows, std::size_t k_)
        : n_rows(rows), k(k_), rho(rows * k_, 0.0), alpha(rows * k_, 0.0) {}
    explicit GradientTables(const EmbeddingBank& b) : GradientTables(b.n_rows(), b.k()) {}

    GradientTables& operator+=(const GradientTables& o);
    GradientTables& operator*=(double s);
    double max_abs() const;
};

/// Parameter rows resolved for one data index. Values are stored values;
/// use rho_at/alpha_at for effective (exponentiated when log_space) ones.
struct ParamView {
    std::span<const double> rho;
    std::span<const double> alpha;
    bool log_space = false;

    double rho_at(std::size_t k) const { return log_space ? std::exp(rho[k]) : rho[k]; }
    double alpha_at(std::size_t k) const { return log_space ? std::exp(alpha[k]) : alpha[k]; }
};

/// Rows used for index i under `scheme`. Throws IndexError when the mapped
/// row is outside the bank.
ParamView resolve_params(DataIndex i, SharingScheme scheme, const EmbeddingBank& bank);

/// f(rho[i]^T sum_{j in c_i} alpha[j] x_j). Missing context members are
/// skipped. An empty context yields f(0) for Identity/Log and throws
/// DegenerateContextError for the ContextMean links.
double natural_parameter(DataIndex i, const DataMatrix& data, const ContextMap& ctx,
                         const EmbeddingBank& bank, SharingScheme scheme, LinkSpec link);

}  // namespace efemb
