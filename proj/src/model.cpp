#include "efemb/model.hpp"

#include <algorithm>
#include <string>

#include "efemb/context.hpp"
#include "efemb/error.hpp"

namespace efemb {

DataMatrix::DataMatrix(std::size_t n_rows, std::size_t n_cols, bool implicit_zero)
    : n_rows_(n_rows), n_cols_(n_cols), implicit_zero_(implicit_zero), columns_(n_cols) {}

void DataMatrix::set(DataIndex i, double value) {
    if (!valid(i)) {
        throw IndexError("data index (" + std::to_string(i.row) + ", " + std::to_string(i.col) +
                         ") outside " + std::to_string(n_rows_) + " x " + std::to_string(n_cols_));
    }
    auto& col = columns_[i.col];
    auto it = std::lower_bound(col.begin(), col.end(), i.row,
                               [](const Entry& e, std::uint32_t r) { return e.row < r; });
    if (it != col.end() && it->row == i.row) {
        throw DataError("duplicate entry (" + std::to_string(i.row) + ", " + std::to_string(i.col) + ")");
    }
    col.insert(it, Entry{i.row, value});
    ++n_stored_;
}

bool DataMatrix::contains(DataIndex i) const {
    if (!valid(i)) return false;
    const auto& col = columns_[i.col];
    auto it = std::lower_bound(col.begin(), col.end(), i.row,
                               [](const Entry& e, std::uint32_t r) { return e.row < r; });
    return it != col.end() && it->row == i.row;
}

std::optional<double> DataMatrix::value(DataIndex i) const {
    if (!valid(i)) throw IndexError("data index outside matrix");
    const auto& col = columns_[i.col];
    auto it = std::lower_bound(col.begin(), col.end(), i.row,
                               [](const Entry& e, std::uint32_t r) { return e.row < r; });
    if (it != col.end() && it->row == i.row) return it->value;
    if (implicit_zero_) return 0.0;
    return std::nullopt;
}

EmbeddingBank::EmbeddingBank(std::size_t n_rows, std::size_t k, bool log_space)
    : n_rows_(n_rows), k_(k), log_space_(log_space), rho_(n_rows * k, 0.0), alpha_(n_rows * k, 0.0) {}

std::span<double> EmbeddingBank::rho_row(std::size_t r) { return {rho_.data() + r * k_, k_}; }
std::span<const double> EmbeddingBank::rho_row(std::size_t r) const { return {rho_.data() + r * k_, k_}; }
std::span<double> EmbeddingBank::alpha_row(std::size_t r) { return {alpha_.data() + r * k_, k_}; }
std::span<const double> EmbeddingBank::alpha_row(std::size_t r) const {
    return {alpha_.data() + r * k_, k_};
}

std::vector<double> EmbeddingBank::effective_rho() const {
    if (!log_space_) return rho_;
    std::vector<double> out(rho_.size());
    std::transform(rho_.begin(), rho_.end(), out.begin(), [](double v) { return std::exp(v); });
    return out;
}

std::vector<double> EmbeddingBank::effective_alpha() const {
    if (!log_space_) return alpha_;
    std::vector<double> out(alpha_.size());
    std::transform(alpha_.begin(), alpha_.end(), out.begin(), [](double v) { return std::exp(v); });
    return out;
}

bool EmbeddingBank::all_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(rho_.begin(), rho_.end(), finite) && std::all_of(alpha_.begin(), alpha_.end(), finite);
}

GradientTables& GradientTables::operator+=(const GradientTables& o) {
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += o.rho[i];
    for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] += o.alpha[i];
    return *this;
}

GradientTables& GradientTables::operator*=(double s) {
    for (auto& v : rho) v *= s;
    for (auto& v : alpha) v *= s;
    return *this;
}

double GradientTables::max_abs() const {
    double m = 0.0;
    for (double v : rho) m = std::max(m, std::abs(v));
    for (double v : alpha) m = std::max(m, std::abs(v));
    return m;
}

ParamView resolve_params(DataIndex i, SharingScheme scheme, const EmbeddingBank& bank) {
    const std::uint32_t r = param_row(i, scheme);
    if (r >= bank.n_rows()) {
        throw IndexError("parameter row " + std::to_string(r) + " outside bank of " +
                         std::to_string(bank.n_rows()) + " rows");
    }
    ParamView v;
    v.log_space = bank.log_space();
    v.rho = bank.rho_row(r);
    v.alpha = scheme == SharingScheme::Tied ? bank.rho_row(r) : bank.alpha_row(r);
    return v;
}

double natural_parameter(DataIndex i, const DataMatrix& data, const ContextMap& ctx, const EmbeddingBank& bank,
                         SharingScheme scheme, LinkSpec link) {
    if (!data.valid(i)) throw IndexError("data index outside matrix");
    const ParamView own = resolve_params(i, scheme, bank);
    const std::size_t k = bank.k();
    std::vector<double> sum(k, 0.0);
    std::size_t n_ctx = 0;
    for (DataIndex j : ctx.members(i)) {
        auto x = data.value(j);
        if (!x) continue;
        ++n_ctx;
        const ParamView other = resolve_params(j, scheme, bank);
        for (std::size_t d = 0; d < k; ++d) sum[d] += other.alpha_at(d) * *x;
    }
    double scale = 1.0;
    if (is_context_mean(link)) {
        if (n_ctx == 0) throw DegenerateContextError("empty context under a context-mean link");
        scale = 1.0 / static_cast<double>(n_ctx);
    }
    double s = 0.0;
    for (std::size_t d = 0; d < k; ++d) s += own.rho_at(d) * sum[d];
    s *= scale;
    return is_log_link(link) ? std::log(s) : s;
}

}  // namespace efemb
