#include "efemb/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <unistd.h>

#include "efemb/error.hpp"

namespace efemb {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, delim)) out.push_back(trim(field));
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::string s = line;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::stringstream ss(s);
    std::vector<std::string> out;
    std::string f;
    while (ss >> f) out.push_back(f);
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return v;
}

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line) + ": "; }

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::uint32_t IdMap::intern(const std::string& key) {
    auto [it, inserted] = index_.emplace(key, static_cast<std::uint32_t>(labels_.size()));
    if (inserted) labels_.push_back(key);
    return it->second;
}

std::optional<std::uint32_t> IdMap::find(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

IdMap IdMap::from_labels(std::vector<std::string> labels) {
    IdMap m;
    for (auto& l : labels) {
        if (m.find(l)) throw DataError("duplicate label '" + l + "'");
        m.intern(l);
    }
    return m;
}

IdMap IdMap::numbered(std::size_t n) {
    IdMap m;
    for (std::size_t i = 0; i < n; ++i) m.intern(std::to_string(i));
    return m;
}

LabeledData read_triplets(std::istream& in, bool implicit_zero, const std::string& source, const IdMap* row_ids) {
    std::string line;
    std::size_t lineno = 0;
    char delim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        if (line.find('\t') != std::string::npos) delim = '\t';
        else if (line.find(',') != std::string::npos) delim = ',';
        else throw DataError(where(source, lineno) + "header must be tab- or comma-delimited");
        if (split(line, delim).size() != 3) throw DataError(where(source, lineno) + "header must have 3 fields");
        break;
    }
    if (!delim) throw DataError(source + ": empty triplet file");

    LabeledData d;
    if (row_ids) d.rows = *row_ids;
    struct Raw {
        std::uint32_t row, col;
        double value;
    };
    std::vector<Raw> raw;
    std::unordered_set<std::uint64_t> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split(line, delim);
        if (f.size() != 3 || f[0].empty() || f[1].empty()) {
            throw DataError(where(source, lineno) + "expected row, column, value");
        }
        const auto v = parse_number(f[2]);
        if (!v || !std::isfinite(*v)) throw DataError(where(source, lineno) + "bad value '" + f[2] + "'");
        std::uint32_t r;
        if (row_ids) {
            const auto id = row_ids->find(f[0]);
            if (!id) throw CompatibilityError(where(source, lineno) + "row '" + f[0] + "' is not in the model");
            r = *id;
        } else {
            r = d.rows.intern(f[0]);
        }
        const std::uint32_t c = d.cols.intern(f[1]);
        if (!seen.insert((static_cast<std::uint64_t>(r) << 32) | c).second) {
            throw DataError(where(source, lineno) + "duplicate entry (" + f[0] + ", " + f[1] + ")");
        }
        if (implicit_zero && *v == 0.0) continue;
        raw.push_back({r, c, *v});
    }
    std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return a.col != b.col ? a.col < b.col : a.row < b.row; });
    d.data = DataMatrix(d.rows.size(), d.cols.size(), implicit_zero);
    for (const auto& e : raw) d.data.set({e.row, e.col}, e.value);
    return d;
}

LabeledData load_triplets(const std::string& path, bool implicit_zero, const IdMap* row_ids) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read_triplets(in, implicit_zero, path, row_ids);
}

void write_triplets(std::ostream& os, const LabeledData& d) {
    os << "row\tcol\tvalue\n";
    d.data.for_each([&](DataIndex i, double v) {
        os << d.rows.label(i.row) << '\t' << d.cols.label(i.col) << '\t' << fmt17(v) << '\n';
    });
}

SpatialLayout read_locations(std::istream& in, const IdMap& rows, std::size_t k, const std::string& source) {
    SpatialLayout layout;
    layout.k = k;
    layout.positions.assign(rows.size(), {0.0, 0.0, 0.0});
    std::vector<bool> seen(rows.size(), false);
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        const auto f = split_ws(line);
        if (f.empty()) continue;
        if (first) {
            first = false;
            if (f.size() >= 2 && !parse_number(f[1])) continue;  // header
        }
        if (f.size() < 2 || f.size() > 4) throw DataError(where(source, lineno) + "expected id and 1-3 coordinates");
        const auto id = rows.find(f[0]);
        if (!id) continue;  // entity filtered out of the data
        if (seen[*id]) throw DataError(where(source, lineno) + "entity '" + f[0] + "' listed twice");
        seen[*id] = true;
        for (std::size_t a = 1; a < f.size(); ++a) {
            const auto v = parse_number(f[a]);
            if (!v || !std::isfinite(*v)) throw DataError(where(source, lineno) + "bad coordinate '" + f[a] + "'");
            layout.positions[*id][a - 1] = *v;
        }
    }
    for (std::size_t n = 0; n < rows.size(); ++n) {
        if (!seen[n]) throw DataError(source + ": no location for entity '" + rows.label(static_cast<std::uint32_t>(n)) + "'");
    }
    return layout;
}

SpatialLayout load_locations(const std::string& path, const IdMap& rows, std::size_t k) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read_locations(in, rows, k, path);
}

void write_locations(std::ostream& os, const SpatialLayout& layout, const IdMap& rows) {
    os << "id\tx\ty\tz\n";
    for (std::size_t n = 0; n < layout.positions.size(); ++n) {
        const auto& p = layout.positions[n];
        os << rows.label(static_cast<std::uint32_t>(n)) << '\t' << fmt17(p[0]) << '\t' << fmt17(p[1]) << '\t'
           << fmt17(p[2]) << '\n';
    }
}

std::vector<std::size_t> read_sentence_lengths(std::istream& in, const std::string& source) {
    std::vector<std::size_t> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty()) continue;
        if (s.find_first_not_of("0123456789") != std::string::npos) {
            throw DataError(where(source, lineno) + "expected a sentence length");
        }
        out.push_back(static_cast<std::size_t>(std::stoull(s)));
    }
    return out;
}

std::vector<std::size_t> load_sentence_lengths(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read_sentence_lengths(in, path);
}

namespace {

// Keeps the listed rows and columns (in the given order), relabeling both.
LabeledData select(const LabeledData& d, const std::vector<std::uint32_t>& rows, const std::vector<std::uint32_t>& cols) {
    std::vector<std::int64_t> row_new(d.data.n_rows(), -1);
    LabeledData out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        row_new[rows[i]] = static_cast<std::int64_t>(i);
        out.rows.intern(d.rows.label(rows[i]));
    }
    out.data = DataMatrix(rows.size(), cols.size(), d.data.implicit_zero());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.cols.intern(d.cols.label(cols[c]));
        for (const auto& e : d.data.column(cols[c])) {
            if (row_new[e.row] >= 0) {
                out.data.set({static_cast<std::uint32_t>(row_new[e.row]), static_cast<std::uint32_t>(c)}, e.value);
            }
        }
    }
    return out;
}

}  // namespace

LabeledData order_positions(const LabeledData& d) {
    const std::size_t P = d.rows.size();
    std::vector<std::uint32_t> pos(P);
    std::vector<bool> seen(P, false);
    for (std::size_t r = 0; r < P; ++r) {
        const std::string& key = d.rows.label(r);
        std::size_t v = 0;
        const auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), v);
        if (ec != std::errc() || end != key.data() + key.size() || v >= P || seen[v]) {
            throw DataError("corpus row key '" + key + "' is not a position in 0.." + std::to_string(P - 1));
        }
        seen[v] = true;
        pos[r] = static_cast<std::uint32_t>(v);
    }
    LabeledData out{DataMatrix(P, d.data.n_cols(), d.data.implicit_zero()), IdMap::numbered(P), d.cols};
    d.data.for_each([&](DataIndex i, double v) { out.data.set({pos[i.row], i.col}, v); });
    return out;
}

LabeledData preprocess(LabeledData d, const Preprocess& p) {
    if (p.lag) {
        const std::size_t T = d.data.n_cols();
        if (T < 2) throw DataError("lag needs at least two columns");
        LabeledData out;
        out.rows = d.rows;
        out.data = DataMatrix(d.data.n_rows(), T - 1, d.data.implicit_zero());
        for (std::size_t t = 1; t < T; ++t) {
            out.cols.intern(d.cols.label(static_cast<std::uint32_t>(t)));
            for (std::uint32_t n = 0; n < d.data.n_rows(); ++n) {
                const auto cur = d.data.value({n, static_cast<std::uint32_t>(t)});
                const auto prev = d.data.value({n, static_cast<std::uint32_t>(t - 1)});
                if (!cur || !prev) continue;
                const double v = *cur - *prev;
                if (d.data.implicit_zero() && v == 0.0) continue;
                out.data.set({n, static_cast<std::uint32_t>(t - 1)}, v);
            }
        }
        d = std::move(out);
    }
    if (p.shift_clamp) {
        DataMatrix m(d.data.n_rows(), d.data.n_cols(), d.data.implicit_zero());
        d.data.for_each([&](DataIndex i, double v) {
            const double s = std::max(v - 2.0, 0.0);
            if (s == 0.0 && m.implicit_zero()) return;
            m.set(i, s);
        });
        d.data = std::move(m);
    }
    if (p.min_row_count > 0) {
        std::vector<std::size_t> count(d.data.n_rows(), 0);
        d.data.for_each([&](DataIndex i, double v) { count[i.row] += v != 0.0; });
        std::vector<std::uint32_t> rows, cols(d.data.n_cols());
        for (std::uint32_t n = 0; n < count.size(); ++n) {
            if (count[n] >= p.min_row_count) rows.push_back(n);
        }
        for (std::uint32_t t = 0; t < cols.size(); ++t) cols[t] = t;
        d = select(d, rows, cols);
    }
    if (p.min_col_count > 0) {
        std::vector<std::uint32_t> rows(d.data.n_rows()), cols;
        for (std::uint32_t n = 0; n < rows.size(); ++n) rows[n] = n;
        for (std::uint32_t t = 0; t < d.data.n_cols(); ++t) {
            const auto col = d.data.column(t);
            const auto nz = std::count_if(col.begin(), col.end(), [](const auto& e) { return e.value != 0.0; });
            if (static_cast<std::size_t>(nz) >= p.min_col_count) cols.push_back(t);
        }
        d = select(d, rows, cols);
    }
    if (d.data.n_rows() == 0 || d.data.n_cols() == 0) throw DataError("preprocessing left no data");
    return d;
}

void write_model(std::ostream& os, const ModelFile& m) {
    const auto& b = m.bank;
    if (m.labels.size() != b.n_rows()) throw DataError("model needs one label per bank row");
    for (const auto& l : m.labels) {
        if (l.empty() || l.find_first_of("\t\n\r") != std::string::npos) {
            throw DataError("model labels must be nonempty and free of tabs and newlines");
        }
    }
    os << "efemb-model " << kModelFormatVersion << '\n';
    os << "family " << to_string(m.family.family) << '\n';
    os << "k " << b.k() << '\n';
    os << "n " << b.n_rows() << '\n';
    os << "sharing " << to_string(m.sharing) << '\n';
    os << "link " << to_string(m.family.link) << '\n';
    os << "log_space " << (b.log_space() ? 1 : 0) << '\n';
    os << "sigma2 " << fmt17(m.family.sigma2) << '\n';
    os << "vocab_size " << m.family.vocab_size << '\n';
    os << "seed " << m.seed << '\n';
    os << "config_digest " << (m.config_digest.empty() ? "-" : m.config_digest) << '\n';
    os << "context " << (m.context.empty() ? "-" : m.context) << '\n';
    os << "rows\n";
    for (std::size_t r = 0; r < b.n_rows(); ++r) {
        os << m.labels[r];
        for (double v : b.rho_row(r)) os << '\t' << fmt17(v);
        for (double v : b.alpha_row(r)) os << '\t' << fmt17(v);
        os << '\n';
    }
}

ModelFile read_model(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::string> header;
    bool rows_marker = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line == "rows") {
            rows_marker = true;
            break;
        }
        const auto sp = line.find(' ');
        if (sp == std::string::npos) throw DataError(where(source, lineno) + "expected 'key value'");
        const std::string key = line.substr(0, sp);
        if (!header.emplace(key, line.substr(sp + 1)).second) {
            throw DataError(where(source, lineno) + "duplicate header key '" + key + "'");
        }
    }
    if (!rows_marker) throw DataError(source + ": missing rows section");
    auto get = [&](const char* key) -> const std::string& {
        auto it = header.find(key);
        if (it == header.end()) throw DataError(source + ": missing header key '" + key + "'");
        return it->second;
    };
    if (get("efemb-model") != std::to_string(kModelFormatVersion)) {
        throw CompatibilityError(source + ": unsupported model format version " + get("efemb-model"));
    }
    auto count = [&](const char* key) {
        const std::string& v = get(key);
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
            throw DataError(source + ": header '" + key + "' is not a count");
        }
        return static_cast<std::size_t>(std::stoull(v));
    };
    ModelFile m;
    try {
        m.family.family = parse_family(get("family"));
        m.sharing = parse_sharing(get("sharing"));
        m.family.link = parse_link(get("link"));
    } catch (const ConfigError& e) {
        throw DataError(source + ": " + e.what());
    }
    const auto sigma2 = parse_number(get("sigma2"));
    if (!sigma2) throw DataError(source + ": bad sigma2");
    m.family.sigma2 = *sigma2;
    m.family.vocab_size = count("vocab_size");
    m.seed = count("seed");
    m.config_digest = get("config_digest") == "-" ? "" : get("config_digest");
    m.context = get("context") == "-" ? "" : get("context");
    const std::size_t K = count("k"), N = count("n");
    const std::string& ls = get("log_space");
    if (ls != "0" && ls != "1") throw DataError(source + ": log_space must be 0 or 1");
    m.bank = EmbeddingBank(N, K, ls == "1");
    m.labels.reserve(N);
    std::size_t r = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (r == N) throw DataError(where(source, lineno) + "more rows than the header declares");
        const auto f = split(line, '\t');
        if (f.size() != 1 + 2 * K) {
            throw DataError(where(source, lineno) + "expected " + std::to_string(1 + 2 * K) + " fields");
        }
        m.labels.push_back(f[0]);
        for (std::size_t d = 0; d < 2 * K; ++d) {
            const auto v = parse_number(f[1 + d]);
            if (!v) throw DataError(where(source, lineno) + "bad parameter '" + f[1 + d] + "'");
            (d < K ? m.bank.rho_row(r)[d] : m.bank.alpha_row(r)[d - K]) = *v;
        }
        ++r;
    }
    if (r != N) throw DataError(source + ": expected " + std::to_string(N) + " rows, found " + std::to_string(r));
    return m;
}

void write_file_atomic(const std::string& path, const std::function<void(std::ostream&)>& body) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot write " + tmp.string());
        body(os);
        os.flush();
        if (!os) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot move " + tmp.string() + " to " + path);
    }
}

void save_model(const std::string& path, const ModelFile& m) {
    write_file_atomic(path, [&](std::ostream& os) { write_model(os, m); });
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return read_model(in, path);
}

}  // namespace efemb
