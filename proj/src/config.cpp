#include "efemb/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "efemb/error.hpp"

namespace efemb {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
    throw ConfigError("key '" + key + "': " + why + " (got '" + value + "')");
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        bad_value(key, v, "expected a number");
    }
    if (used != v.size()) bad_value(key, v, "expected a number");
    return d;
}

std::size_t to_count(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        bad_value(key, v, "expected a nonnegative integer");
    }
    try {
        return static_cast<std::size_t>(std::stoull(v));
    } catch (const std::exception&) {
        bad_value(key, v, "integer out of range");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    bad_value(key, v, "expected a boolean");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string context_name(ContextKind c) {
    switch (c) {
    case ContextKind::Knn: return "knn";
    case ContextKind::Basket: return "basket";
    case ContextKind::Window: return "window";
    }
    return "knn";
}

std::string regularizer_name(Regularizer r) {
    switch (r) {
    case Regularizer::L2: return "l2";
    case Regularizer::LogNormal: return "lognormal";
    case Regularizer::None: return "none";
    }
    return "l2";
}

std::string estimator_name(ZeroEstimator z) {
    switch (z) {
    case ZeroEstimator::Unbiased: return "unbiased";
    case ZeroEstimator::NegativeSampling: return "negative_sampling";
    case ZeroEstimator::Downweight: return "downweight";
    }
    return "unbiased";
}

}  // namespace

std::string to_string(SharingScheme s) {
    switch (s) {
    case SharingScheme::PerRow: return "per_row";
    case SharingScheme::Global: return "global";
    case SharingScheme::Tied: return "tied";
    }
    return "per_row";
}

SharingScheme parse_sharing(const std::string& s) {
    if (s == "per_row") return SharingScheme::PerRow;
    if (s == "global") return SharingScheme::Global;
    if (s == "tied") return SharingScheme::Tied;
    throw ConfigError("unknown sharing scheme '" + s + "' (per_row, global, tied)");
}

std::string to_string(LinkSpec l) {
    switch (l) {
    case LinkSpec::Identity: return "identity";
    case LinkSpec::Log: return "log";
    case LinkSpec::ContextMeanIdentity: return "context_mean_identity";
    case LinkSpec::ContextMeanLog: return "context_mean_log";
    }
    return "identity";
}

LinkSpec parse_link(const std::string& s) {
    if (s == "identity") return LinkSpec::Identity;
    if (s == "log") return LinkSpec::Log;
    if (s == "context_mean_identity") return LinkSpec::ContextMeanIdentity;
    if (s == "context_mean_log") return LinkSpec::ContextMeanLog;
    throw ConfigError("unknown link '" + s + "' (identity, log, context_mean_identity, context_mean_log)");
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "adagrad_epsilon", "archetype",     "context",       "downweight",    "family",
        "holdout_test",    "holdout_valid", "implicit_zero", "init_scale",    "iterations",
        "k",               "lag",           "lambda",        "link",          "log_interval",
        "min_col_count",   "min_row_count", "minibatch",     "negative_samples", "neighbors",
        "regularizer",     "seed",          "sharing",       "shift_clamp",   "sigma2",
        "split",           "split_test",    "split_train",   "split_valid",   "step_sizes",
        "threads",         "window",        "zero_estimator",
    };
    return keys;
}

void apply_archetype(RunConfig& cfg, const std::string& name) {
    RunConfig d;
    d.archetype = name;
    if (name == "neuro" || name == "neuro_nonneg") {
        d.family.family = name == "neuro" ? Family::Gaussian : Family::NonnegGaussian;
        d.context = ContextKind::Knn;
        d.neighbors = 10;
        d.train.minibatch_size = 100;
        d.train.reg = {Regularizer::L2, name == "neuro" ? 10.0 : 0.1};
        d.train.n_iterations = 500;
        d.split_enabled = true;
        d.split.variant = SplitSpec::Variant::Column;
        d.split.columns = {0.9, 0.05, 0.05};
        d.preprocess.lag = true;
    } else if (name == "shopping" || name == "movies") {
        d.family.family = Family::Poisson;
        d.family.link = LinkSpec::ContextMeanIdentity;
        d.context = ContextKind::Basket;
        d.train.reg = {Regularizer::L2, 1.0};
        d.train.n_iterations = 3000;
        d.train.negative_samples = 10;
        d.split_enabled = true;
        if (name == "shopping") {
            d.split.variant = SplitSpec::Variant::Column;
            d.split.columns = {0.9, 0.05, 0.05};
            d.preprocess.min_row_count = 10;
        } else {
            d.split.variant = SplitSpec::Variant::Rating;
            d.split.ratings = {0.2, 0.05};
            d.preprocess.shift_clamp = true;
            d.preprocess.min_row_count = 50;
            d.preprocess.min_col_count = 20;
        }
    } else if (name == "text") {
        d.family.family = Family::Categorical;
        d.sharing = SharingScheme::Global;
        d.context = ContextKind::Window;
        d.window = 2;
        d.train.reg = {Regularizer::L2, 1.0};
        d.train.n_iterations = 500;
    } else {
        throw ConfigError("unknown archetype '" + name + "' (neuro, neuro_nonneg, shopping, movies, text)");
    }
    d.family.link = d.family.link == LinkSpec::Identity ? default_link(d.family.family) : d.family.link;
    cfg = d;
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& v) {
    try {
        if (key == "archetype") {
            apply_archetype(c, v);
        } else if (key == "family") {
            c.family.family = parse_family(v);
            c.family.link = default_link(c.family.family);
            if (c.family.family == Family::Categorical || c.family.family == Family::Bernoulli) {
                c.sharing = SharingScheme::Global;
            }
        } else if (key == "k") {
            c.k = to_count(key, v);
        } else if (key == "sharing") {
            c.sharing = parse_sharing(v);
        } else if (key == "context") {
            if (v == "knn") c.context = ContextKind::Knn;
            else if (v == "basket") c.context = ContextKind::Basket;
            else if (v == "window") c.context = ContextKind::Window;
            else bad_value(key, v, "expected knn, basket or window");
        } else if (key == "neighbors") {
            c.neighbors = to_count(key, v);
        } else if (key == "window") {
            c.window = to_count(key, v);
        } else if (key == "link") {
            c.family.link = parse_link(v);
        } else if (key == "sigma2") {
            c.family.sigma2 = to_double(key, v);
        } else if (key == "lambda") {
            c.train.reg.lambda = to_double(key, v);
        } else if (key == "regularizer") {
            if (v == "l2") c.train.reg.kind = Regularizer::L2;
            else if (v == "lognormal") c.train.reg.kind = Regularizer::LogNormal;
            else if (v == "none") c.train.reg.kind = Regularizer::None;
            else bad_value(key, v, "expected l2, lognormal or none");
        } else if (key == "minibatch") {
            const auto n = to_count(key, v);
            c.train.minibatch_size = n == 0 ? std::nullopt : std::optional<std::size_t>(n);
        } else if (key == "iterations") {
            c.train.n_iterations = to_count(key, v);
        } else if (key == "negative_samples") {
            c.train.negative_samples = to_count(key, v);
        } else if (key == "zero_estimator") {
            if (v == "unbiased") c.train.zero_estimator = ZeroEstimator::Unbiased;
            else if (v == "negative_sampling") c.train.zero_estimator = ZeroEstimator::NegativeSampling;
            else if (v == "downweight") c.train.zero_estimator = ZeroEstimator::Downweight;
            else bad_value(key, v, "expected unbiased, negative_sampling or downweight");
        } else if (key == "downweight") {
            c.train.downweight = to_double(key, v);
        } else if (key == "step_sizes") {
            std::vector<double> steps;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) steps.push_back(to_double(key, trim(item)));
            if (steps.empty()) bad_value(key, v, "expected a comma-separated list");
            c.step_sizes = steps;
        } else if (key == "adagrad_epsilon") {
            c.train.adagrad_epsilon = to_double(key, v);
        } else if (key == "init_scale") {
            c.train.init_scale = to_double(key, v);
        } else if (key == "seed") {
            c.train.seed = to_count(key, v);
            c.split.seed = c.train.seed;
        } else if (key == "log_interval") {
            c.train.log_interval = to_count(key, v);
        } else if (key == "threads") {
            c.train.threads = static_cast<int>(to_count(key, v));
        } else if (key == "split") {
            if (v == "none") {
                c.split_enabled = false;
            } else if (v == "column") {
                c.split_enabled = true;
                c.split.variant = SplitSpec::Variant::Column;
            } else if (v == "rating") {
                c.split_enabled = true;
                c.split.variant = SplitSpec::Variant::Rating;
            } else {
                bad_value(key, v, "expected none, column or rating");
            }
        } else if (key == "split_train") {
            c.split.columns.train = to_double(key, v);
        } else if (key == "split_valid") {
            c.split.columns.valid = to_double(key, v);
        } else if (key == "split_test") {
            c.split.columns.test = to_double(key, v);
        } else if (key == "holdout_test") {
            c.split.ratings.test = to_double(key, v);
        } else if (key == "holdout_valid") {
            c.split.ratings.valid = to_double(key, v);
        } else if (key == "lag") {
            c.preprocess.lag = to_bool(key, v);
        } else if (key == "shift_clamp") {
            c.preprocess.shift_clamp = to_bool(key, v);
        } else if (key == "min_row_count") {
            c.preprocess.min_row_count = to_count(key, v);
        } else if (key == "min_col_count") {
            c.preprocess.min_col_count = to_count(key, v);
        } else if (key == "implicit_zero") {
            c.implicit_zero = to_bool(key, v);
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind("key '", 0) == 0 || msg.rfind("unknown key", 0) == 0) throw;
        throw ConfigError("key '" + key + "': " + msg);
    }
}

RunConfig parse_config(std::istream& in, const std::string& source) {
    std::map<std::string, std::pair<std::string, std::size_t>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!std::binary_search(config_keys().begin(), config_keys().end(), key)) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        if (!entries.emplace(key, std::make_pair(value, lineno)).second) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
    }
    RunConfig cfg;
    auto apply = [&](const std::string& key, const std::pair<std::string, std::size_t>& e) {
        try {
            set_config_value(cfg, key, e.first);
        } catch (const ConfigError& err) {
            throw ConfigError(source + ":" + std::to_string(e.second) + ": " + err.what());
        }
    };
    // Archetype first, family before link/sharing so explicit values win.
    for (const char* first : {"archetype", "family"}) {
        if (auto it = entries.find(first); it != entries.end()) apply(it->first, it->second);
    }
    for (const auto& [key, e] : entries) {
        if (key != "archetype" && key != "family") apply(key, e);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_config(in, path);
}

bool RunConfig::data_implicit_zero() const {
    if (implicit_zero) return *implicit_zero;
    return family.family != Family::Gaussian && family.family != Family::NonnegGaussian;
}

std::string RunConfig::context_descriptor() const {
    switch (context) {
    case ContextKind::Knn: return "knn:k=" + std::to_string(neighbors);
    case ContextKind::Basket: return "basket";
    case ContextKind::Window: return "window:w=" + std::to_string(window);
    }
    return "";
}

std::string RunConfig::canonical() const {
    std::map<std::string, std::string> kv;
    kv["archetype"] = archetype.empty() ? "none" : archetype;
    kv["family"] = std::string(efemb::to_string(family.family));
    kv["k"] = std::to_string(k);
    kv["sharing"] = to_string(sharing);
    kv["context"] = context_name(context);
    kv["neighbors"] = std::to_string(neighbors);
    kv["window"] = std::to_string(window);
    kv["link"] = to_string(family.link);
    kv["sigma2"] = fmt(family.sigma2);
    kv["lambda"] = fmt(train.reg.lambda);
    kv["regularizer"] = regularizer_name(train.reg.kind);
    kv["minibatch"] = std::to_string(train.minibatch_size.value_or(0));
    kv["iterations"] = std::to_string(train.n_iterations);
    kv["negative_samples"] = std::to_string(train.negative_samples);
    kv["zero_estimator"] = estimator_name(train.zero_estimator);
    kv["downweight"] = fmt(train.downweight);
    std::string steps;
    for (double s : step_sizes) steps += (steps.empty() ? "" : ",") + fmt(s);
    kv["step_sizes"] = steps;
    kv["adagrad_epsilon"] = fmt(train.adagrad_epsilon);
    kv["init_scale"] = fmt(train.init_scale);
    kv["seed"] = std::to_string(train.seed);
    kv["log_interval"] = std::to_string(train.log_interval);
    kv["threads"] = std::to_string(train.threads);
    kv["split"] = !split_enabled ? "none" : split.variant == SplitSpec::Variant::Column ? "column" : "rating";
    kv["split_train"] = fmt(split.columns.train);
    kv["split_valid"] = fmt(split.columns.valid);
    kv["split_test"] = fmt(split.columns.test);
    kv["holdout_test"] = fmt(split.ratings.test);
    kv["holdout_valid"] = fmt(split.ratings.valid);
    kv["lag"] = preprocess.lag ? "1" : "0";
    kv["shift_clamp"] = preprocess.shift_clamp ? "1" : "0";
    kv["min_row_count"] = std::to_string(preprocess.min_row_count);
    kv["min_col_count"] = std::to_string(preprocess.min_col_count);
    kv["implicit_zero"] = data_implicit_zero() ? "1" : "0";
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

std::string RunConfig::digest() const { return fnv1a_hex(canonical()); }

void RunConfig::validate() const {
    // vocab_size is filled in from the data at fit time.
    FamilySpec f = family;
    if (f.family == Family::Categorical && f.vocab_size == 0) f.vocab_size = 2;
    f.validate();
    if (k == 0) throw ConfigError("key 'k': latent dimension must be positive");
    if (step_sizes.empty()) throw ConfigError("key 'step_sizes': at least one step size needed");
    for (double s : step_sizes) {
        if (!(s > 0.0)) throw ConfigError("key 'step_sizes': step sizes must be positive");
    }
    const bool text = family.family == Family::Categorical || family.family == Family::Bernoulli;
    if (text != (sharing == SharingScheme::Global)) {
        throw ConfigError("key 'sharing': global sharing goes with the bernoulli and categorical families");
    }
    if (text && context != ContextKind::Window) throw ConfigError("key 'context': text families use window contexts");
    if (context == ContextKind::Knn && neighbors == 0) throw ConfigError("key 'neighbors': must be positive");
    if (context == ContextKind::Window && window == 0) throw ConfigError("key 'window': must be positive");
    if (split_enabled) split.validate();
    TrainConfig t = train;
    t.step_size = step_sizes.front();
    t.validate();
}

}  // namespace efemb
