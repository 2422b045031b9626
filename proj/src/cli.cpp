#include "efemb/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "efemb/analysis.hpp"
#include "efemb/error.hpp"
#include "efemb/io.hpp"
#include "efemb/pipeline.hpp"
#include "efemb/synthetic.hpp"

namespace efemb {

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

struct TrainArgs {
    std::string config, data, locations, sentences, out, log, test_out, valid_out;
};

struct EvalArgs {
    std::string model, data, protocol, locations, train;
    std::size_t folds = 4;
    std::uint64_t seed = 1;
};

struct QueryArgs {
    std::string model, entity, direction = "highest", mode = "signed", space, locations;
    std::size_t top = 10;
    std::size_t dim = 0;
};

struct SplitArgs {
    std::string config, data, prefix;
};

struct GenArgs {
    std::string kind, prefix;
    std::uint64_t seed = 1;
    std::size_t rows = 30, cols = 500, k = 2, neighbors = 5;
    double noise_sd = 0.1;
    std::size_t baskets = 2000, groups = 5, items_per_group = 10;
    double zero_inflation = 0.0;
    std::size_t sentences = 300, sentence_length = 10, clusters = 2, words_per_cluster = 10;
};

LabeledData load_config_data(const RunConfig& cfg, const std::string& path) {
    return preprocess(load_triplets(path, cfg.data_implicit_zero()), cfg.preprocess);
}

std::vector<std::size_t> maybe_sentences(const std::string& path) {
    if (path.empty()) return {};
    return load_sentence_lengths(path);
}

std::optional<SpatialLayout> maybe_layout(const std::string& path, const IdMap& rows, std::size_t k) {
    if (path.empty()) return std::nullopt;
    return load_locations(path, rows, k);
}

void save_triplets(const std::string& path, const LabeledData& d) {
    write_file_atomic(path, [&](std::ostream& os) { write_triplets(os, d); });
}

int cmd_split(const SplitArgs& a, std::ostream& out) {
    const RunConfig cfg = load_config(a.config);
    if (!cfg.split_enabled) throw ConfigError("key 'split': the config does not request a split");
    const LabeledData full = load_config_data(cfg, a.data);
    const Split s = make_split(full.data, cfg.split);
    const std::pair<const char*, const SplitPart*> parts[] = {
        {"train", &s.train}, {"valid", &s.valid}, {"test", &s.test}};
    out << "part\tcolumns\tentries\tpath\n";
    for (const auto& [name, part] : parts) {
        const std::string path = a.prefix + "." + name + ".tsv";
        save_triplets(path, labeled_part(full, *part));
        out << name << '\t' << part->data.n_cols() << '\t' << part->data.n_stored() << '\t' << path << '\n';
    }
    out << "dropped_columns\t" << s.dropped_columns << "\ndropped_entries\t" << s.dropped_entries << '\n';
    return 0;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const RunConfig cfg = load_config(a.config);
    const ContextDescriptor desc = parse_context_descriptor(cfg.context_descriptor());
    LabeledData full = load_config_data(cfg, a.data);
    if (desc.kind == ContextKind::Window) full = order_positions(full);
    const auto layout = maybe_layout(a.locations, full.rows, cfg.neighbors);
    const auto sentences = maybe_sentences(a.sentences);
    const SpatialLayout* lp = layout ? &*layout : nullptr;

    LabeledData train = full;
    std::optional<LabeledData> valid, test;
    if (cfg.split_enabled) {
        if (desc.kind == ContextKind::Window) throw ConfigError("key 'split': text corpora are not split");
        const Split s = make_split(full.data, cfg.split);
        train = labeled_part(full, s.train);
        if (s.valid.data.n_stored() > 0) valid = labeled_part(full, s.valid);
        if (s.test.data.n_stored() > 0) test = labeled_part(full, s.test);
        out << "split\ttrain=" << s.train.data.n_stored() << "\tvalid=" << s.valid.data.n_stored()
            << "\ttest=" << s.test.data.n_stored() << "\tdropped=" << s.dropped_entries << '\n';
    }
    const ContextMap train_ctx = build_context(desc, train.data, lp, sentences);
    std::optional<ContextMap> valid_ctx;
    if (valid) valid_ctx = build_context(desc, valid->data, lp, sentences);

    const FitResult fit = fit_model(cfg, train, train_ctx, valid ? &valid->data : nullptr,
                                    valid_ctx ? &*valid_ctx : nullptr);
    save_model(a.out, fit.model);
    if (!a.log.empty()) write_file_atomic(a.log, [&](std::ostream& os) { write_log(os, fit.log); });
    if (!a.test_out.empty()) {
        if (!test) throw ConfigError("no test split to write; set split fractions in the config");
        save_triplets(a.test_out, *test);
    }
    if (!a.valid_out.empty()) {
        if (!valid) throw ConfigError("no validation split to write; set split fractions in the config");
        save_triplets(a.valid_out, *valid);
    }
    for (const auto& g : fit.grid) {
        out << "step_size\t" << fmt(g.step_size) << "\tvalidation\t" << (std::isnan(g.score) ? "-" : fmt(g.score))
            << '\n';
    }
    out << "chosen_step\t" << fmt(fit.step_size) << '\n';
    out << "final_objective\t" << fmt(fit.log.back().objective, "%.10g") << '\n';
    out << "config_digest\t" << fit.model.config_digest << '\n';
    return 0;
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
    const ModelFile m = load_model(a.model);
    const IdMap rows = IdMap::from_labels(m.labels);
    const bool implicit = m.family.family != Family::Gaussian && m.family.family != Family::NonnegGaussian;
    if (m.sharing == SharingScheme::Global) throw CompatibilityError("text models have no held-out protocol here");
    const LabeledData test = load_triplets(a.data, implicit, &rows);
    if (test.data.n_stored() == 0) throw ConfigError("empty test split");
    const bool gaussian = !implicit;
    const bool needs_gaussian = a.protocol == "loo" || a.protocol == "lfo" || a.protocol == "zero";
    if (needs_gaussian != gaussian) {
        throw CompatibilityError("protocol '" + a.protocol + "' does not apply to a " +
                                 std::string(to_string(m.family.family)) + " model");
    }
    const ContextDescriptor desc = parse_context_descriptor(m.context);
    const auto layout = maybe_layout(a.locations, rows, desc.param);
    const ContextMap ctx = build_context(desc, test.data, layout ? &*layout : nullptr);
    EvalReport r;
    if (a.protocol == "loo") {
        r = leave_one_out_mse(test.data, ctx, m.bank, m.family, m.sharing);
    } else if (a.protocol == "lfo") {
        r = leave_fraction_out_mse(test.data, ctx, m.bank, m.family, m.sharing, a.folds, a.seed);
    } else if (a.protocol == "zero") {
        r = zero_predictor_mse(test.data, ctx);
    } else if (a.protocol == "npll") {
        r = normalized_predictive_ll(test.data, ctx, m.bank, m.family, m.sharing);
    } else {
        if (a.train.empty()) throw UsageError("protocol 'popularity' needs --train");
        const LabeledData tr = load_triplets(a.train, true, &rows);
        r = popularity_predictive_ll(tr.data, test.data);
    }
    write_report(out, r);
    return 0;
}

std::uint32_t lookup(const IdMap& ids, const std::string& key) {
    const auto id = ids.find(key);
    if (!id) throw IndexError("unknown entity '" + key + "'");
    return *id;
}

VectorSpace parse_space(const std::string& s, VectorSpace dflt) {
    if (s.empty()) return dflt;
    return s == "embedding" ? VectorSpace::Embedding : VectorSpace::Context;
}

int cmd_similar(const QueryArgs& a, std::ostream& out) {
    const ModelFile m = load_model(a.model);
    const IdMap ids = IdMap::from_labels(m.labels);
    SimilarityQuery q{lookup(ids, a.entity), a.top, parse_space(a.space, VectorSpace::Embedding)};
    const auto hits = top_similar(m.bank, q);
    out << "rank\tid\tlabel\tcosine\n";
    for (std::size_t i = 0; i < hits.size(); ++i) {
        out << i + 1 << '\t' << hits[i].id << '\t' << ids.label(hits[i].id) << '\t' << fmt(hits[i].score) << '\n';
    }
    return 0;
}

int cmd_pairs(const QueryArgs& a, std::ostream& out) {
    const ModelFile m = load_model(a.model);
    const PairDirection dir = a.direction == "lowest" ? PairDirection::Lowest : PairDirection::Highest;
    const auto pairs = interaction_pairs(m.bank, dir, a.top);
    out << "# score = rho_a . alpha_b; high: a is more likely when b is in its context, low: less likely\n";
    out << "rank\ta\tlabel_a\tb\tlabel_b\tscore\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        out << i + 1 << '\t' << p.a << '\t' << m.labels[p.a] << '\t' << p.b << '\t' << m.labels[p.b] << '\t'
            << fmt(p.score) << '\n';
    }
    return 0;
}

int cmd_rank(const QueryArgs& a, std::ostream& out) {
    const ModelFile m = load_model(a.model);
    const RankMode mode = a.mode == "absolute" ? RankMode::Absolute : RankMode::Signed;
    const auto ranked = dimension_ranking(m.bank, a.dim, a.top, mode, parse_space(a.space, VectorSpace::Context));
    out << "rank\tid\tlabel\tvalue\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        out << i + 1 << '\t' << ranked[i].id << '\t' << m.labels[ranked[i].id] << '\t' << fmt(ranked[i].score)
            << '\n';
    }
    return 0;
}

int cmd_graph(const QueryArgs& a, std::ostream& out) {
    const ModelFile m = load_model(a.model);
    const IdMap ids = IdMap::from_labels(m.labels);
    const ContextDescriptor desc = parse_context_descriptor(m.context);
    if (desc.kind != ContextKind::Knn) throw CompatibilityError("export-graph needs a model with a k-NN context");
    const SpatialLayout layout = load_locations(a.locations, ids, desc.param);
    out << "from\tlabel_from\tto\tlabel_to\tweight\n";
    for (const auto& e : neighbor_weight_graph(m.bank, layout)) {
        out << e.from << '\t' << ids.label(e.from) << '\t' << e.to << '\t' << ids.label(e.to) << '\t' << fmt(e.weight)
            << '\n';
    }
    return 0;
}

int cmd_generate(const GenArgs& a, std::ostream& out) {
    const std::string data_path = a.prefix + ".tsv";
    if (a.kind == "gaussian") {
        GaussianPlantedSpec spec;
        spec.n_rows = a.rows;
        spec.n_cols = a.cols;
        spec.k = a.k;
        spec.neighbors = a.neighbors;
        spec.noise_sd = a.noise_sd;
        spec.seed = a.seed;
        const PlantedGaussian g = generate_gaussian(spec);
        LabeledData d{g.data, {}, {}};
        for (std::size_t n = 0; n < a.rows; ++n) d.rows.intern("n" + std::to_string(n));
        for (std::size_t t = 0; t < a.cols; ++t) d.cols.intern("t" + std::to_string(t));
        save_triplets(data_path, d);
        write_file_atomic(a.prefix + ".locations.tsv",
                          [&](std::ostream& os) { write_locations(os, g.layout, d.rows); });
        ModelFile truth;
        truth.family.family = Family::Gaussian;
        truth.family.sigma2 = g.noise_variance;
        truth.seed = a.seed;
        truth.context = "knn:k=" + std::to_string(a.neighbors);
        truth.bank = g.truth;
        truth.labels = d.rows.labels();
        save_model(a.prefix + ".truth.model", truth);
        out << "noise_variance\t" << fmt(g.noise_variance) << '\n';
    } else if (a.kind == "baskets") {
        BasketSpec spec;
        spec.groups = a.groups;
        spec.items_per_group = a.items_per_group;
        spec.baskets = a.baskets;
        spec.zero_inflation = a.zero_inflation;
        spec.seed = a.seed;
        const PlantedBaskets b = generate_baskets(spec);
        LabeledData d{b.data, {}, {}};
        for (std::size_t n = 0; n < b.data.n_rows(); ++n) d.rows.intern("item" + std::to_string(n));
        for (std::size_t t = 0; t < b.data.n_cols(); ++t) d.cols.intern("b" + std::to_string(t));
        save_triplets(data_path, d);
        ModelFile truth;
        truth.family.family = Family::Poisson;
        truth.family.link = LinkSpec::ContextMeanIdentity;
        truth.seed = a.seed;
        truth.context = "basket";
        truth.bank = b.truth;
        truth.labels = d.rows.labels();
        save_model(a.prefix + ".truth.model", truth);
        out << "entries\t" << b.data.n_stored() << '\n';
    } else if (a.kind == "corpus") {
        CorpusSpec spec;
        spec.clusters = a.clusters;
        spec.words_per_cluster = a.words_per_cluster;
        spec.sentences = a.sentences;
        spec.sentence_length = a.sentence_length;
        spec.seed = a.seed;
        const PlantedCorpus c = generate_corpus(spec);
        LabeledData d{c.corpus, IdMap::numbered(c.corpus.n_rows()), {}};
        // Interning in id order keeps word ids equal to column ids.
        for (std::size_t v = 0; v < c.corpus.n_cols(); ++v) d.cols.intern("w" + std::to_string(v));
        save_triplets(data_path, d);
        write_file_atomic(a.prefix + ".sentences.txt", [&](std::ostream& os) {
            for (std::size_t l : c.sentence_lengths) os << l << '\n';
        });
        out << "positions\t" << c.corpus.n_rows() << '\n';
    } else {
        throw UsageError("unknown kind '" + a.kind + "'");
    }
    out << "data\t" << data_path << '\n';
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Exponential family embeddings: training, evaluation and analysis", "efemb"};
    app.require_subcommand(1);

    SplitArgs split_args;
    auto* split = app.add_subcommand("split", "Preprocess and split a triplet file into train/valid/test files");
    split->add_option("--config", split_args.config, "Run configuration")->required();
    split->add_option("--data", split_args.data, "Triplet file")->required();
    split->add_option("--out-prefix", split_args.prefix, "Output prefix")->required();

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Fit a model and write a model file");
    train->add_option("--config", train_args.config, "Run configuration")->required();
    train->add_option("--data", train_args.data, "Triplet file")->required();
    train->add_option("--locations", train_args.locations, "Entity locations (k-NN contexts)");
    train->add_option("--sentences", train_args.sentences, "Sentence lengths (window contexts)");
    train->add_option("--out", train_args.out, "Model file to write")->required();
    train->add_option("--log", train_args.log, "Training log to write");
    train->add_option("--test-out", train_args.test_out, "Write the test split here");
    train->add_option("--valid-out", train_args.valid_out, "Write the validation split here");

    EvalArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "Score a model on held-out data");
    evaluate->add_option("--model", eval_args.model, "Model file")->required();
    evaluate->add_option("--data", eval_args.data, "Held-out triplet file")->required();
    evaluate->add_option("--protocol", eval_args.protocol, "Evaluation protocol")
        ->required()
        ->check(CLI::IsMember({"loo", "lfo", "zero", "npll", "popularity"}));
    evaluate->add_option("--locations", eval_args.locations, "Entity locations (k-NN contexts)");
    evaluate->add_option("--train", eval_args.train, "Training triplets (popularity baseline)");
    evaluate->add_option("--folds", eval_args.folds, "Folds for lfo")->capture_default_str();
    evaluate->add_option("--seed", eval_args.seed, "Fold assignment seed")->capture_default_str();

    QueryArgs q;
    auto* similar = app.add_subcommand("query-similar", "Most similar entities by cosine similarity");
    similar->add_option("--model", q.model, "Model file")->required();
    similar->add_option("--entity", q.entity, "Entity label")->required();
    similar->add_option("--top", q.top, "Number of results")->capture_default_str();
    similar->add_option("--space", q.space, "Vectors to compare")->check(CLI::IsMember({"embedding", "context"}));

    auto* pairs = app.add_subcommand("query-pairs", "Ordered pairs with extreme rho_a . alpha_b");
    pairs->add_option("--model", q.model, "Model file")->required();
    pairs->add_option("--direction", q.direction, "highest or lowest")
        ->check(CLI::IsMember({"highest", "lowest"}))
        ->capture_default_str();
    pairs->add_option("--top", q.top, "Number of pairs")->capture_default_str();

    auto* rank = app.add_subcommand("rank-dimensions", "Entities ranked by one latent dimension");
    rank->add_option("--model", q.model, "Model file")->required();
    rank->add_option("--dim", q.dim, "Dimension (0-based)")->required();
    rank->add_option("--top", q.top, "Number of entities")->capture_default_str();
    rank->add_option("--mode", q.mode, "signed or absolute")
        ->check(CLI::IsMember({"signed", "absolute"}))
        ->capture_default_str();
    rank->add_option("--space", q.space, "Vectors to rank (default context)")
        ->check(CLI::IsMember({"embedding", "context"}));

    auto* graph = app.add_subcommand("export-graph", "Neighbor weight graph rho_n . alpha_m over k-NN edges");
    graph->add_option("--model", q.model, "Model file")->required();
    graph->add_option("--locations", q.locations, "Entity locations")->required();

    GenArgs g;
    auto* gen = app.add_subcommand("gen-synthetic", "Write planted-model synthetic data");
    gen->add_option("--kind", g.kind, "gaussian, baskets or corpus")
        ->required()
        ->check(CLI::IsMember({"gaussian", "baskets", "corpus"}));
    gen->add_option("--out-prefix", g.prefix, "Output prefix")->required();
    gen->add_option("--seed", g.seed)->capture_default_str();
    gen->add_option("--rows", g.rows, "gaussian: entities")->capture_default_str();
    gen->add_option("--cols", g.cols, "gaussian: columns")->capture_default_str();
    gen->add_option("--k", g.k, "gaussian: latent dimension")->capture_default_str();
    gen->add_option("--neighbors", g.neighbors, "gaussian: k-NN size")->capture_default_str();
    gen->add_option("--noise-sd", g.noise_sd, "gaussian: conditional noise sd")->capture_default_str();
    gen->add_option("--baskets", g.baskets, "baskets: number of baskets")->capture_default_str();
    gen->add_option("--groups", g.groups, "baskets: item groups")->capture_default_str();
    gen->add_option("--items-per-group", g.items_per_group, "baskets: items per group")->capture_default_str();
    gen->add_option("--zero-inflation", g.zero_inflation, "baskets: erase probability")->capture_default_str();
    gen->add_option("--sentences", g.sentences, "corpus: sentences")->capture_default_str();
    gen->add_option("--sentence-length", g.sentence_length, "corpus: words per sentence")->capture_default_str();
    gen->add_option("--clusters", g.clusters, "corpus: word clusters")->capture_default_str();
    gen->add_option("--words-per-cluster", g.words_per_cluster, "corpus: words per cluster")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        if (split->parsed()) return cmd_split(split_args, out);
        if (train->parsed()) return cmd_train(train_args, out);
        if (evaluate->parsed()) return cmd_evaluate(eval_args, out);
        if (similar->parsed()) return cmd_similar(q, out);
        if (pairs->parsed()) return cmd_pairs(q, out);
        if (rank->parsed()) return cmd_rank(q, out);
        if (graph->parsed()) return cmd_graph(q, out);
        if (gen->parsed()) return cmd_generate(g, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}

}  // namespace efemb
