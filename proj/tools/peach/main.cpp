// peach: command-line driver for the reduce -> train -> summarize -> explain pipeline.

#include "peach/error.hpp"
#include "peach/hashing.hpp"
#include "peach/pipeline.hpp"
#include "peach/service.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <csignal>
#include <cstdlib>
#include <iostream>

namespace {

using namespace peach;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t effective_seed(std::uint64_t flag) {
    const char* env = std::getenv("PEACH_SEED");
    if (!env) return flag;
    std::string_view text(env);
    std::uint64_t value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size()) {
        throw UsageError("PEACH_SEED must be an unsigned integer, got \"" + std::string(text) + "\"");
    }
    return value;
}

// "k,s" or "k,s,p" into numbers.
std::vector<std::size_t> parse_triple(const std::string& text, std::size_t min_parts, std::size_t max_parts,
                                      const std::string& flag) {
    std::vector<std::size_t> parts;
    std::string_view rest(text);
    while (true) {
        const auto comma = rest.find(',');
        const auto piece = rest.substr(0, comma);
        std::size_t value = 0;
        auto [end, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
        if (piece.empty() || ec != std::errc() || end != piece.data() + piece.size()) {
            throw UsageError(flag + " expects comma-separated integers, got \"" + text + "\"");
        }
        parts.push_back(value);
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    if (parts.size() < min_parts || parts.size() > max_parts) {
        throw UsageError(flag + " expects " + std::to_string(min_parts) + " to " + std::to_string(max_parts) + " values");
    }
    return parts;
}

ConvSpec conv_spec(const std::string& text, const std::string& flag) {
    const auto p = parse_triple(text, 2, 3, flag);
    return {p[0], p[1], p.size() > 2 ? p[2] : 0};
}

PoolSpec pool_spec(const std::string& text, const std::string& flag) {
    const auto p = parse_triple(text, 2, 2, flag);
    return {p[0], p[1]};
}

std::vector<double> parse_row(const std::string& text, const std::string& flag) {
    std::vector<double> row;
    std::string_view rest(text);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        auto piece = rest.substr(0, comma);
        while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
        double value = 0.0;
        auto [end, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
        if (piece.empty() || ec != std::errc() || end != piece.data() + piece.size()) {
            throw UsageError(flag + " expects comma-separated numbers");
        }
        row.push_back(value);
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return row;
}

void emit(const std::string& body, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << body << std::flush;
    } else {
        write_file(out, body);
    }
}

fs::path default_features_path(const fs::path& reduction) {
    auto p = reduction;
    return p.replace_extension(".pfm");
}

struct ArtifactArgs {
    std::string bundle;
    std::string reduction;
    std::string model;
    std::string prototypes;

    void add(CLI::App* cmd, bool need_model, bool need_prototypes) {
        cmd->add_option("--bundle", bundle, "Bundle manifest written by `peach ingest`")->required();
        cmd->add_option("--reduction", reduction, "Reduction artifact")->required();
        if (need_model) cmd->add_option("--model", model, "Model file")->required();
        if (need_prototypes) cmd->add_option("--prototypes", prototypes, "Prototype artifact")->required();
    }

    Workspace load() const {
        WorkspacePaths paths{bundle, reduction, model, std::nullopt};
        if (!prototypes.empty()) paths.prototypes = prototypes;
        return Workspace::load(paths);
    }
};

// ---- ingest ----

struct IngestArgs {
    std::string embeddings, format = "binary", corpus, annotations, tagset, stopwords, lexicon, out;
};

void run_ingest(const IngestArgs& a) {
    BundleManifest m;
    auto abs = [](const std::string& p) { return fs::absolute(p).lexically_normal(); };
    m.embeddings = abs(a.embeddings);
    m.format = parse_embedding_format(a.format);
    m.corpus = abs(a.corpus);
    if (!a.annotations.empty()) m.annotations = abs(a.annotations);
    if (!a.tagset.empty()) m.tagset = abs(a.tagset);
    if (!a.stopwords.empty()) m.stopwords = abs(a.stopwords);
    if (!a.lexicon.empty()) m.lexicon = abs(a.lexicon);
    const auto bundle = load_bundle(m);
    write_file(a.out, m.to_json());
    const auto& e = bundle.embeddings;
    std::cout << "bundle n=" << e.n << " d=" << e.d << " k=" << e.num_classes()
              << " train=" << e.rows_in(Split::train).size() << " test=" << e.rows_in(Split::test).size()
              << " annotations=" << (bundle.annotations ? "yes" : "no")
              << " lexicon=" << (bundle.lexicon ? "yes" : "no") << "\n";
}

// ---- reduce ----

struct ReduceArgs {
    std::string bundle, method = "pearson", out, features;
    double percentile = 0.9;
    std::size_t clusters = 10, max_iters = 300, target_dim = 0, epochs = 100, batch = 32;
    double tol = 1e-6, lr = 1e-3;
    std::string conv1 = "2,2,0", pool1 = "2,2", conv2 = "2,2,0", pool2 = "2,2";
    std::uint64_t seed = 0;
};

void run_reduce(const ReduceArgs& a) {
    const auto bundle = load_bundle(BundleManifest::load(a.bundle));
    ReductionConfig config;
    config.method = parse_reduction_method(a.method);
    config.percentile = a.percentile;
    const auto seed = effective_seed(a.seed);
    config.kmeans = {a.clusters, seed, a.max_iters, a.tol};
    config.cnn.conv1 = conv_spec(a.conv1, "--conv1");
    config.cnn.pool1 = pool_spec(a.pool1, "--pool1");
    config.cnn.conv2 = conv_spec(a.conv2, "--conv2");
    if (a.pool2 != "auto") config.cnn.pool2 = pool_spec(a.pool2, "--pool2");
    config.cnn.m_target = a.target_dim;
    config.cnn.learning_rate = a.lr;
    config.cnn.epochs = a.epochs;
    config.cnn.batch_size = a.batch;
    config.cnn.seed = seed;
    if (config.method == ReductionMethod::cnn && a.target_dim == 0) {
        throw ConfigError("--target-dim is required for the cnn method");
    }

    const auto artifact = fit_reduction(bundle.embeddings, config);
    const auto features = apply_reduction(artifact, bundle.embeddings);
    write_file(a.out, artifact.to_json());
    const auto features_path = a.features.empty() ? default_features_path(a.out) : fs::path(a.features);
    write_file(features_path, serialize_feature_matrix(features));
    std::cout << "reduction method=" << to_string(artifact.method) << " d=" << artifact.source_d
              << " m=" << artifact.m();
    if (artifact.clusters && artifact.method == ReductionMethod::pearson) {
        std::cout << " percentile=" << artifact.clusters->percentile << " threshold=" << artifact.clusters->threshold;
    }
    std::cout << "\n";
}

// ---- train ----

struct TrainArgs {
    std::string bundle, reduction, features, algorithm = "cart", out;
    std::size_t max_depth = 95, min_leaf = 1, forest = 0, subset = 0;
    std::uint64_t seed = 0;
};

void print_metrics(const std::string& name, const Metrics& m) {
    std::cout << name << " accuracy=" << m.accuracy << " macro_f1=" << m.macro_f1 << "\n";
}

void run_train(const TrainArgs& a) {
    const auto bundle = load_bundle(BundleManifest::load(a.bundle));
    const auto reduction_text = read_file(a.reduction);
    const auto reduction = ReductionArtifact::from_json(reduction_text);
    FeatureMatrix features;
    if (a.features.empty()) {
        features = apply_reduction(reduction, bundle.embeddings);
    } else {
        features = parse_feature_matrix(read_file(a.features));
        if (features.values.rows() != bundle.embeddings.n || features.feature_names != reduction.feature_names) {
            throw ConfigError("feature matrix " + a.features + " does not match the bundle and reduction");
        }
    }
    TrainOptions options;
    options.algorithm = parse_algorithm(a.algorithm);
    options.max_depth = a.max_depth;
    options.min_samples_leaf = a.min_leaf;
    options.forest_size = a.forest;
    options.subset_size = a.subset;
    options.seed = effective_seed(a.seed);
    const auto model = train_model(features, bundle, options, sha256_hex(reduction_text));
    write_file(a.out, model_to_json(model));

    const auto trees = model_trees(model.model);
    std::size_t depth = 0;
    for (const auto& t : trees) depth = std::max(depth, t.depth());
    std::cout << "model algorithm=" << to_string(options.algorithm) << " trees=" << trees.size() << " depth=" << depth
              << "\n";
    for (auto which : {Split::train, Split::test}) {
        const auto data = split_data(features, bundle.embeddings, which);
        if (!data.rows.empty()) print_metrics(to_string(which), evaluate(model.model, data.features, data.labels));
    }
}

// ---- summarize ----

struct SummarizeArgs {
    ArtifactArgs artifacts;
    std::size_t k = kDefaultCloudSize;
    std::string out;
};

void run_summarize(const SummarizeArgs& a) {
    const auto ws = a.artifacts.load();
    const auto artifact = summarize_model(ws.model, ws.features, ws.bundle, a.k, ws.model_hash);
    write_file(a.out, artifact.to_json());
    std::size_t nodes = 0;
    for (const auto& t : artifact.trees) nodes += t.size();
    std::cout << "prototypes nodes=" << nodes << " k=" << artifact.k << " N=" << artifact.N
              << " vocabulary=" << artifact.vocabulary_size << "\n";
}

// ---- explain ----

struct ExplainArgs {
    ArtifactArgs artifacts;
    std::string doc_id, filter, out, text, embedding, feature_row, format = "json";
    bool global = false;
    std::size_t topk = 0;
};

void run_explain(const ExplainArgs& a) {
    const auto ws = a.artifacts.load();
    const auto filter = TagFilter::parse(a.filter);
    if (a.global) {
        const auto g = ws.global(filter, a.topk ? std::optional(a.topk) : std::nullopt);
        emit(a.format == "dot" ? g.to_dot() : g.to_json(), a.out);
        return;
    }
    if (!a.doc_id.empty()) {
        emit(ws.explain(a.doc_id, filter).to_json(), a.out);
        return;
    }
    // Ad-hoc text: the caller supplies the embedding or the reduced feature row.
    std::vector<double> row;
    if (!a.feature_row.empty()) {
        row = parse_row(a.feature_row, "--feature-row");
    } else if (!a.embedding.empty()) {
        row = apply_reduction(ws.reduction, parse_row(a.embedding, "--embedding"));
    }
    if (row.empty()) throw MissingResourceError("ad-hoc text needs --embedding or --feature-row");
    if (!ws.prototypes) throw MissingResourceError("local explanations need a prototype artifact");
    LocalRequest request;
    request.text = a.text;
    request.feature_row = row;
    request.filter = filter;
    const auto& lex = ws.bundle.lexicon;
    emit(local_explanation(ws.model, *ws.prototypes, ws.bundle.stopwords, lex ? &*lex : nullptr, request).to_json(),
         a.out);
}

// ---- export ----

struct ExportArgs {
    ArtifactArgs artifacts;
    std::string what = "global", filter, out;
    std::size_t topk = 0;
};

void run_export(const ExportArgs& a) {
    const auto ws = a.artifacts.load();
    if (a.what == "predictions") {
        std::string csv = "doc_id,split,true_class,predicted_class\n";
        const auto& docs = ws.bundle.corpus.documents;
        for (std::size_t r = 0; r < docs.size(); ++r) {
            csv += docs[r].doc_id + "," + to_string(docs[r].split) + "," + std::to_string(docs[r].label) + "," +
                   std::to_string(ws.predictions()[r]) + "\n";
        }
        emit(csv, a.out);
        return;
    }
    const auto g = ws.global(TagFilter::parse(a.filter), a.topk ? std::optional(a.topk) : std::nullopt);
    emit(a.what == "dot" ? g.to_dot() : g.to_json(), a.out);
}

// ---- serve ----

struct ServeArgs {
    ArtifactArgs artifacts;
    std::string host = "127.0.0.1", static_dir;
    int port = 8080;
};

HttpServer* g_server = nullptr;

void run_serve(const ServeArgs& a) {
    const auto ws = a.artifacts.load();
    ServeOptions options;
    options.host = a.host;
    options.port = a.port;
    if (!a.static_dir.empty()) options.static_dir = a.static_dir;
    HttpServer server(ws, options);
    const int port = server.bind();
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    std::cout << "serving on http://" << a.host << ":" << port << "\n" << std::flush;
    server.listen();
    g_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"peach: interpretable decision trees over document embeddings"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file holding option values");
    app.allow_config_extras(false);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Validate inputs and write a bundle manifest");
    c_ingest->add_option("--embeddings", ingest.embeddings)->required();
    c_ingest->add_option("--format", ingest.format)->check(CLI::IsMember({"binary", "csv"}));
    c_ingest->add_option("--corpus", ingest.corpus)->required();
    c_ingest->add_option("--annotations", ingest.annotations);
    c_ingest->add_option("--tagset", ingest.tagset);
    c_ingest->add_option("--stopwords", ingest.stopwords);
    c_ingest->add_option("--lexicon", ingest.lexicon);
    c_ingest->add_option("--out", ingest.out)->required();

    ReduceArgs reduce;
    auto* c_reduce = app.add_subcommand("reduce", "Fit a feature reduction");
    c_reduce->add_option("--bundle", reduce.bundle)->required();
    c_reduce->add_option("--method", reduce.method)->check(CLI::IsMember({"pearson", "kmeans", "cnn"}));
    c_reduce->add_option("--percentile", reduce.percentile)->check(CLI::Range(0.0, 1.0));
    c_reduce->add_option("--clusters", reduce.clusters)->check(CLI::PositiveNumber);
    c_reduce->add_option("--max-iters", reduce.max_iters);
    c_reduce->add_option("--tol", reduce.tol);
    c_reduce->add_option("--target-dim", reduce.target_dim);
    c_reduce->add_option("--conv1", reduce.conv1, "kernel,stride[,padding]");
    c_reduce->add_option("--pool1", reduce.pool1, "kernel,stride");
    c_reduce->add_option("--conv2", reduce.conv2, "kernel,stride[,padding]");
    c_reduce->add_option("--pool2", reduce.pool2, "kernel,stride or auto");
    c_reduce->add_option("--lr", reduce.lr);
    c_reduce->add_option("--epochs", reduce.epochs);
    c_reduce->add_option("--batch", reduce.batch)->check(CLI::PositiveNumber);
    c_reduce->add_option("--seed", reduce.seed);
    c_reduce->add_option("--out", reduce.out)->required();
    c_reduce->add_option("--features", reduce.features, "Feature matrix output (default: <out>.pfm)");

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Induce a tree or forest on the reduced features");
    c_train->add_option("--bundle", train.bundle)->required();
    c_train->add_option("--reduction", train.reduction)->required();
    c_train->add_option("--features", train.features, "Feature matrix written by reduce");
    c_train->add_option("--algorithm", train.algorithm)->check(CLI::IsMember({"id3", "c4.5", "c45", "cart"}));
    c_train->add_option("--max-depth", train.max_depth);
    c_train->add_option("--min-samples-leaf", train.min_leaf)->check(CLI::PositiveNumber);
    c_train->add_option("--forest", train.forest, "Number of trees; 0 trains a single tree");
    c_train->add_option("--subset-size", train.subset, "Features per forest tree; 0 means ceil(sqrt(m))");
    c_train->add_option("--seed", train.seed);
    c_train->add_option("--out", train.out)->required();

    SummarizeArgs summarize_args;
    auto* c_summarize = app.add_subcommand("summarize", "Build per-node TF-IDF prototype summaries");
    summarize_args.artifacts.add(c_summarize, true, false);
    c_summarize->add_option("--k", summarize_args.k)->check(CLI::PositiveNumber);
    c_summarize->add_option("--out", summarize_args.out)->required();

    ExplainArgs explain;
    auto* c_explain = app.add_subcommand("explain", "Emit a local or global explanation");
    explain.artifacts.add(c_explain, true, true);
    auto* o_doc = c_explain->add_option("--doc-id", explain.doc_id);
    auto* o_global = c_explain->add_flag("--global", explain.global);
    auto* o_text = c_explain->add_option("--text", explain.text, "Ad-hoc document text");
    o_doc->excludes(o_global)->excludes(o_text);
    o_global->excludes(o_text);
    c_explain->add_option("--embedding", explain.embedding, "Raw embedding row for --text, comma-separated");
    c_explain->add_option("--feature-row", explain.feature_row, "Reduced feature row for --text, comma-separated");
    c_explain->add_option("--filter", explain.filter, "pos:TAG[,TAG] or ner:TAG[,TAG]");
    c_explain->add_option("--topk", explain.topk, "Entries per node for --global");
    c_explain->add_option("--format", explain.format)->check(CLI::IsMember({"json", "dot"}));
    c_explain->add_option("--out", explain.out);

    ExportArgs export_args;
    auto* c_export = app.add_subcommand("export", "Export the global explanation, DOT graph or predictions");
    export_args.artifacts.add(c_export, true, false);
    c_export->add_option("--prototypes", export_args.artifacts.prototypes);
    c_export->add_option("--what", export_args.what)->check(CLI::IsMember({"global", "dot", "predictions"}));
    c_export->add_option("--filter", export_args.filter);
    c_export->add_option("--topk", export_args.topk);
    c_export->add_option("--out", export_args.out);

    ServeArgs serve;
    auto* c_serve = app.add_subcommand("serve", "Serve the read-only HTTP API");
    serve.artifacts.add(c_serve, true, true);
    c_serve->add_option("--host", serve.host);
    c_serve->add_option("--port", serve.port)->check(CLI::Range(0, 65535));
    c_serve->add_option("--static", serve.static_dir, "Directory of built UI assets served under /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (c_explain->parsed() && !explain.global && explain.doc_id.empty() && explain.text.empty()) {
            throw UsageError("explain needs --doc-id, --global or --text");
        }
        if (c_export->parsed() && export_args.what != "predictions" && export_args.artifacts.prototypes.empty()) {
            throw UsageError("export --what " + export_args.what + " needs --prototypes");
        }
        if (c_ingest->parsed()) run_ingest(ingest);
        if (c_reduce->parsed()) run_reduce(reduce);
        if (c_train->parsed()) run_train(train);
        if (c_summarize->parsed()) run_summarize(summarize_args);
        if (c_explain->parsed()) run_explain(explain);
        if (c_export->parsed()) run_export(export_args);
        if (c_serve->parsed()) run_serve(serve);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const peach::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
