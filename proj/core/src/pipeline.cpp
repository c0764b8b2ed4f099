#include "peach/pipeline.hpp"

#include "peach/error.hpp"
#include "peach/hashing.hpp"

namespace peach {

SplitData split_data(const FeatureMatrix& features, const EmbeddingMatrix& embeddings, Split which) {
    if (features.values.rows() != embeddings.n) throw ValueError("feature matrix and embeddings differ in row count");
    SplitData out;
    out.rows = embeddings.rows_in(which);
    out.features = features.values.select_rows(out.rows);
    out.labels.reserve(out.rows.size());
    for (auto r : out.rows) out.labels.push_back(embeddings.labels[r]);
    return out;
}

ModelFile train_model(const FeatureMatrix& features, const DatasetBundle& bundle, const TrainOptions& options,
                      std::string reduction_hash) {
    const auto train = split_data(features, bundle.embeddings, Split::train);
    const auto k = bundle.embeddings.num_classes();
    ModelFile file;
    file.class_names = bundle.embeddings.class_names;
    file.reduction_hash = std::move(reduction_hash);
    if (options.forest_size == 0) {
        TreeConfig config;
        config.algorithm = options.algorithm;
        config.max_depth = options.max_depth;
        config.min_samples_leaf = options.min_samples_leaf;
        file.model = build_tree(train.features, train.labels, k, config, features.feature_names);
    } else {
        ForestConfig config;
        config.tree_count = options.forest_size;
        config.algorithm = options.algorithm;
        config.max_depth = options.max_depth;
        config.min_samples_leaf = options.min_samples_leaf;
        config.subset_size = options.subset_size;
        config.seed = options.seed;
        file.model = build_forest(train.features, train.labels, k, config, features.feature_names);
    }
    return file;
}

PrototypeArtifact summarize_model(const ModelFile& model, const FeatureMatrix& features, const DatasetBundle& bundle,
                                  std::size_t k, std::string model_hash) {
    const auto train = split_data(features, bundle.embeddings, Split::train);
    return summarize(model.model, train.features, train.rows, bundle, k, std::move(model_hash));
}

Workspace Workspace::load(const WorkspacePaths& paths) {
    Workspace w;
    w.bundle = load_bundle(BundleManifest::load(paths.bundle));

    const auto reduction_text = read_file(paths.reduction);
    w.reduction = ReductionArtifact::from_json(reduction_text);
    w.reduction_hash = sha256_hex(reduction_text);

    const auto model_text = read_file(paths.model);
    w.model = model_from_json(model_text);
    w.model_hash = sha256_hex(model_text);
    if (w.model.reduction_hash != w.reduction_hash) {
        throw ConfigError("model " + paths.model.string() + " was not trained on reduction " +
                          paths.reduction.string());
    }
    if (w.reduction.m() != num_features(w.model.model)) {
        throw ConfigError("model feature count differs from the reduction's output width");
    }

    if (paths.prototypes) {
        w.prototypes = PrototypeArtifact::from_json(read_file(*paths.prototypes));
        if (w.prototypes->model_hash != w.model_hash) {
            throw ConfigError("prototypes " + paths.prototypes->string() + " were not built for model " +
                              paths.model.string());
        }
    }

    w.features = apply_reduction(w.reduction, w.bundle.embeddings);
    w.predictions_.reserve(w.bundle.embeddings.n);
    for (std::size_t r = 0; r < w.features.values.rows(); ++r) {
        w.predictions_.push_back(predict(w.model.model, w.features.values.row(r)).predicted_class);
    }
    const auto k = w.bundle.embeddings.num_classes();
    for (auto which : {Split::train, Split::test}) {
        const auto rows = w.bundle.rows_in(which);
        if (rows.empty()) continue;
        std::vector<std::uint32_t> truth;
        std::vector<std::uint32_t> predicted;
        for (auto r : rows) {
            truth.push_back(w.bundle.embeddings.labels[r]);
            predicted.push_back(w.predictions_[r]);
        }
        w.metrics_.emplace(to_string(which), compute_metrics(truth, predicted, k));
    }
    return w;
}

LocalExplanation Workspace::explain(const std::string& doc_id, const TagFilter& filter) const {
    if (!prototypes) throw MissingResourceError("local explanations need a prototype artifact");
    const auto row = bundle.find_row(doc_id);
    if (!row) throw MissingResourceError("unknown document id \"" + doc_id + "\"");
    const auto& doc = bundle.corpus.documents[*row];
    LocalRequest request;
    request.doc_id = doc_id;
    request.text = doc.text;
    request.feature_row = features.values.row(*row);
    request.true_class = doc.label;
    request.filter = filter;
    return local_explanation(model, *prototypes, bundle.stopwords, bundle.lexicon ? &*bundle.lexicon : nullptr,
                             request);
}

GlobalExplanation Workspace::global(const TagFilter& filter, std::optional<std::size_t> topk) const {
    if (!prototypes) throw MissingResourceError("global explanations need a prototype artifact");
    GlobalOptions options;
    options.filter = filter;
    options.topk = topk;
    options.metrics = metrics_;
    options.model_hash = model_hash;
    return global_explanation(model, *prototypes, options);
}

}  // namespace peach
