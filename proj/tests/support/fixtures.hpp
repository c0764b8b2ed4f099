#pragma once

// In-memory synthetic pipeline shared by integration tests.

#include "peach/feature_reduction.hpp"
#include "peach/hashing.hpp"
#include "peach/pipeline.hpp"
#include "peach/prototypes.hpp"
#include "peach/synthetic.hpp"

#include <cstddef>
#include <filesystem>
#include <string>

namespace testsupport {

struct Pipeline {
    peach::SyntheticDataset data;
    peach::DatasetBundle bundle;
    peach::ReductionArtifact reduction;
    peach::FeatureMatrix features;
    peach::ModelFile model;
    peach::PrototypeArtifact prototypes;
};

inline Pipeline run_pipeline(const peach::SyntheticConfig& synth, const peach::ReductionConfig& reduce,
                             const peach::TrainOptions& train, std::size_t k = peach::kDefaultCloudSize) {
    Pipeline p;
    p.data = peach::generate_synthetic(synth);
    p.bundle = peach::to_bundle(p.data);
    p.reduction = peach::fit_reduction(p.bundle.embeddings, reduce);
    p.features = peach::apply_reduction(p.reduction, p.bundle.embeddings);
    p.model = peach::train_model(p.features, p.bundle, train, peach::sha256_hex(p.reduction.to_json()));
    p.prototypes = peach::summarize_model(p.model, p.features, p.bundle, k, peach::sha256_hex(peach::model_to_json(p.model)));
    return p;
}

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

// Writes a synthetic bundle plus reduction, model and prototype files.
inline peach::WorkspacePaths materialize(const std::filesystem::path& dir, const peach::SyntheticConfig& synth,
                                         const peach::TrainOptions& train, const peach::ReductionConfig& reduce = {},
                                         std::size_t k = 25) {
    const auto data = peach::generate_synthetic(synth);
    peach::WorkspacePaths paths;
    paths.bundle = peach::write_synthetic(data, dir);
    const auto bundle = peach::load_bundle(peach::BundleManifest::load(paths.bundle));
    const auto reduction = peach::fit_reduction(bundle.embeddings, reduce);
    paths.reduction = dir / "reduction.json";
    peach::write_file(paths.reduction, reduction.to_json());
    const auto features = peach::apply_reduction(reduction, bundle.embeddings);
    const auto model = peach::train_model(features, bundle, train, peach::sha256_file(paths.reduction));
    paths.model = dir / "model.json";
    peach::write_file(paths.model, peach::model_to_json(model));
    const auto prototypes = peach::summarize_model(model, features, bundle, k, peach::sha256_file(paths.model));
    paths.prototypes = dir / "prototypes.json";
    peach::write_file(*paths.prototypes, prototypes.to_json());
    return paths;
}

}  // namespace testsupport
