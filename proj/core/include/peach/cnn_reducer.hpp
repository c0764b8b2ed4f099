#pragma once

#include "peach/matrix.hpp"
#include "peach/random.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace peach {

struct EmbeddingMatrix;

// floor((d_in - f + 2p) / s) + 1. Throws ConfigError when the result is < 1.
std::size_t conv_output_dim(std::size_t d_in, std::size_t f, std::size_t p, std::size_t s);

struct ConvSpec {
    std::size_t kernel = 2;
    std::size_t stride = 2;
    std::size_t padding = 0;

    bool operator==(const ConvSpec&) const = default;
};

struct PoolSpec {
    std::size_t kernel = 2;
    std::size_t stride = 2;

    bool operator==(const PoolSpec&) const = default;
};

struct CnnConfig {
    ConvSpec conv1;
    PoolSpec pool1;
    ConvSpec conv2;
    // Unset: kernel and stride are chosen so the last pooling layer has m_target outputs.
    std::optional<PoolSpec> pool2;
    std::size_t m_target = 0;
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    bool operator==(const CnnConfig&) const = default;
};

// Resolved lengths along the conv1 -> pool1 -> conv2 -> pool2 chain.
struct CnnLayout {
    std::size_t input = 0;
    ConvSpec conv1;
    std::size_t conv1_out = 0;
    PoolSpec pool1;
    std::size_t pool1_out = 0;
    ConvSpec conv2;
    std::size_t conv2_out = 0;
    PoolSpec pool2;
    std::size_t pool2_out = 0;

    bool operator==(const CnnLayout&) const = default;
};

// Throws ConfigError unless the chain is valid and ends at config.m_target.
CnnLayout resolve_cnn_layout(const CnnConfig& config, std::size_t d_in);

// Two single-channel conv(ReLU)+maxpool blocks followed by a linear softmax
// classifier. Parameters live in one flat vector:
//   [conv1 weights | conv1 bias | conv2 weights | conv2 bias | fc weights (k x m) | fc biases (k)]
class CnnNetwork {
public:
    CnnNetwork(CnnLayout layout, std::size_t num_classes);

    const CnnLayout& layout() const noexcept { return layout_; }
    std::size_t num_classes() const noexcept { return classes_; }
    std::size_t parameter_count() const noexcept { return fc_b_ + classes_; }

    // He-style normal weights, zero biases.
    std::vector<double> initialize(Rng& rng) const;

    // Output of the last pooling layer.
    std::vector<double> features(std::span<const double> params, std::span<const double> x) const;
    std::vector<double> logits(std::span<const double> params, std::span<const double> x) const;

    // Mean cross-entropy over the selected rows of x. When `grad` is non-empty
    // it receives the gradient with respect to params.
    double loss(std::span<const double> params, const Matrix& x, std::span<const std::uint32_t> labels,
                std::span<const std::size_t> rows, std::span<double> grad = {}) const;

    // ReLU signs and pooling argmax positions for one input; two parameter
    // vectors with equal patterns lie in the same differentiable piece.
    std::vector<std::int32_t> activation_pattern(std::span<const double> params, std::span<const double> x) const;

private:
    struct Trace;
    void forward(std::span<const double> params, std::span<const double> x, Trace& trace) const;

    CnnLayout layout_;
    std::size_t classes_;
    std::size_t conv1_b_, conv2_w_, conv2_b_, fc_w_, fc_b_;
};

struct CnnReducerModel {
    CnnConfig config;
    CnnLayout layout;
    std::size_t num_classes = 0;
    std::vector<float> parameters;
    double initial_loss = 0.0;
    std::vector<double> loss_trace;  // full training-set loss after each epoch
    std::size_t best_epoch = 0;      // 0 means the initialization was kept

    CnnNetwork network() const { return CnnNetwork(layout, num_classes); }
    std::vector<double> parameters_as_double() const { return {parameters.begin(), parameters.end()}; }
};

// Seeded He-style draws are repeated, up to kMaxInitDraws times, until some
// last-layer feature varies across the training rows.
inline constexpr std::size_t kMaxInitDraws = 16;
std::vector<double> cnn_initialize(const CnnNetwork& net, const EmbeddingMatrix& embeddings, std::uint64_t seed);

// Adam on mini-batches of the training rows; keeps the parameters with the
// lowest full training-set loss seen (initialization included).
CnnReducerModel cnn_train(const EmbeddingMatrix& embeddings, const CnnConfig& config);

// Last-pooling-layer activations for every row; throws ValueError on a width mismatch.
Matrix cnn_extract(const CnnReducerModel& model, const EmbeddingMatrix& embeddings);
std::vector<double> cnn_extract_row(const CnnReducerModel& model, std::span<const double> row);

// Class predicted by the model's own classifier head.
std::uint32_t cnn_predict(const CnnReducerModel& model, std::span<const double> row);

}  // namespace peach
