#include "peach/cnn_reducer.hpp"

#include "peach/error.hpp"
#include "peach/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace peach {

std::size_t conv_output_dim(std::size_t d_in, std::size_t f, std::size_t p, std::size_t s) {
    if (s < 1) throw ConfigError("stride must be at least 1");
    if (f < 1) throw ConfigError("kernel size must be at least 1");
    if (d_in + 2 * p < f) {
        throw ConfigError("kernel " + std::to_string(f) + " does not fit input of length " + std::to_string(d_in) +
                          " with padding " + std::to_string(p));
    }
    return (d_in + 2 * p - f) / s + 1;
}

CnnLayout resolve_cnn_layout(const CnnConfig& config, std::size_t d_in) {
    if (config.m_target == 0) throw ConfigError("CNN target dimension must be positive");
    CnnLayout l;
    l.input = d_in;
    l.conv1 = config.conv1;
    l.conv1_out = conv_output_dim(d_in, l.conv1.kernel, l.conv1.padding, l.conv1.stride);
    l.pool1 = config.pool1;
    l.pool1_out = conv_output_dim(l.conv1_out, l.pool1.kernel, 0, l.pool1.stride);
    l.conv2 = config.conv2;
    l.conv2_out = conv_output_dim(l.pool1_out, l.conv2.kernel, l.conv2.padding, l.conv2.stride);
    if (config.pool2) {
        l.pool2 = *config.pool2;
    } else {
        if (config.m_target > l.conv2_out) {
            throw ConfigError("target dimension " + std::to_string(config.m_target) + " exceeds the second convolution's " +
                              std::to_string(l.conv2_out) + " outputs for input dimension " + std::to_string(d_in));
        }
        l.pool2.stride = l.conv2_out / config.m_target;
        l.pool2.kernel = l.conv2_out - (config.m_target - 1) * l.pool2.stride;
    }
    l.pool2_out = conv_output_dim(l.conv2_out, l.pool2.kernel, 0, l.pool2.stride);
    if (l.pool2_out != config.m_target) {
        throw ConfigError("layer chain ends at dimension " + std::to_string(l.pool2_out) + ", expected " +
                          std::to_string(config.m_target));
    }
    return l;
}

struct CnnNetwork::Trace {
    std::vector<double> z1, a1, y1, z2, a2, y2, logits;
    std::vector<std::size_t> arg1, arg2;
};

namespace {

void conv_forward(std::span<const double> in, std::span<const double> w, double b, const ConvSpec& spec,
                  std::vector<double>& z, std::vector<double>& a, std::size_t out_len) {
    z.assign(out_len, b);
    a.resize(out_len);
    const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
    const auto len = static_cast<std::ptrdiff_t>(in.size());
    for (std::size_t o = 0; o < out_len; ++o) {
        const auto base = static_cast<std::ptrdiff_t>(o * spec.stride) - pad;
        double acc = b;
        for (std::size_t q = 0; q < spec.kernel; ++q) {
            const auto idx = base + static_cast<std::ptrdiff_t>(q);
            if (idx >= 0 && idx < len) acc += w[q] * in[static_cast<std::size_t>(idx)];
        }
        z[o] = acc;
        a[o] = acc > 0.0 ? acc : 0.0;
    }
}

// First maximum wins ties.
void pool_forward(std::span<const double> in, const PoolSpec& spec, std::vector<double>& y,
                  std::vector<std::size_t>& arg, std::size_t out_len) {
    y.resize(out_len);
    arg.resize(out_len);
    for (std::size_t o = 0; o < out_len; ++o) {
        std::size_t best = o * spec.stride;
        for (std::size_t q = 1; q < spec.kernel; ++q) {
            if (in[o * spec.stride + q] > in[best]) best = o * spec.stride + q;
        }
        y[o] = in[best];
        arg[o] = best;
    }
}

// Accumulates weight/bias gradients and, when d_in is non-empty, the input gradient.
void conv_backward(std::span<const double> in, std::span<const double> w, const ConvSpec& spec,
                   std::span<const double> z, std::span<const double> d_a, std::span<double> d_w, double& d_b,
                   std::span<double> d_in) {
    const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
    const auto len = static_cast<std::ptrdiff_t>(in.size());
    for (std::size_t o = 0; o < z.size(); ++o) {
        if (z[o] <= 0.0) continue;
        const double dz = d_a[o];
        d_b += dz;
        const auto base = static_cast<std::ptrdiff_t>(o * spec.stride) - pad;
        for (std::size_t q = 0; q < spec.kernel; ++q) {
            const auto idx = base + static_cast<std::ptrdiff_t>(q);
            if (idx < 0 || idx >= len) continue;
            d_w[q] += dz * in[static_cast<std::size_t>(idx)];
            if (!d_in.empty()) d_in[static_cast<std::size_t>(idx)] += dz * w[q];
        }
    }
}

}  // namespace

CnnNetwork::CnnNetwork(CnnLayout layout, std::size_t num_classes) : layout_(layout), classes_(num_classes) {
    if (classes_ < 1) throw ConfigError("CNN needs at least one class");
    conv1_b_ = layout_.conv1.kernel;
    conv2_w_ = conv1_b_ + 1;
    conv2_b_ = conv2_w_ + layout_.conv2.kernel;
    fc_w_ = conv2_b_ + 1;
    fc_b_ = fc_w_ + classes_ * layout_.pool2_out;
}

std::vector<double> CnnNetwork::initialize(Rng& rng) const {
    std::vector<double> params(parameter_count(), 0.0);
    auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
        const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < count; ++i) params[offset + i] = scale * rng.normal();
    };
    fill(0, layout_.conv1.kernel, layout_.conv1.kernel);
    fill(conv2_w_, layout_.conv2.kernel, layout_.conv2.kernel);
    fill(fc_w_, classes_ * layout_.pool2_out, layout_.pool2_out);
    return params;
}

void CnnNetwork::forward(std::span<const double> p, std::span<const double> x, Trace& t) const {
    if (x.size() != layout_.input) {
        throw ValueError("input has " + std::to_string(x.size()) + " values, network expects " + std::to_string(layout_.input));
    }
    conv_forward(x, p.subspan(0, layout_.conv1.kernel), p[conv1_b_], layout_.conv1, t.z1, t.a1, layout_.conv1_out);
    pool_forward(t.a1, layout_.pool1, t.y1, t.arg1, layout_.pool1_out);
    conv_forward(t.y1, p.subspan(conv2_w_, layout_.conv2.kernel), p[conv2_b_], layout_.conv2, t.z2, t.a2,
                 layout_.conv2_out);
    pool_forward(t.a2, layout_.pool2, t.y2, t.arg2, layout_.pool2_out);
    const std::size_t m = layout_.pool2_out;
    t.logits.assign(classes_, 0.0);
    for (std::size_t c = 0; c < classes_; ++c) {
        double acc = p[fc_b_ + c];
        for (std::size_t j = 0; j < m; ++j) acc += p[fc_w_ + c * m + j] * t.y2[j];
        t.logits[c] = acc;
    }
}

std::vector<double> CnnNetwork::features(std::span<const double> params, std::span<const double> x) const {
    Trace t;
    forward(params, x, t);
    return t.y2;
}

std::vector<double> CnnNetwork::logits(std::span<const double> params, std::span<const double> x) const {
    Trace t;
    forward(params, x, t);
    return t.logits;
}

double CnnNetwork::loss(std::span<const double> p, const Matrix& x, std::span<const std::uint32_t> labels,
                        std::span<const std::size_t> rows, std::span<double> grad) const {
    if (rows.empty()) throw ValueError("loss over an empty batch");
    const bool want_grad = !grad.empty();
    if (want_grad) {
        if (grad.size() != parameter_count()) throw InternalError("gradient buffer has the wrong size");
        std::fill(grad.begin(), grad.end(), 0.0);
    }
    const std::size_t m = layout_.pool2_out;
    const double inv = 1.0 / static_cast<double>(rows.size());
    Trace t;
    std::vector<double> prob(classes_), d_y2, d_a2, d_y1, d_a1;
    double total = 0.0;
    for (std::size_t r : rows) {
        forward(p, x.row(r), t);
        const std::uint32_t y = labels[r];
        const double top = *std::max_element(t.logits.begin(), t.logits.end());
        double norm = 0.0;
        for (std::size_t c = 0; c < classes_; ++c) {
            prob[c] = std::exp(t.logits[c] - top);
            norm += prob[c];
        }
        total += -(t.logits[y] - top - std::log(norm));
        if (!want_grad) continue;

        for (auto& v : prob) v /= norm;
        d_y2.assign(m, 0.0);
        for (std::size_t c = 0; c < classes_; ++c) {
            const double d_logit = (prob[c] - (c == y ? 1.0 : 0.0)) * inv;
            grad[fc_b_ + c] += d_logit;
            for (std::size_t j = 0; j < m; ++j) {
                grad[fc_w_ + c * m + j] += d_logit * t.y2[j];
                d_y2[j] += d_logit * p[fc_w_ + c * m + j];
            }
        }
        d_a2.assign(layout_.conv2_out, 0.0);
        for (std::size_t o = 0; o < m; ++o) d_a2[t.arg2[o]] += d_y2[o];
        d_y1.assign(layout_.pool1_out, 0.0);
        conv_backward(t.y1, p.subspan(conv2_w_, layout_.conv2.kernel), layout_.conv2, t.z2, d_a2,
                      grad.subspan(conv2_w_, layout_.conv2.kernel), grad[conv2_b_], d_y1);
        d_a1.assign(layout_.conv1_out, 0.0);
        for (std::size_t o = 0; o < layout_.pool1_out; ++o) d_a1[t.arg1[o]] += d_y1[o];
        conv_backward(x.row(r), p.subspan(0, layout_.conv1.kernel), layout_.conv1, t.z1, d_a1,
                      grad.subspan(0, layout_.conv1.kernel), grad[conv1_b_], {});
    }
    return total * inv;
}

std::vector<std::int32_t> CnnNetwork::activation_pattern(std::span<const double> params, std::span<const double> x) const {
    Trace t;
    forward(params, x, t);
    std::vector<std::int32_t> pattern;
    for (double z : t.z1) pattern.push_back(z > 0.0);
    for (auto i : t.arg1) pattern.push_back(static_cast<std::int32_t>(i));
    for (double z : t.z2) pattern.push_back(z > 0.0);
    for (auto i : t.arg2) pattern.push_back(static_cast<std::int32_t>(i));
    return pattern;
}

namespace {

Matrix as_matrix(const EmbeddingMatrix& e) {
    return Matrix(e.n, e.d, std::vector<double>(e.values.begin(), e.values.end()));
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

namespace {

// True when some last-layer feature varies across the rows; a network whose
// ReLUs are dead on every row gets no gradient and cannot learn.
bool has_live_features(const CnnNetwork& net, std::span<const double> params, const Matrix& x,
                       std::span<const std::size_t> rows) {
    std::vector<double> first;
    for (auto r : rows) {
        auto f = net.features(params, x.row(r));
        if (first.empty()) {
            first = std::move(f);
        } else if (f != first) {
            return true;
        }
    }
    return false;
}

std::vector<double> initial_parameters(const CnnNetwork& net, const Matrix& x, std::span<const std::size_t> rows,
                                       Rng& rng) {
    std::vector<double> params;
    for (std::size_t draw = 0; draw < kMaxInitDraws; ++draw) {
        params = net.initialize(rng);
        // Round through float32 so the stored model is exactly what training started from.
        for (auto& v : params) v = static_cast<double>(static_cast<float>(v));
        if (has_live_features(net, params, x, rows)) break;
    }
    return params;
}

}  // namespace

std::vector<double> cnn_initialize(const CnnNetwork& net, const EmbeddingMatrix& embeddings, std::uint64_t seed) {
    Rng rng(seed);
    return initial_parameters(net, as_matrix(embeddings), embeddings.rows_in(Split::train), rng);
}

CnnReducerModel cnn_train(const EmbeddingMatrix& embeddings, const CnnConfig& config) {
    CnnReducerModel model;
    model.config = config;
    model.layout = resolve_cnn_layout(config, embeddings.d);
    model.num_classes = embeddings.num_classes();
    if (config.batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
        throw ConfigError("learning rate must be positive and finite");
    }
    const auto train_rows = embeddings.rows_in(Split::train);
    if (train_rows.empty()) throw ValueError("CNN training needs a non-empty train split");

    const CnnNetwork net = model.network();
    Rng rng(config.seed);
    const Matrix x = as_matrix(embeddings);
    std::vector<double> params = initial_parameters(net, x, train_rows, rng);

    const std::span<const std::uint32_t> labels(embeddings.labels);
    model.initial_loss = net.loss(params, x, labels, train_rows);
    model.parameters = to_float(params);
    if (config.epochs == 0) return model;

    double best_loss = model.initial_loss;
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> grad(params.size()), m1(params.size(), 0.0), m2(params.size(), 0.0);
    std::vector<std::size_t> order = train_rows;
    std::uint64_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            net.loss(params, x, labels, std::span(order).subspan(start, stop - start), grad);
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t k = 0; k < params.size(); ++k) {
                m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
                m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
                params[k] -= config.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
            }
        }
        const double epoch_loss = net.loss(params, x, labels, train_rows);
        if (!std::isfinite(epoch_loss)) throw InternalError("CNN training diverged at epoch " + std::to_string(epoch));
        model.loss_trace.push_back(epoch_loss);
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            model.best_epoch = epoch;
            model.parameters = to_float(params);
        }
    }
    return model;
}

std::vector<double> cnn_extract_row(const CnnReducerModel& model, std::span<const double> row) {
    if (row.size() != model.layout.input) {
        throw ValueError("embedding row has dimension " + std::to_string(row.size()) + ", CNN reducer expects " +
                         std::to_string(model.layout.input));
    }
    const auto params = model.parameters_as_double();
    return model.network().features(params, row);
}

Matrix cnn_extract(const CnnReducerModel& model, const EmbeddingMatrix& embeddings) {
    if (embeddings.d != model.layout.input) {
        throw ValueError("embedding dimension " + std::to_string(embeddings.d) + " does not match CNN input " +
                         std::to_string(model.layout.input));
    }
    const auto params = model.parameters_as_double();
    const CnnNetwork net = model.network();
    Matrix out(embeddings.n, model.layout.pool2_out);
    std::vector<double> row(embeddings.d);
    for (std::size_t a = 0; a < embeddings.n; ++a) {
        auto src = embeddings.row(a);
        std::copy(src.begin(), src.end(), row.begin());
        const auto f = net.features(params, row);
        std::copy(f.begin(), f.end(), out.row(a).begin());
    }
    return out;
}

std::uint32_t cnn_predict(const CnnReducerModel& model, std::span<const double> row) {
    const auto params = model.parameters_as_double();
    const auto z = model.network().logits(params, row);
    return static_cast<std::uint32_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

}  // namespace peach
