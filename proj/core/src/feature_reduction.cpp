#include "peach/feature_reduction.hpp"

#include "peach/error.hpp"
#include "peach/hashing.hpp"
#include "peach/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace peach {

using nlohmann::json;

std::vector<double> CorrelationMatrix::upper_triangle() const {
    std::vector<double> out;
    out.reserve(d_ * (d_ - (d_ > 0)) / 2);
    for (std::size_t i = 0; i < d_; ++i) {
        for (std::size_t j = i + 1; j < d_; ++j) out.push_back((*this)(i, j));
    }
    return out;
}

CorrelationMatrix pearson_matrix(const Matrix& columns) {
    const std::size_t n = columns.rows();
    const std::size_t d = columns.cols();
    if (n < 2) throw ValueError("Pearson correlation needs at least 2 rows, got " + std::to_string(n));

    // Centered columns stored contiguously per column.
    std::vector<double> centered(d * n);
    std::vector<double> sum_sq(d, 0.0);
    std::vector<bool> constant(d, true);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            mean += columns(a, j);
            if (columns(a, j) != columns(0, j)) constant[j] = false;
        }
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            const double c = columns(a, j) - mean;
            centered[j * n + a] = c;
            ss += c * c;
        }
        sum_sq[j] = ss;
    }

    CorrelationMatrix r(d);
    for (std::size_t i = 0; i < d; ++i) {
        r.set(i, i, 1.0);
        if (constant[i]) continue;
        const double* ci = &centered[i * n];
        for (std::size_t j = i + 1; j < d; ++j) {
            if (constant[j]) continue;
            const double* cj = &centered[j * n];
            double dot = 0.0;
            for (std::size_t a = 0; a < n; ++a) dot += ci[a] * cj[a];
            const double value = dot / std::sqrt(sum_sq[i] * sum_sq[j]);
            r.set(i, j, std::clamp(value, -1.0, 1.0));
        }
    }
    return r;
}

double percentile(std::vector<double> values, double v) {
    if (!(v > 0.0 && v < 1.0)) throw ValueError("percentile must lie in (0, 1), got " + std::to_string(v));
    if (values.empty()) throw ValueError("percentile of an empty population");
    std::sort(values.begin(), values.end());
    const double pos = v * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double percentile_threshold(const CorrelationMatrix& r, double v) {
    if (!(v > 0.0 && v < 1.0)) throw ValueError("percentile must lie in (0, 1), got " + std::to_string(v));
    if (r.size() < 2) throw ValueError("correlation threshold needs at least 2 dimensions");
    return percentile(r.upper_triangle(), v);
}

std::string to_string(ReductionMethod method) {
    switch (method) {
        case ReductionMethod::pearson: return "pearson";
        case ReductionMethod::kmeans: return "kmeans";
        case ReductionMethod::cnn: return "cnn";
    }
    return "?";
}

ReductionMethod parse_reduction_method(const std::string& text) {
    if (text == "pearson") return ReductionMethod::pearson;
    if (text == "kmeans") return ReductionMethod::kmeans;
    if (text == "cnn") return ReductionMethod::cnn;
    throw ConfigError("unknown reduction method \"" + text + "\"");
}

std::vector<std::vector<std::size_t>> ClusterAssignment::members() const {
    std::vector<std::vector<std::size_t>> out(m);
    for (std::size_t j = 0; j < assign.size(); ++j) out.at(assign[j]).push_back(j);
    return out;
}

ClusterAssignment correlation_cluster(const CorrelationMatrix& r, double t) {
    if (!std::isfinite(t)) throw ValueError("correlation threshold must be finite");
    const std::size_t d = r.size();
    constexpr auto unassigned = std::numeric_limits<std::size_t>::max();
    ClusterAssignment out;
    out.method = ReductionMethod::pearson;
    out.threshold = t;
    out.assign.assign(d, unassigned);
    for (std::size_t center = 0; center < d; ++center) {
        if (out.assign[center] != unassigned) continue;
        const std::size_t id = out.m++;
        out.centers.push_back(center);
        out.assign[center] = id;
        for (std::size_t j = center + 1; j < d; ++j) {
            if (out.assign[j] == unassigned && r(center, j) > t) out.assign[j] = id;
        }
    }
    return out;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

}  // namespace

double kmeans_objective(const Matrix& columns, std::span<const std::size_t> assign,
                        const std::vector<std::vector<double>>& centroids) {
    const Matrix points = [&] {
        Matrix p(columns.cols(), columns.rows());
        for (std::size_t a = 0; a < columns.rows(); ++a)
            for (std::size_t j = 0; j < columns.cols(); ++j) p(j, a) = columns(a, j);
        return p;
    }();
    double total = 0.0;
    for (std::size_t j = 0; j < points.rows(); ++j) total += squared_distance(points.row(j), centroids.at(assign[j]));
    return total;
}

ClusterAssignment kmeans_cluster(const Matrix& columns, const KMeansOptions& options) {
    const std::size_t d = columns.cols();
    const std::size_t n = columns.rows();
    const std::size_t m = options.m;
    if (m < 1 || m > d) {
        throw ValueError("cluster count " + std::to_string(m) + " must lie in [1, " + std::to_string(d) + "]");
    }
    // One point per embedding dimension.
    Matrix points(d, n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t j = 0; j < d; ++j) points(j, a) = columns(a, j);

    Rng rng(options.seed);
    std::vector<std::vector<double>> centroids;
    centroids.reserve(m);

    // k-means++ seeding.
    std::vector<double> nearest(d, std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(d, false);
    std::size_t first = rng.below(d);
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t pick = first;
        if (c > 0) {
            const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                pick = d;
                for (std::size_t j = 0; j < d; ++j) {
                    if (nearest[j] <= 0.0) continue;
                    acc += nearest[j];
                    pick = j;
                    if (acc > target) break;
                }
            } else {
                // Every remaining point coincides with a centroid.
                std::vector<std::size_t> free;
                for (std::size_t j = 0; j < d; ++j)
                    if (!chosen[j]) free.push_back(j);
                pick = free[rng.below(free.size())];
            }
        }
        chosen[pick] = true;
        auto p = points.row(pick);
        centroids.emplace_back(p.begin(), p.end());
        for (std::size_t j = 0; j < d; ++j) nearest[j] = std::min(nearest[j], squared_distance(points.row(j), p));
    }

    ClusterAssignment out;
    out.method = ReductionMethod::kmeans;
    out.m = m;
    out.seed = options.seed;
    out.max_iters = options.max_iters;
    out.tol = options.tol;
    out.assign.assign(d, m);  // m marks "not yet assigned"

    std::vector<std::size_t> next(d);
    std::vector<double> dist(d);
    std::vector<std::size_t> counts(m);
    for (std::size_t iter = 0; iter < std::max<std::size_t>(options.max_iters, 1); ++iter) {
        // Assignment step; ties go to the lowest centroid index.
        for (std::size_t j = 0; j < d; ++j) {
            std::size_t best = 0;
            double best_dist = squared_distance(points.row(j), centroids[0]);
            for (std::size_t c = 1; c < m; ++c) {
                const double dc = squared_distance(points.row(j), centroids[c]);
                if (dc < best_dist) {
                    best_dist = dc;
                    best = c;
                }
            }
            next[j] = best;
            dist[j] = best_dist;
        }
        // Repair empty clusters with the point farthest from its centroid,
        // taken from a cluster that keeps at least one member.
        std::fill(counts.begin(), counts.end(), 0);
        for (auto c : next) ++counts[c];
        for (std::size_t c = 0; c < m; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = d;
            for (std::size_t j = 0; j < d; ++j) {
                if (counts[next[j]] < 2) continue;
                if (far == d || dist[j] > dist[far]) far = j;
            }
            if (far == d) throw InternalError("k-means repair found no donor cluster");
            --counts[next[far]];
            next[far] = c;
            dist[far] = 0.0;
            counts[c] = 1;
            auto p = points.row(far);
            centroids[c].assign(p.begin(), p.end());
        }
        const bool stable = next == out.assign;
        out.assign = next;

        // Update step.
        std::vector<std::vector<double>> updated(m, std::vector<double>(n, 0.0));
        for (std::size_t j = 0; j < d; ++j) {
            auto p = points.row(j);
            auto& target = updated[out.assign[j]];
            for (std::size_t a = 0; a < n; ++a) target[a] += p[a];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            for (auto& v : updated[c]) v /= static_cast<double>(counts[c]);
            shift = std::max(shift, std::sqrt(squared_distance(updated[c], centroids[c])));
        }
        centroids = std::move(updated);
        out.iterations = iter + 1;

        double objective = 0.0;
        for (std::size_t j = 0; j < d; ++j) objective += squared_distance(points.row(j), centroids[out.assign[j]]);
        out.objective_trace.push_back(objective);

        if (stable || shift < options.tol) break;
    }
    out.centroids = std::move(centroids);
    return out;
}

std::vector<std::string> cluster_feature_names(std::size_t m) {
    const std::size_t width = std::max<std::size_t>(2, std::to_string(m == 0 ? 0 : m - 1).size());
    std::vector<std::string> names;
    names.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        auto digits = std::to_string(k);
        names.push_back("cluster_" + std::string(width - digits.size(), '0') + digits);
    }
    return names;
}

FeatureMatrix merge_clusters(const Matrix& columns, const ClusterAssignment& assignment) {
    if (assignment.assign.size() != columns.cols()) {
        throw ValueError("assignment covers " + std::to_string(assignment.assign.size()) + " columns, matrix has " +
                         std::to_string(columns.cols()));
    }
    const auto members = assignment.members();
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (members[k].empty()) throw InternalError("cluster " + std::to_string(k) + " is empty");
    }
    FeatureMatrix out;
    out.method = assignment.method;
    out.feature_names = cluster_feature_names(assignment.m);
    out.values = Matrix(columns.rows(), assignment.m);
    for (std::size_t a = 0; a < columns.rows(); ++a) {
        for (std::size_t k = 0; k < assignment.m; ++k) {
            double sum = 0.0;
            for (auto j : members[k]) sum += columns(a, j);
            out.values(a, k) = sum / static_cast<double>(members[k].size());
        }
    }
    return out;
}

Matrix embedding_columns(const EmbeddingMatrix& e) {
    return Matrix(e.n, e.d, std::vector<double>(e.values.begin(), e.values.end()));
}

Matrix embedding_columns(const EmbeddingMatrix& e, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), e.d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = e.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

ReductionArtifact fit_reduction(const EmbeddingMatrix& embeddings, const ReductionConfig& config) {
    ReductionArtifact artifact;
    artifact.method = config.method;
    artifact.source_d = embeddings.d;
    const auto train_rows = embeddings.rows_in(Split::train);
    artifact.fit_rows = train_rows.size();
    switch (config.method) {
        case ReductionMethod::pearson: {
            const auto r = pearson_matrix(embedding_columns(embeddings, train_rows));
            const double t = percentile_threshold(r, config.percentile);
            auto clusters = correlation_cluster(r, t);
            clusters.percentile = config.percentile;
            artifact.feature_names = cluster_feature_names(clusters.m);
            artifact.clusters = std::move(clusters);
            break;
        }
        case ReductionMethod::kmeans: {
            auto clusters = kmeans_cluster(embedding_columns(embeddings, train_rows), config.kmeans);
            artifact.feature_names = cluster_feature_names(clusters.m);
            artifact.clusters = std::move(clusters);
            break;
        }
        case ReductionMethod::cnn: {
            auto model = cnn_train(embeddings, config.cnn);
            artifact.feature_names = cluster_feature_names(model.layout.pool2_out);
            for (auto& name : artifact.feature_names) name.replace(0, 7, "pooled");
            artifact.cnn = std::move(model);
            break;
        }
    }
    return artifact;
}

FeatureMatrix apply_reduction(const ReductionArtifact& artifact, const EmbeddingMatrix& embeddings) {
    if (embeddings.d != artifact.source_d) {
        throw ValueError("embedding dimension " + std::to_string(embeddings.d) + " does not match the reduction's " +
                         std::to_string(artifact.source_d));
    }
    if (artifact.method == ReductionMethod::cnn) {
        FeatureMatrix out;
        out.method = ReductionMethod::cnn;
        out.values = cnn_extract(artifact.cnn.value(), embeddings);
        out.feature_names = artifact.feature_names;
        return out;
    }
    return merge_clusters(embedding_columns(embeddings), artifact.clusters.value());
}

std::vector<double> apply_reduction(const ReductionArtifact& artifact, std::span<const double> row) {
    if (row.size() != artifact.source_d) {
        throw ValueError("embedding row has dimension " + std::to_string(row.size()) + ", reduction expects " +
                         std::to_string(artifact.source_d));
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (!std::isfinite(row[j])) throw ValueError("non-finite embedding value", 0, j);
    }
    if (artifact.method == ReductionMethod::cnn) return cnn_extract_row(artifact.cnn.value(), row);
    Matrix single(1, row.size(), std::vector<double>(row.begin(), row.end()));
    auto f = merge_clusters(single, artifact.clusters.value());
    return f.values.data();
}

// ---- serialization ----

namespace {

json conv_json(const ConvSpec& c) { return {{"kernel", c.kernel}, {"stride", c.stride}, {"padding", c.padding}}; }
json pool_json(const PoolSpec& p) { return {{"kernel", p.kernel}, {"stride", p.stride}}; }
ConvSpec conv_from(const json& j) { return {j.at("kernel").get<std::size_t>(), j.at("stride").get<std::size_t>(), j.at("padding").get<std::size_t>()}; }
PoolSpec pool_from(const json& j) { return {j.at("kernel").get<std::size_t>(), j.at("stride").get<std::size_t>()}; }

std::string encode_floats(const std::vector<float>& values) {
    std::vector<std::uint8_t> bytes(values.size() * sizeof(float));
    std::memcpy(bytes.data(), values.data(), bytes.size());
    return base64_encode(bytes);
}

std::vector<float> decode_floats(const std::string& text, std::size_t expected) {
    const auto bytes = base64_decode(text);
    if (bytes.size() != expected * sizeof(float)) throw FormatError("weight blob has the wrong length");
    std::vector<float> out(expected);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace

std::string ReductionArtifact::to_json() const {
    json j;
    j["format"] = "peach-reduction/1";
    j["method"] = to_string(method);
    j["source_d"] = source_d;
    j["fit_rows"] = fit_rows;
    j["m"] = m();
    j["feature_names"] = feature_names;
    if (clusters) {
        const auto& c = *clusters;
        j["assignment"] = c.assign;
        if (method == ReductionMethod::pearson) {
            j["params"] = {{"percentile", c.percentile}, {"threshold", c.threshold}};
            j["centers"] = c.centers;
        } else {
            j["params"] = {{"m", c.m}, {"seed", c.seed}, {"max_iters", c.max_iters}, {"tol", c.tol}};
            j["iterations"] = c.iterations;
            j["objective_trace"] = c.objective_trace;
        }
    }
    if (cnn) {
        const auto& model = *cnn;
        const auto& cfg = model.config;
        const auto& l = model.layout;
        j["params"] = {{"m_target", cfg.m_target},
                       {"learning_rate", cfg.learning_rate},
                       {"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"seed", cfg.seed}};
        j["layers"] = {{"input", l.input},
                       {"conv1", conv_json(l.conv1)},
                       {"pool1", pool_json(l.pool1)},
                       {"conv2", conv_json(l.conv2)},
                       {"pool2", pool_json(l.pool2)},
                       {"output", l.pool2_out}};
        j["num_classes"] = model.num_classes;
        j["initial_loss"] = model.initial_loss;
        j["loss_trace"] = model.loss_trace;
        j["best_epoch"] = model.best_epoch;
        j["weights"] = {{"dtype", "float32"}, {"count", model.parameters.size()}, {"data", encode_floats(model.parameters)}};
    }
    return j.dump(2) + "\n";
}

ReductionArtifact ReductionArtifact::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed reduction artifact: ") + e.what());
    }
    try {
        ReductionArtifact a;
        a.method = parse_reduction_method(j.at("method").get<std::string>());
        a.source_d = j.at("source_d").get<std::size_t>();
        a.fit_rows = j.at("fit_rows").get<std::size_t>();
        a.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        const auto& params = j.at("params");
        if (a.method == ReductionMethod::cnn) {
            CnnReducerModel model;
            auto& cfg = model.config;
            cfg.m_target = params.at("m_target").get<std::size_t>();
            cfg.learning_rate = params.at("learning_rate").get<double>();
            cfg.epochs = params.at("epochs").get<std::size_t>();
            cfg.batch_size = params.at("batch_size").get<std::size_t>();
            cfg.seed = params.at("seed").get<std::uint64_t>();
            const auto& layers = j.at("layers");
            cfg.conv1 = conv_from(layers.at("conv1"));
            cfg.pool1 = pool_from(layers.at("pool1"));
            cfg.conv2 = conv_from(layers.at("conv2"));
            cfg.pool2 = pool_from(layers.at("pool2"));
            model.layout = resolve_cnn_layout(cfg, layers.at("input").get<std::size_t>());
            model.num_classes = j.at("num_classes").get<std::size_t>();
            model.initial_loss = j.at("initial_loss").get<double>();
            model.loss_trace = j.at("loss_trace").get<std::vector<double>>();
            model.best_epoch = j.at("best_epoch").get<std::size_t>();
            const auto& w = j.at("weights");
            model.parameters = decode_floats(w.at("data").get<std::string>(), model.network().parameter_count());
            a.cnn = std::move(model);
        } else {
            ClusterAssignment c;
            c.method = a.method;
            c.assign = j.at("assignment").get<std::vector<std::size_t>>();
            c.m = a.feature_names.size();
            if (a.method == ReductionMethod::pearson) {
                c.percentile = params.at("percentile").get<double>();
                c.threshold = params.at("threshold").get<double>();
                c.centers = j.at("centers").get<std::vector<std::size_t>>();
            } else {
                c.seed = params.at("seed").get<std::uint64_t>();
                c.max_iters = params.at("max_iters").get<std::size_t>();
                c.tol = params.at("tol").get<double>();
                c.iterations = j.at("iterations").get<std::size_t>();
                c.objective_trace = j.at("objective_trace").get<std::vector<double>>();
            }
            if (c.assign.size() != a.source_d) throw FormatError("assignment length differs from source_d");
            for (auto id : c.assign) {
                if (id >= c.m) throw FormatError("assignment references cluster " + std::to_string(id));
            }
            a.clusters = std::move(c);
        }
        return a;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid reduction artifact: ") + e.what());
    }
}

std::string serialize_feature_matrix(const FeatureMatrix& f) {
    std::string out = "PFM1";
    auto put_u32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); };
    put_u32(static_cast<std::uint32_t>(f.n()));
    put_u32(static_cast<std::uint32_t>(f.m()));
    for (const auto& name : f.feature_names) {
        put_u32(static_cast<std::uint32_t>(name.size()));
        out += name;
    }
    out.append(reinterpret_cast<const char*>(f.values.data().data()), f.values.data().size() * sizeof(double));
    return out;
}

FeatureMatrix parse_feature_matrix(std::string_view bytes) {
    std::size_t pos = 0;
    auto take = [&](void* dst, std::size_t size) {
        if (bytes.size() - pos < size) throw FormatError("feature matrix file truncated");
        std::memcpy(dst, bytes.data() + pos, size);
        pos += size;
    };
    char magic[4];
    take(magic, 4);
    if (std::memcmp(magic, "PFM1", 4) != 0) throw FormatError("bad magic: expected PFM1");
    std::uint32_t n, m;
    take(&n, 4);
    take(&m, 4);
    FeatureMatrix f;
    for (std::uint32_t k = 0; k < m; ++k) {
        std::uint32_t len;
        take(&len, 4);
        std::string name(len, '\0');
        take(name.data(), len);
        f.feature_names.push_back(std::move(name));
    }
    std::vector<double> data(static_cast<std::size_t>(n) * m);
    take(data.data(), data.size() * sizeof(double));
    if (pos != bytes.size()) throw FormatError("trailing bytes in feature matrix file");
    f.values = Matrix(n, m, std::move(data));
    return f;
}

}  // namespace peach
