#include "peach/service.hpp"

#include "peach/error.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <numeric>

namespace peach {

using nlohmann::json;

namespace {

ApiResponse error_response(int status, const std::string& message) {
    return {status, "application/json", json{{"error", message}}.dump() + "\n"};
}

ApiResponse json_response(std::string body) { return {200, "application/json", std::move(body)}; }

// Positive integer query parameter; nullopt when absent.
std::optional<std::size_t> positive(const std::map<std::string, std::string>& query, const std::string& key) {
    auto it = query.find(key);
    if (it == query.end()) return std::nullopt;
    const auto& text = it->second;
    std::size_t value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size() || value == 0) {
        throw ConfigError("query parameter \"" + key + "\" must be a positive integer");
    }
    return value;
}

json metrics_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"per_class_f1", m.per_class_f1}};
}

constexpr const char* kPlaceholderPage =
    "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>peach</title></head>\n"
    "<body><h1>peach</h1><p>The explorer UI is not installed. API endpoints:</p>\n"
    "<ul><li>GET /api/healthz</li><li>GET /api/meta</li><li>GET /api/tree?filter=&amp;topk=</li>"
    "<li>GET /api/documents?split=&amp;page=&amp;page_size=</li><li>POST /api/explain</li></ul>\n"
    "</body></html>\n";

}  // namespace

ApiHandler::ApiHandler(const Workspace& workspace) : ws_(workspace) {
    const auto& docs = ws_.bundle.corpus.documents;
    order_.resize(docs.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [&](auto a, auto b) { return docs[a].doc_id < docs[b].doc_id; });

    const auto trees = model_trees(ws_.model.model);
    std::size_t depth = 0;
    std::size_t rules = 0;
    for (const auto& t : trees) {
        depth = std::max(depth, t.depth());
        rules += t.rule_count();
    }
    json j;
    j["format"] = "peach-meta/1";
    j["kind"] = std::holds_alternative<RandomForest>(ws_.model.model) ? "forest" : "tree";
    j["algorithm"] = to_string(trees.front().algorithm);
    j["reduction_method"] = to_string(ws_.reduction.method);
    j["m"] = num_features(ws_.model.model);
    j["depth"] = depth;
    j["rule_count"] = rules;
    j["tree_count"] = trees.size();
    j["class_names"] = ws_.model.class_names;
    j["feature_names"] = feature_names(ws_.model.model);
    j["metrics"] = json::object();
    for (const auto& [name, m] : ws_.metrics()) j["metrics"][name] = metrics_json(m);
    json filters = {{"pos", json::array()}, {"ner", json::array()}};
    if (ws_.prototypes && ws_.prototypes->annotated && ws_.bundle.annotations) {
        filters["pos"] = ws_.bundle.annotations->pos_tagset;
        filters["ner"] = ws_.bundle.annotations->ner_tagset;
    }
    j["filters"] = std::move(filters);
    j["synonym_matching"] = ws_.bundle.lexicon.has_value();
    j["documents"] = {{"train", ws_.bundle.rows_in(Split::train).size()},
                      {"test", ws_.bundle.rows_in(Split::test).size()}};
    j["provenance"] = {{"reduction_sha256", ws_.reduction_hash}, {"model_sha256", ws_.model_hash}};
    meta_body_ = j.dump(1) + "\n";
}

ApiResponse ApiHandler::handle(const ApiRequest& request) const {
    try {
        if (request.path == "/api/healthz") {
            if (request.method != "GET") return error_response(405, "method not allowed");
            return {200, "text/plain", "ok"};
        }
        if (request.path == "/api/meta" || request.path == "/api/tree" || request.path == "/api/documents") {
            if (request.method != "GET") return error_response(405, "method not allowed");
            if (request.path == "/api/meta") return meta();
            if (request.path == "/api/tree") return tree(request.query);
            return documents(request.query);
        }
        if (request.path == "/api/explain") {
            if (request.method != "POST") return error_response(405, "method not allowed");
            return explain(request.body);
        }
        return error_response(404, "no such endpoint: " + request.path);
    } catch (const Error& e) {
        return error_response(500, e.what());
    }
}

ApiResponse ApiHandler::meta() const { return json_response(meta_body_); }

ApiResponse ApiHandler::tree(const std::map<std::string, std::string>& query) const {
    TagFilter filter;
    std::optional<std::size_t> topk;
    try {
        if (auto it = query.find("filter"); it != query.end()) filter = TagFilter::parse(it->second);
        topk = positive(query, "topk");
    } catch (const ConfigError& e) {
        return error_response(400, e.what());
    }
    try {
        return json_response(ws_.global(filter, topk).to_json());
    } catch (const MissingResourceError& e) {
        return error_response(400, e.what());
    }
}

ApiResponse ApiHandler::documents(const std::map<std::string, std::string>& query) const {
    Split split = Split::test;
    std::size_t page = 1;
    std::size_t page_size = kDefaultPageSize;
    try {
        if (auto it = query.find("split"); it != query.end()) split = parse_split(it->second);
        page = positive(query, "page").value_or(1);
        page_size = positive(query, "page_size").value_or(kDefaultPageSize);
        if (page_size > kMaxPageSize) throw ConfigError("page_size may not exceed " + std::to_string(kMaxPageSize));
    } catch (const Error& e) {
        return error_response(400, e.what());
    }
    std::vector<std::size_t> rows;
    for (auto r : order_) {
        if (ws_.bundle.corpus.documents[r].split == split) rows.push_back(r);
    }
    const std::size_t pages = std::max<std::size_t>(1, (rows.size() + page_size - 1) / page_size);
    if (page > pages) {
        return error_response(404, "page " + std::to_string(page) + " is past the last page " + std::to_string(pages));
    }
    json docs = json::array();
    const auto& names = ws_.model.class_names;
    const auto begin = (page - 1) * page_size;
    for (std::size_t i = begin; i < std::min(rows.size(), begin + page_size); ++i) {
        const auto& doc = ws_.bundle.corpus.documents[rows[i]];
        const auto predicted = ws_.predictions()[rows[i]];
        docs.push_back({{"doc_id", doc.doc_id},
                        {"text", doc.text},
                        {"true_class", doc.label},
                        {"true_label", names.at(doc.label)},
                        {"predicted_class", predicted},
                        {"predicted_label", names.at(predicted)}});
    }
    json j = {{"split", to_string(split)},  {"page", page},   {"page_size", page_size},
              {"total", rows.size()},       {"pages", pages}, {"documents", std::move(docs)}};
    return json_response(j.dump(1) + "\n");
}

ApiResponse ApiHandler::explain(const std::string& body) const {
    std::string doc_id;
    TagFilter filter;
    try {
        const auto j = json::parse(body);
        if (!j.is_object()) throw ConfigError("request body must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            if (key != "doc_id" && key != "filter") throw ConfigError("unknown field \"" + key + "\"");
        }
        if (!j.contains("doc_id") || !j["doc_id"].is_string()) throw ConfigError("field \"doc_id\" must be a string");
        doc_id = j["doc_id"].get<std::string>();
        if (j.contains("filter") && !j["filter"].is_null()) {
            if (!j["filter"].is_string()) throw ConfigError("field \"filter\" must be a string");
            filter = TagFilter::parse(j["filter"].get<std::string>());
        }
    } catch (const json::exception& e) {
        return error_response(400, std::string("malformed request body: ") + e.what());
    } catch (const ConfigError& e) {
        return error_response(400, e.what());
    }
    if (!ws_.bundle.find_row(doc_id)) return error_response(404, "unknown document id \"" + doc_id + "\"");
    try {
        return json_response(ws_.explain(doc_id, filter).to_json());
    } catch (const MissingResourceError& e) {
        return error_response(400, e.what());
    }
}

struct HttpServer::Impl {
    const Workspace& ws;
    ServeOptions options;
    ApiHandler handler;
    httplib::Server server;
    int port = -1;

    Impl(const Workspace& w, ServeOptions o) : ws(w), options(std::move(o)), handler(w) {}
};

HttpServer::HttpServer(const Workspace& workspace, ServeOptions options)
    : impl_(std::make_unique<Impl>(workspace, std::move(options))) {
    auto& server = impl_->server;
    const auto& handler = impl_->handler;
    auto forward = [&handler](const httplib::Request& req, httplib::Response& res) {
        ApiRequest request;
        request.method = req.method;
        request.path = req.path;
        for (const auto& [key, value] : req.params) request.query.emplace(key, value);
        request.body = req.body;
        const auto response = handler.handle(request);
        res.status = response.status;
        res.set_content(response.body, response.content_type);
    };
    server.Get(R"(/api/.*)", forward);
    server.Post(R"(/api/.*)", forward);
    if (impl_->options.static_dir) {
        if (!server.set_mount_point("/", impl_->options.static_dir->string())) {
            throw ConfigError("static directory " + impl_->options.static_dir->string() + " does not exist");
        }
    } else {
        server.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
        });
    }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    auto& impl = *impl_;
    if (impl.options.port == 0) {
        impl.port = impl.server.bind_to_any_port(impl.options.host);
    } else if (impl.server.bind_to_port(impl.options.host, impl.options.port)) {
        impl.port = impl.options.port;
    }
    if (impl.port < 0) {
        throw ConfigError("cannot bind " + impl.options.host + ":" + std::to_string(impl.options.port));
    }
    return impl.port;
}

void HttpServer::listen() {
    if (impl_->port < 0) bind();
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace peach
