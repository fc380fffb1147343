#include "probe_router/service.hpp"

#include "probe_router/errors.hpp"

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <limits>

namespace probe_router {

using nlohmann::json;

namespace {

struct RequestError {
    int status;
    json body;
};

[[noreturn]] void fail(const std::string& code, const std::string& message, json extra = json::object()) {
    json err{{"code", code}, {"message", message}};
    for (auto& [k, v] : extra.items()) err[k] = v;
    throw RequestError{400, json{{"schema_version", kSchemaVersion}, {"error", err}}};
}

std::vector<double> read_vector(const json& v, const std::string& model_id, Eigen::Index expected) {
    if (!v.is_array()) fail("bad_request", "activation for " + model_id + " must be an array of numbers");
    if (static_cast<Eigen::Index>(v.size()) != expected)
        fail("dimension_mismatch",
             "activation for " + model_id + " has width " + std::to_string(v.size()) + ", expected " +
                 std::to_string(expected),
             json{{"model_id", model_id}, {"expected_dim", expected}, {"received_dim", v.size()}});
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number()) fail("bad_request", "activation for " + model_id + " must contain only numbers");
        const double d = x.get<double>();
        if (!std::isfinite(d)) fail("bad_request", "activation for " + model_id + " must be finite");
        out.push_back(d);
    }
    return out;
}

ModelPool cost_only_pool(const std::vector<ServiceModel>& models, CostNormalization norm) {
    std::vector<PoolMember> members;
    for (const auto& m : models) {
        PoolMember p;
        p.model_id = m.model_id;
        p.expected_cost = m.expected_cost;
        members.push_back(std::move(p));
    }
    return make_pool({}, std::move(members), norm);
}

}  // namespace

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

RoutingService::RoutingService(std::vector<ServiceModel> models, double lambda, CostNormalization cost_norm)
    : models_(std::move(models)), lambda_(lambda) {
    if (models_.empty()) throw ArgumentError("routing service needs at least one model");
    if (!std::isfinite(lambda) || lambda < 0) throw ArgumentError("lambda must be finite and non-negative");
    for (const auto& m : models_) digests_.push_back(sha256_hex(probe_to_json(m.probe)));
    costs_ = cost_only_pool(models_, cost_norm);
}

RoutingService RoutingService::from_pool(const LoadedPool& pool, double lambda, CostNormalization cost_norm) {
    std::vector<ServiceModel> models;
    for (std::size_t i = 0; i < pool.pool.members.size(); ++i)
        models.push_back({pool.pool.members[i].model_id, pool.probes[i], pool.pool.members[i].expected_cost});
    return RoutingService(std::move(models), lambda, cost_norm);
}

ServiceReply RoutingService::health() const {
    json probes = json::object();
    for (std::size_t i = 0; i < models_.size(); ++i) probes[models_[i].model_id] = digests_[i];
    json j{{"status", "ok"},
           {"version", PROBE_ROUTER_VERSION},
           {"schema_version", kSchemaVersion},
           {"lambda", lambda_},
           {"probes", probes}};
    return {200, j.dump()};
}

ServiceReply RoutingService::route(const std::string& request_body) const {
    try {
        json req;
        try {
            req = json::parse(request_body);
        } catch (const json::parse_error& e) {
            fail("bad_request", std::string("request is not valid JSON: ") + e.what());
        }
        if (!req.is_object()) fail("bad_request", "request must be a JSON object");
        const auto sv = req.find("schema_version");
        if (sv == req.end() || !sv->is_number_integer() || sv->get<int>() != kSchemaVersion)
            fail("unsupported_schema", "schema_version must be " + std::to_string(kSchemaVersion),
                 json{{"expected_schema_version", kSchemaVersion}});

        std::vector<bool> candidate(models_.size(), false);
        if (auto it = req.find("candidates"); it != req.end()) {
            if (!it->is_array() || it->empty()) fail("bad_request", "candidates must be a non-empty array of model ids");
            for (const auto& c : *it) {
                if (!c.is_string()) fail("bad_request", "candidates must be model id strings");
                const auto id = c.get<std::string>();
                bool found = false;
                for (std::size_t i = 0; i < models_.size(); ++i)
                    if (models_[i].model_id == id) candidate[i] = found = true;
                if (!found) fail("unknown_model", "unknown candidate model: " + id, json{{"model_id", id}});
            }
        } else {
            candidate.assign(models_.size(), true);
        }

        const json* per_model = nullptr;
        if (auto it = req.find("activations"); it != req.end()) {
            if (!it->is_object()) fail("bad_request", "activations must map model ids to arrays");
            per_model = &*it;
        }
        const json* shared = nullptr;
        if (auto it = req.find("activation"); it != req.end()) shared = &*it;
        std::optional<std::string> text;
        if (auto it = req.find("question_text"); it != req.end()) {
            if (!it->is_string()) fail("bad_request", "question_text must be a string");
            text = it->get<std::string>();
        }

        std::vector<double> scores(models_.size(), -std::numeric_limits<double>::infinity());
        json predictions = json::object(), utilities = json::object();
        for (std::size_t i = 0; i < models_.size(); ++i) {
            if (!candidate[i]) continue;
            const auto& m = models_[i];
            double raw = 0;
            if (m.probe.feature == FeatureKind::activation) {
                const json* v = nullptr;
                if (per_model && per_model->contains(m.model_id)) v = &per_model->at(m.model_id);
                else if (shared) v = shared;
                if (!v) fail("missing_activation", "no activation supplied for " + m.model_id,
                             json{{"model_id", m.model_id}, {"expected_dim", m.probe.weights.size()}});
                raw = linear_score(read_vector(*v, m.model_id, m.probe.weights.size()), m.probe.weights);
            } else {
                if (!text) fail("missing_text", "probe for " + m.model_id + " needs question_text",
                                json{{"model_id", m.model_id}});
                QuestionRecord q;
                q.question_text = *text;
                q.text_length = static_cast<std::int64_t>(text->size());
                Eigen::VectorXd f = m.probe.feature == FeatureKind::tfidf
                                        ? Eigen::VectorXd(transform_tfidf(*m.probe.vocabulary, *text))
                                        : length_feature(q, m.probe.length_unit);
                raw = linear_score(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), m.probe.weights);
            }
            scores[i] = score_to_probability(m.probe, raw);
            predictions[m.model_id] = scores[i];
            utilities[m.model_id] = scores[i] - lambda_ * costs_.normalized_cost[i];
        }
        const std::size_t best = utility_argmax(costs_, scores, lambda_);
        json reply{{"schema_version", kSchemaVersion},
                   {"chosen", models_[best].model_id},
                   {"lambda", lambda_},
                   {"predictions", predictions},
                   {"utilities", utilities}};
        return {200, reply.dump()};
    } catch (const RequestError& e) {
        return {e.status, e.body.dump()};
    } catch (const json::exception& e) {
        return {400, json{{"schema_version", kSchemaVersion},
                          {"error", {{"code", "bad_request"}, {"message", e.what()}}}}
                         .dump()};
    } catch (const std::exception& e) {
        return {500, json{{"schema_version", kSchemaVersion},
                          {"error", {{"code", "internal"}, {"message", e.what()}}}}
                         .dump()};
    }
}

struct HttpServer::Impl {
    const RoutingService& service;
    httplib::Server server;
    explicit Impl(const RoutingService& s) : service(s) {}
};

HttpServer::HttpServer(const RoutingService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& svc = impl_->service;
    impl_->server.Get("/v1/health", [&svc](const httplib::Request&, httplib::Response& res) {
        const auto r = svc.health();
        res.status = r.status;
        res.set_content(r.body, "application/json");
    });
    impl_->server.Post("/v1/route", [&svc](const httplib::Request& req, httplib::Response& res) {
        const auto r = svc.route(req.body);
        res.status = r.status;
        res.set_content(r.body, "application/json");
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() {
    if (!impl_->server.listen_after_bind()) throw IoError("HTTP server stopped with an error");
}

void HttpServer::stop() { impl_->server.stop(); }

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace probe_router
