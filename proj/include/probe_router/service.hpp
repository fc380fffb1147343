#pragma once

#include "probe_router/pipeline.hpp"
#include "probe_router/probes.hpp"
#include "probe_router/routing.hpp"

#include <memory>
#include <string>
#include <vector>

namespace probe_router {

inline constexpr int kSchemaVersion = 1;

struct ServiceModel {
    std::string model_id;
    ProbeModel probe;
    double expected_cost = 0.0;  // c-hat
};

struct ServiceReply {
    int status = 200;
    std::string body;  // JSON
};

/// Online utility router over a fixed pool of probes.
///
/// POST /v1/route body:
///   {"schema_version": 1, "candidates": [ids]?, "activations": {id: [floats]},
///    "activation": [floats]?, "question_text": "..."?}
/// "activation" is used for every candidate without an entry in "activations".
/// Reply: {"schema_version": 1, "chosen", "lambda", "predictions": {id: p},
///         "utilities": {id: u}}; errors are {"error": {"code", "message", ...}}.
class RoutingService {
public:
    RoutingService(std::vector<ServiceModel> models, double lambda,
                   CostNormalization cost_norm = CostNormalization::minmax);

    static RoutingService from_pool(const LoadedPool& pool, double lambda,
                                    CostNormalization cost_norm = CostNormalization::minmax);

    ServiceReply route(const std::string& request_body) const;
    ServiceReply health() const;

    double lambda() const { return lambda_; }
    const std::vector<ServiceModel>& models() const { return models_; }
    /// Members carry ids and expected costs only; used for c-tilde and tie-breaks.
    const ModelPool& cost_pool() const { return costs_; }

private:
    std::vector<ServiceModel> models_;
    std::vector<std::string> digests_;  // SHA-256 of each serialized probe
    ModelPool costs_;
    double lambda_;
};

/// SHA-256 hex digest.
std::string sha256_hex(const std::string& data);

/// HTTP front end (GET /v1/health, POST /v1/route).
class HttpServer {
public:
    explicit HttpServer(const RoutingService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void listen();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace probe_router
