#pragma once

#include "probe_router/interchange.hpp"
#include "probe_router/routing.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace probe_router {

/// Planted-signal dataset generator. Success probability of question q is
/// sigmoid(x_q . w* + success_offset), where x_q ~ N(0, I) is the activation at
/// the signal slot; every other slot holds independent N(0, noise_scale^2)
/// noise.
///
/// Random streams (see Rng::derive): "questions" draws w*, x_q, splits, texts
/// and IRT noise and depends only on `seed`, so datasets for different
/// model_ids with the same seed share questions; "activations/<model_id>" draws
/// the noise slots; "rollouts/<model_id>" draws samples.
struct SynthConfig {
    std::string dataset_name = "synth";
    std::string model_id = "synth-model";
    std::int64_t num_questions = 2000;
    std::int64_t dim = 64;
    std::vector<int> layers = {0, 1, 2};
    std::vector<int> positions = {-3, -2, -1};
    SlotKey signal{1, -1};
    /// w*; when absent, a N(0, I) draw rescaled to norm `signal_norm`.
    std::optional<std::vector<double>> planted_weights;
    double signal_norm = 3.0;
    double noise_scale = 1.0;
    int rollout_k = 8;
    double temperature = 1.0;
    int max_tokens = 4096;
    double success_offset = 0.0;
    bool include_greedy = true;
    bool include_irt = true;
    double irt_noise = 0.5;
    /// log(output tokens) = token_log_mean - length_slope * logit + token_noise * N(0,1)
    double token_log_mean = 6.0;
    double length_slope = 0.5;
    double token_noise = 0.1;
    double val_fraction = 0.2;   // of the non-test questions
    double test_fraction = 0.2;  // of all questions
    std::uint64_t seed = 0;

    void validate() const;
};

/// The planted weight vector w* the generator uses for `cfg`.
std::vector<double> planted_weights(const SynthConfig& cfg);

DatasetBundle generate(const SynthConfig& cfg);

enum class ProbeQuality { perfect, blurred };

struct PoolFixtureConfig {
    std::int64_t num_questions = 2000;
    std::vector<double> accuracy_profile;  // per model
    std::vector<double> cost_profile;      // mean USD per question, per model
    std::vector<std::string> model_ids;    // defaults to m0, m1, ...
    ProbeQuality quality = ProbeQuality::perfect;
    /// Target AUROC of blurred predictions against realized correctness, in [0.5, 1].
    double auroc_knob = 1.0;
    std::uint64_t seed = 0;
};

/// Routing fixture: correctness ~ Bernoulli(accuracy), per-question costs
/// uniform on [0.5, 1.5] x the model's mean, expected cost = that mean.
/// Blurred predictions are sigmoid(mu * correct + N(0,1) - mu / 2) with
/// mu = sqrt(2) * Phi^-1(auroc_knob).
ModelPool plant_routing_pool(const PoolFixtureConfig& cfg);

/// Standard normal quantile.
double normal_quantile(double p);

}  // namespace probe_router
