#include "probe_router/synth.hpp"

#include "probe_router/calibration.hpp"
#include "probe_router/errors.hpp"
#include "probe_router/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace probe_router {

namespace {

const char* const kWords[] = {"find",  "the",     "value", "of",      "sum",    "integer", "triangle", "circle",
                              "prime", "number",  "ratio", "area",    "angle",  "product", "digits",   "largest",
                              "least", "positive", "real", "roots",   "square", "points",  "probability", "remainder",
                              "when",  "divided", "by",    "sequence", "terms", "average", "distance", "speed"};
constexpr std::size_t kNumWords = sizeof(kWords) / sizeof(kWords[0]);

std::string question_id(std::int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "q%05lld", static_cast<long long>(i));
    return buf;
}

std::vector<double> draw_planted(const SynthConfig& cfg, Rng& rng) {
    if (cfg.planted_weights) return *cfg.planted_weights;
    std::vector<double> w(static_cast<std::size_t>(cfg.dim));
    double norm2 = 0;
    for (auto& v : w) {
        v = rng.normal();
        norm2 += v * v;
    }
    const double scale = norm2 > 0 ? cfg.signal_norm / std::sqrt(norm2) : 0.0;
    for (auto& v : w) v *= scale;
    return w;
}

}  // namespace

void SynthConfig::validate() const {
    if (dim < 1) throw ArgumentError("synth: dim must be >= 1");
    if (num_questions < 0) throw ArgumentError("synth: num_questions must be >= 0");
    if (rollout_k < 1) throw ArgumentError("synth: rollout_k must be >= 1");
    if (layers.empty() || positions.empty()) throw ArgumentError("synth: need at least one layer and position");
    if (std::find(layers.begin(), layers.end(), signal.layer) == layers.end() ||
        std::find(positions.begin(), positions.end(), signal.position) == positions.end())
        throw ArgumentError("synth: signal slot " + to_string(signal) + " is not among the declared slots");
    if (planted_weights && static_cast<std::int64_t>(planted_weights->size()) != dim)
        throw ArgumentError("synth: planted weights must have length dim");
    if (!(noise_scale >= 0)) throw ArgumentError("synth: noise_scale must be >= 0");
    if (!(val_fraction >= 0 && val_fraction < 1 && test_fraction >= 0 && test_fraction < 1))
        throw ArgumentError("synth: split fractions must lie in [0, 1)");
    if (!(temperature > 0)) throw ArgumentError("synth: sampling temperature must be positive");
}

std::vector<double> planted_weights(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(Rng::derive(cfg.seed, "questions"));
    return draw_planted(cfg, rng);
}

DatasetBundle generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::int64_t n = cfg.num_questions;
    const std::int64_t d = cfg.dim;

    Rng qrng(Rng::derive(cfg.seed, "questions"));
    const std::vector<double> w_star = draw_planted(cfg, qrng);

    ActivationMatrix signal(n, d);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) signal(i, j) = static_cast<float>(qrng.normal());

    // Logit uses the float-stored activations so the dataset is self-consistent.
    std::vector<double> logit(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double z = 0;
        for (std::int64_t j = 0; j < d; ++j) z += static_cast<double>(signal(i, j)) * w_star[static_cast<std::size_t>(j)];
        logit[static_cast<std::size_t>(i)] = z;
    }
    double w_norm = 0;
    for (double v : w_star) w_norm += v * v;
    w_norm = std::sqrt(w_norm);

    DatasetBundle b;
    auto& m = b.manifest;
    m.dataset_name = cfg.dataset_name;
    m.model_id = cfg.model_id;
    m.decoding = DecodingConfig{cfg.temperature, cfg.rollout_k, DecodingMode::sample, cfg.max_tokens};
    m.layers = cfg.layers;
    m.positions = cfg.positions;
    m.activation_dim = d;
    for (std::int64_t i = 0; i < n; ++i) m.question_ids.push_back(question_id(i));

    // Fisher-Yates shuffle, then test / val / train by prefix.
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = n - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(qrng.below(static_cast<std::uint64_t>(i + 1)))]);
    const auto n_test = static_cast<std::int64_t>(std::llround(cfg.test_fraction * static_cast<double>(n)));
    const auto n_val = static_cast<std::int64_t>(std::llround(cfg.val_fraction * static_cast<double>(n - n_test)));
    for (std::int64_t r = 0; r < n; ++r) {
        const Split s = r < n_test ? Split::test : (r < n_test + n_val ? Split::val : Split::train);
        m.split_assignment[m.question_ids[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]] = s;
    }

    for (std::int64_t i = 0; i < n; ++i) {
        QuestionRecord q;
        q.question_id = m.question_ids[static_cast<std::size_t>(i)];
        q.ground_truth = std::to_string(10 + i);
        const double zhat = w_norm > 0 ? logit[static_cast<std::size_t>(i)] / w_norm : 0.0;
        const auto words = std::clamp<long long>(std::llround(12.0 - 3.0 * zhat + 2.0 * qrng.normal()), 3, 40);
        std::string text = "Problem " + std::to_string(i) + ":";
        for (long long k = 0; k < words; ++k) text += std::string(" ") + kWords[qrng.below(kNumWords)];
        text += "?";
        q.text_length = static_cast<std::int64_t>(text.size());
        q.question_text = std::move(text);
        const double irt_noise = qrng.normal();
        if (cfg.include_irt) q.human_difficulty = -logit[static_cast<std::size_t>(i)] + cfg.irt_noise * irt_noise;
        b.questions.push_back(std::move(q));
    }

    Rng arng(Rng::derive(cfg.seed, "activations/" + cfg.model_id));
    for (int l : cfg.layers) {
        for (int p : cfg.positions) {
            const SlotKey key{l, p};
            if (key == cfg.signal) {
                b.activations.slots.emplace(key, signal);
                continue;
            }
            ActivationMatrix noise = ActivationMatrix::Zero(n, d);
            if (cfg.noise_scale > 0)
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < d; ++j) noise(i, j) = static_cast<float>(cfg.noise_scale * arng.normal());
            b.activations.slots.emplace(key, std::move(noise));
        }
    }

    Rng rrng(Rng::derive(cfg.seed, "rollouts/" + cfg.model_id));
    auto draw_sample = [&](std::int64_t i, double p) {
        const auto& q = b.questions[static_cast<std::size_t>(i)];
        SampleRecord s;
        s.correct = rrng.bernoulli(p);
        const auto distractor = static_cast<std::int64_t>(rrng.below(3)) + 1;
        const bool unparsed = rrng.uniform() < 0.1;
        if (s.correct) s.parsed_answer = q.ground_truth;
        else if (!unparsed) s.parsed_answer = std::to_string(10 + i + distractor);
        const double z = logit[static_cast<std::size_t>(i)] + cfg.success_offset;
        const double log_tokens = cfg.token_log_mean - cfg.length_slope * z + cfg.token_noise * rrng.normal();
        s.output_tokens = std::max<std::int64_t>(1, std::llround(std::exp(std::min(log_tokens, 30.0))));
        s.input_tokens = q.text_length / 4 + 20;
        return s;
    };
    for (std::int64_t i = 0; i < n; ++i) {
        const double p = sigmoid(logit[static_cast<std::size_t>(i)] + cfg.success_offset);
        RolloutRecord r;
        r.question_id = m.question_ids[static_cast<std::size_t>(i)];
        r.model_id = cfg.model_id;
        r.decoding = m.decoding;
        for (int k = 0; k < cfg.rollout_k; ++k) r.samples.push_back(draw_sample(i, p));
        b.rollouts.push_back(std::move(r));
        if (cfg.include_greedy) {
            RolloutRecord g;
            g.question_id = m.question_ids[static_cast<std::size_t>(i)];
            g.model_id = cfg.model_id;
            g.decoding = DecodingConfig{0.0, 1, DecodingMode::greedy, cfg.max_tokens};
            g.samples.push_back(draw_sample(i, p));
            b.rollouts.push_back(std::move(g));
        }
    }
    return b;
}

double normal_quantile(double p) {
    if (!(p > 0 && p < 1)) throw ArgumentError("normal_quantile: p must lie in (0, 1)");
    double lo = -40, hi = 40;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

ModelPool plant_routing_pool(const PoolFixtureConfig& cfg) {
    const std::size_t k = cfg.accuracy_profile.size();
    if (k == 0 || cfg.cost_profile.size() != k) throw ArgumentError("pool fixture: profiles must be non-empty and equal length");
    if (!cfg.model_ids.empty() && cfg.model_ids.size() != k) throw ArgumentError("pool fixture: one model id per profile entry");
    if (!(cfg.auroc_knob >= 0.5 && cfg.auroc_knob <= 1.0)) throw ArgumentError("pool fixture: auroc_knob must lie in [0.5, 1]");

    Rng rng(Rng::derive(cfg.seed, "pool"));
    const auto n = static_cast<std::size_t>(cfg.num_questions);
    const bool perfect = cfg.quality == ProbeQuality::perfect || cfg.auroc_knob >= 1.0;
    const double mu = perfect || cfg.auroc_knob == 0.5 ? 0.0 : std::numbers::sqrt2 * normal_quantile(cfg.auroc_knob);

    std::vector<std::string> qids;
    for (std::size_t q = 0; q < n; ++q) qids.push_back(question_id(static_cast<std::int64_t>(q)));
    std::vector<PoolMember> members;
    for (std::size_t i = 0; i < k; ++i) {
        PoolMember m;
        m.model_id = cfg.model_ids.empty() ? "m" + std::to_string(i) : cfg.model_ids[i];
        m.expected_cost = cfg.cost_profile[i];
        std::vector<double> pred(n);
        for (std::size_t q = 0; q < n; ++q) {
            const double c = rng.bernoulli(cfg.accuracy_profile[i]) ? 1.0 : 0.0;
            m.correct.push_back(c);
            m.cost.push_back(cfg.cost_profile[i] * (0.5 + rng.uniform()));
            const double noise = rng.normal();
            pred[q] = perfect ? c : sigmoid(mu * c + noise - mu / 2);
        }
        m.predicted = std::move(pred);
        members.push_back(std::move(m));
    }
    return make_pool(std::move(qids), std::move(members));
}

}  // namespace probe_router
