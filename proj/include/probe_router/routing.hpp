#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace probe_router {

// ---------------------------------------------------------------------------
// Pricing

struct ModelPrice {
    double input = 0.0;   // USD per million input tokens
    double output = 0.0;  // USD per million output tokens
};

/// Parameter-count tiers of the output-token price list.
enum class SizeTier { under_4b, from_4b_to_16b, over_16b };

/// Output price (USD per million tokens) of a size tier: 0.10, 0.20, 0.90.
double tier_output_price(SizeTier tier);

class PricingTable {
public:
    void set(const std::string& model_id, ModelPrice price);
    /// Output-token accounting: input price 0, output price from the tier.
    void set_tier(const std::string& model_id, SizeTier tier);
    const ModelPrice& at(const std::string& model_id) const;
    bool contains(const std::string& model_id) const { return prices_.count(model_id) != 0; }
    const std::map<std::string, ModelPrice>& entries() const { return prices_; }

    /// gpt-oss-20b at 0.07 in / 0.30 out, nothing else.
    static PricingTable with_defaults();

private:
    std::map<std::string, ModelPrice> prices_;
};

/// {"models": {"<id>": {"input": x, "output": y} | {"tier": "<4B"|"4-16B"|">16B"}}}
PricingTable load_pricing(const std::filesystem::path& path);
PricingTable pricing_from_json(const std::string& text);

/// input_tokens * input_price / 1e6 + output_tokens * output_price / 1e6.
double dollar_cost(const PricingTable& pricing, const std::string& model_id, std::int64_t input_tokens,
                   std::int64_t output_tokens);

// ---------------------------------------------------------------------------
// Pool

enum class CostNormalization { minmax, max };

/// Costs scaled into [0, 1]: min-max by default (all-equal -> all 0), or
/// division by the maximum.
std::vector<double> normalize_costs(std::span<const double> expected_costs,
                                    CostNormalization method = CostNormalization::minmax);

struct PoolMember {
    std::string model_id;
    std::optional<std::vector<double>> predicted;  // probe p-hat per question
    std::vector<double> correct;                   // realized 0/1 per question
    std::vector<double> cost;                      // realized USD per question
    double expected_cost = 0.0;                    // c-hat, mean train-split cost
};

struct ModelPool {
    std::vector<std::string> question_ids;
    std::vector<PoolMember> members;
    std::vector<double> normalized_cost;  // c-tilde per member

    std::size_t num_questions() const { return question_ids.size(); }
    std::size_t index_of(const std::string& model_id) const;
};

/// Checks alignment and fills normalized_cost from the members' expected costs.
ModelPool make_pool(std::vector<std::string> question_ids, std::vector<PoolMember> members,
                    CostNormalization method = CostNormalization::minmax);

// ---------------------------------------------------------------------------
// Plans

struct RoutingDecision {
    std::string model_id;
    double predicted = 0.0;  // p-hat of the chosen model (NaN when unused)
    double utility = 0.0;    // objective value of the chosen model (NaN when unused)
    double correct = 0.0;    // realized; a trial mean for random routing
    double cost = 0.0;       // realized USD; a trial mean for random routing
};

struct RoutingPlan {
    std::string strategy;
    std::vector<RoutingDecision> decisions;
    double accuracy = 0.0;  // mean of decisions[].correct
    double cost = 0.0;      // sum of decisions[].cost

    /// Recomputes the aggregates from the decisions.
    void finalize();
};

struct CascadeConfig {
    std::vector<std::string> stages;  // cheapest first
    std::vector<double> thresholds;   // one per non-final stage (a trailing extra is ignored)
    bool pay_abandoned = false;       // also charge stages escalated away from
    double probe_surcharge = 0.0;     // USD per probe evaluated

    void validate() const;
};

struct UtilityConfig {
    double lambda = 0.0;
};

/// Plan that sends every question to one model.
RoutingPlan route_single(const ModelPool& pool, const std::string& model_id);

/// Walks stages in order and stays on the first whose p-hat >= its
/// threshold; the final stage always accepts.
RoutingPlan route_cascade(const ModelPool& pool, const CascadeConfig& cfg);

/// argmax_i p-hat_i - lambda * c-tilde_i; ties -> lower c-hat, then model id.
RoutingPlan route_utility(const ModelPool& pool, const UtilityConfig& cfg);

/// route_utility with p-hat replaced by realized correctness.
RoutingPlan route_oracle_utility(const ModelPool& pool, const UtilityConfig& cfg);

/// Cheapest (by c-hat) correct model per question; cheapest when none is.
RoutingPlan route_oracle_cascade(const ModelPool& pool);

/// Uniform random assignment averaged over `trials`; decisions record the
/// first trial's model and per-question trial means.
RoutingPlan route_random(const ModelPool& pool, int trials = 1000, std::uint64_t seed = 0);

/// Index of the utility-maximizing member given per-member scores.
std::size_t utility_argmax(const ModelPool& pool, std::span<const double> scores, double lambda);

struct FrontierPoint {
    double param = 0.0;
    double accuracy = 0.0;
    double cost = 0.0;
    RoutingPlan plan;
};

enum class SweepKind { utility, oracle_utility, cascade };

std::vector<double> default_lambda_grid();  // 0.0, 0.2, ..., 1.0

/// One point per grid value (lambda, or tau applied to every non-final stage).
/// `cascade` supplies stages and flags for cascade sweeps.
std::vector<FrontierPoint> sweep(const ModelPool& pool, SweepKind kind, std::span<const double> grid,
                                 const CascadeConfig& cascade = {});

struct CostAccuracy {
    double cost = 0.0;
    double accuracy = 0.0;
};

/// Indices (input order) of the points no other point dominates: Q dominates
/// P when Q.cost <= P.cost and Q.accuracy >= P.accuracy with one strict.
std::vector<std::size_t> pareto_indices(std::span<const CostAccuracy> points);
std::vector<CostAccuracy> pareto_front(std::span<const CostAccuracy> points);

}  // namespace probe_router
