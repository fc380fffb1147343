#include "probe_router/routing.hpp"

#include "probe_router/errors.hpp"
#include "probe_router/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace probe_router {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_nonempty(const ModelPool& pool) {
    if (pool.members.empty()) throw RoutingError("routing pool is empty");
}

const std::vector<double>& predictions_of(const PoolMember& m) {
    if (!m.predicted) throw RoutingError("no probe predictions for model " + m.model_id);
    return *m.predicted;
}

RoutingDecision decide(const ModelPool& pool, std::size_t member, std::size_t q) {
    const auto& m = pool.members[member];
    RoutingDecision d;
    d.model_id = m.model_id;
    d.predicted = m.predicted ? (*m.predicted)[q] : kNaN;
    d.utility = kNaN;
    d.correct = m.correct[q];
    d.cost = m.cost[q];
    return d;
}

// Members ordered by (expected cost, model id).
std::vector<std::size_t> by_expected_cost(const ModelPool& pool) {
    std::vector<std::size_t> order(pool.members.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ma = pool.members[a];
        const auto& mb = pool.members[b];
        if (ma.expected_cost != mb.expected_cost) return ma.expected_cost < mb.expected_cost;
        return ma.model_id < mb.model_id;
    });
    return order;
}

RoutingPlan utility_plan(const ModelPool& pool, double lambda, bool oracle) {
    require_nonempty(pool);
    if (!std::isfinite(lambda) || lambda < 0) throw RoutingError("lambda must be finite and >= 0");
    RoutingPlan plan;
    plan.strategy = oracle ? "oracle_utility" : "utility";
    std::vector<double> scores(pool.members.size());
    for (std::size_t q = 0; q < pool.num_questions(); ++q) {
        for (std::size_t i = 0; i < pool.members.size(); ++i)
            scores[i] = oracle ? pool.members[i].correct[q] : predictions_of(pool.members[i])[q];
        const std::size_t best = utility_argmax(pool, scores, lambda);
        RoutingDecision d = decide(pool, best, q);
        if (oracle) d.predicted = scores[best];
        d.utility = scores[best] - lambda * pool.normalized_cost[best];
        plan.decisions.push_back(std::move(d));
    }
    plan.finalize();
    return plan;
}

}  // namespace

double tier_output_price(SizeTier tier) {
    switch (tier) {
        case SizeTier::under_4b: return 0.10;
        case SizeTier::from_4b_to_16b: return 0.20;
        case SizeTier::over_16b: return 0.90;
    }
    return 0.0;
}

void PricingTable::set(const std::string& model_id, ModelPrice price) {
    if (!(price.input >= 0) || !(price.output >= 0) || !std::isfinite(price.input) || !std::isfinite(price.output))
        throw PricingError("prices must be finite and >= 0 for " + model_id);
    prices_[model_id] = price;
}

void PricingTable::set_tier(const std::string& model_id, SizeTier tier) {
    set(model_id, ModelPrice{0.0, tier_output_price(tier)});
}

const ModelPrice& PricingTable::at(const std::string& model_id) const {
    auto it = prices_.find(model_id);
    if (it == prices_.end()) throw PricingError("no price for model " + model_id);
    return it->second;
}

PricingTable PricingTable::with_defaults() {
    PricingTable t;
    t.set("gpt-oss-20b", ModelPrice{0.07, 0.30});
    return t;
}

PricingTable pricing_from_json(const std::string& text) {
    PricingTable table;
    try {
        const json j = json::parse(text);
        for (const auto& [id, entry] : j.at("models").items()) {
            if (entry.contains("tier")) {
                const auto tier = entry.at("tier").get<std::string>();
                if (tier == "<4B") table.set_tier(id, SizeTier::under_4b);
                else if (tier == "4-16B") table.set_tier(id, SizeTier::from_4b_to_16b);
                else if (tier == ">16B") table.set_tier(id, SizeTier::over_16b);
                else throw PricingError("unknown size tier '" + tier + "' for " + id);
            } else {
                table.set(id, ModelPrice{entry.value("input", 0.0), entry.at("output").get<double>()});
            }
        }
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed pricing table: ") + e.what());
    }
    return table;
}

PricingTable load_pricing(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open pricing file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return pricing_from_json(ss.str());
}

double dollar_cost(const PricingTable& pricing, const std::string& model_id, std::int64_t input_tokens,
                   std::int64_t output_tokens) {
    if (input_tokens < 0 || output_tokens < 0) throw ArgumentError("token counts must be non-negative");
    const ModelPrice& p = pricing.at(model_id);
    return static_cast<double>(input_tokens) * p.input / 1e6 + static_cast<double>(output_tokens) * p.output / 1e6;
}

std::vector<double> normalize_costs(std::span<const double> costs, CostNormalization method) {
    std::vector<double> out(costs.size(), 0.0);
    if (costs.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(costs.begin(), costs.end());
    const double lo = *lo_it, hi = *hi_it;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        if (method == CostNormalization::minmax) out[i] = hi > lo ? (costs[i] - lo) / (hi - lo) : 0.0;
        else out[i] = hi > 0 ? costs[i] / hi : 0.0;
    }
    return out;
}

std::size_t ModelPool::index_of(const std::string& model_id) const {
    for (std::size_t i = 0; i < members.size(); ++i)
        if (members[i].model_id == model_id) return i;
    throw RoutingError("model not in pool: " + model_id);
}

ModelPool make_pool(std::vector<std::string> question_ids, std::vector<PoolMember> members,
                    CostNormalization method) {
    ModelPool pool;
    pool.question_ids = std::move(question_ids);
    const std::size_t n = pool.question_ids.size();
    std::vector<double> expected;
    for (const auto& m : members) {
        if (m.correct.size() != n || m.cost.size() != n || (m.predicted && m.predicted->size() != n))
            throw RoutingError("pool member " + m.model_id + " is not aligned to the question list");
        if (std::count_if(members.begin(), members.end(), [&](const PoolMember& o) { return o.model_id == m.model_id; }) > 1)
            throw RoutingError("duplicate pool member " + m.model_id);
        expected.push_back(m.expected_cost);
    }
    pool.normalized_cost = normalize_costs(expected, method);
    pool.members = std::move(members);
    return pool;
}

void RoutingPlan::finalize() {
    double correct = 0, total = 0;
    for (const auto& d : decisions) {
        correct += d.correct;
        total += d.cost;
    }
    accuracy = decisions.empty() ? 0.0 : correct / static_cast<double>(decisions.size());
    cost = total;
}

void CascadeConfig::validate() const {
    if (stages.size() < 2) throw RoutingError("a cascade needs at least 2 stages");
    if (thresholds.size() + 1 < stages.size())
        throw RoutingError("a cascade needs one threshold per non-final stage");
    for (double t : thresholds)
        if (!(t >= 0.0 && t <= 1.0)) throw RoutingError("cascade thresholds must lie in [0, 1]");
    if (!(probe_surcharge >= 0)) throw RoutingError("probe surcharge must be >= 0");
}

RoutingPlan route_single(const ModelPool& pool, const std::string& model_id) {
    const std::size_t idx = pool.index_of(model_id);
    RoutingPlan plan;
    plan.strategy = model_id;
    for (std::size_t q = 0; q < pool.num_questions(); ++q) plan.decisions.push_back(decide(pool, idx, q));
    plan.finalize();
    return plan;
}

RoutingPlan route_cascade(const ModelPool& pool, const CascadeConfig& cfg) {
    require_nonempty(pool);
    cfg.validate();
    std::vector<std::size_t> stage_idx;
    for (const auto& id : cfg.stages) stage_idx.push_back(pool.index_of(id));
    for (std::size_t s = 0; s + 1 < stage_idx.size(); ++s) predictions_of(pool.members[stage_idx[s]]);

    RoutingPlan plan;
    plan.strategy = "cascade";
    for (std::size_t q = 0; q < pool.num_questions(); ++q) {
        std::size_t chosen = stage_idx.size() - 1;
        for (std::size_t s = 0; s + 1 < stage_idx.size(); ++s) {
            if ((*pool.members[stage_idx[s]].predicted)[q] >= cfg.thresholds[s]) {
                chosen = s;
                break;
            }
        }
        RoutingDecision d = decide(pool, stage_idx[chosen], q);
        if (cfg.pay_abandoned)
            for (std::size_t s = 0; s < chosen; ++s) d.cost += pool.members[stage_idx[s]].cost[q];
        const std::size_t probes_run = std::min(chosen + 1, stage_idx.size() - 1);
        d.cost += cfg.probe_surcharge * static_cast<double>(probes_run);
        plan.decisions.push_back(std::move(d));
    }
    plan.finalize();
    return plan;
}

std::size_t utility_argmax(const ModelPool& pool, std::span<const double> scores, double lambda) {
    std::size_t best = 0;
    double best_u = scores[0] - lambda * pool.normalized_cost[0];
    for (std::size_t i = 1; i < pool.members.size(); ++i) {
        const double u = scores[i] - lambda * pool.normalized_cost[i];
        if (u > best_u) {
            best = i;
            best_u = u;
        } else if (u == best_u) {
            const auto& a = pool.members[i];
            const auto& b = pool.members[best];
            if (a.expected_cost < b.expected_cost || (a.expected_cost == b.expected_cost && a.model_id < b.model_id)) {
                best = i;
                best_u = u;
            }
        }
    }
    return best;
}

RoutingPlan route_utility(const ModelPool& pool, const UtilityConfig& cfg) { return utility_plan(pool, cfg.lambda, false); }

RoutingPlan route_oracle_utility(const ModelPool& pool, const UtilityConfig& cfg) {
    return utility_plan(pool, cfg.lambda, true);
}

RoutingPlan route_oracle_cascade(const ModelPool& pool) {
    require_nonempty(pool);
    const auto order = by_expected_cost(pool);
    RoutingPlan plan;
    plan.strategy = "oracle_cascade";
    for (std::size_t q = 0; q < pool.num_questions(); ++q) {
        std::size_t chosen = order.front();
        for (std::size_t idx : order) {
            if (pool.members[idx].correct[q] == 1.0) {
                chosen = idx;
                break;
            }
        }
        plan.decisions.push_back(decide(pool, chosen, q));
    }
    plan.finalize();
    return plan;
}

RoutingPlan route_random(const ModelPool& pool, int trials, std::uint64_t seed) {
    require_nonempty(pool);
    if (trials < 1) throw RoutingError("random routing needs at least one trial");
    const std::size_t n = pool.num_questions();
    const auto m = static_cast<std::uint64_t>(pool.members.size());
    Rng rng(seed);
    std::vector<double> correct(n, 0.0), cost(n, 0.0);
    std::vector<std::size_t> first(n, 0);
    for (int t = 0; t < trials; ++t) {
        for (std::size_t q = 0; q < n; ++q) {
            const auto idx = static_cast<std::size_t>(rng.below(m));
            if (t == 0) first[q] = idx;
            correct[q] += pool.members[idx].correct[q];
            cost[q] += pool.members[idx].cost[q];
        }
    }
    RoutingPlan plan;
    plan.strategy = "random";
    for (std::size_t q = 0; q < n; ++q) {
        RoutingDecision d = decide(pool, first[q], q);
        d.correct = correct[q] / trials;
        d.cost = cost[q] / trials;
        plan.decisions.push_back(std::move(d));
    }
    plan.finalize();
    return plan;
}

std::vector<double> default_lambda_grid() { return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}; }

std::vector<FrontierPoint> sweep(const ModelPool& pool, SweepKind kind, std::span<const double> grid,
                                 const CascadeConfig& cascade) {
    if (grid.empty()) throw RoutingError("sweep grid is empty");
    std::vector<FrontierPoint> points;
    for (double v : grid) {
        RoutingPlan plan;
        switch (kind) {
            case SweepKind::utility: plan = route_utility(pool, {v}); break;
            case SweepKind::oracle_utility: plan = route_oracle_utility(pool, {v}); break;
            case SweepKind::cascade: {
                CascadeConfig cfg = cascade;
                cfg.thresholds.assign(cfg.stages.empty() ? 0 : cfg.stages.size() - 1, v);
                plan = route_cascade(pool, cfg);
                break;
            }
        }
        points.push_back({v, plan.accuracy, plan.cost, std::move(plan)});
    }
    return points;
}

std::vector<std::size_t> pareto_indices(std::span<const CostAccuracy> points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].cost != points[b].cost) return points[a].cost < points[b].cost;
        return points[a].accuracy > points[b].accuracy;
    });
    std::vector<bool> keep(points.size(), false);
    double best_cheaper = -std::numeric_limits<double>::infinity();  // best accuracy at strictly lower cost
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && points[order[j]].cost == points[order[i]].cost) ++j;
        const double group_best = points[order[i]].accuracy;
        for (std::size_t t = i; t < j; ++t) {
            const double acc = points[order[t]].accuracy;
            keep[order[t]] = acc == group_best && acc > best_cheaper;
        }
        best_cheaper = std::max(best_cheaper, group_best);
        i = j;
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (keep[i]) out.push_back(i);
    return out;
}

std::vector<CostAccuracy> pareto_front(std::span<const CostAccuracy> points) {
    std::vector<CostAccuracy> out;
    for (std::size_t i : pareto_indices(points)) out.push_back(points[i]);
    return out;
}

}  // namespace probe_router
