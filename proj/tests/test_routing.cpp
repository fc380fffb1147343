#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "probe_router/errors.hpp"
#include "probe_router/rng.hpp"
#include "probe_router/routing.hpp"
#include "probe_router/synth.hpp"
#include "oracles.hpp"

#include <cmath>
#include <set>

using namespace probe_router;

namespace {

PoolMember member(std::string id, std::vector<double> predicted, std::vector<double> correct,
                  std::vector<double> cost, double expected) {
    return {std::move(id), std::move(predicted), std::move(correct), std::move(cost), expected};
}

std::vector<std::string> qids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("q" + std::to_string(i));
    return out;
}

std::vector<std::string> chosen(const RoutingPlan& p) {
    std::vector<std::string> out;
    for (const auto& d : p.decisions) out.push_back(d.model_id);
    return out;
}

bool same_plan(const RoutingPlan& a, const RoutingPlan& b) {
    if (a.decisions.size() != b.decisions.size()) return false;
    for (std::size_t i = 0; i < a.decisions.size(); ++i) {
        const auto &x = a.decisions[i], &y = b.decisions[i];
        if (x.model_id != y.model_id || x.correct != y.correct || x.cost != y.cost || x.utility != y.utility)
            return false;
    }
    return a.accuracy == b.accuracy && a.cost == b.cost;
}

// A two-model pool: p-hat A/B per question, c-tilde A = 1, B = 0.
ModelPool ab_pool(double pa, double pb) {
    return make_pool(qids(1), {member("A", {pa}, {1}, {2.0}, 2.0), member("B", {pb}, {0}, {1.0}, 1.0)});
}

PoolFixtureConfig three_model_fixture(ProbeQuality quality, std::uint64_t seed = 0) {
    PoolFixtureConfig cfg;
    cfg.num_questions = 500;
    cfg.accuracy_profile = {0.5, 0.7, 0.85};
    cfg.cost_profile = {0.001, 0.004, 0.02};
    cfg.quality = quality;
    cfg.auroc_knob = 0.8;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("dollar cost examples") {
    auto t = PricingTable::with_defaults();
    t.set_tier("qwen-7b", SizeTier::from_4b_to_16b);
    t.set_tier("small", SizeTier::under_4b);
    t.set_tier("big", SizeTier::over_16b);
    CHECK(dollar_cost(t, "gpt-oss-20b", 0, 1'000'000) == doctest::Approx(0.30).epsilon(1e-15));
    CHECK(dollar_cost(t, "gpt-oss-20b", 1'000'000, 0) == doctest::Approx(0.07).epsilon(1e-15));
    CHECK(dollar_cost(t, "qwen-7b", 0, 500'000) == doctest::Approx(0.10).epsilon(1e-15));
    CHECK(dollar_cost(t, "qwen-7b", 123456, 500'000) == doctest::Approx(0.10).epsilon(1e-15));
    CHECK(dollar_cost(t, "small", 0, 1'000'000) == doctest::Approx(0.10).epsilon(1e-15));
    CHECK(dollar_cost(t, "big", 0, 1'000'000) == doctest::Approx(0.90).epsilon(1e-15));
    CHECK(dollar_cost(t, "gpt-oss-20b", 0, 0) == 0.0);
    CHECK_THROWS_AS(dollar_cost(t, "unpriced", 0, 1), PricingError);
    CHECK_THROWS_AS(dollar_cost(t, "big", -1, 1), ArgumentError);
    CHECK_THROWS_AS(t.set("neg", ModelPrice{-1, 0}), PricingError);
}

TEST_CASE("pricing JSON") {
    const auto t = pricing_from_json(R"({"models": {"a": {"input": 0.1, "output": 0.5}, "b": {"tier": "4-16B"},
                                         "c": {"tier": ">16B"}, "d": {"output": 0.25}}})");
    CHECK(t.at("a").input == 0.1);
    CHECK(t.at("b").output == 0.20);
    CHECK(t.at("b").input == 0.0);
    CHECK(t.at("c").output == 0.90);
    CHECK(t.at("d").input == 0.0);
    CHECK_THROWS_AS(pricing_from_json(R"({"models": {"x": {"tier": "huge"}}})"), PricingError);
    CHECK_THROWS_AS(pricing_from_json("{"), LoadError);
    CHECK_THROWS_AS(load_pricing("/nonexistent/pricing.json"), LoadError);
}

TEST_CASE("cost normalization examples") {
    CHECK(normalize_costs(std::vector<double>{2, 4, 10}) == std::vector<double>{0, 0.25, 1.0});
    CHECK(normalize_costs(std::vector<double>{3, 3, 3}) == std::vector<double>{0, 0, 0});
    CHECK(normalize_costs(std::vector<double>{5}) == std::vector<double>{0});
    CHECK(normalize_costs(std::vector<double>{2, 4, 10}, CostNormalization::max) == std::vector<double>{0.2, 0.4, 1.0});
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> c(2 + rng.below(6));
        for (auto& v : c) v = rng.uniform() * 10;
        const auto n = normalize_costs(c);
        CHECK(*std::min_element(n.begin(), n.end()) == 0.0);
        CHECK(*std::max_element(n.begin(), n.end()) == 1.0);
    }
}

TEST_CASE("cascade examples") {
    auto pool = make_pool(qids(2), {member("s", {0.55, 0.95}, {0, 1}, {1, 1}, 1), member("l", {0.9, 0.9}, {1, 1}, {5, 5}, 5)});
    CascadeConfig cfg{{"s", "l"}, {0.6}};
    CHECK(chosen(route_cascade(pool, cfg)) == std::vector<std::string>{"l", "s"});
    const auto plan = route_cascade(pool, cfg);
    CHECK(plan.cost == 6.0);
    CHECK(plan.accuracy == 1.0);
    cfg.thresholds = {0.0};
    CHECK(chosen(route_cascade(pool, cfg)) == std::vector<std::string>{"s", "s"});
    cfg.thresholds = {1.0};
    CHECK(chosen(route_cascade(pool, cfg)) == std::vector<std::string>{"l", "l"});

    cfg.thresholds = {0.6};
    cfg.pay_abandoned = true;
    CHECK(route_cascade(pool, cfg).cost == 7.0);
    cfg.pay_abandoned = false;
    cfg.probe_surcharge = 0.5;
    CHECK(route_cascade(pool, cfg).cost == 7.0);
}

TEST_CASE("cascade errors and multi-stage walk") {
    auto pool = make_pool(qids(3), {member("a", {0.1, 0.9, 0.1}, {0, 1, 0}, {1, 1, 1}, 1),
                                    member("b", {0.2, 0.0, 0.8}, {0, 0, 1}, {2, 2, 2}, 2),
                                    PoolMember{"c", std::nullopt, {1, 1, 1}, {3, 3, 3}, 3}});
    CHECK(chosen(route_cascade(pool, {{"a", "b", "c"}, {0.5, 0.5}})) == std::vector<std::string>{"c", "a", "b"});
    CHECK_THROWS_AS(route_cascade(pool, {{"a", "c", "b"}, {0.5, 0.5}}), RoutingError);  // c has no probe
    CHECK_THROWS_AS(route_cascade(pool, {{"a"}, {}}), RoutingError);
    CHECK_THROWS_AS(route_cascade(pool, {{"a", "b"}, {1.5}}), RoutingError);
    CHECK_THROWS_AS(route_cascade(pool, {{"a", "b", "c"}, {0.5}}), RoutingError);
    CHECK_THROWS_AS(route_cascade(pool, {{"a", "zz"}, {0.5}}), RoutingError);
}

TEST_CASE("utility examples") {
    const auto pool = ab_pool(0.9, 0.6);
    auto p = route_utility(pool, {0.2});
    CHECK(p.decisions[0].model_id == "A");
    CHECK(p.decisions[0].utility == doctest::Approx(0.7));
    p = route_utility(pool, {0.5});
    CHECK(p.decisions[0].model_id == "B");
    CHECK(p.decisions[0].utility == doctest::Approx(0.6));
    CHECK(route_utility(pool, {0.0}).decisions[0].model_id == "A");
    CHECK(route_utility(ab_pool(0.4, 0.6), {0.0}).decisions[0].model_id == "B");
    CHECK_THROWS_AS(route_utility(pool, {-0.1}), RoutingError);
    CHECK_THROWS_AS(route_utility(make_pool({}, {}), {0.0}), RoutingError);
    CHECK_THROWS_AS(route_utility(make_pool(qids(1), {PoolMember{"x", std::nullopt, {1}, {1}, 1}}), {0.0}), RoutingError);
}

TEST_CASE("utility ties go to lower expected cost, then model id") {
    // Equal utilities: 0.8 - 0 * c.
    auto pool = make_pool(qids(1), {member("z", {0.8}, {1}, {1}, 1.0), member("y", {0.8}, {1}, {3}, 3.0),
                                    member("x", {0.8}, {1}, {1}, 1.0)});
    CHECK(route_utility(pool, {0.0}).decisions[0].model_id == "x");
    // Equal-cost pools: c-tilde all 0, lambda has no effect.
    auto flat = make_pool(qids(1), {member("b", {0.5}, {1}, {1}, 2.0), member("a", {0.7}, {1}, {1}, 2.0)});
    for (double l : default_lambda_grid()) CHECK(route_utility(flat, {l}).decisions[0].model_id == "a");
}

TEST_CASE("oracle utility and oracle cascade examples") {
    const auto pool = ab_pool(0.1, 0.9);  // A correct, B wrong
    for (double l : {0.0, 0.5, 0.99}) CHECK(route_oracle_utility(pool, {l}).decisions[0].model_id == "A");
    auto wrong = make_pool(qids(1), {member("A", {0.5}, {0}, {2}, 2.0), member("B", {0.5}, {0}, {1}, 1.0)});
    CHECK(route_oracle_utility(wrong, {0.0}).decisions[0].model_id == "B");
    CHECK(route_oracle_utility(wrong, {0.6}).decisions[0].model_id == "B");

    auto pool3 = make_pool(qids(3), {member("costly", {0, 0, 0}, {1, 0, 1}, {9, 9, 9}, 9),
                                     member("cheap", {0, 0, 0}, {0, 0, 1}, {1, 1, 1}, 1),
                                     member("mid", {0, 0, 0}, {1, 0, 1}, {4, 4, 4}, 4)});
    CHECK(chosen(route_oracle_cascade(pool3)) == std::vector<std::string>{"mid", "cheap", "cheap"});

    const auto fixture = plant_routing_pool(three_model_fixture(ProbeQuality::blurred));
    const auto oracle = route_oracle_utility(fixture, {0.0});
    for (std::size_t q = 0; q < fixture.num_questions(); ++q) {
        bool any = false;
        for (const auto& m : fixture.members) any = any || m.correct[q] == 1.0;
        CHECK(oracle.decisions[q].correct == (any ? 1.0 : 0.0));
    }
}

TEST_CASE("random routing") {
    const auto fixture = plant_routing_pool(three_model_fixture(ProbeQuality::perfect));
    const auto a = route_random(fixture, 50, 3), b = route_random(fixture, 50, 3);
    CHECK(chosen(a) == chosen(b));
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.cost == b.cost);

    auto single = make_pool(qids(3), {member("only", {0.5, 0.5, 0.5}, {1, 0, 1}, {1, 2, 3}, 2)});
    const auto r = route_random(single, 10, 0);
    const auto s = route_single(single, "only");
    CHECK(r.accuracy == s.accuracy);
    CHECK(r.cost == s.cost);
    CHECK_THROWS_AS(route_random(single, 0, 0), RoutingError);

    PoolFixtureConfig cfg;
    cfg.num_questions = 400;
    cfg.accuracy_profile = {0.8, 0.6};
    cfg.cost_profile = {1, 1};
    const auto two = plant_routing_pool(cfg);
    const double expect = (route_single(two, "m0").accuracy + route_single(two, "m1").accuracy) / 2;
    CHECK(std::abs(route_random(two, 2000, 0).accuracy - expect) <= 0.02);
    CHECK(std::abs(expect - 0.7) <= 0.06);
}

TEST_CASE("sweeps") {
    const auto fixture = plant_routing_pool(three_model_fixture(ProbeQuality::blurred));
    const auto grid = default_lambda_grid();
    const auto pts = sweep(fixture, SweepKind::utility, grid);
    REQUIRE(pts.size() == 6);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(pts[i].param == grid[i]);
        CHECK(pts[i].accuracy == pts[i].plan.accuracy);
        CHECK(same_plan(pts[i].plan, route_utility(fixture, {grid[i]})));
    }
    const std::vector<double> one{0.3};
    CHECK(sweep(fixture, SweepKind::utility, one).size() == 1);
    CHECK_THROWS_AS(sweep(fixture, SweepKind::utility, std::vector<double>{}), RoutingError);

    // tau = 0 keeps the first stage; tau = 1 sends everything to the second
    // (probabilities here are strictly below 1).
    const std::vector<double> ends{0.0, 1.0};
    CascadeConfig cfg{{"m0", "m2"}, {}};
    const auto c = sweep(fixture, SweepKind::cascade, ends, cfg);
    CHECK(c[0].accuracy == route_single(fixture, "m0").accuracy);
    CHECK(c[0].cost == route_single(fixture, "m0").cost);
    CHECK(c[1].accuracy == route_single(fixture, "m2").accuracy);
    CHECK(c[1].cost == route_single(fixture, "m2").cost);
}

TEST_CASE("pareto examples and brute-force equality") {
    const std::vector<CostAccuracy> ex{{1, 0.8}, {2, 0.7}, {3, 0.9}};
    CHECK(pareto_indices(ex) == std::vector<std::size_t>{0, 2});
    const std::vector<CostAccuracy> same{{1, 0.5}, {1, 0.5}, {1, 0.5}};
    CHECK(pareto_indices(same).size() == 3);
    CHECK(pareto_indices(std::vector<CostAccuracy>{}).empty());

    Rng rng(11);
    for (int t = 0; t < 100; ++t) {
        std::vector<CostAccuracy> pts(100);
        const bool coarse = t % 2 == 0;  // coarse grids force ties
        for (auto& p : pts) {
            p.cost = coarse ? static_cast<double>(rng.below(10)) : rng.uniform();
            p.accuracy = coarse ? static_cast<double>(rng.below(10)) / 10 : rng.uniform();
        }
        const auto got = pareto_indices(pts);
        REQUIRE(got == oracles::pareto(pts));
        std::size_t cheapest = 0, best = 0;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            if (pts[i].cost < pts[cheapest].cost ||
                (pts[i].cost == pts[cheapest].cost && pts[i].accuracy > pts[cheapest].accuracy))
                cheapest = i;
            if (pts[i].accuracy > pts[best].accuracy ||
                (pts[i].accuracy == pts[best].accuracy && pts[i].cost < pts[best].cost))
                best = i;
        }
        const std::set<std::size_t> kept(got.begin(), got.end());
        CHECK(kept.count(cheapest));
        CHECK(kept.count(best));
    }
}

TEST_CASE("escalated set grows with tau") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        PoolFixtureConfig cfg = three_model_fixture(ProbeQuality::blurred, seed);
        cfg.accuracy_profile = {0.5, 0.85};
        cfg.cost_profile = {0.001, 0.02};
        const auto pool = plant_routing_pool(cfg);
        std::vector<double> taus;
        for (int i = 0; i <= 100; ++i) taus.push_back(i / 100.0);
        const auto pts = sweep(pool, SweepKind::cascade, taus, CascadeConfig{{"m0", "m1"}, {}});
        std::vector<bool> prev(pool.num_questions(), false);
        for (const auto& p : pts) {
            for (std::size_t q = 0; q < prev.size(); ++q) {
                const bool esc = p.plan.decisions[q].model_id == "m1";
                if (prev[q]) REQUIRE(esc);
                prev[q] = esc;
            }
        }
        // Per-question realized cost is drawn around each model's mean, so
        // the cost ordering only holds where m1 costs more on that question.
        bool dearer = true;
        for (std::size_t q = 0; q < pool.num_questions(); ++q)
            dearer = dearer && pool.members[1].cost[q] >= pool.members[0].cost[q];
        REQUIRE(dearer);
        for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].cost >= pts[i - 1].cost);
    }
}

TEST_CASE("perfect probes make the router and the oracle coincide") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto pool = plant_routing_pool(three_model_fixture(ProbeQuality::perfect, seed));
        for (double l : default_lambda_grid())
            CHECK(same_plan(route_utility(pool, {l}), route_oracle_utility(pool, {l})));
    }
}

TEST_CASE("oracle utility dominates at lambda 0") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto pool = plant_routing_pool(three_model_fixture(ProbeQuality::blurred, seed));
        const double oracle = route_oracle_utility(pool, {0.0}).accuracy;
        for (const auto& m : pool.members) CHECK(oracle >= route_single(pool, m.model_id).accuracy);
        for (double l : default_lambda_grid()) CHECK(oracle >= route_utility(pool, {l}).accuracy);
    }
}

TEST_CASE("utility argmax ignores a per-question shift of every p-hat") {
    const auto pool = plant_routing_pool(three_model_fixture(ProbeQuality::blurred, 2));
    Rng rng(4);
    for (std::size_t q = 0; q < pool.num_questions(); ++q) {
        std::vector<double> scores;
        for (const auto& m : pool.members) scores.push_back((*m.predicted)[q]);
        // Dyadic shifts keep the differences exact.
        const double shift = static_cast<double>(rng.below(8)) / 8.0 - 0.5;
        std::vector<double> shifted(scores);
        for (auto& s : shifted) s += shift;
        for (double l : default_lambda_grid())
            REQUIRE(utility_argmax(pool, scores, l) == utility_argmax(pool, shifted, l));
    }
}

TEST_CASE("routing fixture knobs") {
    PoolFixtureConfig cfg;
    cfg.num_questions = 2000;
    cfg.accuracy_profile = {0.9, 0.91};
    cfg.cost_profile = {1, 10};
    const auto pool = plant_routing_pool(cfg);
    CHECK(pool.normalized_cost == std::vector<double>{0, 1});
    const auto pts = sweep(pool, SweepKind::utility, default_lambda_grid());
    for (const auto& d : pts.back().plan.decisions) REQUIRE(d.model_id == "m0");

    // A knob of 0.5 carries no information: the router behaves like random routing.
    PoolFixtureConfig blind;
    blind.num_questions = 2000;
    blind.accuracy_profile = {0.4, 0.6, 0.8};
    blind.cost_profile = {1, 1, 1};
    blind.quality = ProbeQuality::blurred;
    blind.auroc_knob = 0.5;
    const auto bp = plant_routing_pool(blind);
    const auto router = route_utility(bp, {0.0});
    const auto random = route_random(bp, 1000, 0);
    const double se = std::sqrt(0.6 * 0.4 / 2000.0);
    CHECK(std::abs(router.accuracy - random.accuracy) <= 3 * se * std::sqrt(2.0));
}
