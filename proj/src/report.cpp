#include "probe_router/report.hpp"

#include "probe_router/errors.hpp"

#include <algorithm>
#include <cstdio>

namespace probe_router {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string quote(const std::string& field, char d) {
    if (field.find(d) == std::string::npos && field.find('"') == std::string::npos &&
        field.find('\n') == std::string::npos)
        return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string pad(const std::string& s, std::size_t width, bool right = false) {
    if (s.size() >= width) return s;
    return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

}  // namespace

RoutingReport build_routing_report(const ModelPool& pool, const RoutingReportOptions& opt) {
    if (pool.members.empty()) throw RoutingError("routing pool is empty");
    RoutingReport report;

    auto name_of = [&](const std::string& id) {
        auto it = opt.display_names.find(id);
        return it == opt.display_names.end() ? id : it->second;
    };

    ReportSection singles{"Single-model baselines", {}};
    for (const auto& m : pool.members) {
        const auto plan = route_single(pool, m.model_id);
        singles.rows.push_back({name_of(m.model_id), m.model_id, plan.accuracy, plan.cost});
    }
    std::stable_sort(singles.rows.begin(), singles.rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.cost != b.cost) return a.cost < b.cost;
        return a.strategy < b.strategy;
    });
    report.sections.push_back(std::move(singles));

    ReportSection strategies{"Routing strategies", {}};
    const auto random = route_random(pool, opt.random_trials, opt.seed);
    strategies.rows.push_back({"Random Routing", "ensemble", random.accuracy, random.cost});
    const auto oracle = route_oracle_cascade(pool);
    strategies.rows.push_back({"Oracle (Perfect Knowledge)", "ensemble", oracle.accuracy, oracle.cost});
    auto oracle_points = sweep(pool, SweepKind::oracle_utility, opt.lambda_grid);
    for (const auto& p : oracle_points)
        strategies.rows.push_back({"Oracle Utility (lambda=" + fixed(p.param, 2) + ")", "ensemble", p.accuracy, p.cost});
    report.sections.push_back(std::move(strategies));

    ReportSection probe{"Probe router", {}};
    auto probe_points = sweep(pool, SweepKind::utility, opt.lambda_grid);
    for (const auto& p : probe_points)
        probe.rows.push_back({"Probe Router (lambda=" + fixed(p.param, 2) + ")", "ensemble", p.accuracy, p.cost});
    report.sections.push_back(std::move(probe));

    report.frontiers.emplace_back("probe_utility", std::move(probe_points));
    report.frontiers.emplace_back("oracle_utility", std::move(oracle_points));

    if (opt.cascade && !opt.tau_grid.empty()) {
        ReportSection cascade{"Probe cascade", {}};
        std::string chain;
        for (const auto& s : opt.cascade->stages) chain += (chain.empty() ? "" : " > ") + name_of(s);
        auto points = sweep(pool, SweepKind::cascade, opt.tau_grid, *opt.cascade);
        for (const auto& p : points)
            cascade.rows.push_back({"Probe Cascade (tau=" + fixed(p.param, 2) + ")", chain, p.accuracy, p.cost});
        report.sections.push_back(std::move(cascade));
        report.frontiers.emplace_back("probe_cascade", std::move(points));
    }
    return report;
}

std::string format_report_text(const RoutingReport& report) {
    std::size_t w_strategy = 8, w_model = 5;
    for (const auto& s : report.sections) {
        for (const auto& r : s.rows) {
            w_strategy = std::max(w_strategy, r.strategy.size());
            w_model = std::max(w_model, r.model.size());
        }
    }
    const std::size_t w_acc = 8, w_cost = 8;
    const std::string rule = std::string(w_strategy + 1, '-') + "+" + std::string(w_model + 2, '-') + "+" +
                             std::string(w_acc + 2, '-') + "+" + std::string(w_cost + 1, '-') + "\n";
    std::string out = pad("Strategy", w_strategy) + " | " + pad("Model", w_model) + " | " +
                      pad("Accuracy", w_acc, true) + " | " + pad("Cost", w_cost, true) + "\n";
    for (const auto& s : report.sections) {
        out += rule;
        out += s.title + "\n";
        for (const auto& r : s.rows) {
            out += pad(r.strategy, w_strategy) + " | " + pad(r.model, w_model) + " | " +
                   pad(fixed(r.accuracy, 3), w_acc, true) + " | " + pad(fixed(r.cost, 2), w_cost, true) + "\n";
        }
    }
    return out;
}

std::string format_report_dsv(const RoutingReport& report, char d) {
    std::string out = std::string("Strategy") + d + "Model" + d + "Accuracy" + d + "Cost\n";
    for (const auto& s : report.sections) {
        out += quote(s.title, d) + d + d + d + "\n";
        for (const auto& r : s.rows)
            out += quote(r.strategy, d) + d + quote(r.model, d) + d + fixed(r.accuracy, 3) + d + fixed(r.cost, 2) + "\n";
    }
    return out;
}

std::string format_frontier_dsv(const RoutingReport& report, char d) {
    std::string out = std::string("series") + d + "param" + d + "accuracy" + d + "cost" + d + "on_front\n";
    char buf[128];
    for (const auto& [series, points] : report.frontiers) {
        std::vector<CostAccuracy> ca;
        for (const auto& p : points) ca.push_back({p.cost, p.accuracy});
        const auto front = pareto_indices(ca);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const bool on = std::find(front.begin(), front.end(), i) != front.end();
            std::snprintf(buf, sizeof buf, "%.4f%c%.6f%c%.6f%c%d", points[i].param, d, points[i].accuracy, d,
                          points[i].cost, d, on ? 1 : 0);
            out += series + d + buf + "\n";
        }
    }
    return out;
}

}  // namespace probe_router
