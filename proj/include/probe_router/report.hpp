#pragma once

#include "probe_router/routing.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace probe_router {

struct ReportRow {
    std::string strategy;
    std::string model;
    double accuracy = 0.0;
    double cost = 0.0;
};

struct ReportSection {
    std::string title;
    std::vector<ReportRow> rows;
};

struct RoutingReport {
    std::vector<ReportSection> sections;
    std::vector<std::pair<std::string, std::vector<FrontierPoint>>> frontiers;  // series name -> points
};

struct RoutingReportOptions {
    std::vector<double> lambda_grid = default_lambda_grid();
    std::map<std::string, std::string> display_names;  // model id -> strategy label
    int random_trials = 1000;
    std::uint64_t seed = 0;
    std::optional<CascadeConfig> cascade;  // adds a cascade section when set
    std::vector<double> tau_grid;
};

/// Sections "Single-model baselines" (sorted by cost), "Routing strategies"
/// (random, oracle cascade, oracle utility per lambda), "Probe router" (one row
/// per lambda) and, with a cascade configured, "Probe cascade" (one per tau).
RoutingReport build_routing_report(const ModelPool& pool, const RoutingReportOptions& options);

/// Strategy | Model | Accuracy | Cost as an aligned text table.
std::string format_report_text(const RoutingReport& report);

/// Same table as delimiter-separated values; section titles are rows with the
/// title in the Strategy column and the other fields empty.
std::string format_report_dsv(const RoutingReport& report, char delimiter = ',');

/// series,param,accuracy,cost,on_front for every sweep series.
std::string format_frontier_dsv(const RoutingReport& report, char delimiter = ',');

}  // namespace probe_router
