#pragma once

#include "probe_router/interchange.hpp"
#include "probe_router/targets.hpp"

#include <span>
#include <string>
#include <vector>

namespace probe_router {

struct PredictionVector;

/// Average ranks (1-based); tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rank correlation. Throws MetricUndefinedError on constant input.
double spearman(std::span<const double> x, std::span<const double> y);

/// Area under the ROC curve via the Mann-Whitney U statistic; ties count 1/2.
/// Labels are 0/1. Throws MetricUndefinedError without both classes.
double auroc(std::span<const double> scores, std::span<const double> labels);

/// Fraction of (score >= threshold) == label.
double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold = 0.5);

struct LengthBin {
    double bin_low = 0.0;   // tokens
    double bin_high = 0.0;  // tokens
    std::size_t n = 0;
    double mean_irt = 0.0;  // min-max normalized; NaN when no labels
    double mean_success = 0.0;
    double mean_predicted = 0.0;
};

/// Bins questions by log(max(mean output tokens, 1)) into `bins` equal-width
/// log-domain bins and averages normalized human difficulty, empirical
/// success and predicted success per bin. `rows` selects the evaluated
/// questions (all when empty). Empty bins are reported with n = 0 and NaN means.
std::vector<LengthBin> length_difficulty_report(const DatasetBundle& bundle, const PredictionVector& predictions,
                                                const TargetVector& target, int bins,
                                                std::span<const Eigen::Index> rows = {});

/// Delimiter-separated table with header
/// bin_low,bin_high,n,mean_irt,mean_success,mean_predicted.
std::string format_length_report(const std::vector<LengthBin>& table, char delimiter = ',');

}  // namespace probe_router
