#include "probe_router/metrics.hpp"

#include "probe_router/errors.hpp"
#include "probe_router/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace probe_router {

std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        // ranks i+1 .. j+1 share their mean
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("spearman: length mismatch");
    if (x.size() < 2) throw MetricUndefinedError("spearman: metric undefined for fewer than 2 points");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mx, dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw MetricUndefinedError("spearman: metric undefined for constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double auroc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw ArgumentError("auroc: length mismatch");
    double n_pos = 0, n_neg = 0;
    for (double l : labels) {
        if (l == 1.0) n_pos += 1;
        else if (l == 0.0) n_neg += 1;
        else throw ArgumentError("auroc: labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0) throw MetricUndefinedError("auroc: metric undefined without both classes");
    const auto ranks = average_ranks(scores);
    double rank_sum = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i)
        if (labels[i] == 1.0) rank_sum += ranks[i];
    // U counts positive-over-negative wins plus half the ties; exact in double.
    const double u = rank_sum - n_pos * (n_pos + 1) / 2;
    return u / (n_pos * n_neg);
}

double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold) {
    if (scores.size() != labels.size()) throw ArgumentError("accuracy: length mismatch");
    if (scores.empty()) throw MetricUndefinedError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) hits += ((scores[i] >= threshold) == (labels[i] == 1.0)) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(scores.size());
}

std::vector<LengthBin> length_difficulty_report(const DatasetBundle& bundle, const PredictionVector& predictions,
                                                const TargetVector& target, int bins,
                                                std::span<const Eigen::Index> rows) {
    if (bins < 1) throw ArgumentError("length report needs at least one bin");
    const auto n_all = static_cast<Eigen::Index>(bundle.manifest.question_ids.size());
    if (static_cast<Eigen::Index>(target.values.size()) != n_all ||
        predictions.raw_scores.size() != n_all)
        throw ArgumentError("length report: predictions/target not aligned to the dataset");

    std::vector<Eigen::Index> selected(rows.begin(), rows.end());
    if (selected.empty()) {
        selected.resize(static_cast<std::size_t>(n_all));
        std::iota(selected.begin(), selected.end(), Eigen::Index{0});
    }

    // Mean output tokens per question over all of its rollouts for the manifest model.
    std::vector<double> token_sum(static_cast<std::size_t>(n_all), 0.0);
    std::vector<double> token_cnt(static_cast<std::size_t>(n_all), 0.0);
    for (const auto& r : bundle.rollouts) {
        if (!bundle.manifest.model_id.empty() && r.model_id != bundle.manifest.model_id) continue;
        const auto row = bundle.manifest.row_of(r.question_id);
        for (const auto& s : r.samples) {
            token_sum[static_cast<std::size_t>(row)] += static_cast<double>(s.output_tokens);
            token_cnt[static_cast<std::size_t>(row)] += 1.0;
        }
    }
    std::vector<std::string> missing;
    std::vector<double> log_len;
    for (auto row : selected) {
        const auto i = static_cast<std::size_t>(row);
        if (token_cnt[i] == 0) missing.push_back(bundle.manifest.question_ids[i]);
        else log_len.push_back(std::log(std::max(token_sum[i] / token_cnt[i], 1.0)));
    }
    if (!missing.empty()) throw MissingDataError("length report: questions without rollouts", std::move(missing));

    double irt_lo = std::numeric_limits<double>::infinity(), irt_hi = -irt_lo;
    for (auto row : selected) {
        if (const auto& h = bundle.questions[static_cast<std::size_t>(row)].human_difficulty) {
            irt_lo = std::min(irt_lo, *h);
            irt_hi = std::max(irt_hi, *h);
        }
    }

    const double lo = selected.empty() ? 0.0 : *std::min_element(log_len.begin(), log_len.end());
    const double hi = selected.empty() ? 0.0 : *std::max_element(log_len.begin(), log_len.end());
    const double width = (hi - lo) / bins;

    struct Acc {
        std::size_t n = 0, n_irt = 0;
        double irt = 0, success = 0, predicted = 0;
    };
    std::vector<Acc> acc(static_cast<std::size_t>(bins));
    for (std::size_t j = 0; j < selected.size(); ++j) {
        const auto i = static_cast<std::size_t>(selected[j]);
        int b = width > 0 ? static_cast<int>(std::floor((log_len[j] - lo) / width)) : 0;
        b = std::clamp(b, 0, bins - 1);
        auto& a = acc[static_cast<std::size_t>(b)];
        ++a.n;
        a.success += target.values[i];
        double pred = predictions.probabilities ? (*predictions.probabilities)[static_cast<Eigen::Index>(i)]
                                                : std::clamp(predictions.raw_scores[static_cast<Eigen::Index>(i)], 0.0, 1.0);
        a.predicted += pred;
        if (const auto& h = bundle.questions[i].human_difficulty) {
            ++a.n_irt;
            a.irt += irt_hi > irt_lo ? (*h - irt_lo) / (irt_hi - irt_lo) : 0.0;
        }
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<LengthBin> out;
    for (int b = 0; b < bins; ++b) {
        const auto& a = acc[static_cast<std::size_t>(b)];
        LengthBin bin;
        bin.bin_low = std::exp(lo + width * b);
        bin.bin_high = std::exp(b + 1 == bins ? hi : lo + width * (b + 1));
        bin.n = a.n;
        bin.mean_irt = a.n_irt ? a.irt / static_cast<double>(a.n_irt) : nan;
        bin.mean_success = a.n ? a.success / static_cast<double>(a.n) : nan;
        bin.mean_predicted = a.n ? a.predicted / static_cast<double>(a.n) : nan;
        out.push_back(bin);
    }
    return out;
}

std::string format_length_report(const std::vector<LengthBin>& table, char d) {
    std::string out = "bin_low";
    for (const char* h : {"bin_high", "n", "mean_irt", "mean_success", "mean_predicted"}) out += d + std::string(h);
    out += "\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return std::string(buf);
    };
    for (const auto& b : table) {
        out += num(b.bin_low) + d + num(b.bin_high) + d + std::to_string(b.n) + d + num(b.mean_irt) + d +
               num(b.mean_success) + d + num(b.mean_predicted) + "\n";
    }
    return out;
}

}  // namespace probe_router
