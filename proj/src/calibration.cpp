#include "probe_router/calibration.hpp"

#include "probe_router/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace probe_router {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct PlattTargets {
    double pos, neg;
};

PlattTargets smoothed_targets(std::span<const double> labels) {
    double n_pos = 0, n_neg = 0;
    for (double l : labels) {
        if (l == 1.0) n_pos += 1;
        else if (l == 0.0) n_neg += 1;
        else throw ArgumentError("labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0) throw CalibrationError("Platt scaling needs both classes in the labels");
    return {(n_pos + 1) / (n_pos + 2), 1 / (n_neg + 2)};
}

double nll(double a, double b, std::span<const double> s, std::span<const double> y, PlattTargets t) {
    double total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = a * s[i] + b;
        total += softplus(f) - (y[i] == 1.0 ? t.pos : t.neg) * f;
    }
    return total;
}

Eigen::Vector2d grad(double a, double b, std::span<const double> s, std::span<const double> y, PlattTargets t) {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double r = sigmoid(a * s[i] + b) - (y[i] == 1.0 ? t.pos : t.neg);
        g[0] += r * s[i];
        g[1] += r;
    }
    return g;
}

}  // namespace

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> platt_gradient(const PlattCalibrator& c, std::span<const double> scores,
                                   std::span<const double> labels) {
    const auto g = grad(c.A, c.B, scores, labels, smoothed_targets(labels));
    return {g[0], g[1]};
}

PlattCalibrator fit_platt(std::span<const double> scores, std::span<const double> labels, double tolerance,
                          int max_iterations) {
    if (scores.size() != labels.size()) throw ArgumentError("fit_platt: length mismatch");
    for (double s : scores)
        if (!std::isfinite(s)) throw ArgumentError("fit_platt: non-finite score");
    const PlattTargets t = smoothed_targets(labels);

    double n_pos = 0;
    for (double l : labels) n_pos += l;
    const double n_neg = static_cast<double>(labels.size()) - n_pos;
    Eigen::Vector2d p(0.0, std::log((n_neg + 1) / (n_pos + 1)));

    Eigen::Vector2d g = grad(p[0], p[1], scores, labels, t);
    double f = nll(p[0], p[1], scores, labels, t);
    for (int it = 0; it < max_iterations; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= tolerance) return {p[0], p[1]};
        Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double q = sigmoid(p[0] * scores[i] + p[1]);
            const double w = q * (1 - q);
            h(0, 0) += w * scores[i] * scores[i];
            h(0, 1) += w * scores[i];
            h(1, 1) += w;
        }
        h(1, 0) = h(0, 1);
        // Pseudo-inverse handles constant scores, where A is unidentifiable.
        const Eigen::Vector2d d = -h.completeOrthogonalDecomposition().solve(g);
        const double slope = g.dot(d);
        const double g_norm = g.lpNorm<Eigen::Infinity>();
        double step = 1.0;
        bool moved = false;
        for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
            const Eigen::Vector2d cand = p + step * d;
            const double fc = nll(cand[0], cand[1], scores, labels, t);
            const Eigen::Vector2d gc = grad(cand[0], cand[1], scores, labels, t);
            if (fc <= f + 1e-4 * step * slope || gc.lpNorm<Eigen::Infinity>() < g_norm) {
                p = cand;
                f = fc;
                g = gc;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    const double norm = g.lpNorm<Eigen::Infinity>();
    if (norm <= tolerance) return {p[0], p[1]};
    throw ConvergenceError("Platt scaling did not converge (gradient norm " + std::to_string(norm) + ")", norm);
}

double ece(std::span<const double> probabilities, std::span<const double> labels, int bins) {
    if (probabilities.size() != labels.size()) throw ArgumentError("ece: length mismatch");
    if (bins < 1) throw ArgumentError("ece: bins must be positive");
    if (probabilities.empty()) return 0.0;
    std::vector<double> count(static_cast<std::size_t>(bins), 0.0), conf(count), hits(count);
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = probabilities[i];
        if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("ece: probability outside [0, 1]");
        const auto b = static_cast<std::size_t>(std::min(static_cast<int>(p * bins), bins - 1));
        count[b] += 1;
        conf[b] += p;
        hits[b] += labels[i];
    }
    const double n = static_cast<double>(probabilities.size());
    double total = 0;
    for (std::size_t b = 0; b < count.size(); ++b) {
        if (count[b] == 0) continue;
        total += count[b] / n * std::abs(hits[b] / count[b] - conf[b] / count[b]);
    }
    return std::clamp(total, 0.0, 1.0);
}

}  // namespace probe_router
