#pragma once

// Brute-force reference implementations used as independent test oracles.

#include "probe_router/routing.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace oracles {

/// Pairwise Mann-Whitney count: positive above negative scores 1, ties 1/2.
inline double auroc(const std::vector<double>& s, const std::vector<double>& y) {
    double wins = 0, ties = 0, pos = 0, neg = 0;
    for (double l : y) (l == 1.0 ? pos : neg) += 1;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1.0 && y[j] == 0.0) {
                if (s[i] > s[j]) wins += 1;
                else if (s[i] == s[j]) ties += 1;
            }
    return (wins + 0.5 * ties) / (pos * neg);
}

/// Rank = 1 + #smaller + (#equal - 1) / 2, then Pearson on ranks. NaN for constant input.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (double w : v) {
                if (w < v[i]) less += 1;
                if (w == v[i]) equal += 1;
            }
            r[i] = 1 + less + (equal - 1) / 2;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) mx += rx[i], my += ry[i];
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

/// Normal equations (X^T X + alpha I) w = X^T y by Gauss-Jordan elimination
/// with partial pivoting, element by element.
inline std::vector<double> ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha) {
    const auto d = static_cast<std::size_t>(X.cols());
    std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            double s = 0;
            for (Eigen::Index i = 0; i < X.rows(); ++i) s += X(i, r) * X(i, c);
            a[r][c] = s + (r == c ? alpha : 0.0);
        }
        double s = 0;
        for (Eigen::Index i = 0; i < X.rows(); ++i) s += X(i, r) * y[i];
        a[r][d] = s;
    }
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        for (std::size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c <= d; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::vector<double> w(d);
    for (std::size_t r = 0; r < d; ++r) w[r] = a[r][d] / a[r][r];
    return w;
}

/// Plurality winner by direct vote counting; ties go to the earliest first occurrence.
inline std::optional<std::string> plurality(const std::vector<std::optional<std::string>>& votes) {
    std::map<std::string, int> count, first;
    for (std::size_t i = 0; i < votes.size(); ++i) {
        if (!votes[i]) continue;
        if (!count.count(*votes[i])) first[*votes[i]] = static_cast<int>(i);
        ++count[*votes[i]];
    }
    for (const auto& [a, ca] : count) {
        bool wins = true;
        for (const auto& [b, cb] : count)
            if (a != b && (cb > ca || (cb == ca && first[b] < first[a]))) wins = false;
        if (wins) return a;
    }
    return std::nullopt;
}

/// Indices of points no other point strictly dominates.
inline std::vector<std::size_t> pareto(const std::vector<probe_router::CostAccuracy>& pts) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size() && !dominated; ++j)
            dominated = pts[j].cost <= pts[i].cost && pts[j].accuracy >= pts[i].accuracy &&
                        (pts[j].cost < pts[i].cost || pts[j].accuracy > pts[i].accuracy);
        if (!dominated) out.push_back(i);
    }
    return out;
}

}  // namespace oracles
