#pragma once

#include <span>
#include <vector>

namespace probe_router {

/// Numerically stable logistic function.
double sigmoid(double z);

/// Maps a raw decision score s to sigma(A*s + B).
struct PlattCalibrator {
    double A = 1.0;
    double B = 0.0;

    double operator()(double score) const { return sigmoid(A * score + B); }
    bool operator==(const PlattCalibrator&) const = default;
};

/// Fits (A, B) by Newton's method on the NLL against Platt's smoothed targets
/// t+ = (N+ + 1)/(N+ + 2), t- = 1/(N- + 2), until the gradient's infinity
/// norm is at most `tolerance`. Throws CalibrationError for single-class
/// labels and ConvergenceError if the certificate is not reached.
PlattCalibrator fit_platt(std::span<const double> scores, std::span<const double> labels,
                          double tolerance = 1e-8, int max_iterations = 200);

/// Gradient of the smoothed-target NLL at (A, B); index 0 is d/dA.
std::vector<double> platt_gradient(const PlattCalibrator& c, std::span<const double> scores,
                                   std::span<const double> labels);

/// Expected calibration error over `bins` equal-width bins on [0, 1]. A
/// probability of exactly 1 falls in the last bin.
double ece(std::span<const double> probabilities, std::span<const double> labels, int bins = 10);

}  // namespace probe_router
