#pragma once

#include "probe_router/baselines.hpp"
#include "probe_router/calibration.hpp"
#include "probe_router/interchange.hpp"
#include "probe_router/targets.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace probe_router {

enum class ProbeTask { regression, classification };
enum class FeatureKind { activation, tfidf, length };

std::string to_string(ProbeTask task);
ProbeTask probe_task_from_string(const std::string& s);
std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& s);

/// Continuous targets get ridge regression, binary targets get logistic regression.
inline ProbeTask task_for(TargetKind kind) {
    return is_binary(kind) ? ProbeTask::classification : ProbeTask::regression;
}

std::vector<double> default_alpha_grid();  // 1e-3 .. 1e4, decades

struct ProbeConfig {
    std::vector<double> alpha_grid = default_alpha_grid();
    ProbeTask task = ProbeTask::regression;
    double tolerance = 1e-8;  // infinity norm of the logistic gradient
    int max_iterations = 200;
    unsigned threads = 1;  // grid cells evaluated concurrently

    void validate() const;
};

/// A bias-free linear probe plus the configuration that selected it.
struct ProbeModel {
    Eigen::VectorXd weights;
    int layer = 0;
    int position = -1;
    double alpha = 1.0;
    ProbeTask task = ProbeTask::regression;
    std::optional<PlattCalibrator> calibrator;
    double validation_score = 0.0;

    // Provenance and baseline feature maps.
    FeatureKind feature = FeatureKind::activation;
    std::string model_id;
    std::optional<TargetKind> target;
    std::optional<int> target_k;
    std::optional<TfidfVocabulary> vocabulary;
    LengthUnit length_unit = LengthUnit::characters;

    SlotKey slot() const { return {layer, position}; }
};

struct PredictionVector {
    Eigen::VectorXd raw_scores;
    std::optional<Eigen::VectorXd> probabilities;  // classification only
};

/// Minimizer of ||Xw - y||^2 + alpha ||w||^2 with no intercept. Uses the dual
/// form X^T (X X^T + alpha I)^-1 y when D > N.
Eigen::VectorXd fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha);

/// L(w) = sum_i BCE(sigmoid(x_i . w), y_i) + (alpha / 2) ||w||^2.
double logistic_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double alpha);
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                  double alpha);

/// Damped Newton on L(w) until ||grad L||_inf <= cfg.tolerance. Throws
/// ConvergenceError (carrying the final norm) after cfg.max_iterations.
Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha,
                             const ProbeConfig& cfg = {});

/// One candidate feature matrix (all dataset rows) for the grid search.
struct FeatureBlock {
    SlotKey slot;
    Eigen::MatrixXd features;
};

/// Fits every (block, alpha) cell on `train_rows` and keeps the cell with the
/// best validation metric (Spearman for regression, AUROC for
/// classification). Ties prefer larger alpha, then smaller layer, then the
/// position nearest -1. Shared by activation probes and text baselines.
ProbeModel select_probe(std::span<const FeatureBlock> blocks, const TargetVector& target,
                        std::span<const Eigen::Index> train_rows, std::span<const Eigen::Index> val_rows,
                        const ProbeConfig& cfg);

/// select_probe over every activation slot of the bundle using its train/val splits.
ProbeModel grid_search(const DatasetBundle& bundle, const TargetVector& target, const ProbeConfig& cfg);

/// Activations of one slot as a double matrix.
Eigen::MatrixXd slot_features(const ActivationSet& activations, const SlotKey& key);

/// Rows of `m` at `rows`.
Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const Eigen::Index> rows);
Eigen::VectorXd take_rows(const Eigen::VectorXd& v, std::span<const Eigen::Index> rows);

/// Sequential dot product; every prediction path goes through it so online and
/// offline scores agree bit for bit.
double linear_score(std::span<const double> row, const Eigen::VectorXd& weights);
double linear_score(std::span<const float> row, const Eigen::VectorXd& weights);

/// Success probability for one raw score: calibrated (or plain) sigmoid for
/// classification, the score clipped to [0, 1] for regression.
double score_to_probability(const ProbeModel& model, double raw_score);

PredictionVector predict_features(const ProbeModel& model, const Eigen::MatrixXd& features);
PredictionVector predict(const ProbeModel& model, const ActivationSet& activations);

/// Feature matrix the model consumes for every question of `bundle`
/// (activations, TF-IDF or length, per model.feature).
Eigen::MatrixXd model_features(const ProbeModel& model, const DatasetBundle& bundle);

/// Structured-text (JSON) serialization; doubles round-trip exactly.
std::string probe_to_json(const ProbeModel& model);
ProbeModel probe_from_json(const std::string& text);
void save_probe(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel load_probe(const std::filesystem::path& path);

}  // namespace probe_router
