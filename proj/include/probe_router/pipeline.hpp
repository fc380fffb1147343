#pragma once

#include "probe_router/interchange.hpp"
#include "probe_router/probes.hpp"
#include "probe_router/routing.hpp"
#include "probe_router/targets.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace probe_router {

struct TrainOptions {
    TargetKind target = TargetKind::success_rate;
    std::optional<int> k;
    FeatureKind feature = FeatureKind::activation;
    LengthUnit length_unit = LengthUnit::characters;
    std::vector<double> alpha_grid = default_alpha_grid();
    double tolerance = 1e-8;
    int max_iterations = 200;
    unsigned threads = 1;
    int ece_bins = 10;
};

struct TrainReport {
    std::string target;
    std::string task;
    std::string feature;
    int layer = 0;
    int position = -1;
    double alpha = 0.0;
    double validation_score = 0.0;
    std::string test_metric;  // "spearman" or "auroc"
    double test_score = 0.0;
    std::optional<double> ece_before;  // test split, uncalibrated sigmoid
    std::optional<double> ece_after;   // test split, Platt-calibrated
    std::size_t n_train = 0, n_val = 0, n_test = 0;

    std::string to_json() const;
};

struct TrainResult {
    ProbeModel model;
    TrainReport report;
};

/// build_targets -> grid search on train/val -> Platt on val (classification)
/// -> a single test-split evaluation.
TrainResult train_probe(const DatasetBundle& bundle, const TrainOptions& options);

/// Number of test-split evaluations performed in this process.
std::size_t test_split_evaluations();

/// Fits the model's feature map (TF-IDF vocabulary on train texts, or the
/// activation slot blocks) and returns the candidate blocks for selection.
std::vector<FeatureBlock> candidate_blocks(const DatasetBundle& bundle, FeatureKind feature, LengthUnit unit,
                                           std::optional<TfidfVocabulary>& vocabulary);

// ---------------------------------------------------------------------------
// Routing pools assembled from datasets and trained probes.

struct PoolMemberSpec {
    std::string name;      // display label in reports
    std::filesystem::path dataset;  // manifest.json
    std::filesystem::path probe;    // probe model file
    std::optional<double> expected_cost;
};

/// {"members": [{"name", "dataset", "probe", "expected_cost"?}], "cascade": [names]?,
///  "target": "maj@5"?}; relative paths resolve against the file's directory.
struct PoolSpec {
    std::vector<PoolMemberSpec> members;
    std::vector<std::string> cascade;  // member names, cheapest first
    std::optional<std::string> target;
};

PoolSpec load_pool_spec(const std::filesystem::path& path);

struct PoolOptions {
    std::optional<std::string> target;  // overrides the spec / probe target
    Split eval_split = Split::test;
    bool eval_all = false;  // use every question instead of eval_split
    CostNormalization cost_norm = CostNormalization::minmax;
};

struct LoadedPool {
    ModelPool pool;                                    // restricted to the evaluated questions
    std::vector<ProbeModel> probes;                    // by member
    std::vector<DatasetBundle> datasets;               // by member
    std::map<std::string, std::string> display_names;  // model id -> name
    std::map<std::string, std::string> name_to_id;
};

/// Loads every member, checks they share questions and splits, computes
/// realized correctness and dollar cost of the target rollout, expected cost
/// over the train split, and probe predictions.
LoadedPool load_pool(const PoolSpec& spec, const PricingTable& pricing, const PoolOptions& options);

/// USD of the samples that define `kind` for one rollout (all samples, or the
/// first k for Maj@K / Pass@K).
double rollout_cost(const PricingTable& pricing, const RolloutRecord& rollout, TargetKind kind,
                    std::optional<int> k);

}  // namespace probe_router
