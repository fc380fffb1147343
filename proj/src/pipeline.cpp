#include "probe_router/pipeline.hpp"

#include "probe_router/calibration.hpp"
#include "probe_router/errors.hpp"
#include "probe_router/metrics.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <fstream>

namespace probe_router {

using nlohmann::json;

namespace {

std::atomic<std::size_t> g_test_evaluations{0};

std::vector<double> gather(const std::vector<double>& v, std::span<const Eigen::Index> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(v[static_cast<std::size_t>(r)]);
    return out;
}

struct TestEvaluation {
    double score = 0.0;
    std::optional<double> ece_before;
    std::optional<double> ece_after;
};

// The only place test-split labels are read during training.
TestEvaluation evaluate_test_split(const ProbeModel& model, const Eigen::MatrixXd& features,
                                   const TargetVector& target, std::span<const Eigen::Index> test_rows, int ece_bins) {
    ++g_test_evaluations;
    TestEvaluation out;
    if (test_rows.empty()) throw ArgumentError("evaluation: empty test split");
    const Eigen::MatrixXd x = take_rows(features, test_rows);
    const PredictionVector pred = predict_features(model, x);
    const std::vector<double> y = gather(target.values, test_rows);
    const std::span<const double> raw(pred.raw_scores.data(), static_cast<std::size_t>(pred.raw_scores.size()));
    if (model.task == ProbeTask::classification) {
        out.score = auroc(raw, y);
        std::vector<double> plain;
        for (double s : raw) plain.push_back(sigmoid(s));
        out.ece_before = ece(plain, y, ece_bins);
        const Eigen::VectorXd& p = *pred.probabilities;
        out.ece_after = ece(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), y, ece_bins);
    } else {
        bool constant = true;
        for (double s : raw) constant = constant && s == raw[0];
        out.score = constant ? 0.0 : spearman(raw, y);
    }
    return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

std::size_t test_split_evaluations() { return g_test_evaluations.load(); }

std::string TrainReport::to_json() const {
    json j{{"target", target},
           {"task", task},
           {"feature", feature},
           {"layer", layer},
           {"position", position},
           {"alpha", alpha},
           {"validation_score", validation_score},
           {"test_metric", test_metric},
           {"test_score", test_score},
           {"n_train", n_train},
           {"n_val", n_val},
           {"n_test", n_test}};
    j["ece_before"] = ece_before ? json(*ece_before) : json(nullptr);
    j["ece_after"] = ece_after ? json(*ece_after) : json(nullptr);
    return j.dump(2) + "\n";
}

std::vector<FeatureBlock> candidate_blocks(const DatasetBundle& bundle, FeatureKind feature, LengthUnit unit,
                                           std::optional<TfidfVocabulary>& vocabulary) {
    std::vector<FeatureBlock> blocks;
    switch (feature) {
        case FeatureKind::activation:
            for (int l : bundle.manifest.layers)
                for (int p : bundle.manifest.positions)
                    blocks.push_back({SlotKey{l, p}, slot_features(bundle.activations, SlotKey{l, p})});
            break;
        case FeatureKind::tfidf: {
            std::vector<std::string> train_texts, all_texts;
            for (const auto& q : bundle.questions) {
                if (!q.question_text) throw ArgumentError("TF-IDF features need question_text for " + q.question_id);
                all_texts.push_back(*q.question_text);
            }
            for (auto r : bundle.manifest.rows_in(Split::train)) train_texts.push_back(all_texts[static_cast<std::size_t>(r)]);
            vocabulary = fit_tfidf(train_texts);
            blocks.push_back({SlotKey{0, -1}, tfidf_matrix(*vocabulary, all_texts)});
            break;
        }
        case FeatureKind::length: {
            Eigen::MatrixXd m(static_cast<Eigen::Index>(bundle.questions.size()), 1);
            for (std::size_t i = 0; i < bundle.questions.size(); ++i)
                m(static_cast<Eigen::Index>(i), 0) = length_feature(bundle.questions[i], unit)[0];
            blocks.push_back({SlotKey{0, -1}, std::move(m)});
            break;
        }
    }
    return blocks;
}

TrainResult train_probe(const DatasetBundle& bundle, const TrainOptions& options) {
    const TargetVector target = build_targets(bundle, options.target, options.k);
    ProbeConfig cfg;
    cfg.alpha_grid = options.alpha_grid;
    cfg.task = task_for(options.target);
    cfg.tolerance = options.tolerance;
    cfg.max_iterations = options.max_iterations;
    cfg.threads = options.threads;

    const auto train = bundle.manifest.rows_in(Split::train);
    const auto val = bundle.manifest.rows_in(Split::val);
    const auto test = bundle.manifest.rows_in(Split::test);

    std::optional<TfidfVocabulary> vocabulary;
    const auto blocks = candidate_blocks(bundle, options.feature, options.length_unit, vocabulary);
    ProbeModel model = select_probe(blocks, target, train, val, cfg);
    model.model_id = bundle.manifest.model_id;
    model.feature = options.feature;
    model.vocabulary = std::move(vocabulary);
    model.length_unit = options.length_unit;

    const Eigen::MatrixXd* features = &blocks.front().features;
    for (const auto& b : blocks)
        if (b.slot == model.slot()) features = &b.features;

    if (model.task == ProbeTask::classification) {
        const Eigen::VectorXd val_raw = take_rows(*features, val) * model.weights;
        const std::vector<double> val_scores(val_raw.data(), val_raw.data() + val_raw.size());
        model.calibrator = fit_platt(val_scores, gather(target.values, val), options.tolerance, options.max_iterations);
    }

    const TestEvaluation eval = evaluate_test_split(model, *features, target, test, options.ece_bins);

    TrainReport report;
    report.target = to_string(options.target) + (target.k ? "@" + std::to_string(*target.k) : "");
    report.task = to_string(model.task);
    report.feature = to_string(model.feature);
    report.layer = model.layer;
    report.position = model.position;
    report.alpha = model.alpha;
    report.validation_score = model.validation_score;
    report.test_metric = model.task == ProbeTask::classification ? "auroc" : "spearman";
    report.test_score = eval.score;
    report.ece_before = eval.ece_before;
    report.ece_after = eval.ece_after;
    report.n_train = train.size();
    report.n_val = val.size();
    report.n_test = test.size();
    return {std::move(model), std::move(report)};
}

PoolSpec load_pool_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open pool file: " + path.string());
    PoolSpec spec;
    const auto base = path.parent_path();
    try {
        const json j = json::parse(in);
        for (const auto& m : j.at("members")) {
            PoolMemberSpec s;
            s.dataset = resolve(base, m.at("dataset").get<std::string>());
            s.probe = resolve(base, m.at("probe").get<std::string>());
            s.name = m.value("name", std::string{});
            if (auto it = m.find("expected_cost"); it != m.end()) s.expected_cost = it->get<double>();
            spec.members.push_back(std::move(s));
        }
        if (auto it = j.find("cascade"); it != j.end()) spec.cascade = it->get<std::vector<std::string>>();
        if (auto it = j.find("target"); it != j.end()) spec.target = it->get<std::string>();
    } catch (const json::exception& e) {
        throw LoadError("malformed pool file " + path.string() + ": " + e.what());
    }
    if (spec.members.empty()) throw LoadError("pool file lists no members: " + path.string());
    return spec;
}

double rollout_cost(const PricingTable& pricing, const RolloutRecord& rollout, TargetKind kind,
                    std::optional<int> k) {
    std::size_t n = rollout.samples.size();
    if ((kind == TargetKind::maj_at_k || kind == TargetKind::pass_at_k) && k)
        n = std::min(n, static_cast<std::size_t>(std::max(*k, 0)));
    double total = 0;
    for (std::size_t i = 0; i < n; ++i)
        total += dollar_cost(pricing, rollout.model_id, rollout.samples[i].input_tokens, rollout.samples[i].output_tokens);
    return total;
}

LoadedPool load_pool(const PoolSpec& spec, const PricingTable& pricing, const PoolOptions& options) {
    LoadedPool out;
    std::vector<PoolMember> members;
    for (const auto& ms : spec.members) {
        DatasetBundle bundle = load_dataset(ms.dataset);
        ProbeModel probe = load_probe(ms.probe);
        const std::string& id = bundle.manifest.model_id;
        if (!probe.model_id.empty() && probe.model_id != id)
            throw RoutingError("probe " + ms.probe.string() + " was trained for " + probe.model_id + ", not " + id);
        if (!out.datasets.empty()) {
            const auto& ref = out.datasets.front().manifest;
            if (bundle.manifest.question_ids != ref.question_ids || bundle.manifest.split_assignment != ref.split_assignment)
                throw RoutingError("pool member " + id + " does not share questions and splits with " + ref.model_id);
        }
        for (const auto& m : members)
            if (m.model_id == id) throw RoutingError("duplicate pool member: " + id);

        std::optional<int> k = probe.target_k;
        TargetKind kind = probe.target.value_or(TargetKind::greedy);
        const auto target_name = options.target ? options.target : spec.target;
        if (target_name) {
            k.reset();
            kind = target_kind_from_string(*target_name, k);
        }
        const TargetVector target = build_targets(bundle, kind, k);

        const std::size_t n = bundle.manifest.question_ids.size();
        PoolMember m;
        m.model_id = id;
        m.correct = target.values;
        m.cost.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const RolloutRecord* r = find_rollout(bundle, bundle.manifest.question_ids[i], kind);
            if (!r) throw MissingDataError("no rollout for " + bundle.manifest.question_ids[i], {bundle.manifest.question_ids[i]});
            m.cost[i] = rollout_cost(pricing, *r, kind, target.k);
        }
        if (ms.expected_cost) {
            m.expected_cost = *ms.expected_cost;
        } else {
            const auto train = bundle.manifest.rows_in(Split::train);
            if (train.empty()) throw RoutingError("expected cost needs a non-empty train split for " + id);
            double sum = 0;
            for (auto r : train) sum += m.cost[static_cast<std::size_t>(r)];
            m.expected_cost = sum / static_cast<double>(train.size());
        }
        const PredictionVector pred = predict_features(probe, model_features(probe, bundle));
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = score_to_probability(probe, pred.raw_scores[static_cast<Eigen::Index>(i)]);
        m.predicted = std::move(p);

        out.display_names[id] = ms.name.empty() ? id : ms.name;
        out.name_to_id[ms.name.empty() ? id : ms.name] = id;
        out.name_to_id[id] = id;
        members.push_back(std::move(m));
        out.probes.push_back(std::move(probe));
        out.datasets.push_back(std::move(bundle));
    }

    const auto& manifest = out.datasets.front().manifest;
    std::vector<Eigen::Index> keep;
    if (options.eval_all) {
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(manifest.question_ids.size()); ++i) keep.push_back(i);
    } else {
        keep = manifest.rows_in(options.eval_split);
    }
    if (keep.empty()) throw RoutingError("no questions in the " + to_string(options.eval_split) + " split");
    std::vector<std::string> qids;
    for (auto r : keep) qids.push_back(manifest.question_ids[static_cast<std::size_t>(r)]);
    for (auto& m : members) {
        m.correct = gather(m.correct, keep);
        m.cost = gather(m.cost, keep);
        m.predicted = gather(*m.predicted, keep);
    }
    out.pool = make_pool(std::move(qids), std::move(members), options.cost_norm);
    return out;
}

}  // namespace probe_router
