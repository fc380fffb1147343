#include "probe_router/probes.hpp"

#include "probe_router/errors.hpp"
#include "probe_router/metrics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace probe_router {

using nlohmann::json;

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void require_finite(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const char* who) {
    if (!X.allFinite() || !y.allFinite()) throw ArgumentError(std::string(who) + ": non-finite input");
    if (X.rows() != y.size()) throw ArgumentError(std::string(who) + ": X and y row counts differ");
    if (X.rows() < 1 || X.cols() < 1) throw ArgumentError(std::string(who) + ": empty design matrix");
}

// Newton direction for H = X^T S X + alpha I, solved in whichever of the
// primal (D x D) or dual (N x N) systems is smaller.
Eigen::VectorXd newton_direction(const Eigen::MatrixXd& X, const Eigen::VectorXd& s, double alpha,
                                 const Eigen::VectorXd& g) {
    const Eigen::Index n = X.rows(), d = X.cols();
    if (d <= n) {
        Eigen::MatrixXd h = X.transpose() * s.asDiagonal() * X;
        h.diagonal().array() += alpha;
        return -h.llt().solve(g);
    }
    // (alpha I + Z^T Z)^-1 g = (g - Z^T (alpha I + Z Z^T)^-1 Z g) / alpha, Z = S^1/2 X
    const Eigen::MatrixXd z = s.cwiseSqrt().asDiagonal() * X;
    Eigen::MatrixXd k = z * z.transpose();
    k.diagonal().array() += alpha;
    const Eigen::VectorXd inner = k.llt().solve(z * g);
    return -(g - z.transpose() * inner) / alpha;
}

struct CellResult {
    double score = -std::numeric_limits<double>::infinity();
    bool ok = false;
    Eigen::VectorXd weights;
    std::string error;
    double error_norm = 0;
};

// True when candidate (score, alpha, slot) beats the incumbent.
bool better(double score, double alpha, const SlotKey& slot, double best_score, double best_alpha,
            const SlotKey& best_slot) {
    if (score != best_score) return score > best_score;
    if (alpha != best_alpha) return alpha > best_alpha;
    if (slot.layer != best_slot.layer) return slot.layer < best_slot.layer;
    return slot.position > best_slot.position;
}

bool all_equal(const Eigen::VectorXd& v) { return v.size() == 0 || (v.array() == v[0]).all(); }

}  // namespace

std::string to_string(ProbeTask task) { return task == ProbeTask::regression ? "regression" : "classification"; }

ProbeTask probe_task_from_string(const std::string& s) {
    if (s == "regression") return ProbeTask::regression;
    if (s == "classification") return ProbeTask::classification;
    throw ArgumentError("unknown probe task: " + s);
}

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::activation: return "activation";
        case FeatureKind::tfidf: return "tfidf";
        case FeatureKind::length: return "length";
    }
    return "activation";
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "activation") return FeatureKind::activation;
    if (s == "tfidf") return FeatureKind::tfidf;
    if (s == "length") return FeatureKind::length;
    throw ArgumentError("unknown feature kind: " + s);
}

std::vector<double> default_alpha_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3, 1e4}; }

void ProbeConfig::validate() const {
    if (alpha_grid.empty()) throw ArgumentError("alpha grid is empty");
    for (double a : alpha_grid)
        if (!(a > 0) || !std::isfinite(a)) throw ArgumentError("alpha grid values must be positive and finite");
    if (!(tolerance > 0)) throw ArgumentError("tolerance must be positive");
    if (max_iterations < 1) throw ArgumentError("max_iterations must be positive");
}

Eigen::VectorXd fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha) {
    require_finite(X, y, "fit_ridge");
    if (!(alpha > 0) || !std::isfinite(alpha)) throw ArgumentError("fit_ridge: alpha must be positive");
    if (X.cols() <= X.rows()) {
        Eigen::MatrixXd a = X.transpose() * X;
        a.diagonal().array() += alpha;
        return a.ldlt().solve(X.transpose() * y);
    }
    Eigen::MatrixXd k = X * X.transpose();
    k.diagonal().array() += alpha;
    return X.transpose() * k.ldlt().solve(y);
}

double logistic_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double alpha) {
    const Eigen::VectorXd z = X * w;
    double total = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z[i]) - y[i] * z[i];
    return total + 0.5 * alpha * w.squaredNorm();
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                  double alpha) {
    const Eigen::VectorXd z = X * w;
    Eigen::VectorXd r(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) r[i] = sigmoid(z[i]) - y[i];
    return X.transpose() * r + alpha * w;
}

Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha,
                             const ProbeConfig& cfg) {
    require_finite(X, y, "fit_logistic");
    if (!(alpha > 0) || !std::isfinite(alpha)) throw ArgumentError("fit_logistic: alpha must be positive");
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw ArgumentError("fit_logistic: labels must be 0 or 1");

    Eigen::VectorXd w = Eigen::VectorXd::Zero(X.cols());
    double f = logistic_loss(X, y, w, alpha);
    Eigen::VectorXd g = logistic_gradient(X, y, w, alpha);
    for (int it = 0; it < cfg.max_iterations; ++it) {
        const double g_norm = g.lpNorm<Eigen::Infinity>();
        if (g_norm <= cfg.tolerance) return w;

        const Eigen::VectorXd z = X * w;
        Eigen::VectorXd s(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const double p = sigmoid(z[i]);
            s[i] = p * (1 - p);
        }
        const Eigen::VectorXd d = newton_direction(X, s, alpha, g);
        const double slope = g.dot(d);

        // Armijo backtracking; near the optimum the loss stops resolving in
        // double precision, so a step that shrinks the gradient is also taken.
        double step = 1.0;
        bool moved = false;
        for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
            Eigen::VectorXd cand = w + step * d;
            const double fc = logistic_loss(X, y, cand, alpha);
            Eigen::VectorXd gc = logistic_gradient(X, y, cand, alpha);
            if (fc <= f + 1e-4 * step * slope || gc.lpNorm<Eigen::Infinity>() < g_norm) {
                w = std::move(cand);
                f = fc;
                g = std::move(gc);
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    const double norm = g.lpNorm<Eigen::Infinity>();
    if (norm <= cfg.tolerance) return w;
    throw ConvergenceError("logistic regression did not reach gradient norm " + std::to_string(cfg.tolerance) +
                               " (final " + std::to_string(norm) + ")",
                           norm);
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const Eigen::Index> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, std::span<const Eigen::Index> rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
    return out;
}

Eigen::MatrixXd slot_features(const ActivationSet& activations, const SlotKey& key) {
    return activations.at(key).cast<double>();
}

ProbeModel select_probe(std::span<const FeatureBlock> blocks, const TargetVector& target,
                        std::span<const Eigen::Index> train_rows, std::span<const Eigen::Index> val_rows,
                        const ProbeConfig& cfg) {
    cfg.validate();
    if (blocks.empty()) throw ArgumentError("grid search: no candidate feature blocks");
    if (train_rows.empty()) throw ArgumentError("grid search: empty train split");
    if (val_rows.empty()) throw ArgumentError("grid search: empty validation split");
    const Eigen::VectorXd all_y = Eigen::Map<const Eigen::VectorXd>(target.values.data(),
                                                                    static_cast<Eigen::Index>(target.values.size()));
    const Eigen::VectorXd y_train = take_rows(all_y, train_rows);
    const Eigen::VectorXd y_val = take_rows(all_y, val_rows);
    const bool classify = cfg.task == ProbeTask::classification;
    if (classify) {
        for (Eigen::Index i = 0; i < all_y.size(); ++i)
            if (all_y[i] != 0.0 && all_y[i] != 1.0) throw ArgumentError("classification target must be binary");
    }
    if (all_equal(y_val))
        throw MetricUndefinedError("metric undefined: validation target is constant");

    const std::size_t n_alpha = cfg.alpha_grid.size();
    const std::size_t n_cells = blocks.size() * n_alpha;
    std::vector<CellResult> results(n_cells);
    std::vector<Eigen::MatrixXd> train_x(blocks.size()), val_x(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].features.rows() != all_y.size())
            throw ArgumentError("feature block " + to_string(blocks[b].slot) + " is not aligned to the target");
        train_x[b] = take_rows(blocks[b].features, train_rows);
        val_x[b] = take_rows(blocks[b].features, val_rows);
    }

    auto run_cell = [&](std::size_t cell) {
        const std::size_t b = cell / n_alpha;
        const double alpha = cfg.alpha_grid[cell % n_alpha];
        CellResult& r = results[cell];
        try {
            r.weights = classify ? fit_logistic(train_x[b], y_train, alpha, cfg) : fit_ridge(train_x[b], y_train, alpha);
        } catch (const ConvergenceError& e) {
            r.error = e.what();
            r.error_norm = e.gradient_norm;
            return;
        }
        const Eigen::VectorXd pred = val_x[b] * r.weights;
        std::span<const double> ps(pred.data(), static_cast<std::size_t>(pred.size()));
        std::span<const double> ys(y_val.data(), static_cast<std::size_t>(y_val.size()));
        if (classify) {
            r.score = auroc(ps, ys);
        } else {
            // Constant predictions carry no ranking information.
            r.score = all_equal(pred) ? 0.0 : spearman(ps, ys);
        }
        r.ok = true;
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(n_cells)));
    if (workers == 1) {
        for (std::size_t c = 0; c < n_cells; ++c) run_cell(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t c = next++; c < n_cells; c = next++) run_cell(c);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < n_cells; ++c) {
        if (!results[c].ok) continue;
        if (!best) {
            best = c;
            continue;
        }
        const auto& cur = results[*best];
        if (better(results[c].score, cfg.alpha_grid[c % n_alpha], blocks[c / n_alpha].slot, cur.score,
                   cfg.alpha_grid[*best % n_alpha], blocks[*best / n_alpha].slot))
            best = c;
    }
    if (!best) {
        const auto& last = results.back();
        throw ConvergenceError("grid search: no cell converged; last error: " + last.error, last.error_norm);
    }

    ProbeModel model;
    model.weights = results[*best].weights;
    model.layer = blocks[*best / n_alpha].slot.layer;
    model.position = blocks[*best / n_alpha].slot.position;
    model.alpha = cfg.alpha_grid[*best % n_alpha];
    model.task = cfg.task;
    model.validation_score = results[*best].score;
    model.target = target.kind;
    model.target_k = target.k;
    return model;
}

ProbeModel grid_search(const DatasetBundle& bundle, const TargetVector& target, const ProbeConfig& cfg) {
    if (target.values.size() != bundle.manifest.question_ids.size())
        throw ArgumentError("grid search: target is not aligned to the dataset");
    std::vector<FeatureBlock> blocks;
    for (int l : bundle.manifest.layers)
        for (int p : bundle.manifest.positions)
            blocks.push_back({SlotKey{l, p}, slot_features(bundle.activations, SlotKey{l, p})});
    const auto train = bundle.manifest.rows_in(Split::train);
    const auto val = bundle.manifest.rows_in(Split::val);
    ProbeModel model = select_probe(blocks, target, train, val, cfg);
    model.model_id = bundle.manifest.model_id;
    return model;
}

double linear_score(std::span<const double> row, const Eigen::VectorXd& weights) {
    if (static_cast<Eigen::Index>(row.size()) != weights.size())
        throw ArgumentError("feature width " + std::to_string(row.size()) + " does not match probe width " +
                            std::to_string(weights.size()));
    double s = 0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * weights[static_cast<Eigen::Index>(j)];
    return s;
}

double linear_score(std::span<const float> row, const Eigen::VectorXd& weights) {
    if (static_cast<Eigen::Index>(row.size()) != weights.size())
        throw ArgumentError("feature width " + std::to_string(row.size()) + " does not match probe width " +
                            std::to_string(weights.size()));
    double s = 0;
    for (std::size_t j = 0; j < row.size(); ++j) s += static_cast<double>(row[j]) * weights[static_cast<Eigen::Index>(j)];
    return s;
}

double score_to_probability(const ProbeModel& model, double raw_score) {
    if (model.task == ProbeTask::regression) return std::clamp(raw_score, 0.0, 1.0);
    return model.calibrator ? (*model.calibrator)(raw_score) : sigmoid(raw_score);
}

namespace {

PredictionVector finish(const ProbeModel& model, Eigen::VectorXd raw) {
    PredictionVector out;
    if (model.task == ProbeTask::classification) {
        Eigen::VectorXd p(raw.size());
        for (Eigen::Index i = 0; i < raw.size(); ++i) p[i] = score_to_probability(model, raw[i]);
        out.probabilities = std::move(p);
    }
    out.raw_scores = std::move(raw);
    return out;
}

}  // namespace

PredictionVector predict_features(const ProbeModel& model, const Eigen::MatrixXd& features) {
    if (features.cols() != model.weights.size())
        throw ArgumentError("feature width " + std::to_string(features.cols()) + " does not match probe width " +
                            std::to_string(model.weights.size()));
    Eigen::VectorXd raw(features.rows());
    std::vector<double> row(static_cast<std::size_t>(features.cols()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        for (Eigen::Index j = 0; j < features.cols(); ++j) row[static_cast<std::size_t>(j)] = features(i, j);
        raw[i] = linear_score(row, model.weights);
    }
    return finish(model, std::move(raw));
}

PredictionVector predict(const ProbeModel& model, const ActivationSet& activations) {
    const ActivationMatrix& a = activations.at(model.slot());
    if (a.cols() != model.weights.size())
        throw ArgumentError("activation width " + std::to_string(a.cols()) + " at " + to_string(model.slot()) +
                            " does not match probe width " + std::to_string(model.weights.size()));
    Eigen::VectorXd raw(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        raw[i] = linear_score(std::span<const float>(a.row(i).data(), static_cast<std::size_t>(a.cols())), model.weights);
    return finish(model, std::move(raw));
}

Eigen::MatrixXd model_features(const ProbeModel& model, const DatasetBundle& bundle) {
    switch (model.feature) {
        case FeatureKind::activation: return slot_features(bundle.activations, model.slot());
        case FeatureKind::tfidf: {
            if (!model.vocabulary) throw ArgumentError("TF-IDF probe has no vocabulary");
            std::vector<std::string> texts;
            for (const auto& q : bundle.questions) {
                if (!q.question_text) throw ArgumentError("TF-IDF features need question_text for " + q.question_id);
                texts.push_back(*q.question_text);
            }
            return tfidf_matrix(*model.vocabulary, texts);
        }
        case FeatureKind::length: {
            Eigen::MatrixXd m(static_cast<Eigen::Index>(bundle.questions.size()), 1);
            for (std::size_t i = 0; i < bundle.questions.size(); ++i)
                m(static_cast<Eigen::Index>(i), 0) = length_feature(bundle.questions[i], model.length_unit)[0];
            return m;
        }
    }
    throw ArgumentError("unknown feature kind");
}

std::string probe_to_json(const ProbeModel& m) {
    json j{{"format", "probe-router-probe"},
           {"version", 1},
           {"task", to_string(m.task)},
           {"feature", to_string(m.feature)},
           {"layer", m.layer},
           {"position", m.position},
           {"alpha", m.alpha},
           {"validation_score", m.validation_score},
           {"model_id", m.model_id},
           {"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())}};
    j["calibrator"] = m.calibrator ? json{{"A", m.calibrator->A}, {"B", m.calibrator->B}} : json(nullptr);
    if (m.target) {
        j["target"] = {{"kind", to_string(*m.target)}};
        if (m.target_k) j["target"]["k"] = *m.target_k;
    }
    if (m.feature == FeatureKind::length)
        j["length_unit"] = m.length_unit == LengthUnit::characters ? "characters" : "whitespace_tokens";
    if (m.vocabulary) {
        json terms = json::array();
        for (const auto& [term, idx] : m.vocabulary->index)
            terms.push_back({{"term", term}, {"index", idx}, {"df", m.vocabulary->document_frequency[static_cast<std::size_t>(idx)]}});
        j["vocabulary"] = {{"num_documents", m.vocabulary->num_documents}, {"terms", std::move(terms)}};
    }
    return j.dump(2) + "\n";
}

ProbeModel probe_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ProbeModel m;
        m.task = probe_task_from_string(j.at("task").get<std::string>());
        m.feature = feature_kind_from_string(j.value("feature", std::string("activation")));
        m.layer = j.at("layer").get<int>();
        m.position = j.at("position").get<int>();
        m.alpha = j.at("alpha").get<double>();
        m.validation_score = j.value("validation_score", 0.0);
        m.model_id = j.value("model_id", std::string{});
        const auto w = j.at("weights").get<std::vector<double>>();
        m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        if (auto it = j.find("calibrator"); it != j.end() && !it->is_null())
            m.calibrator = PlattCalibrator{it->at("A").get<double>(), it->at("B").get<double>()};
        if (auto it = j.find("target"); it != j.end()) {
            std::optional<int> k;
            m.target = target_kind_from_string(it->at("kind").get<std::string>(), k);
            if (it->contains("k")) m.target_k = it->at("k").get<int>();
        }
        if (j.value("length_unit", std::string("characters")) == "whitespace_tokens")
            m.length_unit = LengthUnit::whitespace_tokens;
        if (auto it = j.find("vocabulary"); it != j.end()) {
            TfidfVocabulary v;
            v.num_documents = it->at("num_documents").get<int>();
            const auto& terms = it->at("terms");
            v.document_frequency.assign(terms.size(), 0);
            for (const auto& t : terms) {
                const int idx = t.at("index").get<int>();
                if (idx < 0 || static_cast<std::size_t>(idx) >= terms.size())
                    throw ValidationError("vocabulary index out of range");
                v.index.emplace(t.at("term").get<std::string>(), idx);
                v.document_frequency[static_cast<std::size_t>(idx)] = t.at("df").get<int>();
            }
            m.vocabulary = std::move(v);
        }
        if (!m.weights.allFinite()) throw ValidationError("probe weights must be finite");
        return m;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed probe model: ") + e.what());
    }
}

void save_probe(const ProbeModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write probe model: " + path.string());
    out << probe_to_json(model);
    if (!out) throw IoError("write failed: " + path.string());
}

ProbeModel load_probe(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open probe model: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return probe_from_json(ss.str());
}

}  // namespace probe_router
