#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "probe_router/errors.hpp"
#include "probe_router/probes.hpp"
#include "probe_router/rng.hpp"
#include "probe_router/synth.hpp"
#include "probe_router/targets.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <cmath>
#include <numeric>

using namespace probe_router;

namespace {

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index n, Eigen::Index d) {
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
    return m;
}

// Root of w - 2 sigmoid(-w) = 0, the stationarity condition for
// X = [[-1], [1]], y = [0, 1], alpha = 1.
double oracle_two_point_logistic() {
    double lo = 0, hi = 2;
    for (int i = 0; i < 200; ++i) {
        const double mid = (lo + hi) / 2;
        (mid - 2 / (1 + std::exp(mid)) > 0 ? hi : lo) = mid;
    }
    return (lo + hi) / 2;
}

Eigen::VectorXd logistic_labels(Rng& rng, const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) y[i] = rng.bernoulli(1 / (1 + std::exp(-X.row(i).dot(w)))) ? 1 : 0;
    return y;
}

std::vector<Eigen::Index> range(Eigen::Index lo, Eigen::Index hi) {
    std::vector<Eigen::Index> r(static_cast<std::size_t>(hi - lo));
    std::iota(r.begin(), r.end(), lo);
    return r;
}

TargetVector target_of(const Eigen::VectorXd& y, TargetKind kind = TargetKind::success_rate) {
    return {kind, std::vector<double>(y.data(), y.data() + y.size()), std::nullopt};
}

}  // namespace

TEST_CASE("ridge worked examples") {
    Eigen::MatrixXd X(2, 1);
    X << 1, 2;
    Eigen::VectorXd y(2);
    y << 1, 2;
    CHECK(fit_ridge(X, y, 1.0)[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-14));
    CHECK(fit_ridge(X, y, 1e-12)[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(fit_ridge(X, Eigen::VectorXd::Zero(2), 1.0).isZero());
    CHECK_THROWS_AS(fit_ridge(X, y, 0.0), ArgumentError);
    CHECK_THROWS_AS(fit_ridge(X, Eigen::VectorXd::Zero(3), 1.0), ArgumentError);
    X(0, 0) = NAN;
    CHECK_THROWS_AS(fit_ridge(X, y, 1.0), ArgumentError);
}

TEST_CASE("ridge agrees with the normal-equation oracle in primal and dual form") {
    Rng rng(3);
    for (auto [n, d] : {std::pair<Eigen::Index, Eigen::Index>{40, 6}, {6, 40}, {12, 12}}) {
        const Eigen::MatrixXd X = gaussian(rng, n, d);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal();
        for (double alpha : {1e-2, 1.0, 1e3}) {
            const auto w = fit_ridge(X, y, alpha);
            const auto o = oracles::ridge(X, y, alpha);
            for (Eigen::Index j = 0; j < d; ++j) CHECK(w[j] == doctest::Approx(o[static_cast<std::size_t>(j)]).epsilon(1e-9));
        }
    }
}

TEST_CASE("logistic two-point example matches a root-find") {
    Eigen::MatrixXd X(2, 1);
    X << -1, 1;
    Eigen::VectorXd y(2);
    y << 0, 1;
    CHECK(fit_logistic(X, y, 1.0)[0] == doctest::Approx(oracle_two_point_logistic()).epsilon(1e-9));
}

TEST_CASE("logistic degenerate inputs") {
    Eigen::MatrixXd X(3, 2);
    X << 1, 0, 0, 1, 1, 1;
    // One class only: the penalty keeps w finite.
    const auto w = fit_logistic(X, Eigen::VectorXd::Ones(3), 1.0);
    CHECK(w.allFinite());
    CHECK(w.minCoeff() > 0);
    CHECK(fit_logistic(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Ones(3), 1.0).isZero());
    Eigen::VectorXd bad(3);
    bad << 0, 1, 0.5;
    CHECK_THROWS_AS(fit_logistic(X, bad, 1.0), ArgumentError);
}

TEST_CASE("logistic gradient matches finite differences") {
    Rng rng(9);
    const Eigen::MatrixXd X = gaussian(rng, 25, 4);
    const Eigen::VectorXd y = logistic_labels(rng, X, Eigen::VectorXd::Ones(4));
    Eigen::VectorXd w(4);
    w << 0.3, -0.2, 0.5, 0.1;
    const auto g = logistic_gradient(X, y, w, 0.7);
    for (Eigen::Index j = 0; j < 4; ++j) {
        Eigen::VectorXd up = w, down = w;
        up[j] += 1e-6;
        down[j] -= 1e-6;
        const double fd = (logistic_loss(X, y, up, 0.7) - logistic_loss(X, y, down, 0.7)) / 2e-6;
        CHECK(g[j] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("logistic reaches the gradient certificate, including D > N") {
    Rng rng(12);
    for (auto [n, d] : {std::pair<Eigen::Index, Eigen::Index>{200, 5}, {20, 80}}) {
        const Eigen::MatrixXd X = gaussian(rng, n, d);
        const Eigen::VectorXd y = logistic_labels(rng, X, Eigen::VectorXd::Constant(d, 0.5));
        for (double alpha : {1e-3, 1.0, 1e4}) {
            const auto w = fit_logistic(X, y, alpha);
            CHECK(logistic_gradient(X, y, w, alpha).lpNorm<Eigen::Infinity>() <= 1e-8);
        }
    }
}

TEST_CASE("logistic reports non-convergence with the final norm") {
    Rng rng(13);
    const Eigen::MatrixXd X = gaussian(rng, 50, 3);
    const Eigen::VectorXd y = logistic_labels(rng, X, Eigen::VectorXd::Constant(3, 2.0));
    ProbeConfig cfg;
    cfg.max_iterations = 1;
    try {
        fit_logistic(X, y, 1e-3, cfg);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.gradient_norm > 1e-8);
    }
}

TEST_CASE("weight norm shrinks as alpha grows") {
    Rng rng(4);
    const Eigen::MatrixXd X = gaussian(rng, 60, 5);
    const Eigen::VectorXd y = logistic_labels(rng, X, Eigen::VectorXd::Ones(5));
    double last_ridge = INFINITY, last_logit = INFINITY;
    for (double alpha : default_alpha_grid()) {
        const double r = fit_ridge(X, y, alpha).norm();
        const double l = fit_logistic(X, y, alpha).norm();
        CHECK(r <= last_ridge);
        CHECK(l <= last_logit);
        last_ridge = r;
        last_logit = l;
    }
}

TEST_CASE("rescaling features by c and alpha by c^2 rescales w by 1/c") {
    Rng rng(5);
    const Eigen::MatrixXd X = gaussian(rng, 50, 4);
    const Eigen::VectorXd y = logistic_labels(rng, X, Eigen::VectorXd::Ones(4));
    const double c = 3.0;
    CHECK((fit_ridge(c * X, y, 2.0 * c * c) * c).isApprox(fit_ridge(X, y, 2.0), 1e-10));
    CHECK((fit_logistic(c * X, y, 2.0 * c * c) * c).isApprox(fit_logistic(X, y, 2.0), 1e-7));
}

TEST_CASE("grid search tie-breaks and singleton grid") {
    Rng rng(6);
    const Eigen::MatrixXd x = gaussian(rng, 40, 1);
    Eigen::VectorXd y = x.col(0) + 0.1 * gaussian(rng, 40, 1).col(0);
    const auto train = range(0, 30), val = range(30, 40);
    // One feature: every alpha ranks validation rows the same way.
    std::vector<FeatureBlock> blocks{{{1, -1}, x}, {{0, -2}, x}, {{0, -1}, x}};
    ProbeConfig cfg;
    const auto m = select_probe(blocks, target_of(y), train, val, cfg);
    CHECK(m.alpha == 1e4);
    CHECK(m.slot() == SlotKey{0, -1});
    CHECK(m.validation_score > 0.9);

    cfg.alpha_grid = {0.5};
    CHECK(select_probe(blocks, target_of(y), train, val, cfg).alpha == 0.5);

    cfg.alpha_grid = {};
    CHECK_THROWS_AS(select_probe(blocks, target_of(y), train, val, cfg), ArgumentError);
}

TEST_CASE("grid search prefers the informative slot and is thread-independent") {
    Rng rng(7);
    const Eigen::MatrixXd signal = gaussian(rng, 300, 8);
    Eigen::VectorXd w(8);
    w << 2, -1, 0, 0, 1, 0, 0, 0;
    const Eigen::VectorXd y = logistic_labels(rng, signal, w);
    std::vector<FeatureBlock> blocks{{{0, -1}, gaussian(rng, 300, 8)}, {{1, -1}, signal}, {{2, -1}, gaussian(rng, 300, 8)}};
    ProbeConfig cfg;
    cfg.task = ProbeTask::classification;
    const auto train = range(0, 200), val = range(200, 300);
    const auto one = select_probe(blocks, target_of(y, TargetKind::greedy), train, val, cfg);
    cfg.threads = 4;
    const auto four = select_probe(blocks, target_of(y, TargetKind::greedy), train, val, cfg);
    CHECK(one.slot() == SlotKey{1, -1});
    CHECK(one.weights == four.weights);
    CHECK(one.alpha == four.alpha);
    CHECK(one.validation_score == four.validation_score);
    CHECK(one.target == TargetKind::greedy);
}

TEST_CASE("grid search refuses constant validation targets and skips unconverged cells") {
    Rng rng(8);
    const Eigen::MatrixXd x = gaussian(rng, 20, 2);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(20);
    y.head(10).setOnes();
    std::vector<FeatureBlock> blocks{{{0, -1}, x}};
    ProbeConfig cfg;
    CHECK_THROWS_AS(select_probe(blocks, target_of(y), range(0, 15), range(15, 20), cfg), MetricUndefinedError);

    cfg.task = ProbeTask::classification;
    cfg.max_iterations = 1;
    const Eigen::VectorXd y2 = logistic_labels(rng, x, Eigen::VectorXd::Constant(2, 3.0));
    cfg.alpha_grid = {1e-3};
    CHECK_THROWS_AS(select_probe(blocks, target_of(y2, TargetKind::greedy), range(0, 14), range(14, 20), cfg),
                    ConvergenceError);
    // A heavily penalized cell converges in one Newton step; the other is skipped.
    cfg.alpha_grid = {1e-3, 1e6};
    CHECK(select_probe(blocks, target_of(y2, TargetKind::greedy), range(0, 14), range(14, 20), cfg).alpha == 1e6);
}

TEST_CASE("grid search over a synthetic dataset finds the planted slot") {
    SynthConfig sc;
    sc.num_questions = 600;
    sc.dim = 16;
    const auto bundle = generate(sc);
    const auto target = build_targets(bundle, TargetKind::success_rate);
    const auto m = grid_search(bundle, target, ProbeConfig{});
    CHECK(m.slot() == sc.signal);
    CHECK(m.validation_score > 0.5);
}

TEST_CASE("predictions") {
    ProbeModel m;
    m.weights = Eigen::Vector2d(1, 2);
    Eigen::MatrixXd f(2, 2);
    f << 1, 1, -1, 0.25;
    auto p = predict_features(m, f);
    CHECK(p.raw_scores[0] == 3.0);
    CHECK(p.raw_scores[1] == -0.5);
    CHECK_FALSE(p.probabilities);
    CHECK(score_to_probability(m, 3.0) == 1.0);
    CHECK(score_to_probability(m, -0.5) == 0.0);
    CHECK(score_to_probability(m, 0.25) == 0.25);

    m.task = ProbeTask::classification;
    p = predict_features(m, f);
    REQUIRE(p.probabilities);
    CHECK((*p.probabilities)[0] == sigmoid(3.0));
    m.calibrator = PlattCalibrator{2.0, -1.0};
    CHECK(score_to_probability(m, 3.0) == sigmoid(5.0));

    CHECK_THROWS_AS(predict_features(m, Eigen::MatrixXd::Zero(1, 3)), ArgumentError);
    const std::vector<double> row{1.0, 1.0, 1.0};
    CHECK_THROWS_AS(linear_score(std::span<const double>(row), m.weights), ArgumentError);
}

TEST_CASE("predict on activations uses the model's slot") {
    const auto b = test_support::tiny_bundle();
    ProbeModel m;
    m.weights = Eigen::Vector4d(1, 0, 0, 0);
    m.position = -2;
    const auto p = predict(m, b.activations);
    CHECK(p.raw_scores[0] == -2.0);
    CHECK(p.raw_scores[1] == -1.0);
    m.layer = 5;
    CHECK_THROWS(predict(m, b.activations));
}

TEST_CASE("probe JSON round-trips exactly") {
    ProbeModel m;
    m.weights = Eigen::Vector3d(0.1, -1.0 / 3.0, 1e-300);
    m.layer = 2;
    m.position = -3;
    m.alpha = 1e-3;
    m.task = ProbeTask::classification;
    m.calibrator = PlattCalibrator{0.7, -0.123456789012345};
    m.validation_score = 0.8125;
    m.feature = FeatureKind::tfidf;
    m.model_id = "qwen";
    m.target = TargetKind::maj_at_k;
    m.target_k = 5;
    TfidfVocabulary v;
    v.index = {{"a", 0}, {"b", 1}, {"c", 2}};
    v.document_frequency = {2, 1, 1};
    v.num_documents = 2;
    m.vocabulary = v;

    const auto back = probe_from_json(probe_to_json(m));
    CHECK(back.weights == m.weights);
    CHECK(back.layer == 2);
    CHECK(back.position == -3);
    CHECK(back.alpha == m.alpha);
    CHECK(back.task == m.task);
    CHECK(back.calibrator == m.calibrator);
    CHECK(back.validation_score == m.validation_score);
    CHECK(back.feature == m.feature);
    CHECK(back.model_id == "qwen");
    CHECK(back.target == m.target);
    CHECK(back.target_k == 5);
    CHECK(back.vocabulary == m.vocabulary);
    CHECK(probe_to_json(back) == probe_to_json(m));

    const auto dir = test_support::scratch_dir("probes_io");
    save_probe(m, dir / "p.json");
    CHECK(load_probe(dir / "p.json").weights == m.weights);
    CHECK_THROWS_AS(load_probe(dir / "missing.json"), LoadError);
    CHECK_THROWS_AS(probe_from_json("{\"weights\": 3}"), LoadError);
}
