#include "probe_router/calibration.hpp"
#include "probe_router/errors.hpp"
#include "probe_router/interchange.hpp"
#include "probe_router/metrics.hpp"
#include "probe_router/pipeline.hpp"
#include "probe_router/probes.hpp"
#include "probe_router/routing.hpp"
#include "probe_router/service.hpp"
#include "probe_router/synth.hpp"
#include "probe_router/targets.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace probe_router;

namespace {

std::span<const double> as_span(const std::vector<double>& v) { return {v.data(), v.size()}; }

CostNormalization cost_norm_from(const std::string& s) {
    if (s == "minmax") return CostNormalization::minmax;
    if (s == "max") return CostNormalization::max;
    throw ArgumentError("cost_norm must be 'minmax' or 'max'");
}

// Pool from column-per-model arrays.
ModelPool pool_from_arrays(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& correct, const Eigen::MatrixXd& cost,
                           const std::vector<double>& expected_cost, std::vector<std::string> model_ids,
                           const std::string& cost_norm) {
    const auto n = predicted.rows(), m = predicted.cols();
    if (correct.rows() != n || correct.cols() != m || cost.rows() != n || cost.cols() != m)
        throw ArgumentError("predicted, correct and cost must share shape (questions, models)");
    if (static_cast<Eigen::Index>(expected_cost.size()) != m) throw ArgumentError("one expected cost per model");
    if (model_ids.empty())
        for (Eigen::Index j = 0; j < m; ++j) model_ids.push_back("m" + std::to_string(j));
    if (static_cast<Eigen::Index>(model_ids.size()) != m) throw ArgumentError("one model id per model");
    std::vector<std::string> qids;
    for (Eigen::Index i = 0; i < n; ++i) qids.push_back("q" + std::to_string(i));
    std::vector<PoolMember> members;
    for (Eigen::Index j = 0; j < m; ++j) {
        PoolMember p;
        p.model_id = model_ids[static_cast<std::size_t>(j)];
        p.predicted = std::vector<double>(predicted.col(j).data(), predicted.col(j).data() + n);
        p.correct.assign(correct.col(j).data(), correct.col(j).data() + n);
        p.cost.assign(cost.col(j).data(), cost.col(j).data() + n);
        p.expected_cost = expected_cost[static_cast<std::size_t>(j)];
        members.push_back(std::move(p));
    }
    return make_pool(std::move(qids), std::move(members), cost_norm_from(cost_norm));
}

py::dict plan_to_dict(const RoutingPlan& plan) {
    std::vector<std::string> chosen;
    for (const auto& d : plan.decisions) chosen.push_back(d.model_id);
    py::dict out;
    out["strategy"] = plan.strategy;
    out["chosen"] = chosen;
    out["accuracy"] = plan.accuracy;
    out["cost"] = plan.cost;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Pre-generation success probes and cost-aware routing";
    m.attr("__version__") = PROBE_ROUTER_VERSION;

    static py::exception<Error> base(m, "Error");
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<LoadError>(m, "LoadError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
    py::register_exception<MetricUndefinedError>(m, "MetricUndefinedError", base.ptr());
    py::register_exception<RoutingError>(m, "RoutingError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<MissingDataError>(m, "MissingDataError", base.ptr());
    py::register_exception<CalibrationError>(m, "CalibrationError", base.ptr());
    py::register_exception<PricingError>(m, "PricingError", base.ptr());

    // Targets
    m.def("normalize_answer", &normalize_answer, py::arg("raw"));
    m.def("parse_answer", &parse_answer, py::arg("generation_text"));

    // Metrics and calibration
    m.def("auroc", [](const std::vector<double>& s, const std::vector<double>& y) { return auroc(as_span(s), as_span(y)); },
          py::arg("scores"), py::arg("labels"));
    m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(as_span(x), as_span(y)); },
          py::arg("x"), py::arg("y"));
    m.def("average_ranks", [](const std::vector<double>& x) { return average_ranks(as_span(x)); }, py::arg("x"));
    m.def("ece", [](const std::vector<double>& p, const std::vector<double>& y, int bins) { return ece(as_span(p), as_span(y), bins); },
          py::arg("probabilities"), py::arg("labels"), py::arg("bins") = 10);
    m.def("fit_platt",
          [](const std::vector<double>& s, const std::vector<double>& y) {
              const auto c = fit_platt(as_span(s), as_span(y));
              return std::make_pair(c.A, c.B);
          },
          py::arg("scores"), py::arg("labels"), "Returns (A, B) of sigma(A * s + B).");

    // Solvers
    m.def("fit_ridge", &fit_ridge, py::arg("X"), py::arg("y"), py::arg("alpha"));
    m.def("fit_logistic",
          [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha, double tol, int max_it) {
              ProbeConfig cfg;
              cfg.task = ProbeTask::classification;
              cfg.tolerance = tol;
              cfg.max_iterations = max_it;
              return fit_logistic(X, y, alpha, cfg);
          },
          py::arg("X"), py::arg("y"), py::arg("alpha"), py::arg("tolerance") = 1e-8, py::arg("max_iterations") = 200);
    m.def("logistic_gradient", &logistic_gradient, py::arg("X"), py::arg("y"), py::arg("w"), py::arg("alpha"));

    // Routing
    m.def("dollar_cost",
          [](const std::string& model_id, std::int64_t in, std::int64_t out, const std::string& pricing_path) {
              const auto table = pricing_path.empty() ? PricingTable::with_defaults() : load_pricing(pricing_path);
              return dollar_cost(table, model_id, in, out);
          },
          py::arg("model_id"), py::arg("input_tokens"), py::arg("output_tokens"), py::arg("pricing_path") = "");
    m.def("route_utility",
          [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& c, const Eigen::MatrixXd& cost, const std::vector<double>& e,
             double lambda, std::vector<std::string> ids, const std::string& norm) {
              return plan_to_dict(route_utility(pool_from_arrays(p, c, cost, e, std::move(ids), norm), {lambda}));
          },
          py::arg("predicted"), py::arg("correct"), py::arg("cost"), py::arg("expected_cost"), py::arg("lambda_"),
          py::arg("model_ids") = std::vector<std::string>{}, py::arg("cost_norm") = "minmax",
          "Arrays are (questions, models).");
    m.def("route_oracle_utility",
          [](const Eigen::MatrixXd& c, const Eigen::MatrixXd& cost, const std::vector<double>& e, double lambda,
             std::vector<std::string> ids, const std::string& norm) {
              return plan_to_dict(route_oracle_utility(pool_from_arrays(c, c, cost, e, std::move(ids), norm), {lambda}));
          },
          py::arg("correct"), py::arg("cost"), py::arg("expected_cost"), py::arg("lambda_"),
          py::arg("model_ids") = std::vector<std::string>{}, py::arg("cost_norm") = "minmax");
    m.def("pareto_indices",
          [](const std::vector<double>& cost, const std::vector<double>& acc) {
              if (cost.size() != acc.size()) throw ArgumentError("cost and accuracy lengths differ");
              std::vector<CostAccuracy> pts;
              for (std::size_t i = 0; i < cost.size(); ++i) pts.push_back({cost[i], acc[i]});
              return pareto_indices(pts);
          },
          py::arg("cost"), py::arg("accuracy"));

    // Datasets and training
    m.def("synth_generate",
          [](const std::filesystem::path& out, std::uint64_t seed, std::int64_t n, std::int64_t dim, int k,
             const std::string& model_id) {
              SynthConfig cfg;
              cfg.seed = seed;
              cfg.num_questions = n;
              cfg.dim = dim;
              cfg.rollout_k = k;
              cfg.model_id = model_id;
              return write_dataset(generate(cfg), out);
          },
          py::arg("out_dir"), py::arg("seed") = 0, py::arg("num_questions") = 2000, py::arg("dim") = 64,
          py::arg("rollout_k") = 8, py::arg("model_id") = "synth-model", "Writes a dataset; returns the manifest path.");
    m.def("load_activations",
          [](const std::filesystem::path& manifest, int layer, int position) -> Eigen::MatrixXf {
              return load_dataset(manifest).activations.at({layer, position});
          },
          py::arg("manifest"), py::arg("layer"), py::arg("position"));
    m.def("train",
          [](const std::filesystem::path& manifest, const std::string& target, const std::string& feature,
             const std::optional<std::filesystem::path>& out) {
              TrainOptions opt;
              std::optional<int> k;
              opt.target = target_kind_from_string(target, k);
              opt.k = k;
              opt.feature = feature_kind_from_string(feature);
              const TrainResult r = train_probe(load_dataset(manifest), opt);
              if (out) save_probe(r.model, *out);
              return r.report.to_json();
          },
          py::arg("manifest"), py::arg("target") = "success_rate", py::arg("feature") = "activation",
          py::arg("out") = py::none(), "Returns the evaluation report as JSON text.");
    m.def("test_split_evaluations", &test_split_evaluations);

    py::class_<RoutingService>(m, "RoutingService")
        .def(py::init([](const std::filesystem::path& pool, double lambda, const std::string& pricing,
                         const std::string& norm) {
                 PoolOptions po;
                 po.cost_norm = cost_norm_from(norm);
                 const auto table = pricing.empty() ? PricingTable::with_defaults() : load_pricing(pricing);
                 return RoutingService::from_pool(load_pool(load_pool_spec(pool), table, po), lambda, po.cost_norm);
             }),
             py::arg("pool"), py::arg("lambda_") = 0.0, py::arg("pricing") = "", py::arg("cost_norm") = "minmax")
        .def("route", [](const RoutingService& s, const std::string& body) {
            const auto r = s.route(body);
            return std::make_pair(r.status, r.body);
        }, py::arg("request_body"), "Returns (status, JSON body).")
        .def("health", [](const RoutingService& s) { return s.health().body; });
}
