// probe-router: train probes, route over a pool, serve decisions, generate
// synthetic datasets and emit diagnostic tables.

#include "probe_router/errors.hpp"
#include "probe_router/interchange.hpp"
#include "probe_router/metrics.hpp"
#include "probe_router/pipeline.hpp"
#include "probe_router/report.hpp"
#include "probe_router/routing.hpp"
#include "probe_router/service.hpp"
#include "probe_router/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace probe_router;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

CostNormalization cost_norm_from(const std::string& s) {
    return s == "max" ? CostNormalization::max : CostNormalization::minmax;
}

PricingTable pricing_from(const std::string& path) {
    return path.empty() ? PricingTable::with_defaults() : load_pricing(path);
}

// Comma-separated doubles, e.g. "0,0.5,1".
std::vector<double> parse_grid(const std::string& s, const char* what) {
    std::vector<double> out;
    std::string token;
    std::istringstream in(s);
    while (std::getline(in, token, ',')) {
        token.erase(0, token.find_first_not_of(" \t"));
        token.erase(token.find_last_not_of(" \t") + 1);
        if (token.empty()) continue;
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(token, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != token.size()) throw CLI::ValidationError(what, "not a number: " + token);
        out.push_back(v);
    }
    if (out.empty()) throw CLI::ValidationError(what, "empty grid");
    return out;
}

TargetKind parse_target(const std::string& s, std::optional<int>& k) {
    try {
        return target_kind_from_string(s, k);
    } catch (const ArgumentError& e) {
        throw CLI::ValidationError("--target", e.what());
    }
}

struct TrainArgs {
    std::string dataset, target = "success_rate", feature = "activation", length_unit = "characters";
    std::string alpha_grid, out = "probe.json", report;
    int k = 0;
    unsigned threads = 1;
};

int run_train(const TrainArgs& a) {
    TrainOptions opt;
    std::optional<int> k;
    opt.target = parse_target(a.target, k);
    if (a.k > 0) k = a.k;
    opt.k = k;
    opt.feature = feature_kind_from_string(a.feature);
    opt.length_unit = a.length_unit == "whitespace_tokens" ? LengthUnit::whitespace_tokens : LengthUnit::characters;
    if (!a.alpha_grid.empty()) opt.alpha_grid = parse_grid(a.alpha_grid, "--alpha-grid");
    opt.threads = a.threads;

    const DatasetBundle bundle = load_dataset(a.dataset);
    const TrainResult result = train_probe(bundle, opt);
    save_probe(result.model, a.out);
    const fs::path report_path = a.report.empty() ? fs::path(a.out).replace_extension(".report.json") : fs::path(a.report);
    write_text(report_path, result.report.to_json());
    std::cout << result.report.to_json();
    return 0;
}

struct RouteArgs {
    std::string pool, pricing, lambda_grid, tau, cost_norm = "minmax", target, split = "test", out = ".";
    bool pay_abandoned = false;
    std::uint64_t seed = 0;
    int trials = 1000;
};

int run_route(const RouteArgs& a) {
    const PoolSpec spec = load_pool_spec(a.pool);
    PoolOptions po;
    if (!a.target.empty()) po.target = a.target;
    if (a.split == "all") po.eval_all = true;
    else po.eval_split = split_from_string(a.split);
    po.cost_norm = cost_norm_from(a.cost_norm);
    const LoadedPool loaded = load_pool(spec, pricing_from(a.pricing), po);

    RoutingReportOptions ro;
    if (!a.lambda_grid.empty()) ro.lambda_grid = parse_grid(a.lambda_grid, "--lambda-grid");
    ro.display_names = loaded.display_names;
    ro.random_trials = a.trials;
    ro.seed = a.seed;
    if (!a.tau.empty()) {
        ro.tau_grid = parse_grid(a.tau, "--tau");
        CascadeConfig cc;
        if (!spec.cascade.empty()) {
            for (const auto& name : spec.cascade) {
                auto it = loaded.name_to_id.find(name);
                if (it == loaded.name_to_id.end()) throw RoutingError("cascade stage is not a pool member: " + name);
                cc.stages.push_back(it->second);
            }
        } else {
            std::vector<const PoolMember*> by_cost;
            for (const auto& m : loaded.pool.members) by_cost.push_back(&m);
            std::stable_sort(by_cost.begin(), by_cost.end(),
                             [](const PoolMember* x, const PoolMember* y) { return x->expected_cost < y->expected_cost; });
            for (const auto* m : by_cost) cc.stages.push_back(m->model_id);
        }
        cc.pay_abandoned = a.pay_abandoned;
        ro.cascade = cc;
    }

    const RoutingReport report = build_routing_report(loaded.pool, ro);
    const fs::path out(a.out);
    fs::create_directories(out);
    const std::string text = format_report_text(report);
    write_text(out / "routing_report.txt", text);
    write_text(out / "routing_report.csv", format_report_dsv(report));
    write_text(out / "frontier.csv", format_frontier_dsv(report));
    std::cout << text;
    return 0;
}

struct ServeArgs {
    std::string pool, pricing, cost_norm = "minmax", host = "127.0.0.1";
    double lambda = 0.0;
    int port = 8080;
};

HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int run_serve(const ServeArgs& a) {
    const PoolSpec spec = load_pool_spec(a.pool);
    PoolOptions po;
    po.cost_norm = cost_norm_from(a.cost_norm);
    const LoadedPool loaded = load_pool(spec, pricing_from(a.pricing), po);
    const RoutingService service = RoutingService::from_pool(loaded, a.lambda, po.cost_norm);
    HttpServer server(service);
    const int port = server.bind(a.host, a.port);
    std::cout << "listening on " << a.host << ":" << port << std::endl;
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.listen();
    g_server = nullptr;
    return 0;
}

struct SynthArgs {
    std::string out = "synth", model_id = "synth-model", name = "synth";
    std::uint64_t seed = 0;
    std::int64_t n = 2000, dim = 64;
    int k = 8;
    double offset = 0.0, signal_norm = 3.0, noise = 1.0;
};

int run_synth(const SynthArgs& a) {
    SynthConfig cfg;
    cfg.dataset_name = a.name;
    cfg.model_id = a.model_id;
    cfg.num_questions = a.n;
    cfg.dim = a.dim;
    cfg.rollout_k = a.k;
    cfg.success_offset = a.offset;
    cfg.signal_norm = a.signal_norm;
    cfg.noise_scale = a.noise;
    cfg.seed = a.seed;
    const fs::path manifest = write_dataset(generate(cfg), a.out);
    std::cout << manifest.string() << "\n";
    return 0;
}

struct BinsArgs {
    std::string dataset, probe, target = "success_rate", split = "test", out;
    int bins = 5, k = 0;
};

int run_bins(const BinsArgs& a) {
    const DatasetBundle bundle = load_dataset(a.dataset);
    std::optional<int> k;
    const TargetKind kind = parse_target(a.target, k);
    if (a.k > 0) k = a.k;
    const TargetVector target = build_targets(bundle, kind, k);
    PredictionVector pred;
    if (!a.probe.empty()) {
        const ProbeModel model = load_probe(a.probe);
        pred = predict_features(model, model_features(model, bundle));
    } else {
        pred.raw_scores = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(bundle.questions.size()), std::nan(""));
    }
    std::vector<Eigen::Index> rows;
    if (a.split != "all") rows = bundle.manifest.rows_in(split_from_string(a.split));
    const std::string table = format_length_report(length_difficulty_report(bundle, pred, target, a.bins, rows));
    if (!a.out.empty()) write_text(a.out, table);
    std::cout << table;
    return 0;
}

struct ParetoArgs {
    std::string input, out;
};

// Input: CSV with a header naming "cost" and "accuracy" columns; rows on the
// front are echoed in input order.
int run_pareto(const ParetoArgs& a) {
    std::ifstream in(a.input);
    if (!in) throw LoadError("cannot open " + a.input);
    auto split_line = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    std::string header;
    if (!std::getline(in, header)) throw LoadError("empty point file: " + a.input);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const auto cols = split_line(header);
    const auto cost_col = std::find(cols.begin(), cols.end(), "cost") - cols.begin();
    const auto acc_col = std::find(cols.begin(), cols.end(), "accuracy") - cols.begin();
    if (cost_col == static_cast<long>(cols.size()) || acc_col == static_cast<long>(cols.size()))
        throw ValidationError("point file needs cost and accuracy columns");
    std::vector<std::string> lines;
    std::vector<CostAccuracy> points;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (static_cast<long>(cells.size()) <= std::max(cost_col, acc_col))
            throw ValidationError("short row in point file: " + line);
        try {
            points.push_back({std::stod(cells[static_cast<std::size_t>(cost_col)]),
                              std::stod(cells[static_cast<std::size_t>(acc_col)])});
        } catch (const std::exception&) {
            throw ValidationError("non-numeric cost or accuracy: " + line);
        }
        lines.push_back(line);
    }
    std::string result = header + "\n";
    for (auto i : pareto_indices(points)) result += lines[i] + "\n";
    if (!a.out.empty()) write_text(a.out, result);
    std::cout << result;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pre-generation probes for success prediction and cost-aware routing"};
    app.set_version_flag("--version", PROBE_ROUTER_VERSION);
    app.require_subcommand(1);

    const std::vector<std::string> cost_norms{"minmax", "max"};

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Grid-search a probe, calibrate it and evaluate once on the test split");
    t->add_option("--dataset", train.dataset, "manifest.json of the dataset")->required()->check(CLI::ExistingFile);
    t->add_option("--target", train.target, "success_rate | greedy | maj@K | pass@K | irt")->capture_default_str();
    t->add_option("--k", train.k, "K for maj@K / pass@K (overrides the @K suffix)");
    t->add_option("--feature", train.feature, "activation | tfidf | length")
        ->check(CLI::IsMember({"activation", "tfidf", "length"}))
        ->capture_default_str();
    t->add_option("--length-unit", train.length_unit, "characters | whitespace_tokens")
        ->check(CLI::IsMember({"characters", "whitespace_tokens"}))
        ->capture_default_str();
    t->add_option("--alpha-grid", train.alpha_grid, "comma-separated regularization strengths (default 1e-3..1e4)");
    t->add_option("--threads", train.threads, "grid cells fitted concurrently")->capture_default_str();
    t->add_option("--out", train.out, "probe model file")->capture_default_str();
    t->add_option("--report", train.report, "evaluation report (default: <out>.report.json)");

    RouteArgs route;
    auto* r = app.add_subcommand("route", "Routing report and frontier over a pool of trained probes");
    r->add_option("--pool", route.pool, "pool description (JSON)")->required()->check(CLI::ExistingFile);
    r->add_option("--pricing", route.pricing, "pricing file (JSON); default prices gpt-oss-20b only");
    r->add_option("--lambda-grid", route.lambda_grid, "comma-separated lambda values (default 0,0.2,...,1)");
    r->add_option("--tau", route.tau, "comma-separated cascade thresholds; adds a cascade section");
    r->add_option("--target", route.target, "correctness target (default: from the pool or probes)");
    r->add_option("--split", route.split, "train | val | test | all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}))
        ->capture_default_str();
    r->add_option("--cost-norm", route.cost_norm, "minmax | max")->check(CLI::IsMember(cost_norms))->capture_default_str();
    r->add_flag("--pay-abandoned", route.pay_abandoned, "charge cascade stages escalated away from");
    r->add_option("--seed", route.seed, "random-routing seed")->capture_default_str();
    r->add_option("--trials", route.trials, "random-routing trials")->check(CLI::PositiveNumber)->capture_default_str();
    r->add_option("--out", route.out, "output directory")->capture_default_str();

    ServeArgs serve;
    auto* s = app.add_subcommand("serve", "HTTP routing service (GET /v1/health, POST /v1/route)");
    s->add_option("--pool", serve.pool, "pool description (JSON)")->required()->check(CLI::ExistingFile);
    s->add_option("--pricing", serve.pricing, "pricing file (JSON)");
    s->add_option("--lambda", serve.lambda, "cost weight")->check(CLI::NonNegativeNumber)->capture_default_str();
    s->add_option("--cost-norm", serve.cost_norm, "minmax | max")->check(CLI::IsMember(cost_norms))->capture_default_str();
    s->add_option("--host", serve.host, "bind address")->capture_default_str();
    s->add_option("--port", serve.port, "port (0 picks a free one)")->check(CLI::Range(0, 65535))->capture_default_str();

    SynthArgs synth;
    auto* g = app.add_subcommand("synth", "Write a planted-signal dataset");
    g->add_option("--out", synth.out, "output directory")->capture_default_str();
    g->add_option("--seed", synth.seed, "random seed")->capture_default_str();
    g->add_option("--model-id", synth.model_id, "model id")->capture_default_str();
    g->add_option("--name", synth.name, "dataset name")->capture_default_str();
    g->add_option("--n", synth.n, "questions")->check(CLI::NonNegativeNumber)->capture_default_str();
    g->add_option("--dim", synth.dim, "activation width")->check(CLI::PositiveNumber)->capture_default_str();
    g->add_option("--k", synth.k, "samples per question")->check(CLI::PositiveNumber)->capture_default_str();
    g->add_option("--offset", synth.offset, "added to every success logit")->capture_default_str();
    g->add_option("--signal-norm", synth.signal_norm, "norm of the planted weights")->capture_default_str();
    g->add_option("--noise", synth.noise, "scale of the non-signal slots")->capture_default_str();

    auto* rep = app.add_subcommand("report", "Diagnostic tables");
    rep->require_subcommand(1);
    BinsArgs bins;
    auto* b = rep->add_subcommand("bins", "Length-binned difficulty table");
    b->add_option("--dataset", bins.dataset, "manifest.json of the dataset")->required()->check(CLI::ExistingFile);
    b->add_option("--probe", bins.probe, "probe model for the predicted column");
    b->add_option("--target", bins.target, "success target")->capture_default_str();
    b->add_option("--k", bins.k, "K for maj@K / pass@K");
    b->add_option("--bins", bins.bins, "number of log-length bins")->check(CLI::PositiveNumber)->capture_default_str();
    b->add_option("--split", bins.split, "train | val | test | all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}))
        ->capture_default_str();
    b->add_option("--out", bins.out, "output CSV");
    ParetoArgs pareto;
    auto* p = rep->add_subcommand("pareto", "Non-dominated rows of a cost/accuracy CSV");
    p->add_option("--input", pareto.input, "CSV with cost and accuracy columns")->required()->check(CLI::ExistingFile);
    p->add_option("--out", pareto.out, "output CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*t) return run_train(train);
        if (*r) return run_route(route);
        if (*s) return run_serve(serve);
        if (*g) return run_synth(synth);
        if (*b) return run_bins(bins);
        if (*p) return run_pareto(pareto);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
