#pragma once

#include "probe_router/pipeline.hpp"
#include "probe_router/synth.hpp"
#include "support.hpp"

#include <json.hpp>

namespace test_support {

/// Two synthetic models over the same questions ("cheap", weaker and priced
/// at the <4B tier, and "dear", stronger at the >16B tier), each with a
/// trained probe, plus a pool file listing both.
struct TwoModelPool {
    fs::path dir;
    fs::path pool_file;
    fs::path pricing_file;
    probe_router::PricingTable pricing;
};

inline probe_router::SynthConfig pool_synth_config(const std::string& model_id, double offset,
                                                   std::int64_t n = 400) {
    probe_router::SynthConfig c;
    c.num_questions = n;
    c.dim = 8;
    c.model_id = model_id;
    c.success_offset = offset;
    return c;
}

inline TwoModelPool make_two_model_pool(const std::string& name, probe_router::TargetKind target,
                                        std::int64_t n = 400, std::optional<int> k = std::nullopt) {
    using namespace probe_router;
    TwoModelPool p;
    p.dir = scratch_dir(name);
    p.pricing.set_tier("cheap", SizeTier::under_4b);
    p.pricing.set_tier("dear", SizeTier::over_16b);
    for (const auto& [id, offset] : {std::pair<std::string, double>{"cheap", -1.0}, {"dear", 1.5}}) {
        const auto manifest = write_dataset(generate(pool_synth_config(id, offset, n)), p.dir / id);
        TrainOptions opt;
        opt.target = target;
        opt.k = k;
        save_probe(train_probe(load_dataset(manifest), opt).model, p.dir / (id + ".probe.json"));
    }
    nlohmann::json spec{{"members",
                         {{{"name", "Cheap 1B"}, {"dataset", "cheap/manifest.json"}, {"probe", "cheap.probe.json"}},
                          {{"name", "Dear 20B"}, {"dataset", "dear/manifest.json"}, {"probe", "dear.probe.json"}}}},
                        {"cascade", {"Cheap 1B", "Dear 20B"}}};
    p.pool_file = p.dir / "pool.json";
    write_file(p.pool_file, spec.dump(2));
    p.pricing_file = p.dir / "pricing.json";
    write_file(p.pricing_file, R"({"models": {"cheap": {"tier": "<4B"}, "dear": {"tier": ">16B"}}})");
    return p;
}

}  // namespace test_support
