#include "probe_router/interchange.hpp"

#include "probe_router/errors.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace probe_router {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'C', 'T', 'V'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 1 + 8 + 8;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_f32(std::string& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

json decoding_to_json(const DecodingConfig& d) {
    return json{{"temperature", d.temperature},
                {"num_samples", d.num_samples},
                {"mode", to_string(d.mode)},
                {"max_tokens", d.max_tokens}};
}

DecodingConfig decoding_from_json(const json& j) {
    DecodingConfig d;
    d.temperature = j.at("temperature").get<double>();
    d.num_samples = j.at("num_samples").get<int>();
    d.mode = decoding_mode_from_string(j.at("mode").get<std::string>());
    d.max_tokens = j.at("max_tokens").get<int>();
    return d;
}

void validate_decoding(const DecodingConfig& d, const std::string& where) {
    if (!(d.temperature >= 0.0) || !std::isfinite(d.temperature))
        throw ValidationError(where + ": temperature must be finite and >= 0");
    if (d.num_samples < 1) throw ValidationError(where + ": num_samples must be >= 1");
    if (d.max_tokens < 1) throw ValidationError(where + ": max_tokens must be >= 1");
    if (d.mode == DecodingMode::greedy && (d.num_samples != 1 || d.temperature != 0.0))
        throw ValidationError(where + ": greedy decoding requires num_samples=1 and temperature=0");
}

json question_to_json(const QuestionRecord& q) {
    json j{{"question_id", q.question_id},
           {"ground_truth", q.ground_truth},
           {"text_length", q.text_length}};
    j["human_difficulty"] = q.human_difficulty ? json(*q.human_difficulty) : json(nullptr);
    j["question_text"] = q.question_text ? json(*q.question_text) : json(nullptr);
    return j;
}

QuestionRecord question_from_json(const json& j) {
    QuestionRecord q;
    q.question_id = j.at("question_id").get<std::string>();
    q.ground_truth = j.value("ground_truth", std::string{});
    if (auto it = j.find("human_difficulty"); it != j.end() && !it->is_null())
        q.human_difficulty = it->get<double>();
    if (auto it = j.find("question_text"); it != j.end() && !it->is_null())
        q.question_text = it->get<std::string>();
    if (auto it = j.find("text_length"); it != j.end())
        q.text_length = it->get<std::int64_t>();
    else if (q.question_text)
        q.text_length = static_cast<std::int64_t>(q.question_text->size());
    return q;
}

json rollout_to_json(const RolloutRecord& r) {
    json samples = json::array();
    for (const auto& s : r.samples) {
        samples.push_back({{"parsed_answer", s.parsed_answer ? json(*s.parsed_answer) : json(nullptr)},
                           {"correct", s.correct},
                           {"output_tokens", s.output_tokens},
                           {"input_tokens", s.input_tokens}});
    }
    return json{{"question_id", r.question_id},
                {"model_id", r.model_id},
                {"decoding", decoding_to_json(r.decoding)},
                {"samples", std::move(samples)}};
}

RolloutRecord rollout_from_json(const json& j) {
    RolloutRecord r;
    r.question_id = j.at("question_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.decoding = decoding_from_json(j.at("decoding"));
    for (const auto& sj : j.at("samples")) {
        SampleRecord s;
        if (auto it = sj.find("parsed_answer"); it != sj.end() && !it->is_null())
            s.parsed_answer = it->get<std::string>();
        s.correct = sj.at("correct").get<bool>();
        s.output_tokens = sj.value("output_tokens", std::int64_t{0});
        s.input_tokens = sj.value("input_tokens", std::int64_t{0});
        r.samples.push_back(std::move(s));
    }
    return r;
}

template <class F>
void for_each_line(const fs::path& path, F&& f) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
            f(j);
        } catch (const json::exception& e) {
            throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val" || s == "validation") return Split::val;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split: " + s);
}

std::string to_string(DecodingMode m) { return m == DecodingMode::greedy ? "greedy" : "sample"; }

DecodingMode decoding_mode_from_string(const std::string& s) {
    if (s == "greedy") return DecodingMode::greedy;
    if (s == "sample") return DecodingMode::sample;
    throw ValidationError("unknown decoding mode: " + s);
}

std::string to_string(const SlotKey& key) {
    return "(layer " + std::to_string(key.layer) + ", position " + std::to_string(key.position) + ")";
}

std::vector<Eigen::Index> DatasetManifest::rows_in(Split split) const {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < question_ids.size(); ++i) {
        auto it = split_assignment.find(question_ids[i]);
        if (it != split_assignment.end() && it->second == split) rows.push_back(static_cast<Eigen::Index>(i));
    }
    return rows;
}

Eigen::Index DatasetManifest::row_of(const std::string& question_id) const {
    for (std::size_t i = 0; i < question_ids.size(); ++i)
        if (question_ids[i] == question_id) return static_cast<Eigen::Index>(i);
    return -1;
}

const ActivationMatrix& ActivationSet::at(const SlotKey& key) const {
    auto it = slots.find(key);
    if (it == slots.end()) throw ArgumentError("no activations for " + to_string(key));
    return it->second;
}

std::string activation_file_name(const SlotKey& key) {
    return "L" + std::to_string(key.layer) + "_P" + std::to_string(key.position) + ".actv";
}

void write_activation_file(const fs::path& path, const ActivationMatrix& m) {
    std::string out;
    out.reserve(kHeaderBytes + static_cast<std::size_t>(m.size()) * 4);
    out.append(kMagic.data(), kMagic.size());
    out.push_back(static_cast<char>(kVersion));
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    const float* data = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(out, data[i]);
    write_file(path, out);
}

ActivationMatrix read_activation_file(const fs::path& path) {
    const std::string raw = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    if (raw.size() < kHeaderBytes || std::memcmp(p, kMagic.data(), 4) != 0)
        throw LoadError(path.string() + ": not an ACTV tensor file");
    if (p[4] != kVersion)
        throw LoadError(path.string() + ": unsupported ACTV version " + std::to_string(p[4]));
    const std::uint64_t rows = get_u64(p + 5);
    const std::uint64_t cols = get_u64(p + 13);
    if (cols != 0 && rows > (raw.size() - kHeaderBytes) / 4 / cols)
        throw LoadError(path.string() + ": truncated tensor data");
    if (raw.size() != kHeaderBytes + rows * cols * 4)
        throw LoadError(path.string() + ": payload size does not match header (" + std::to_string(rows) + "x" +
                        std::to_string(cols) + ")");
    ActivationMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    float* data = m.data();
    for (std::uint64_t i = 0; i < rows * cols; ++i) data[i] = get_f32(p + kHeaderBytes + 4 * i);
    return m;
}

void validate(const DatasetBundle& b) {
    const auto& m = b.manifest;
    const auto n = static_cast<Eigen::Index>(m.question_ids.size());

    if (m.activation_dim < 1) throw ValidationError("activation_dim must be >= 1");
    validate_decoding(m.decoding, "manifest decoding");

    std::set<std::string> ids;
    for (const auto& id : m.question_ids) {
        if (!ids.insert(id).second) throw ValidationError("duplicate question_id: " + id);
        if (!m.split_assignment.count(id)) throw ValidationError("question_id has no split: " + id);
    }
    for (const auto& [id, split] : m.split_assignment)
        if (!ids.count(id)) throw ValidationError("split assigned to unknown question_id: " + id);

    std::set<int> seen_layers, seen_positions;
    for (int l : m.layers)
        if (!seen_layers.insert(l).second) throw ValidationError("duplicate layer " + std::to_string(l));
    for (int p : m.positions) {
        if (p >= 0) throw ValidationError("position offsets must be negative, got " + std::to_string(p));
        if (!seen_positions.insert(p).second) throw ValidationError("duplicate position " + std::to_string(p));
    }

    for (int l : m.layers) {
        for (int p : m.positions) {
            const SlotKey key{l, p};
            auto it = b.activations.slots.find(key);
            if (it == b.activations.slots.end())
                throw ValidationError("missing activations for " + to_string(key));
            const auto& a = it->second;
            if (a.cols() != m.activation_dim)
                throw ValidationError("activation width mismatch at " + to_string(key) + ": expected " +
                                      std::to_string(m.activation_dim) + ", found " + std::to_string(a.cols()));
            if (a.rows() != n)
                throw ValidationError("activation row count mismatch at " + to_string(key) + ": expected " +
                                      std::to_string(n) + ", found " + std::to_string(a.rows()));
            if (!a.allFinite()) throw ValidationError("non-finite activation value at " + to_string(key));
        }
    }
    for (const auto& [key, a] : b.activations.slots)
        if (!seen_layers.count(key.layer) || !seen_positions.count(key.position))
            throw ValidationError("activations for undeclared slot " + to_string(key));

    if (b.questions.size() != m.question_ids.size())
        throw ValidationError("expected " + std::to_string(n) + " question records, found " +
                              std::to_string(b.questions.size()));
    for (std::size_t i = 0; i < b.questions.size(); ++i) {
        const auto& q = b.questions[i];
        if (q.question_id != m.question_ids[i])
            throw ValidationError("question record " + std::to_string(i) + " is " + q.question_id +
                                  ", manifest expects " + m.question_ids[i]);
        if (q.text_length < 0) throw ValidationError("negative text_length for " + q.question_id);
        if (q.question_text && static_cast<std::int64_t>(q.question_text->size()) != q.text_length)
            throw ValidationError("text_length does not match question_text for " + q.question_id);
        if (q.human_difficulty && !std::isfinite(*q.human_difficulty))
            throw ValidationError("non-finite human_difficulty for " + q.question_id);
    }

    for (const auto& r : b.rollouts) {
        if (!ids.count(r.question_id)) throw ValidationError("rollout for unknown question_id: " + r.question_id);
        validate_decoding(r.decoding, "rollout " + r.question_id);
        if (static_cast<int>(r.samples.size()) != r.decoding.num_samples)
            throw ValidationError("rollout " + r.question_id + " has " + std::to_string(r.samples.size()) +
                                  " samples, decoding declares " + std::to_string(r.decoding.num_samples));
        for (const auto& s : r.samples)
            if (s.output_tokens < 0 || s.input_tokens < 0)
                throw ValidationError("negative token count in rollout " + r.question_id);
    }
}

DatasetBundle load_dataset(const fs::path& manifest_path) {
    const fs::path root = manifest_path.parent_path();
    DatasetBundle b;
    json mj;
    try {
        mj = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw LoadError(manifest_path.string() + ": " + e.what());
    }

    std::string questions_file = "questions.jsonl";
    std::string rollouts_file = "rollouts.jsonl";
    std::string activations_dir = "activations";
    try {
        auto& m = b.manifest;
        m.dataset_name = mj.value("dataset_name", std::string{});
        m.model_id = mj.value("model_id", std::string{});
        m.decoding = decoding_from_json(mj.at("decoding"));
        m.question_ids = mj.at("question_ids").get<std::vector<std::string>>();
        for (const auto& [id, s] : mj.at("splits").items()) m.split_assignment[id] = split_from_string(s.get<std::string>());
        m.layers = mj.at("layers").get<std::vector<int>>();
        m.positions = mj.at("positions").get<std::vector<int>>();
        m.activation_dim = mj.at("activation_dim").get<std::int64_t>();
        if (auto it = mj.find("files"); it != mj.end()) {
            questions_file = it->value("questions", questions_file);
            rollouts_file = it->value("rollouts", rollouts_file);
            activations_dir = it->value("activations", activations_dir);
        }
    } catch (const json::exception& e) {
        throw LoadError(manifest_path.string() + ": " + e.what());
    }

    for (int l : b.manifest.layers) {
        for (int p : b.manifest.positions) {
            const SlotKey key{l, p};
            const fs::path path = root / activations_dir / activation_file_name(key);
            if (!fs::exists(path)) throw LoadError("missing activation file: " + path.string());
            b.activations.slots.emplace(key, read_activation_file(path));
        }
    }

    const fs::path qpath = root / questions_file;
    if (!fs::exists(qpath)) throw LoadError("missing questions file: " + qpath.string());
    std::map<std::string, QuestionRecord> by_id;
    for_each_line(qpath, [&](const json& j) {
        auto q = question_from_json(j);
        const std::string id = q.question_id;
        if (!by_id.emplace(id, std::move(q)).second) throw ValidationError("duplicate question record: " + id);
    });
    for (const auto& id : b.manifest.question_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("no question record for " + id);
        b.questions.push_back(std::move(it->second));
        by_id.erase(it);
    }
    if (!by_id.empty()) throw ValidationError("question record for unknown question_id: " + by_id.begin()->first);

    const fs::path rpath = root / rollouts_file;
    if (!fs::exists(rpath)) throw LoadError("missing rollouts file: " + rpath.string());
    for_each_line(rpath, [&](const json& j) { b.rollouts.push_back(rollout_from_json(j)); });

    validate(b);
    return b;
}

fs::path write_dataset(const DatasetBundle& b, const fs::path& dir) {
    validate(b);
    std::error_code ec;
    fs::create_directories(dir / "activations", ec);
    if (ec) throw IoError("cannot create " + (dir / "activations").string() + ": " + ec.message());

    const auto& m = b.manifest;
    json splits = json::object();
    for (const auto& [id, s] : m.split_assignment) splits[id] = to_string(s);
    json mj{{"format", "probe-router-dataset"},
            {"version", 1},
            {"dataset_name", m.dataset_name},
            {"model_id", m.model_id},
            {"decoding", decoding_to_json(m.decoding)},
            {"question_ids", m.question_ids},
            {"splits", std::move(splits)},
            {"layers", m.layers},
            {"positions", m.positions},
            {"activation_dim", m.activation_dim},
            {"files", {{"questions", "questions.jsonl"}, {"rollouts", "rollouts.jsonl"}, {"activations", "activations"}}}};
    const fs::path manifest_path = dir / "manifest.json";
    write_file(manifest_path, mj.dump(2) + "\n");

    std::string qtext;
    for (const auto& q : b.questions) qtext += question_to_json(q).dump() + "\n";
    write_file(dir / "questions.jsonl", qtext);

    std::string rtext;
    for (const auto& r : b.rollouts) rtext += rollout_to_json(r).dump() + "\n";
    write_file(dir / "rollouts.jsonl", rtext);

    for (const auto& [key, a] : b.activations.slots)
        write_activation_file(dir / "activations" / activation_file_name(key), a);
    return manifest_path;
}

}  // namespace probe_router
