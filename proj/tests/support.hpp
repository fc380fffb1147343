#pragma once

#include "probe_router/interchange.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace test_support {

namespace fs = std::filesystem;

/// Fresh directory under the build tree's scratch area.
inline fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::path(TEST_TMP_DIR) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Two questions, layer 0, positions {-2, -1}, D = 4, one sampled and one
/// greedy rollout per question.
inline probe_router::DatasetBundle tiny_bundle() {
    using namespace probe_router;
    DatasetBundle b;
    auto& m = b.manifest;
    m.dataset_name = "tiny";
    m.model_id = "tiny-model";
    m.decoding = DecodingConfig{0.7, 3, DecodingMode::sample, 512};
    m.question_ids = {"q1", "q2"};
    m.split_assignment = {{"q1", Split::train}, {"q2", Split::test}};
    m.layers = {0};
    m.positions = {-2, -1};
    m.activation_dim = 4;
    for (int p : m.positions) {
        ActivationMatrix a(2, 4);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 4; ++j) a(i, j) = 0.25f * static_cast<float>(i * 4 + j) + static_cast<float>(p);
        b.activations.slots.emplace(SlotKey{0, p}, a);
    }
    b.questions = {{"q1", "4", 0.3, 12, std::string("What is 2+2?")}, {"q2", "10", std::nullopt, 12, std::nullopt}};
    RolloutRecord r1{"q1", "tiny-model", m.decoding, {}};
    r1.samples = {{"4", true, 10, 5}, {"5", false, 12, 5}, {std::nullopt, false, 512, 5}};
    RolloutRecord r2{"q2", "tiny-model", m.decoding, {}};
    r2.samples = {{"10", true, 7, 6}, {"10", true, 8, 6}, {"11", false, 9, 6}};
    RolloutRecord g1{"q1", "tiny-model", DecodingConfig{0.0, 1, DecodingMode::greedy, 512}, {{"4", true, 9, 5}}};
    RolloutRecord g2{"q2", "tiny-model", DecodingConfig{0.0, 1, DecodingMode::greedy, 512}, {{"12", false, 9, 6}}};
    b.rollouts = {r1, r2, g1, g2};
    return b;
}

}  // namespace test_support
