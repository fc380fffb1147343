#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace probe_router {

enum class Split { train, val, test };
enum class DecodingMode { greedy, sample };

std::string to_string(Split s);
Split split_from_string(const std::string& s);
std::string to_string(DecodingMode m);
DecodingMode decoding_mode_from_string(const std::string& s);

struct DecodingConfig {
    double temperature = 1.0;
    int num_samples = 1;
    DecodingMode mode = DecodingMode::sample;
    int max_tokens = 1;

    bool operator==(const DecodingConfig&) const = default;
};

/// One (layer, position) activation slot. Positions are negative offsets from
/// the last non-padding prompt token.
struct SlotKey {
    int layer = 0;
    int position = -1;

    auto operator<=>(const SlotKey&) const = default;
};

std::string to_string(const SlotKey& key);

struct DatasetManifest {
    std::string dataset_name;
    std::string model_id;
    DecodingConfig decoding;
    std::vector<std::string> question_ids;
    std::map<std::string, Split> split_assignment;
    std::vector<int> layers;
    std::vector<int> positions;
    std::int64_t activation_dim = 1;

    /// Row indices of the questions assigned to `split`, in manifest order.
    std::vector<Eigen::Index> rows_in(Split split) const;
    /// Row of `question_id`, or -1.
    Eigen::Index row_of(const std::string& question_id) const;
};

using ActivationMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Activation matrices keyed by slot. Row i belongs to manifest question i.
struct ActivationSet {
    std::map<SlotKey, ActivationMatrix> slots;

    const ActivationMatrix& at(const SlotKey& key) const;
    bool contains(const SlotKey& key) const { return slots.count(key) != 0; }
};

struct QuestionRecord {
    std::string question_id;
    std::string ground_truth;
    std::optional<double> human_difficulty;
    std::int64_t text_length = 0;
    std::optional<std::string> question_text;
};

struct SampleRecord {
    std::optional<std::string> parsed_answer;
    bool correct = false;
    std::int64_t output_tokens = 0;
    std::int64_t input_tokens = 0;
};

struct RolloutRecord {
    std::string question_id;
    std::string model_id;
    DecodingConfig decoding;
    std::vector<SampleRecord> samples;
};

struct DatasetBundle {
    DatasetManifest manifest;
    ActivationSet activations;
    std::vector<QuestionRecord> questions;  // manifest order
    std::vector<RolloutRecord> rollouts;    // file order
};

/// Checks every type invariant; throws ValidationError on the first violation.
void validate(const DatasetBundle& bundle);

/// Loads and validates a dataset. `manifest_path` names manifest.json; the
/// remaining files are resolved relative to its directory.
DatasetBundle load_dataset(const std::filesystem::path& manifest_path);

/// Validates, then writes manifest.json, questions.jsonl, rollouts.jsonl and one
/// activation file per slot under `dir`. Returns the manifest path.
std::filesystem::path write_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);

/// File name of a slot's activation tensor inside the activations directory.
std::string activation_file_name(const SlotKey& key);

/// Activation tensor file: "ACTV", version byte 1, u64 rows, u64 dim, then
/// rows*dim little-endian float32 values, row-major.
void write_activation_file(const std::filesystem::path& path, const ActivationMatrix& m);
ActivationMatrix read_activation_file(const std::filesystem::path& path);

}  // namespace probe_router
