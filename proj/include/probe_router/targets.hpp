#pragma once

#include "probe_router/interchange.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace probe_router {

enum class TargetKind { success_rate, greedy, maj_at_k, pass_at_k, human_irt };

std::string to_string(TargetKind kind);

/// Parses "success_rate", "greedy", "maj@5", "maj_at_k", "pass@5", "pass_at_k",
/// "irt"/"human_irt". A "@K" suffix fills `k`.
TargetKind target_kind_from_string(const std::string& s, std::optional<int>& k);

inline bool is_binary(TargetKind kind) {
    return kind == TargetKind::greedy || kind == TargetKind::maj_at_k || kind == TargetKind::pass_at_k;
}

struct TargetVector {
    TargetKind kind = TargetKind::success_rate;
    std::vector<double> values;  // manifest order
    std::optional<int> k;
};

/// Canonical form of a final answer: surrounding whitespace, `$`/`\$`,
/// `%`/`\%` and trailing periods stripped; numbers lose thousands separators,
/// leading zeros, and trailing fractional zeros.
std::string normalize_answer(std::string_view raw);

/// Final answer of a generation: the last \boxed{...} content if any, else the
/// last numeric token; normalized. Absent when neither exists.
std::optional<std::string> parse_answer(std::string_view generation_text);

/// Fraction of samples flagged correct.
double success_rate(const RolloutRecord& rollout);

/// 1 iff the plurality parsed answer among the first k samples equals the
/// normalized truth. Absent parses do not vote; ties go to the answer seen first.
int maj_at_k(const RolloutRecord& rollout, std::string_view truth, int k);

/// The answer maj_at_k would select, if any sample among the first k parsed.
std::optional<std::string> plurality_answer(const RolloutRecord& rollout, int k);

/// 1 iff any of the first k samples is flagged correct.
int pass_at_k(const RolloutRecord& rollout, int k);

/// The rollout used for `kind` on a question of `bundle`, or nullptr. Greedy
/// uses greedy-mode records, every other rollout kind uses sample-mode ones;
/// only records of the manifest's model are considered.
const RolloutRecord* find_rollout(const DatasetBundle& bundle, const std::string& question_id, TargetKind kind);

/// One target value per manifest question. Throws MissingDataError listing
/// every question without a usable rollout or label.
TargetVector build_targets(const DatasetBundle& bundle, TargetKind kind, std::optional<int> k = std::nullopt);

}  // namespace probe_router
