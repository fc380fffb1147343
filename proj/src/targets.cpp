#include "probe_router/targets.hpp"

#include "probe_router/errors.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace probe_router {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

void erase_all(std::string& s, std::string_view needle) {
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos)) s.erase(pos, needle.size());
}

// [sign] (d{1,3}(,ddd)+ | d+ | ) [. d+], with at least one digit overall.
bool is_plain_number(std::string_view s) {
    std::size_t i = 0;
    if (i < s.size() && (s[i] == '-' || s[i] == '+')) ++i;
    const std::size_t int_begin = i;
    while (i < s.size() && is_digit(s[i])) ++i;
    std::size_t lead = i - int_begin;
    bool grouped = false;
    while (i < s.size() && s[i] == ',') {
        if (lead == 0 || (!grouped && lead > 3)) return false;
        if (i + 4 > s.size() || !is_digit(s[i + 1]) || !is_digit(s[i + 2]) || !is_digit(s[i + 3])) return false;
        if (i + 4 < s.size() && is_digit(s[i + 4])) return false;
        grouped = true;
        i += 4;
    }
    bool have_digits = lead > 0;
    if (i < s.size() && s[i] == '.') {
        ++i;
        const std::size_t frac_begin = i;
        while (i < s.size() && is_digit(s[i])) ++i;
        if (i == frac_begin) return false;
        have_digits = true;
    }
    return have_digits && i == s.size();
}

std::string canonical_number(std::string_view s) {
    bool negative = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
        negative = s.front() == '-';
        s.remove_prefix(1);
    }
    std::string int_part, frac_part;
    const auto dot = s.find('.');
    for (char c : s.substr(0, dot))
        if (c != ',') int_part.push_back(c);
    if (dot != std::string_view::npos) frac_part = std::string(s.substr(dot + 1));

    const auto nz = int_part.find_first_not_of('0');
    int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
    while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();

    std::string out = int_part;
    if (!frac_part.empty()) out += "." + frac_part;
    if (negative && out != "0") out.insert(out.begin(), '-');
    return out;
}

// Content of the last balanced \boxed{...}.
std::optional<std::string> last_boxed(std::string_view text) {
    constexpr std::string_view kTag = "\\boxed";
    auto pos = text.rfind(kTag);
    while (pos != std::string_view::npos) {
        std::size_t i = pos + kTag.size();
        while (i < text.size() && is_space(text[i])) ++i;
        if (i < text.size() && text[i] == '{') {
            int depth = 0;
            const std::size_t open = i;
            for (; i < text.size(); ++i) {
                if (text[i] == '{') ++depth;
                else if (text[i] == '}' && --depth == 0)
                    return std::string(text.substr(open + 1, i - open - 1));
            }
        }
        if (pos == 0) break;
        pos = text.rfind(kTag, pos - 1);
    }
    return std::nullopt;
}

// Last maximal run of [0-9.,] that contains a digit, trimmed to a number.
std::optional<std::string> last_number(std::string_view text) {
    std::optional<std::string> found;
    std::size_t i = 0;
    while (i < text.size()) {
        const bool starts = is_digit(text[i]) || (text[i] == '.' && i + 1 < text.size() && is_digit(text[i + 1]));
        if (!starts) {
            ++i;
            continue;
        }
        const std::size_t begin = i;
        while (i < text.size() && (is_digit(text[i]) || text[i] == '.' || text[i] == ',')) ++i;
        std::string_view tok = text.substr(begin, i - begin);
        while (!tok.empty() && (tok.back() == '.' || tok.back() == ',')) tok.remove_suffix(1);
        // "1.2.3" keeps "1.2"; "3,4,5" keeps the last list item.
        if (auto d1 = tok.find('.'); d1 != std::string_view::npos) {
            if (auto d2 = tok.find('.', d1 + 1); d2 != std::string_view::npos) tok = tok.substr(0, d2);
        }
        if (!is_plain_number(tok)) {
            const auto comma = tok.rfind(',');
            if (comma != std::string_view::npos) tok = tok.substr(comma + 1);
        }
        if (tok.empty() || !is_plain_number(tok)) continue;
        std::string candidate(tok);
        if (begin > 0 && text[begin - 1] == '-') {
            const bool sign_context = begin == 1 || is_space(text[begin - 2]) ||
                                      std::string_view("(=${[:").find(text[begin - 2]) != std::string_view::npos;
            if (sign_context) candidate.insert(candidate.begin(), '-');
        }
        found = std::move(candidate);
    }
    return found;
}

}  // namespace

std::string to_string(TargetKind kind) {
    switch (kind) {
        case TargetKind::success_rate: return "success_rate";
        case TargetKind::greedy: return "greedy";
        case TargetKind::maj_at_k: return "maj_at_k";
        case TargetKind::pass_at_k: return "pass_at_k";
        case TargetKind::human_irt: return "human_irt";
    }
    return "success_rate";
}

TargetKind target_kind_from_string(const std::string& s, std::optional<int>& k) {
    auto with_k = [&](std::string_view prefix, TargetKind kind) -> std::optional<TargetKind> {
        if (s.rfind(prefix, 0) != 0) return std::nullopt;
        const std::string rest = s.substr(prefix.size());
        if (rest.empty() || !std::all_of(rest.begin(), rest.end(), is_digit))
            throw ArgumentError("bad target: " + s);
        k = std::stoi(rest);
        return kind;
    };
    if (s == "success_rate") return TargetKind::success_rate;
    if (s == "greedy") return TargetKind::greedy;
    if (s == "maj_at_k" || s == "maj") return TargetKind::maj_at_k;
    if (s == "pass_at_k" || s == "pass") return TargetKind::pass_at_k;
    if (s == "irt" || s == "human_irt") return TargetKind::human_irt;
    if (auto t = with_k("maj@", TargetKind::maj_at_k)) return *t;
    if (auto t = with_k("pass@", TargetKind::pass_at_k)) return *t;
    throw ArgumentError("unknown target kind: " + s);
}

std::string normalize_answer(std::string_view raw) {
    std::string s(trim(raw));
    for (std::string_view sym : {"\\$", "\\%", "$", "%", "\xE2\x82\xAC" /* € */, "\xC2\xA3" /* £ */})
        erase_all(s, sym);
    std::string_view v = trim(s);
    while (!v.empty() && v.back() == '.') v = trim(v.substr(0, v.size() - 1));
    if (is_plain_number(v)) return canonical_number(v);
    return std::string(v);
}

std::optional<std::string> parse_answer(std::string_view generation_text) {
    if (auto boxed = last_boxed(generation_text)) {
        std::string norm = normalize_answer(*boxed);
        if (!norm.empty()) return norm;
    }
    if (auto num = last_number(generation_text)) return normalize_answer(*num);
    return std::nullopt;
}

double success_rate(const RolloutRecord& rollout) {
    if (rollout.samples.empty()) throw ArgumentError("success_rate: rollout " + rollout.question_id + " has no samples");
    std::size_t hits = 0;
    for (const auto& s : rollout.samples) hits += s.correct ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(rollout.samples.size());
}

static void check_k(const RolloutRecord& rollout, int k) {
    if (k <= 0 || static_cast<std::size_t>(k) > rollout.samples.size())
        throw ArgumentError("k=" + std::to_string(k) + " outside [1, " + std::to_string(rollout.samples.size()) +
                            "] for rollout " + rollout.question_id);
}

std::optional<std::string> plurality_answer(const RolloutRecord& rollout, int k) {
    check_k(rollout, k);
    // answer -> (votes, first index)
    std::map<std::string, std::pair<int, int>> tally;
    for (int i = 0; i < k; ++i) {
        const auto& ans = rollout.samples[static_cast<std::size_t>(i)].parsed_answer;
        if (!ans) continue;
        auto [it, inserted] = tally.try_emplace(normalize_answer(*ans), 0, i);
        ++it->second.first;
    }
    const std::string* best = nullptr;
    std::pair<int, int> best_score{0, 0};
    for (const auto& [ans, score] : tally) {
        if (!best || score.first > best_score.first ||
            (score.first == best_score.first && score.second < best_score.second)) {
            best = &ans;
            best_score = score;
        }
    }
    if (!best) return std::nullopt;
    return *best;
}

int maj_at_k(const RolloutRecord& rollout, std::string_view truth, int k) {
    const auto winner = plurality_answer(rollout, k);
    return winner && *winner == normalize_answer(truth) ? 1 : 0;
}

int pass_at_k(const RolloutRecord& rollout, int k) {
    check_k(rollout, k);
    for (int i = 0; i < k; ++i)
        if (rollout.samples[static_cast<std::size_t>(i)].correct) return 1;
    return 0;
}

const RolloutRecord* find_rollout(const DatasetBundle& bundle, const std::string& question_id, TargetKind kind) {
    const DecodingMode want = kind == TargetKind::greedy ? DecodingMode::greedy : DecodingMode::sample;
    for (const auto& r : bundle.rollouts) {
        if (r.question_id != question_id || r.decoding.mode != want) continue;
        if (!bundle.manifest.model_id.empty() && r.model_id != bundle.manifest.model_id) continue;
        return &r;
    }
    return nullptr;
}

TargetVector build_targets(const DatasetBundle& bundle, TargetKind kind, std::optional<int> k) {
    if (k && *k <= 0) throw ArgumentError("k must be positive");
    TargetVector t;
    t.kind = kind;
    if (kind == TargetKind::maj_at_k || kind == TargetKind::pass_at_k) t.k = k;

    std::vector<std::string> missing;
    const auto& ids = bundle.manifest.question_ids;
    t.values.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& q = bundle.questions[i];
        if (kind == TargetKind::human_irt) {
            if (!q.human_difficulty) {
                missing.push_back(ids[i]);
                t.values.push_back(0.0);
            } else {
                t.values.push_back(*q.human_difficulty);
            }
            continue;
        }
        const RolloutRecord* r = find_rollout(bundle, ids[i], kind);
        if (!r || r->samples.empty() || (kind == TargetKind::maj_at_k && q.ground_truth.empty())) {
            missing.push_back(ids[i]);
            t.values.push_back(0.0);
            continue;
        }
        const int kk = k.value_or(static_cast<int>(r->samples.size()));
        switch (kind) {
            case TargetKind::success_rate: t.values.push_back(success_rate(*r)); break;
            case TargetKind::greedy: t.values.push_back(r->samples.front().correct ? 1.0 : 0.0); break;
            case TargetKind::maj_at_k: t.values.push_back(maj_at_k(*r, q.ground_truth, kk)); break;
            case TargetKind::pass_at_k: t.values.push_back(pass_at_k(*r, kk)); break;
            case TargetKind::human_irt: break;
        }
        if ((kind == TargetKind::maj_at_k || kind == TargetKind::pass_at_k) && !t.k) t.k = kk;
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
        if (missing.size() > 10) list += ", ...";
        throw MissingDataError("missing " + to_string(kind) + " data for " + std::to_string(missing.size()) +
                                   " question(s): " + list,
                               std::move(missing));
    }
    return t;
}

}  // namespace probe_router
