#include "probe_router/baselines.hpp"

#include "probe_router/errors.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace probe_router {

double TfidfVocabulary::idf(int term_index) const {
    const double df = document_frequency.at(static_cast<std::size_t>(term_index));
    return std::log((1.0 + num_documents) / (1.0 + df)) + 1.0;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (uc < 128 && std::isalnum(uc)) {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

TfidfVocabulary fit_tfidf(std::span<const std::string> corpus) {
    if (corpus.empty()) throw ArgumentError("fit_tfidf: empty corpus");
    std::map<std::string, int> df;
    for (const auto& doc : corpus) {
        const auto toks = tokenize(doc);
        for (const auto& t : std::set<std::string>(toks.begin(), toks.end())) ++df[t];
    }
    TfidfVocabulary v;
    v.num_documents = static_cast<int>(corpus.size());
    for (const auto& [term, count] : df) {
        v.index.emplace(term, static_cast<int>(v.document_frequency.size()));
        v.document_frequency.push_back(count);
    }
    return v;
}

Eigen::SparseVector<double> transform_tfidf(const TfidfVocabulary& vocab, std::string_view text) {
    std::map<int, double> counts;
    for (const auto& t : tokenize(text)) {
        auto it = vocab.index.find(t);
        if (it != vocab.index.end()) counts[it->second] += 1.0;
    }
    Eigen::SparseVector<double> v(static_cast<Eigen::Index>(vocab.size()));
    double norm2 = 0;
    for (auto& [idx, c] : counts) {
        c *= vocab.idf(idx);
        norm2 += c * c;
    }
    if (norm2 == 0) return v;
    const double inv = 1.0 / std::sqrt(norm2);
    v.reserve(static_cast<Eigen::Index>(counts.size()));
    for (const auto& [idx, c] : counts) v.insertBack(idx) = c * inv;
    return v;
}

Eigen::MatrixXd tfidf_matrix(const TfidfVocabulary& vocab, std::span<const std::string> texts) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(texts.size()),
                                              static_cast<Eigen::Index>(vocab.size()));
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto v = transform_tfidf(vocab, texts[i]);
        for (Eigen::SparseVector<double>::InnerIterator it(v); it; ++it)
            m(static_cast<Eigen::Index>(i), it.index()) = it.value();
    }
    return m;
}

Eigen::VectorXd length_feature(const QuestionRecord& question, LengthUnit unit) {
    Eigen::VectorXd v(1);
    if (unit == LengthUnit::characters) {
        v[0] = static_cast<double>(question.text_length);
        return v;
    }
    if (!question.question_text)
        throw ArgumentError("whitespace-token length needs question_text for " + question.question_id);
    std::istringstream in(*question.question_text);
    std::string word;
    double n = 0;
    while (in >> word) n += 1;
    v[0] = n;
    return v;
}

}  // namespace probe_router
