#pragma once

#include "probe_router/interchange.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probe_router {

/// Terms of a fitted TF-IDF model. Indices are assigned in lexicographic term
/// order, contiguous from 0.
struct TfidfVocabulary {
    std::map<std::string, int> index;
    std::vector<int> document_frequency;  // by index
    int num_documents = 0;

    std::size_t size() const { return document_frequency.size(); }
    /// ln((1 + N) / (1 + df)) + 1
    double idf(int term_index) const;
    bool operator==(const TfidfVocabulary&) const = default;
};

/// Lowercased maximal runs of ASCII alphanumerics.
std::vector<std::string> tokenize(std::string_view text);

TfidfVocabulary fit_tfidf(std::span<const std::string> corpus);

/// Raw term counts times idf, L2-normalized; unknown terms are dropped.
Eigen::SparseVector<double> transform_tfidf(const TfidfVocabulary& vocab, std::string_view text);

/// Dense N x |V| matrix of transform_tfidf rows.
Eigen::MatrixXd tfidf_matrix(const TfidfVocabulary& vocab, std::span<const std::string> texts);

enum class LengthUnit { characters, whitespace_tokens };

/// Single-feature vector [length] in the chosen unit. Whitespace-token counts
/// need the question text (ArgumentError without it).
Eigen::VectorXd length_feature(const QuestionRecord& question, LengthUnit unit = LengthUnit::characters);

}  // namespace probe_router
