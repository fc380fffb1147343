#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "probe_router/baselines.hpp"
#include "probe_router/errors.hpp"

#include <cmath>

using namespace probe_router;

namespace {

Eigen::VectorXd dense(const TfidfVocabulary& v, std::string_view text) { return Eigen::VectorXd(transform_tfidf(v, text)); }

}  // namespace

TEST_CASE("tokenizer lowercases alphanumeric runs") {
    CHECK(tokenize("What is 2+2?") == std::vector<std::string>{"what", "is", "2", "2"});
    CHECK(tokenize("  ") .empty());
    CHECK(tokenize("x_y, Z9") == std::vector<std::string>{"x", "y", "z9"});
}

TEST_CASE("idf values") {
    const std::vector<std::string> corpus{"a b", "a c"};
    const auto v = fit_tfidf(corpus);
    REQUIRE(v.size() == 3);
    CHECK(v.index.at("a") == 0);
    CHECK(v.index.at("b") == 1);
    CHECK(v.index.at("c") == 2);
    CHECK(v.idf(0) == 1.0);
    CHECK(v.idf(1) == doctest::Approx(std::log(1.5) + 1));

    const std::vector<std::string> one{"a b a"};
    const auto s = fit_tfidf(one);
    for (int i = 0; i < static_cast<int>(s.size()); ++i) CHECK(s.idf(i) == 1.0);
    CHECK_THROWS_AS(fit_tfidf(std::span<const std::string>{}), ArgumentError);
}

TEST_CASE("tfidf rows are unit vectors and drop unknown terms") {
    const std::vector<std::string> corpus{"a b", "a c"};
    const auto v = fit_tfidf(corpus);
    const auto a = dense(v, "a");
    CHECK(a.norm() == doctest::Approx(1.0));
    CHECK(a[0] == doctest::Approx(1.0));
    CHECK(dense(v, "zzz unknown").isZero());
    CHECK(dense(v, "").isZero());
    CHECK(dense(v, "a zzz") == a);

    // "a a b": counts (2, 1) weighted by idf (1, ln 1.5 + 1).
    const auto aab = dense(v, "a a b");
    const double x = 2.0, y = std::log(1.5) + 1;
    CHECK(aab[0] == doctest::Approx(x / std::hypot(x, y)));
    CHECK(aab[1] == doctest::Approx(y / std::hypot(x, y)));
    CHECK(aab[2] == 0.0);

    const std::vector<std::string> texts{"a", "", "b c"};
    const auto m = tfidf_matrix(v, texts);
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 3);
    CHECK(m.row(0).transpose() == a);
    CHECK(m.row(1).isZero());
}

TEST_CASE("length feature") {
    QuestionRecord q{"q", "1", std::nullopt, 120, std::string("one two  three")};
    CHECK(length_feature(q)[0] == 120.0);
    CHECK(length_feature(q, LengthUnit::whitespace_tokens)[0] == 3.0);
    QuestionRecord empty{"e", "1", std::nullopt, 0, std::string("")};
    CHECK(length_feature(empty)[0] == 0.0);
    CHECK(length_feature(empty, LengthUnit::whitespace_tokens)[0] == 0.0);
    QuestionRecord no_text{"n", "1", std::nullopt, 7, std::nullopt};
    CHECK_THROWS_AS(length_feature(no_text, LengthUnit::whitespace_tokens), ArgumentError);
}
