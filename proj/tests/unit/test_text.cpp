#include "peach/text.hpp"

#include <doctest.h>

using namespace peach;

namespace {
std::vector<std::string> words(const std::vector<TextToken>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t.word);
    return out;
}
}  // namespace

TEST_CASE("lowercase, split and drop stopwords") {
    CHECK(words(tokenize_normalize("The CAT sat.", {"the"})) == std::vector<std::string>{"cat", "sat"});
}

TEST_CASE("empty text gives no tokens") { CHECK(tokenize_normalize("", {}).empty()); }

TEST_CASE("hyphenated words split on the boundary rule") {
    CHECK(words(tokenize_normalize("state-of-the-art", {"of", "the"})) == std::vector<std::string>{"state", "art"});
}

TEST_CASE("spans index the original bytes") {
    const std::string text = "Fun  FILM, fun!";
    const auto tokens = tokenize_normalize(text, {});
    REQUIRE(tokens.size() == 3);
    CHECK(tokens[0] == TextToken{"fun", 0, 3});
    CHECK(tokens[1] == TextToken{"film", 5, 9});
    CHECK(tokens[2] == TextToken{"fun", 11, 14});
    for (const auto& t : tokens) CHECK(lowercase(text.substr(t.begin, t.end - t.begin)) == t.word);
}

TEST_CASE("unicode letters and digits stay inside words") {
    const std::string text = "Caf\xC3\xA9 \xC3\x9C" "ber 2024x \xE6\x97\xA5\xE6\x9C\xAC";
    const auto tokens = tokenize_normalize(text, {});
    REQUIRE(tokens.size() == 4);
    CHECK(tokens[0].word == "caf\xC3\xA9");
    CHECK(tokens[1].word == "\xC3\xBC" "ber");
    CHECK(tokens[2].word == "2024x");
    CHECK(tokens[3].word == "\xE6\x97\xA5\xE6\x9C\xAC");
    CHECK(tokens[1].begin == 6);
    CHECK(tokens[1].end == 11);
}

TEST_CASE("lowercase handles non-ASCII") {
    CHECK(lowercase("\xC3\x89T\xC3\x89") == "\xC3\xA9t\xC3\xA9");
    CHECK(lowercase("ABC def") == "abc def");
}

TEST_CASE("stopwords match after lowercasing") {
    CHECK(words(tokenize_normalize("THE end", {"the"})) == std::vector<std::string>{"end"});
}
