#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace peach {

// A normalized word together with the half-open UTF-8 byte range it came from.
struct TextToken {
    std::string word;
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const TextToken&) const = default;
};

// Full Unicode lowercase of UTF-8 text. Invalid sequences are replaced by U+FFFD.
std::string lowercase(std::string_view text);

// Splits on every code point that is neither a letter nor a digit, lowercases,
// then drops stopwords. Spans index into `text`.
std::vector<TextToken> tokenize_normalize(std::string_view text, const std::set<std::string>& stopwords);

}  // namespace peach
