#include "peach/text.hpp"

#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

namespace peach {

std::string lowercase(std::string_view text) {
    std::string out;
    icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())))
        .toLower(icu::Locale::getRoot())
        .toUTF8String(out);
    return out;
}

std::vector<TextToken> tokenize_normalize(std::string_view text, const std::set<std::string>& stopwords) {
    std::vector<TextToken> tokens;
    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());

    int32_t offset = 0;
    int32_t word_start = -1;
    auto flush = [&](int32_t word_end) {
        if (word_start < 0) return;
        const auto begin = static_cast<std::size_t>(word_start);
        const auto end = static_cast<std::size_t>(word_end);
        std::string word = lowercase(text.substr(begin, end - begin));
        word_start = -1;
        if (word.empty() || stopwords.contains(word)) return;
        tokens.push_back({std::move(word), begin, end});
    };

    while (offset < length) {
        const int32_t start = offset;
        UChar32 cp;
        U8_NEXT(bytes, offset, length, cp);
        // Combining marks stay attached to the word they follow.
        const bool word_char =
            cp >= 0 && (u_hasBinaryProperty(cp, UCHAR_ALPHABETIC) || u_isdigit(cp) ||
                        (word_start >= 0 && (U_GET_GC_MASK(cp) & U_GC_M_MASK) != 0));
        if (word_char) {
            if (word_start < 0) word_start = start;
        } else {
            flush(start);
        }
    }
    flush(length);
    return tokens;
}

}  // namespace peach
