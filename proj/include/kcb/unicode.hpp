#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "kcb/error.hpp"

namespace kcb::unicode {

inline bool is_valid_utf8(std::string_view s) {
    std::int32_t i = 0;
    const auto len = static_cast<std::int32_t>(s.size());
    while (i < len) {
        UChar32 c;
        U8_NEXT(s.data(), i, len, c);
        if (c < 0) return false;
    }
    return true;
}

inline std::string nfc(std::string_view s) {
    if (!is_valid_utf8(s)) throw FormatError("input is not valid UTF-8");
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw FormatError(std::string("ICU NFC unavailable: ") + u_errorName(status));
    auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<std::int32_t>(s.size())));
    icu::UnicodeString out = norm->normalize(src, status);
    if (U_FAILURE(status)) throw FormatError(std::string("NFC normalization failed: ") + u_errorName(status));
    std::string result;
    out.toUTF8String(result);
    return result;
}

// Splits valid UTF-8 into one string per code point.
inline std::vector<std::string> code_points(std::string_view s) {
    std::vector<std::string> out;
    std::int32_t i = 0;
    const auto len = static_cast<std::int32_t>(s.size());
    while (i < len) {
        const std::int32_t start = i;
        UChar32 c;
        U8_NEXT(s.data(), i, len, c);
        if (c < 0) throw FormatError("input is not valid UTF-8");
        out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace kcb::unicode
