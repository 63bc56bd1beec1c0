#include "erc/text.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <cstdint>

namespace erc::text {
namespace {

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

void append_utf8(std::string& out, UChar32 cp) {
    char buf[U8_MAX_LENGTH];
    int32_t len = 0;
    UBool error = false;
    U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, cp, error);
    if (!error) out.append(buf, static_cast<std::size_t>(len));
}

// Walks `s` code point by code point. Malformed sequences are reported with
// cp < 0 and the raw bytes that made them up.
template <typename Fn>
void for_each_code_point(std::string_view s, Fn&& fn) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
    const auto length = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < length) {
        const int32_t start = i;
        UChar32 cp = 0;
        U8_NEXT(bytes, i, length, cp);
        fn(cp, s.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
    }
}

}  // namespace

std::string_view trim(std::string_view s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && is_ascii_space(s[begin])) ++begin;
    while (end > begin && is_ascii_space(s[end - 1])) --end;
    return s.substr(begin, end - begin);
}

std::string to_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for_each_code_point(s, [&](UChar32 cp, std::string_view raw) {
        if (cp < 0) {
            out.append(raw);
        } else if (cp < 0x80) {
            out.push_back(static_cast<char>(cp >= 'A' && cp <= 'Z' ? cp + 32 : cp));
        } else {
            append_utf8(out, u_tolower(cp));
        }
    });
    return out;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for_each_code_point(s, [&](UChar32 cp, std::string_view) {
        if (cp < 0) {
            flush();
        } else if (cp < 0x80) {
            const char c = static_cast<char>(cp);
            if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
                current.push_back(c);
            } else if (c >= 'A' && c <= 'Z') {
                current.push_back(static_cast<char>(c + 32));
            } else {
                flush();
            }
        } else if (u_isalnum(cp)) {
            append_utf8(current, u_tolower(cp));
        } else {
            flush();
        }
    });
    flush();
    return tokens;
}

std::size_t whitespace_unit_count(std::string_view s) {
    std::size_t count = 0;
    bool in_unit = false;
    for (char c : s) {
        if (is_ascii_space(c)) {
            in_unit = false;
        } else if (!in_unit) {
            in_unit = true;
            ++count;
        }
    }
    return count;
}

}  // namespace erc::text
