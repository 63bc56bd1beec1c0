#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace erc::text {

/// Strips ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

/// Full Unicode simple lowercase mapping of a UTF-8 string. Invalid byte
/// sequences are passed through unchanged.
std::string to_lower(std::string_view s);

/// Retrieval tokenizer: Unicode-lowercase, split on every code point that is
/// not a letter or digit, drop empty pieces. No stemming, no stop words.
std::vector<std::string> tokenize(std::string_view s);

/// Number of maximal runs of non-whitespace characters.
std::size_t whitespace_unit_count(std::string_view s);

}  // namespace erc::text
