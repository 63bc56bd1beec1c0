#include <catch_amalgamated.hpp>

#include "erc/text.hpp"

using erc::text::tokenize;

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
    CHECK(tokenize("Hello, World!") == std::vector<std::string>{"hello", "world"});
    CHECK(tokenize("A: don't-stop  now") == std::vector<std::string>{"a", "don", "t", "stop", "now"});
    CHECK(tokenize("abc123 x9") == std::vector<std::string>{"abc123", "x9"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("?! ...").empty());
}

TEST_CASE("tokenize handles non-ASCII letters") {
    CHECK(tokenize("Ça VA, Émile?") == std::vector<std::string>{"ça", "va", "émile"});
    CHECK(tokenize("ÜBER\u2014straße") == std::vector<std::string>{"über", "straße"});
    CHECK(tokenize("日本語 テキスト") == std::vector<std::string>{"日本語", "テキスト"});
}

TEST_CASE("to_lower and trim") {
    CHECK(erc::text::to_lower("NeUtRaL") == "neutral");
    CHECK(erc::text::to_lower("ÉMOTION") == "émotion");
    CHECK(erc::text::trim("  a b \t\n") == "a b");
    CHECK(erc::text::trim("   ").empty());
}

TEST_CASE("whitespace units") {
    CHECK(erc::text::whitespace_unit_count("") == 0);
    CHECK(erc::text::whitespace_unit_count("  one  two\nthree\t") == 3);
    CHECK(erc::text::whitespace_unit_count("[Label] joy") == 2);
}
