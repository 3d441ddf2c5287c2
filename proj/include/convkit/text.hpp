#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Tokenization and string helpers shared by every component. Entity spans
// everywhere in the toolkit are half-open token ranges over tokenize().
namespace convkit::text {

struct Token {
  std::string text;
  std::size_t begin = 0;  // byte offset into the source
  std::size_t end = 0;
};

// Alphanumeric runs (with inner apostrophes, e.g. "don't") are one token;
// every other non-space character is a token of its own.
std::vector<Token> tokenize(std::string_view s);
std::vector<std::string> token_texts(std::string_view s);

std::string fold(std::string_view s);
std::vector<std::string> fold_tokens(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Case-folded token sequences equal.
bool same_tokens(std::string_view a, std::string_view b);

std::size_t levenshtein(std::string_view a, std::string_view b);
// 1 - lev(a, b) / max(|a|, |b|); 1 for two empty strings.
double similarity(std::string_view a, std::string_view b);

std::uint64_t fnv1a(std::string_view s);

// Names following '$' in a template, in order of appearance.
std::vector<std::string> placeholders(std::string_view tmpl);

// Render a list value the way agents and users say it: "a, b and c".
std::string say_list(const std::vector<std::string>& items);

}  // namespace convkit::text
