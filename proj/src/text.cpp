#include "convkit/text.hpp"

#include <algorithm>
#include <cctype>

namespace convkit::text {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_placeholder_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (is_word_byte(c)) {
      while (i < s.size()) {
        auto d = static_cast<unsigned char>(s[i]);
        if (is_word_byte(d)) {
          ++i;
        } else if (d == '\'' && i + 1 < s.size() &&
                   is_word_byte(static_cast<unsigned char>(s[i + 1]))) {
          ++i;
        } else {
          break;
        }
      }
    } else {
      ++i;
    }
    out.push_back({std::string(s.substr(start, i - start)), start, i});
  }
  return out;
}

std::vector<std::string> token_texts(std::string_view s) {
  std::vector<std::string> out;
  for (auto& t : tokenize(s)) out.push_back(std::move(t.text));
  return out;
}

std::string fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> fold_tokens(std::string_view s) {
  auto toks = token_texts(s);
  for (auto& t : toks) t = fold(t);
  return toks;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool same_tokens(std::string_view a, std::string_view b) {
  return fold_tokens(a) == fold_tokens(b);
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double similarity(std::string_view a, std::string_view b) {
  std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> placeholders(std::string_view tmpl) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '$') continue;
    std::size_t j = i + 1;
    while (j < tmpl.size() && is_placeholder_char(tmpl[j])) ++j;
    // allow dotted field access so it can be rejected with a clear message
    while (j + 1 < tmpl.size() && tmpl[j] == '.' && is_placeholder_char(tmpl[j + 1])) {
      ++j;
      while (j < tmpl.size() && is_placeholder_char(tmpl[j])) ++j;
    }
    if (j > i + 1) out.emplace_back(tmpl.substr(i + 1, j - i - 1));
    i = j - 1;
  }
  return out;
}

std::string say_list(const std::vector<std::string>& items) {
  if (items.empty()) return {};
  if (items.size() == 1) return items[0];
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out + " and " + items.back();
}

}  // namespace convkit::text
