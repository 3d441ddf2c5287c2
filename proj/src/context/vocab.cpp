#include "convkit/context/vocab.hpp"

#include <set>

#include "convkit/text.hpp"

namespace convkit::context {

Vocabulary::Vocabulary(std::vector<std::string> words) {
  for (auto& w : words) {
    auto f = text::fold(w);
    if (index_.count(f)) continue;
    index_.emplace(f, words_.size());
    words_.push_back(std::move(f));
  }
}

Vocabulary Vocabulary::build(const dml::DomainSchema& schema,
                             const std::vector<const std::vector<dml::AnnotatedDialogue>*>& corpora) {
  std::set<std::string> seen;
  std::vector<std::string> words;
  auto add_text = [&](std::string_view s) {
    for (auto& t : text::fold_tokens(s)) {
      if (seen.insert(t).second) words.push_back(t);
    }
  };
  for (const auto& t : schema.entity_types) {
    for (const auto& v : t.catalog) add_text(v);
  }
  for (const auto& u : schema.user_templates) {
    add_text(u.text);
    for (const auto& p : u.paraphrases) add_text(p);
  }
  for (const auto& n : schema.nlg_responses) {
    for (const auto& t : n.templates) add_text(t);
  }
  for (const auto* c : corpora) {
    for (const auto& d : *c) {
      for (const auto& e : d.events) {
        if (e.kind == dml::EventKind::UserUtterance) add_text(e.text);
      }
      for (const auto& [id, v] : d.variables) add_text(v.value);
    }
  }
  return Vocabulary(std::move(words));
}

std::size_t Vocabulary::oov_id(std::string_view token) const {
  return words_.size() + text::fnv1a(text::fold(token)) % kOovBuckets;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto f = text::fold(token);
  if (auto it = index_.find(f); it != index_.end()) return it->second;
  return oov_id(f);
}

bool Vocabulary::known(std::string_view token) const { return index_.count(text::fold(token)) > 0; }

nlohmann::json Vocabulary::to_json() const {
  return {{"oov_buckets", kOovBuckets}, {"words", words_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  if (j.value("oov_buckets", std::size_t{0}) != kOovBuckets) {
    throw dml::DmlError("vocabulary was built with a different number of hash buckets");
  }
  return Vocabulary(j.at("words").get<std::vector<std::string>>());
}

}  // namespace convkit::context
