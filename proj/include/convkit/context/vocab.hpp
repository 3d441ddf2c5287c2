#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "convkit/dml/dialogue.hpp"
#include "convkit/dml/schema.hpp"

namespace convkit::context {

// Case-folded word list followed by a fixed block of hash buckets. A token
// outside the list always lands in the same bucket, so unseen words get a
// stable embedding row.
class Vocabulary {
 public:
  static constexpr std::size_t kOovBuckets = 4096;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  // Schema catalogs and templates plus every token of the corpora.
  static Vocabulary build(const dml::DomainSchema& schema,
                          const std::vector<const std::vector<dml::AnnotatedDialogue>*>& corpora);

  std::size_t id(std::string_view token) const;
  std::size_t oov_id(std::string_view token) const;
  bool known(std::string_view token) const;
  std::size_t size() const { return words_.size() + kOovBuckets; }
  std::size_t num_words() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace convkit::context
