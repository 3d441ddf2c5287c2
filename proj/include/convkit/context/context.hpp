#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "convkit/context/vocab.hpp"
#include "convkit/dml/dialogue.hpp"
#include "convkit/dml/schema.hpp"
#include "convkit/nn/layers.hpp"

namespace convkit::context {

// Agent mentions are not listed separately: a variable an agent response
// referred to keeps its original mention and gets the agent_mentioned
// feature instead. `Agent` is kept for log output only.
enum class Source { User, Agent, ApiReturn, Optional };
std::string_view source_name(Source s);

struct EntityMention {
  std::string value;
  std::string entity_type;
  Source source = Source::User;
  std::size_t turn = 0;
  std::size_t position = 0;  // index in the context's mention list
  std::string variable;
  std::size_t event = 0;             // event that introduced the mention
  std::size_t start = 0, end = 0;    // token span (user mentions)
  bool operator==(const EntityMention&) const = default;
};

struct DialogueContext {
  std::vector<std::string> current_user_utterance;
  std::vector<EntityMention> current_entities;
  std::vector<std::vector<std::string>> past_user_utterances;
  std::vector<std::string> past_actions;
  std::vector<EntityMention> past_entities;
  std::map<std::string, dml::Variable> api_returns;
  std::size_t optional_token_position = 0;

  // past_entities ++ current_entities ++ [optional token]
  std::vector<EntityMention> mentions() const;
};

inline constexpr std::size_t kDefaultWindow = 8;

// Everything about one dialogue the encoder needs, computed once. Turn 0
// is the opening (no user utterance); turn t >= 1 starts at its user event.
struct DialogueIndex {
  const dml::AnnotatedDialogue* dialogue = nullptr;
  std::size_t window = kDefaultWindow;
  std::vector<std::size_t> event_turn;
  std::vector<std::ptrdiff_t> turn_user_event;
  std::vector<std::vector<std::string>> turn_tokens;
  std::vector<std::size_t> agent_events;    // indices of agent events, in order
  std::vector<EntityMention> mentions;      // every mention, in event order
  std::vector<std::size_t> calls_before;    // API calls among events [0, i)
  std::map<std::string, std::size_t> first_call_use, first_nlg_use;

  std::size_t num_turns() const { return turn_user_event.size(); }
  // Turn of the last event of the prefix of length `p` (0 for p = 0).
  std::size_t turn_of_prefix(std::size_t p) const { return p ? event_turn[p - 1] : 0; }
  std::size_t window_start(std::size_t turn) const { return turn > window ? turn - window : 0; }
  // Global indices of the mentions visible at prefix length p.
  std::vector<std::size_t> context_mentions(std::size_t p) const;
};

DialogueIndex index_dialogue(const dml::AnnotatedDialogue& d, std::size_t window = kDefaultWindow);

// Context for predicting event `prefix_len` of `d` from events [0, prefix_len).
DialogueContext extract_features(const dml::AnnotatedDialogue& d, std::size_t prefix_len,
                                 std::size_t window = kDefaultWindow);
// Context after the whole of `prefix`.
inline DialogueContext extract_features(const dml::AnnotatedDialogue& prefix) {
  return extract_features(prefix, prefix.events.size());
}

// Dense inputs for one action step: the action names of the schema plus a
// failed variant per API.
struct ActionInventory {
  std::vector<std::string> actions;  // schema.action_names()
  std::map<std::string, std::size_t> index;
  std::size_t num_inputs() const { return actions.size() * 2; }
  std::size_t input_id(const dml::DialogueEvent& e) const;
  explicit ActionInventory(const dml::DomainSchema& schema);
  ActionInventory() = default;
};

struct EncoderConfig {
  std::size_t hidden = 64;
  std::size_t embed = 32;
  std::size_t window = kDefaultWindow;
  double word_dropout = 0.0;  // training-time swap of utterance tokens for their hash bucket
};

// Hierarchical encoder: an inner recurrent encoder per user utterance, an
// outer one over the past utterances, a recurrent encoder over past action
// embeddings, and a small network per entity mention. The context vector is
//   [current utterance | past utterances | past actions | mean mention |
//    types present in context | types present in the current turn].
class ContextEncoder {
 public:
  struct Run {
    std::vector<std::size_t> items;  // what each step consumed (turn or event)
    nn::Lstm::Cache cache;
    std::vector<nn::Vec> dh;
  };
  struct PointCache {
    std::size_t turn = 0, utt_run = 0, act_run = 0;
    std::ptrdiff_t utt_pos = -1, act_pos = -1;
    std::vector<nn::Vec> features, pre;  // per real mention
  };
  // One forward pass over a set of prefixes of a dialogue.
  struct Pass {
    const DialogueIndex* index = nullptr;
    std::vector<std::size_t> points;
    std::vector<nn::Vec> ctx;                            // per point
    std::vector<std::vector<std::size_t>> mention_ids;  // per point (global indices)
    std::vector<std::vector<nn::Vec>> mentions;          // per point, optional token last
    std::vector<nn::Vec> d_ctx;                          // filled by the caller
    std::vector<std::vector<nn::Vec>> d_mentions;        // filled by the caller

    std::map<std::size_t, nn::Lstm::Cache> inner;        // per turn
    std::map<std::size_t, nn::Vec> inner_dfinal;
    std::map<std::size_t, std::vector<std::size_t>> token_ids;
    std::vector<std::vector<std::size_t>> mention_token_ids;
    std::map<std::size_t, Run> outer, acts;              // keyed by window start
    std::vector<PointCache> cache;
  };

  ContextEncoder() = default;
  ContextEncoder(nn::ParamStore& store, const std::string& name, const Vocabulary& vocab,
                 const dml::DomainSchema& schema, EncoderConfig cfg);

  std::size_t context_dim() const { return 4 * cfg_.hidden + 2 * types_.size(); }
  std::size_t mention_dim() const { return cfg_.hidden; }
  std::size_t feature_dim() const;
  const EncoderConfig& config() const { return cfg_; }
  const nn::Embedding& words() const { return words_; }
  const Vocabulary& vocab() const { return *vocab_; }
  std::size_t type_index(const std::string& type) const { return types_.at(type); }
  std::size_t num_types() const { return types_.size(); }

  std::unique_ptr<Pass> forward(const DialogueIndex& di, const std::vector<std::size_t>& points,
                                std::mt19937_64* dropout_rng = nullptr) const;
  // Uses pass.d_ctx / pass.d_mentions (empty vectors mean zero).
  void backward(Pass& pass) const;

  // Word ids of a token list, with optional training-time dropout.
  std::vector<std::size_t> token_ids(const std::vector<std::string>& tokens, std::mt19937_64* rng) const;

 private:
  void mention_features(const DialogueIndex& di, std::size_t p, const std::vector<std::size_t>& ids,
                        const std::vector<std::vector<std::size_t>>& mtok, std::vector<nn::Vec>& out) const;

  const Vocabulary* vocab_ = nullptr;
  EncoderConfig cfg_;
  std::map<std::string, std::size_t> types_;
  ActionInventory inventory_;
  nn::Embedding words_, action_emb_;
  nn::Lstm inner_, outer_, actions_;
  nn::Linear mention_;
  nn::Param* optional_ = nullptr;
};

}  // namespace convkit::context
