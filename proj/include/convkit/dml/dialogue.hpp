#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "convkit/dml/schema.hpp"

namespace convkit::dml {

inline constexpr int kDmlVersion = 1;

enum class EventKind { UserUtterance, ApiCall, NlgCall, EndTurn, EndDialogue };

std::string_view event_kind_name(EventKind k);

struct EntityAnnotation {
  std::size_t start = 0;  // token index, inclusive
  std::size_t end = 0;    // token index, exclusive
  std::string entity_type;
  std::string variable;
  bool operator==(const EntityAnnotation&) const = default;
};

// Either variable references or literal values; `list` marks a multi-valued
// binding.
struct ArgValue {
  std::vector<std::string> items;
  bool literal = false;
  bool list = false;
  bool operator==(const ArgValue&) const = default;
};

struct Binding {
  std::string arg;
  ArgValue value;
  bool operator==(const Binding&) const = default;
};

struct DialogueEvent {
  EventKind kind = EventKind::EndTurn;
  // UserUtterance
  std::string text;
  std::vector<EntityAnnotation> entities;
  // Optional act labels: user acts for utterances, system acts for NLG calls.
  std::vector<std::string> acts;
  // ApiCall / NlgCall
  std::string name;
  std::vector<Binding> args;
  std::string return_var;
  bool failed = false;

  const Binding* find_arg(std::string_view arg) const;
  // Action name as predicted by the action model.
  std::string action_name() const;
  bool is_agent() const { return kind != EventKind::UserUtterance; }
  bool operator==(const DialogueEvent&) const = default;
};

struct Variable {
  std::string entity_type;
  std::string value;
  bool operator==(const Variable&) const = default;
};

struct AnnotatedDialogue {
  std::string id;
  std::vector<DialogueEvent> events;
  std::map<std::string, Variable> variables;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  bool operator==(const AnnotatedDialogue&) const = default;
};

// A turn: one user utterance and the agent events that answer it. Turn 0
// holds the opening agent events (e.g. the welcome) with no user utterance.
struct TurnSpan {
  std::ptrdiff_t user_event = -1;  // -1 for the opening turn
  std::size_t first_agent = 0;     // index of the first agent event
  std::size_t end = 0;             // one past the last agent event
};

std::vector<TurnSpan> split_turns(const AnnotatedDialogue& d);

// Structural JSON decoding only (no schema checks).
AnnotatedDialogue dialogue_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json dialogue_to_json(const AnnotatedDialogue& d);
nlohmann::ordered_json event_to_json(const DialogueEvent& e);
DialogueEvent event_from_json(const nlohmann::ordered_json& j);

// Parses one dialogue document and checks it against the schema; throws
// DmlError for unknown actions, bad spans, type mismatches and
// use-before-definition (any validation finding).
AnnotatedDialogue parse_dialogue(std::string_view source, const DomainSchema& schema);
// Structural parse only; pair with validate_dialogue to collect findings.
AnnotatedDialogue parse_dialogue_unchecked(std::string_view source);
std::string serialize_dialogue(const AnnotatedDialogue& d);

// JSON Lines corpora (one dialogue per line).
std::vector<AnnotatedDialogue> read_corpus(const std::string& path);
std::vector<AnnotatedDialogue> load_corpus(const std::string& path, const DomainSchema& schema);
void write_corpus(const std::string& path, const std::vector<AnnotatedDialogue>& corpus);

// Values bound to an argument, resolved through the variable table.
std::vector<std::string> resolve_values(const AnnotatedDialogue& d, const ArgValue& v);

// "[ la la land | Movie -> mt1 ]" style rendering for humans.
std::string render_pretty(const AnnotatedDialogue& d);

}  // namespace convkit::dml
