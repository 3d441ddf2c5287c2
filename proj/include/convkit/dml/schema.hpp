#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace convkit::dml {

// Raised for malformed or inconsistent schema and dialogue documents.
class DmlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dialogue-act inventory shared by the schema (template act labels) and the
// simulator.
enum class ActKind {
  Inform,
  Request,
  Confirm,
  Affirm,
  Deny,
  Correct,
  Offer,
  AcceptOffer,
  DeclineOffer,
  NotifyResult,
  Bye,
};

std::string_view act_kind_name(ActKind k);
std::optional<ActKind> act_kind_from_name(std::string_view s);
// Acts that carry a slot (entity type) or action name parameter.
bool act_takes_param(ActKind k);

// A dialogue-act label without values, e.g. "inform(Size)",
// "notify_result(GetShowtimes,failure)" or "notify_result(*,failure)".
struct ActLabel {
  ActKind kind = ActKind::Inform;
  std::string param;
  bool failure = false;

  std::string str() const;
  static ActLabel parse(std::string_view s);
  auto operator<=>(const ActLabel&) const = default;
};

struct EntityTypeDef {
  std::string name;
  std::vector<std::string> catalog;
  std::string description;
  bool operator==(const EntityTypeDef&) const = default;
};

struct ArgDef {
  std::string name;
  std::string entity_type;
  bool required = true;
  bool multi_valued = false;
  bool operator==(const ArgDef&) const = default;
};

// Where simulated return values come from: an entity type's catalog, or an
// inline value list.
struct ReturnSampler {
  std::string catalog;
  std::vector<std::string> values;
  bool operator==(const ReturnSampler&) const = default;
};

struct ApiDef {
  std::string name;
  std::vector<ArgDef> args;
  std::optional<std::string> return_type;
  bool confirm_before_call = false;
  ReturnSampler return_sampler;

  const ArgDef* find_arg(std::string_view arg) const;
  bool operator==(const ApiDef&) const = default;
};

struct NlgDef {
  std::string name;
  std::vector<ArgDef> args;
  std::vector<std::string> templates;
  std::vector<ActLabel> acts;

  const ArgDef* find_arg(std::string_view arg) const;
  bool operator==(const NlgDef&) const = default;
};

// User templates name entity types in their placeholders ("$Size").
struct UserTemplateDef {
  std::string text;
  std::vector<ActLabel> acts;
  std::vector<std::string> paraphrases;
  bool operator==(const UserTemplateDef&) const = default;
};

enum class ActionKind { Api, Nlg, EndTurn, EndDialogue };

inline constexpr std::string_view kEndTurn = "<end_turn>";
inline constexpr std::string_view kEndDialogue = "<end_dialogue>";
inline constexpr std::string_view kWelcome = "welcome";

class DomainSchema {
 public:
  std::string name;
  std::vector<EntityTypeDef> entity_types;
  std::vector<ApiDef> apis;
  std::vector<NlgDef> nlg_responses;
  std::vector<UserTemplateDef> user_templates;

  const EntityTypeDef* find_entity_type(std::string_view n) const;
  // Case-insensitive lookup used for user-template placeholders.
  const EntityTypeDef* find_entity_type_folded(std::string_view n) const;
  const ApiDef* find_api(std::string_view n) const;
  const NlgDef* find_nlg(std::string_view n) const;
  std::optional<ActionKind> action_kind(std::string_view n) const;
  const std::vector<ArgDef>* action_args(std::string_view n) const;

  // Prediction targets: APIs, NLG responses, end-of-turn, end-of-dialogue.
  std::vector<std::string> action_names() const;

  // NLG response expressing `label`; `notify_result(X,failure)` falls back
  // to `notify_result(*,failure)`.
  const NlgDef* nlg_for_act(const ActLabel& label) const;
  // Values used when simulating the API's return.
  const std::vector<std::string>& return_values(const ApiDef& api) const;

  // Stable hex fingerprint of the canonical serialization.
  std::string fingerprint() const;

  bool operator==(const DomainSchema& o) const {
    return name == o.name && entity_types == o.entity_types && apis == o.apis &&
           nlg_responses == o.nlg_responses && user_templates == o.user_templates;
  }
};

// Parses and validates a schema document (JSON). Throws DmlError with
// line/column for syntax errors and the offending name for unresolved or
// duplicate identifiers.
DomainSchema parse_domain(std::string_view source);
DomainSchema load_domain(const std::string& path);
std::string serialize_domain(const DomainSchema& schema);

}  // namespace convkit::dml
