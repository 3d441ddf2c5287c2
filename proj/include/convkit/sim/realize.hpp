#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "convkit/dml/dialogue.hpp"
#include "convkit/dml/schema.hpp"

namespace convkit::sim {

// A semantic message between the simulated agents. `param` is an entity
// type (inform, request, correct) or an action name (confirm, offer,
// notify_result). Inform/correct carry values and the variable ids that
// will name them in the dialogue.
struct DialogueAct {
  dml::ActKind kind = dml::ActKind::Inform;
  std::string param;
  std::vector<std::string> values;
  std::vector<std::string> vars;
  bool failure = false;
  // confirm payload: argument name -> values
  std::vector<std::pair<std::string, std::vector<std::string>>> bindings;

  dml::ActLabel label() const { return {kind, param, failure}; }
  std::string str() const;
};

struct Realization {
  std::string text;
  std::vector<dml::EntityAnnotation> entities;
};

// User-side surface realization. Picks a template whose act multiset equals
// the act list; otherwise composes templates over consecutive chunks of the
// list. With `paraphrase` set, a template's paraphrases are candidates too and
// longer lists may be said without commas.
// Throws dml::DmlError naming an act no template covers.
Realization realize_user(const std::vector<DialogueAct>& acts, const dml::DomainSchema& schema,
                         std::mt19937_64& rng, bool paraphrase);

// Template of `nlg` that only uses bound arguments, preferring the one using
// most of them; ties are broken uniformly.
const std::string* choose_nlg_template(const dml::NlgDef& nlg,
                                       const std::map<std::string, std::vector<std::string>>& values,
                                       std::mt19937_64& rng);
// Substitutes values (lists via say_list) into an NLG template.
std::string render_nlg(const dml::NlgDef& nlg, const std::map<std::string, std::vector<std::string>>& values,
                       std::mt19937_64& rng);

// System-side realization of one act list: each act picks its NLG response
// and renders it with the act's bindings.
std::string realize_system(const std::vector<DialogueAct>& acts, const dml::DomainSchema& schema,
                           std::mt19937_64& rng);

}  // namespace convkit::sim
