#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "convkit/dml/dialogue.hpp"
#include "convkit/dml/schema.hpp"

namespace convkit::dml {

struct Finding {
  std::ptrdiff_t event = -1;  // -1 for dialogue-level findings
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
  std::string str() const;
};

// `allow_open` accepts a dialogue still in progress (no end-of-dialogue yet).
ValidationReport validate_dialogue(const AnnotatedDialogue& d, const DomainSchema& schema, bool allow_open = false);

// Variables visible before an event. `slots` maps an entity type to the most
// recent variable of that type, so a correction shadows the earlier value.
struct Environment {
  std::map<std::string, Variable> variables;
  std::map<std::string, std::string> slots;

  bool operator==(const Environment&) const = default;
};

// env[i] is the environment visible to event i; env[events.size()] is the
// environment after the whole dialogue.
std::vector<Environment> resolve_references(const AnnotatedDialogue& d);

}  // namespace convkit::dml
