#include "convkit/dml/validate.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "convkit/text.hpp"

namespace convkit::dml {

std::string ValidationReport::str() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < findings.size(); ++i) {
    if (i) os << "; ";
    if (findings[i].event >= 0) os << "event " << findings[i].event << ": ";
    os << findings[i].message;
  }
  return os.str();
}

namespace {

class Validator {
 public:
  Validator(const AnnotatedDialogue& d, const DomainSchema& s, bool open) : d_(d), s_(s), open_(open) {}

  ValidationReport run() {
    if (d_.events.empty()) add(-1, "dialogue has no events");
    for (std::size_t i = 0; i < d_.events.size(); ++i) {
      const auto& e = d_.events[i];
      auto idx = static_cast<std::ptrdiff_t>(i);
      if (ended_) add(idx, "event after the end of the dialogue");
      switch (e.kind) {
        case EventKind::UserUtterance:
          user(idx, e);
          break;
        case EventKind::ApiCall:
        case EventKind::NlgCall:
          call(idx, e);
          break;
        case EventKind::EndTurn:
        case EventKind::EndDialogue:
          if (!seen_user_) add(idx, "end marker before the first user utterance");
          else if (!phase_open_) add(idx, "end marker outside an agent phase");
          phase_open_ = false;
          if (e.kind == EventKind::EndDialogue) ended_ = true;
          break;
      }
    }
    if (!d_.events.empty() && !ended_ && !open_) add(-1, "dialogue does not end with an end-of-dialogue event");
    for (const auto& [id, v] : d_.variables) {
      if (!defined_.count(id)) add(-1, "variable '" + id + "' is declared but never defined");
    }
    return std::move(report_);
  }

 private:
  void add(std::ptrdiff_t ev, std::string msg) { report_.findings.push_back({ev, std::move(msg)}); }

  void user(std::ptrdiff_t idx, const DialogueEvent& e) {
    if (seen_user_ && phase_open_) add(idx, "user utterance before the agent ended its turn");
    seen_user_ = true;
    phase_open_ = true;
    auto toks = text::tokenize(e.text);
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& a : e.entities) {
      if (a.start >= a.end || a.end > toks.size()) {
        add(idx, "span out of bounds [" + std::to_string(a.start) + "," + std::to_string(a.end) +
                     ") for " + std::to_string(toks.size()) + " tokens");
        continue;
      }
      spans.emplace_back(a.start, a.end);
      if (!s_.find_entity_type(a.entity_type)) {
        add(idx, "unknown entity type '" + a.entity_type + "'");
        continue;
      }
      if (a.variable.empty()) {
        add(idx, "annotation without a variable");
        continue;
      }
      std::vector<std::string> span;
      for (std::size_t k = a.start; k < a.end; ++k) span.push_back(toks[k].text);
      const std::string span_text = text::join(span, " ");

      const Variable* var = nullptr;
      if (auto it = defined_.find(a.variable); it != defined_.end()) {
        var = &it->second;
      } else if (auto dv = d_.variables.find(a.variable); dv != d_.variables.end()) {
        var = &dv->second;
        defined_[a.variable] = dv->second;
      } else {
        add(idx, "variable '" + a.variable + "' is not declared");
        continue;
      }
      if (var->entity_type != a.entity_type) {
        add(idx, "type mismatch: span typed " + a.entity_type + " bound to variable '" +
                     a.variable + "' of type " + var->entity_type);
      }
      if (!text::same_tokens(span_text, var->value)) {
        add(idx, "span text '" + span_text + "' does not match value of '" + a.variable + "'");
      }
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t k = 1; k < spans.size(); ++k) {
      if (spans[k].first < spans[k - 1].second) add(idx, "overlapping entity spans");
    }
  }

  void call(std::ptrdiff_t idx, const DialogueEvent& e) {
    if (seen_user_ && !phase_open_) add(idx, "agent action outside an agent phase");
    const std::vector<ArgDef>* args = nullptr;
    const ApiDef* api = nullptr;
    if (e.kind == EventKind::ApiCall) {
      api = s_.find_api(e.name);
      if (api) args = &api->args;
    } else if (const auto* nlg = s_.find_nlg(e.name)) {
      args = &nlg->args;
    }
    if (!args) {
      add(idx, "unknown action '" + e.name + "'");
      return;
    }
    std::set<std::string> seen;
    for (const auto& b : e.args) {
      const ArgDef* def = nullptr;
      for (const auto& a : *args) {
        if (a.name == b.arg) def = &a;
      }
      if (!def) {
        add(idx, "unknown argument '" + b.arg + "' of " + e.name);
        continue;
      }
      if (!seen.insert(b.arg).second) add(idx, "duplicate argument '" + b.arg + "'");
      if (b.value.items.empty()) {
        add(idx, "empty binding for argument '" + b.arg + "'");
        continue;
      }
      if (b.value.list != def->multi_valued) {
        add(idx, def->multi_valued ? "multi-valued argument '" + b.arg + "' must be bound to a list"
                                   : "list bound to single-valued argument '" + b.arg + "'");
      }
      if (!b.value.list && b.value.items.size() != 1) {
        add(idx, "argument '" + b.arg + "' must have exactly one value");
      }
      if (b.value.literal) continue;
      for (const auto& v : b.value.items) {
        auto it = defined_.find(v);
        if (it == defined_.end()) {
          add(idx, "use before definition of variable '" + v + "'");
        } else if (it->second.entity_type != def->entity_type) {
          add(idx, "type mismatch: argument '" + b.arg + "' of " + e.name + " expects " +
                       def->entity_type + ", got " + it->second.entity_type);
        }
      }
    }
    for (const auto& a : *args) {
      if (a.required && !seen.count(a.name)) {
        add(idx, "missing required argument '" + a.name + "' of " + e.name);
      }
    }
    if (e.kind == EventKind::NlgCall) {
      if (!e.return_var.empty() || e.failed) add(idx, "NLG response cannot return a value");
      return;
    }
    if (!api->return_type) {
      if (!e.return_var.empty()) add(idx, "API " + e.name + " has no return type");
      return;
    }
    if (e.failed) {
      if (!e.return_var.empty()) add(idx, "failed API call cannot bind a return variable");
      return;
    }
    if (e.return_var.empty()) {
      add(idx, "missing return variable for " + e.name);
      return;
    }
    if (defined_.count(e.return_var)) {
      add(idx, "variable '" + e.return_var + "' redefined");
      return;
    }
    auto dv = d_.variables.find(e.return_var);
    if (dv == d_.variables.end()) {
      add(idx, "variable '" + e.return_var + "' is not declared");
      return;
    }
    if (dv->second.entity_type != *api->return_type) {
      add(idx, "type mismatch: return of " + e.name + " is " + *api->return_type +
                   ", variable '" + e.return_var + "' is " + dv->second.entity_type);
    }
    defined_[e.return_var] = dv->second;
  }

  const AnnotatedDialogue& d_;
  const DomainSchema& s_;
  bool open_ = false;
  ValidationReport report_;
  std::map<std::string, Variable> defined_;
  bool seen_user_ = false;
  bool phase_open_ = false;
  bool ended_ = false;
};

}  // namespace

ValidationReport validate_dialogue(const AnnotatedDialogue& d, const DomainSchema& schema, bool allow_open) {
  return Validator(d, schema, allow_open).run();
}

std::vector<Environment> resolve_references(const AnnotatedDialogue& d) {
  std::vector<Environment> envs;
  envs.reserve(d.events.size() + 1);
  Environment env;
  envs.push_back(env);
  for (const auto& e : d.events) {
    auto define = [&](const std::string& id) {
      auto it = d.variables.find(id);
      if (it == d.variables.end()) return;
      env.variables[id] = it->second;
      env.slots[it->second.entity_type] = id;
    };
    if (e.kind == EventKind::UserUtterance) {
      for (const auto& a : e.entities) define(a.variable);
    } else if (e.kind == EventKind::ApiCall && !e.return_var.empty()) {
      define(e.return_var);
    }
    envs.push_back(env);
  }
  return envs;
}

}  // namespace convkit::dml
