#include "convkit/dml/dialogue.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "convkit/dml/validate.hpp"
#include "convkit/text.hpp"

namespace convkit::dml {

using json = nlohmann::ordered_json;

namespace {

constexpr std::pair<EventKind, std::string_view> kEventNames[] = {
    {EventKind::UserUtterance, "user"},
    {EventKind::ApiCall, "api"},
    {EventKind::NlgCall, "nlg"},
    {EventKind::EndTurn, "end_turn"},
    {EventKind::EndDialogue, "end_dialogue"},
};

EventKind event_kind_from_name(const std::string& s) {
  for (auto [k, n] : kEventNames) {
    if (n == s) return k;
  }
  throw DmlError("unknown event kind '" + s + "'");
}

json arg_value_to_json(const ArgValue& v) {
  if (v.literal) {
    return json{{"literal", v.list ? json(v.items) : json(v.items.empty() ? "" : v.items[0])}};
  }
  if (v.list) {
    json arr = json::array();
    for (const auto& item : v.items) arr.push_back("$" + item);
    return arr;
  }
  return json("$" + (v.items.empty() ? std::string{} : v.items[0]));
}

std::string var_ref(const json& j) {
  if (!j.is_string()) throw DmlError("argument value must be a \"$variable\" string");
  auto s = j.get<std::string>();
  if (s.size() < 2 || s[0] != '$') throw DmlError("variable reference '" + s + "' must start with '$'");
  return s.substr(1);
}

ArgValue arg_value_from_json(const json& j) {
  ArgValue v;
  if (j.is_object()) {
    auto it = j.find("literal");
    if (it == j.end()) throw DmlError("argument object must have a 'literal' key");
    v.literal = true;
    if (it->is_array()) {
      v.list = true;
      for (const auto& e : *it) v.items.push_back(e.get<std::string>());
    } else {
      v.items.push_back(it->get<std::string>());
    }
  } else if (j.is_array()) {
    v.list = true;
    for (const auto& e : j) v.items.push_back(var_ref(e));
  } else {
    v.items.push_back(var_ref(j));
  }
  return v;
}

}  // namespace

std::string_view event_kind_name(EventKind k) {
  for (auto [kind, n] : kEventNames) {
    if (kind == k) return n;
  }
  return "?";
}

const Binding* DialogueEvent::find_arg(std::string_view arg) const {
  for (const auto& b : args) {
    if (b.arg == arg) return &b;
  }
  return nullptr;
}

std::string DialogueEvent::action_name() const {
  switch (kind) {
    case EventKind::EndTurn:
      return std::string(kEndTurn);
    case EventKind::EndDialogue:
      return std::string(kEndDialogue);
    default:
      return name;
  }
}

std::vector<TurnSpan> split_turns(const AnnotatedDialogue& d) {
  std::vector<TurnSpan> turns;
  TurnSpan cur;
  for (std::size_t i = 0; i < d.events.size(); ++i) {
    if (d.events[i].kind == EventKind::UserUtterance) {
      cur.end = i;
      turns.push_back(cur);
      cur = TurnSpan{static_cast<std::ptrdiff_t>(i), i + 1, i + 1};
    }
  }
  cur.end = d.events.size();
  turns.push_back(cur);
  return turns;
}

json event_to_json(const DialogueEvent& e) {
  json j;
  j["kind"] = std::string(event_kind_name(e.kind));
  switch (e.kind) {
    case EventKind::UserUtterance: {
      j["text"] = e.text;
      json ents = json::array();
      for (const auto& a : e.entities) {
        ents.push_back(
            {{"start", a.start}, {"end", a.end}, {"type", a.entity_type}, {"var", a.variable}});
      }
      j["entities"] = std::move(ents);
      if (!e.acts.empty()) j["acts"] = e.acts;
      break;
    }
    case EventKind::ApiCall:
    case EventKind::NlgCall: {
      j["name"] = e.name;
      json args = json::object();
      for (const auto& b : e.args) args[b.arg] = arg_value_to_json(b.value);
      j["args"] = std::move(args);
      if (!e.return_var.empty()) j["return"] = e.return_var;
      if (e.failed) j["failed"] = true;
      if (!e.text.empty()) j["text"] = e.text;
      if (!e.acts.empty()) j["acts"] = e.acts;
      break;
    }
    default:
      break;
  }
  return j;
}

DialogueEvent event_from_json(const json& j) {
  DialogueEvent e;
  e.kind = event_kind_from_name(j.at("kind").get<std::string>());
  if (auto it = j.find("acts"); it != j.end()) e.acts = it->get<std::vector<std::string>>();
  e.text = j.value("text", std::string{});
  switch (e.kind) {
    case EventKind::UserUtterance:
      if (auto it = j.find("entities"); it != j.end()) {
        for (const auto& a : *it) {
          e.entities.push_back({a.at("start").get<std::size_t>(), a.at("end").get<std::size_t>(),
                                a.at("type").get<std::string>(), a.at("var").get<std::string>()});
        }
      }
      break;
    case EventKind::ApiCall:
    case EventKind::NlgCall:
      e.name = j.at("name").get<std::string>();
      if (auto it = j.find("args"); it != j.end()) {
        for (auto a = it->begin(); a != it->end(); ++a) {
          e.args.push_back({a.key(), arg_value_from_json(a.value())});
        }
      }
      e.return_var = j.value("return", std::string{});
      e.failed = j.value("failed", false);
      break;
    default:
      break;
  }
  return e;
}

json dialogue_to_json(const AnnotatedDialogue& d) {
  json j;
  j["dml_version"] = kDmlVersion;
  j["id"] = d.id;
  j["events"] = json::array();
  for (const auto& e : d.events) j["events"].push_back(event_to_json(e));
  json vars = json::object();
  for (const auto& [id, v] : d.variables) vars[id] = {{"type", v.entity_type}, {"value", v.value}};
  j["variables"] = std::move(vars);
  if (!d.meta.empty()) j["meta"] = d.meta;
  return j;
}

AnnotatedDialogue dialogue_from_json(const json& j) {
  if (!j.is_object()) throw DmlError("dialogue must be a JSON object");
  auto version = j.find("dml_version");
  if (version == j.end()) throw DmlError("dialogue is missing 'dml_version'");
  if (*version != kDmlVersion) {
    throw DmlError("unsupported dml_version " + version->dump() + " (expected " +
                   std::to_string(kDmlVersion) + ")");
  }
  AnnotatedDialogue d;
  try {
    d.id = j.value("id", std::string{});
    for (const auto& e : j.at("events")) d.events.push_back(event_from_json(e));
    if (auto it = j.find("variables"); it != j.end()) {
      for (auto v = it->begin(); v != it->end(); ++v) {
        d.variables[v.key()] = {v.value().at("type").get<std::string>(),
                                v.value().at("value").get<std::string>()};
      }
    }
    if (auto it = j.find("meta"); it != j.end()) d.meta = *it;
  } catch (const json::exception& e) {
    throw DmlError(std::string("malformed dialogue: ") + e.what());
  }
  return d;
}

AnnotatedDialogue parse_dialogue_unchecked(std::string_view source) {
  json j;
  try {
    j = json::parse(source.begin(), source.end());
  } catch (const json::parse_error& e) {
    throw DmlError(std::string("syntax error: ") + e.what());
  }
  return dialogue_from_json(j);
}

AnnotatedDialogue parse_dialogue(std::string_view source, const DomainSchema& schema) {
  auto d = parse_dialogue_unchecked(source);
  auto report = validate_dialogue(d, schema);
  if (!report.ok()) {
    const auto& f = report.findings.front();
    std::string where = f.event >= 0 ? "event " + std::to_string(f.event) + ": " : "";
    throw DmlError("dialogue '" + d.id + "': " + where + f.message);
  }
  return d;
}

std::string serialize_dialogue(const AnnotatedDialogue& d) { return dialogue_to_json(d).dump(); }

std::vector<AnnotatedDialogue> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DmlError("cannot open dialogue file '" + path + "'");
  std::vector<AnnotatedDialogue> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_dialogue_unchecked(line));
    } catch (const DmlError& e) {
      throw DmlError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<AnnotatedDialogue> load_corpus(const std::string& path, const DomainSchema& schema) {
  auto corpus = read_corpus(path);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto report = validate_dialogue(corpus[i], schema);
    if (!report.ok()) {
      throw DmlError(path + ": dialogue " + std::to_string(i) + " ('" + corpus[i].id +
                     "'): " + report.str());
    }
  }
  return corpus;
}

void write_corpus(const std::string& path, const std::vector<AnnotatedDialogue>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DmlError("cannot write '" + path + "'");
  for (const auto& d : corpus) out << serialize_dialogue(d) << '\n';
}

std::vector<std::string> resolve_values(const AnnotatedDialogue& d, const ArgValue& v) {
  if (v.literal) return v.items;
  std::vector<std::string> out;
  for (const auto& id : v.items) {
    auto it = d.variables.find(id);
    out.push_back(it == d.variables.end() ? std::string{} : it->second.value);
  }
  return out;
}

std::string render_pretty(const AnnotatedDialogue& d) {
  std::ostringstream os;
  for (const auto& e : d.events) {
    switch (e.kind) {
      case EventKind::UserUtterance: {
        auto toks = text::tokenize(e.text);
        std::vector<std::string> parts;
        std::size_t i = 0;
        auto ents = e.entities;
        std::sort(ents.begin(), ents.end(),
                  [](const auto& a, const auto& b) { return a.start < b.start; });
        for (const auto& a : ents) {
          for (; i < a.start && i < toks.size(); ++i) parts.push_back(toks[i].text);
          std::vector<std::string> span;
          for (; i < a.end && i < toks.size(); ++i) span.push_back(toks[i].text);
          parts.push_back("[ " + text::join(span, " ") + " | " + a.entity_type + " -> " +
                          a.variable + " ]");
        }
        for (; i < toks.size(); ++i) parts.push_back(toks[i].text);
        os << "U: \"" << text::join(parts, " ") << "\"\n";
        break;
      }
      case EventKind::ApiCall:
      case EventKind::NlgCall: {
        os << "A: " << (e.kind == EventKind::ApiCall ? "call: " : "nlg: ") << e.name << "(";
        for (std::size_t k = 0; k < e.args.size(); ++k) {
          if (k) os << ", ";
          const auto& v = e.args[k].value;
          std::vector<std::string> items;
          for (const auto& it : v.items) items.push_back(v.literal ? "\"" + it + "\"" : "$" + it);
          os << e.args[k].arg << "="
             << (v.list ? "[" + text::join(items, ", ") + "]" : text::join(items, ""));
        }
        os << ")";
        if (!e.return_var.empty()) os << " -> " << e.return_var;
        if (e.failed) os << " -> <failure>";
        os << "\n";
        break;
      }
      case EventKind::EndTurn:
        os << "A: <end of turn>\n";
        break;
      case EventKind::EndDialogue:
        os << "A: <end of dialogue>\n";
        break;
    }
  }
  return os.str();
}

}  // namespace convkit::dml
