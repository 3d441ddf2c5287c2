#include "convkit/dml/schema.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "convkit/text.hpp"

namespace convkit::dml {

using json = nlohmann::ordered_json;

namespace {

constexpr std::pair<ActKind, std::string_view> kActNames[] = {
    {ActKind::Inform, "inform"},        {ActKind::Request, "request"},
    {ActKind::Confirm, "confirm"},      {ActKind::Affirm, "affirm"},
    {ActKind::Deny, "deny"},            {ActKind::Correct, "correct"},
    {ActKind::Offer, "offer"},          {ActKind::AcceptOffer, "accept_offer"},
    {ActKind::DeclineOffer, "decline_offer"},
    {ActKind::NotifyResult, "notify_result"},
    {ActKind::Bye, "bye"},
};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

// Line/column of a byte offset (1-based).
std::pair<std::size_t, std::size_t> line_col(std::string_view src, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < src.size(); ++i) {
    if (src[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

const json& need(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw DmlError(where + ": missing key '" + key + "'");
  return *it;
}

std::string need_string(const json& j, const char* key, const std::string& where) {
  const auto& v = need(j, key, where);
  if (!v.is_string()) throw DmlError(where + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> string_list(const json& j, const char* key, const std::string& where,
                                     bool required) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) throw DmlError(where + ": missing key '" + key + "'");
    return {};
  }
  if (!it->is_array()) throw DmlError(where + ": '" + key + "' must be a list");
  std::vector<std::string> out;
  for (const auto& e : *it) {
    if (!e.is_string()) throw DmlError(where + ": '" + key + "' entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

bool get_bool(const json& j, const char* key, bool fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw DmlError(std::string("'") + key + "' must be a boolean");
  return it->get<bool>();
}

std::vector<ArgDef> parse_args(const json& j, const std::string& where) {
  std::vector<ArgDef> args;
  auto it = j.find("args");
  if (it == j.end()) return args;
  if (!it->is_array()) throw DmlError(where + ": 'args' must be a list");
  for (const auto& a : *it) {
    ArgDef def;
    def.name = need_string(a, "name", where);
    def.entity_type = need_string(a, "type", where + "." + def.name);
    def.required = get_bool(a, "required", true);
    def.multi_valued = get_bool(a, "multi_valued", false);
    args.push_back(std::move(def));
  }
  return args;
}

json args_to_json(const std::vector<ArgDef>& args) {
  json out = json::array();
  for (const auto& a : args) {
    out.push_back({{"name", a.name},
                   {"type", a.entity_type},
                   {"required", a.required},
                   {"multi_valued", a.multi_valued}});
  }
  return out;
}

std::vector<ActLabel> parse_acts(const json& j, const std::string& where) {
  std::vector<ActLabel> acts;
  for (const auto& s : string_list(j, "acts", where, false)) {
    try {
      acts.push_back(ActLabel::parse(s));
    } catch (const DmlError& e) {
      throw DmlError(where + ": " + e.what());
    }
  }
  return acts;
}

json acts_to_json(const std::vector<ActLabel>& acts) {
  json out = json::array();
  for (const auto& a : acts) out.push_back(a.str());
  return out;
}

void check_unique(std::set<std::string>& seen, const std::string& name, const char* what) {
  if (!seen.insert(name).second) throw DmlError(std::string("duplicate ") + what + " '" + name + "'");
}

void check_arg_types(const DomainSchema& s, const std::string& owner,
                     const std::vector<ArgDef>& args) {
  std::set<std::string> names;
  for (const auto& a : args) {
    check_unique(names, a.name, ("argument of " + owner).c_str());
    if (!s.find_entity_type(a.entity_type)) {
      throw DmlError("unresolved reference: entity type '" + a.entity_type + "' used by " +
                     owner + "." + a.name);
    }
  }
}

void check_act_params(const DomainSchema& s, const std::string& owner,
                      const std::vector<ActLabel>& acts) {
  for (const auto& a : acts) {
    switch (a.kind) {
      case ActKind::Inform:
      case ActKind::Correct:
        if (!s.find_entity_type(a.param)) {
          throw DmlError("unresolved reference: entity type '" + a.param + "' in act of " + owner);
        }
        break;
      case ActKind::Request:
        if (!s.find_entity_type(a.param) && !s.find_api(a.param)) {
          throw DmlError("unresolved reference: '" + a.param + "' in act of " + owner);
        }
        break;
      case ActKind::Confirm:
      case ActKind::Offer:
      case ActKind::NotifyResult:
        if (a.param == "*" && a.kind == ActKind::NotifyResult && a.failure) break;
        if (!s.find_api(a.param)) {
          throw DmlError("unresolved reference: API '" + a.param + "' in act of " + owner);
        }
        break;
      default:
        break;
    }
  }
}

void validate_schema(const DomainSchema& s) {
  std::set<std::string> types, folded, actions;
  for (const auto& t : s.entity_types) {
    check_unique(types, t.name, "entity type");
    check_unique(folded, text::fold(t.name), "entity type (case-insensitive)");
  }
  for (const auto& a : s.apis) check_unique(actions, a.name, "action");
  for (const auto& n : s.nlg_responses) check_unique(actions, n.name, "action");
  if (actions.count(std::string(kEndTurn)) || actions.count(std::string(kEndDialogue))) {
    throw DmlError("reserved action name used in schema");
  }

  for (const auto& a : s.apis) {
    check_arg_types(s, a.name, a.args);
    if (a.return_type && !s.find_entity_type(*a.return_type)) {
      throw DmlError("unresolved reference: return type '" + *a.return_type + "' of " + a.name);
    }
    if (!a.return_sampler.catalog.empty() && !s.find_entity_type(a.return_sampler.catalog)) {
      throw DmlError("unresolved reference: return sampler '" + a.return_sampler.catalog +
                     "' of " + a.name);
    }
  }
  for (const auto& n : s.nlg_responses) {
    check_arg_types(s, n.name, n.args);
    if (n.templates.empty()) throw DmlError("NLG response '" + n.name + "' has no template text");
    for (const auto& t : n.templates) {
      for (const auto& p : text::placeholders(t)) {
        if (p.find('.') != std::string::npos) {
          throw DmlError("NLG response '" + n.name + "': field access '$" + p +
                         "' is unsupported; API returns are single entities");
        }
        if (!n.find_arg(p)) {
          throw DmlError("NLG response '" + n.name + "': placeholder '$" + p +
                         "' does not match an argument");
        }
      }
    }
    check_act_params(s, n.name, n.acts);
  }
  for (const auto& u : s.user_templates) {
    const std::string owner = "user template \"" + u.text + "\"";
    check_act_params(s, owner, u.acts);
    std::set<std::string> slot_types;
    for (const auto& a : u.acts) {
      if (a.kind == ActKind::Inform || a.kind == ActKind::Correct) slot_types.insert(a.param);
    }
    auto check_text = [&](const std::string& textv) {
      std::set<std::string> used;
      for (const auto& p : text::placeholders(textv)) {
        const auto* t = s.find_entity_type_folded(p);
        if (!t) throw DmlError("unresolved reference: placeholder '$" + p + "' in " + owner);
        if (t->catalog.empty()) {
          throw DmlError("entity type '" + t->name + "' is used in " + owner +
                         " but has an empty catalog");
        }
        if (!used.insert(t->name).second) {
          throw DmlError("placeholder type '" + t->name + "' repeated in " + owner);
        }
      }
      if (used != slot_types) {
        throw DmlError(owner + ": placeholders do not match the inform/correct acts");
      }
    };
    check_text(u.text);
    for (const auto& p : u.paraphrases) check_text(p);
  }
}

}  // namespace

std::string_view act_kind_name(ActKind k) {
  for (auto [kind, name] : kActNames) {
    if (kind == k) return name;
  }
  return "?";
}

std::optional<ActKind> act_kind_from_name(std::string_view s) {
  for (auto [kind, name] : kActNames) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

bool act_takes_param(ActKind k) {
  switch (k) {
    case ActKind::Inform:
    case ActKind::Request:
    case ActKind::Confirm:
    case ActKind::Correct:
    case ActKind::Offer:
    case ActKind::NotifyResult:
      return true;
    default:
      return false;
  }
}

std::string ActLabel::str() const {
  std::string out(act_kind_name(kind));
  if (!act_takes_param(kind)) return out;
  out += "(" + param;
  if (failure) out += ",failure";
  return out + ")";
}

ActLabel ActLabel::parse(std::string_view raw) {
  std::string s = trim(raw);
  ActLabel label;
  auto open = s.find('(');
  std::string head = trim(s.substr(0, open));
  auto kind = act_kind_from_name(head);
  if (!kind) throw DmlError("unknown dialogue act '" + s + "'");
  label.kind = *kind;
  if (open == std::string::npos) {
    if (act_takes_param(label.kind)) throw DmlError("dialogue act '" + s + "' needs a parameter");
    return label;
  }
  if (s.back() != ')') throw DmlError("malformed dialogue act '" + s + "'");
  if (!act_takes_param(label.kind)) throw DmlError("dialogue act '" + head + "' takes no parameter");
  std::string inner = s.substr(open + 1, s.size() - open - 2);
  auto comma = inner.find(',');
  label.param = trim(inner.substr(0, comma));
  if (comma != std::string::npos) {
    if (trim(inner.substr(comma + 1)) != "failure" || label.kind != ActKind::NotifyResult) {
      throw DmlError("malformed dialogue act '" + s + "'");
    }
    label.failure = true;
  }
  if (label.param.empty()) throw DmlError("dialogue act '" + s + "' has an empty parameter");
  return label;
}

const ArgDef* ApiDef::find_arg(std::string_view arg) const {
  for (const auto& a : args) {
    if (a.name == arg) return &a;
  }
  return nullptr;
}

const ArgDef* NlgDef::find_arg(std::string_view arg) const {
  for (const auto& a : args) {
    if (a.name == arg) return &a;
  }
  return nullptr;
}

const EntityTypeDef* DomainSchema::find_entity_type(std::string_view n) const {
  for (const auto& t : entity_types) {
    if (t.name == n) return &t;
  }
  return nullptr;
}

const EntityTypeDef* DomainSchema::find_entity_type_folded(std::string_view n) const {
  auto f = text::fold(n);
  for (const auto& t : entity_types) {
    if (text::fold(t.name) == f) return &t;
  }
  return nullptr;
}

const ApiDef* DomainSchema::find_api(std::string_view n) const {
  for (const auto& a : apis) {
    if (a.name == n) return &a;
  }
  return nullptr;
}

const NlgDef* DomainSchema::find_nlg(std::string_view n) const {
  for (const auto& a : nlg_responses) {
    if (a.name == n) return &a;
  }
  return nullptr;
}

std::optional<ActionKind> DomainSchema::action_kind(std::string_view n) const {
  if (n == kEndTurn) return ActionKind::EndTurn;
  if (n == kEndDialogue) return ActionKind::EndDialogue;
  if (find_api(n)) return ActionKind::Api;
  if (find_nlg(n)) return ActionKind::Nlg;
  return std::nullopt;
}

const std::vector<ArgDef>* DomainSchema::action_args(std::string_view n) const {
  if (const auto* a = find_api(n)) return &a->args;
  if (const auto* g = find_nlg(n)) return &g->args;
  return nullptr;
}

std::vector<std::string> DomainSchema::action_names() const {
  std::vector<std::string> out;
  for (const auto& a : apis) out.push_back(a.name);
  for (const auto& n : nlg_responses) out.push_back(n.name);
  out.emplace_back(kEndTurn);
  out.emplace_back(kEndDialogue);
  return out;
}

const NlgDef* DomainSchema::nlg_for_act(const ActLabel& label) const {
  for (const auto& n : nlg_responses) {
    for (const auto& a : n.acts) {
      if (a == label) return &n;
    }
  }
  if (label.kind == ActKind::NotifyResult && label.failure && label.param != "*") {
    ActLabel generic = label;
    generic.param = "*";
    return nlg_for_act(generic);
  }
  return nullptr;
}

const std::vector<std::string>& DomainSchema::return_values(const ApiDef& api) const {
  static const std::vector<std::string> kEmpty;
  if (!api.return_sampler.catalog.empty()) {
    const auto* t = find_entity_type(api.return_sampler.catalog);
    return t ? t->catalog : kEmpty;
  }
  return api.return_sampler.values;
}

std::string DomainSchema::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(text::fnv1a(serialize_domain(*this))));
  return buf;
}

DomainSchema parse_domain(std::string_view source) {
  json j;
  try {
    j = json::parse(source.begin(), source.end());
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col(source, e.byte > 0 ? e.byte - 1 : 0);
    throw DmlError("syntax error at line " + std::to_string(line) + ", column " +
                   std::to_string(col) + ": " + e.what());
  }
  if (!j.is_object()) throw DmlError("schema document must be a JSON object");

  DomainSchema s;
  s.name = j.value("name", std::string{});
  try {
    for (const auto& t : need(j, "entity_types", "schema")) {
      EntityTypeDef def;
      def.name = need_string(t, "name", "entity type");
      def.catalog = string_list(t, "catalog", "entity type " + def.name, false);
      def.description = t.value("description", std::string{});
      s.entity_types.push_back(std::move(def));
    }
    for (const auto& a : need(j, "apis", "schema")) {
      ApiDef def;
      def.name = need_string(a, "name", "api");
      const std::string where = "api " + def.name;
      def.args = parse_args(a, where);
      if (auto it = a.find("return_type"); it != a.end() && !it->is_null()) {
        def.return_type = it->get<std::string>();
      }
      def.confirm_before_call = get_bool(a, "confirm_before_call", false);
      if (auto it = a.find("return_sampler"); it != a.end() && !it->is_null()) {
        if (it->is_string()) {
          def.return_sampler.catalog = it->get<std::string>();
        } else if (it->is_object()) {
          def.return_sampler.values = string_list(*it, "values", where + ".return_sampler", true);
        } else {
          throw DmlError(where + ": return_sampler must be a type name or {\"values\": [...]}");
        }
      } else if (def.return_type) {
        def.return_sampler.catalog = *def.return_type;
      }
      s.apis.push_back(std::move(def));
    }
    for (const auto& n : need(j, "nlg_responses", "schema")) {
      NlgDef def;
      def.name = need_string(n, "name", "nlg response");
      const std::string where = "nlg response " + def.name;
      def.args = parse_args(n, where);
      def.templates = string_list(n, "templates", where, true);
      def.acts = parse_acts(n, where);
      s.nlg_responses.push_back(std::move(def));
    }
    if (auto it = j.find("user_templates"); it != j.end()) {
      for (const auto& u : *it) {
        UserTemplateDef def;
        def.text = need_string(u, "text", "user template");
        def.acts = parse_acts(u, "user template \"" + def.text + "\"");
        s.user_templates.push_back(std::move(def));
      }
    }
    if (auto it = j.find("paraphrases"); it != j.end()) {
      for (const auto& p : *it) {
        auto tmpl = need_string(p, "template", "paraphrase");
        auto target = std::find_if(s.user_templates.begin(), s.user_templates.end(),
                                   [&](const UserTemplateDef& u) { return u.text == tmpl; });
        if (target == s.user_templates.end()) {
          throw DmlError("unresolved reference: paraphrase of unknown user template \"" + tmpl +
                         "\"");
        }
        for (auto& alt : string_list(p, "alternatives", "paraphrase", true)) {
          target->paraphrases.push_back(std::move(alt));
        }
      }
    }
  } catch (const json::exception& e) {
    throw DmlError(std::string("malformed schema: ") + e.what());
  }
  validate_schema(s);
  return s;
}

DomainSchema load_domain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DmlError("cannot open schema file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_domain(ss.str());
}

std::string serialize_domain(const DomainSchema& s) {
  json j;
  j["name"] = s.name;
  j["entity_types"] = json::array();
  for (const auto& t : s.entity_types) {
    j["entity_types"].push_back(
        {{"name", t.name}, {"catalog", t.catalog}, {"description", t.description}});
  }
  j["apis"] = json::array();
  for (const auto& a : s.apis) {
    json ja;
    ja["name"] = a.name;
    ja["args"] = args_to_json(a.args);
    ja["return_type"] = a.return_type ? json(*a.return_type) : json(nullptr);
    ja["confirm_before_call"] = a.confirm_before_call;
    if (!a.return_sampler.catalog.empty()) {
      ja["return_sampler"] = a.return_sampler.catalog;
    } else if (!a.return_sampler.values.empty()) {
      ja["return_sampler"] = {{"values", a.return_sampler.values}};
    }
    j["apis"].push_back(std::move(ja));
  }
  j["nlg_responses"] = json::array();
  for (const auto& n : s.nlg_responses) {
    j["nlg_responses"].push_back({{"name", n.name},
                                  {"args", args_to_json(n.args)},
                                  {"templates", n.templates},
                                  {"acts", acts_to_json(n.acts)}});
  }
  j["user_templates"] = json::array();
  j["paraphrases"] = json::array();
  for (const auto& u : s.user_templates) {
    j["user_templates"].push_back({{"text", u.text}, {"acts", acts_to_json(u.acts)}});
    if (!u.paraphrases.empty()) {
      j["paraphrases"].push_back({{"template", u.text}, {"alternatives", u.paraphrases}});
    }
  }
  return j.dump(2) + "\n";
}

}  // namespace convkit::dml
