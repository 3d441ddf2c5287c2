#include <algorithm>
#include <cmath>

#include "convkit/sim/simulator.hpp"
#include "convkit/text.hpp"

namespace convkit::sim {

using json = nlohmann::ordered_json;

void SimConfig::check() const {
  const std::pair<const char*, double> probs[] = {
      {"p_correction", p_correction},   {"p_over_cooperative", p_over_cooperative},
      {"p_under_cooperative", p_under_cooperative}, {"p_proactive_offer", p_proactive_offer},
      {"p_api_failure", p_api_failure}, {"p_subsequence", p_subsequence},
      {"p_concatenate", p_concatenate},
  };
  for (auto [name, p] : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw SimError(std::string(name) + " must be in [0, 1]");
  }
  if (max_turns == 0) throw SimError("max_turns must be positive");
}

json SimConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["num_dialogues"] = num_dialogues;
  j["mode"] = mode == Mode::Full ? "full" : "base";
  j["p_correction"] = p_correction;
  j["p_over_cooperative"] = p_over_cooperative;
  j["p_under_cooperative"] = p_under_cooperative;
  j["p_proactive_offer"] = p_proactive_offer;
  j["p_api_failure"] = p_api_failure;
  j["p_subsequence"] = p_subsequence;
  j["p_concatenate"] = p_concatenate;
  j["max_turns"] = max_turns;
  if (!return_overrides.empty()) j["return_overrides"] = return_overrides;
  return j;
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  SimConfig c;
  c.seed = j.value("seed", c.seed);
  c.num_dialogues = j.value("num_dialogues", c.num_dialogues);
  auto mode = j.value("mode", std::string("full"));
  if (mode != "full" && mode != "base") throw SimError("mode must be 'full' or 'base'");
  c.mode = mode == "full" ? Mode::Full : Mode::Base;
  c.p_correction = j.value("p_correction", c.p_correction);
  c.p_over_cooperative = j.value("p_over_cooperative", c.p_over_cooperative);
  c.p_under_cooperative = j.value("p_under_cooperative", c.p_under_cooperative);
  c.p_proactive_offer = j.value("p_proactive_offer", c.p_proactive_offer);
  c.p_api_failure = j.value("p_api_failure", c.p_api_failure);
  c.p_subsequence = j.value("p_subsequence", c.p_subsequence);
  c.p_concatenate = j.value("p_concatenate", c.p_concatenate);
  c.max_turns = j.value("max_turns", c.max_turns);
  if (j.contains("return_overrides")) {
    c.return_overrides = j["return_overrides"].get<std::map<std::string, std::vector<std::string>>>();
  }
  c.check();
  return c;
}

std::string_view cooperation_name(Cooperation c) {
  switch (c) {
    case Cooperation::Over:
      return "over";
    case Cooperation::Under:
      return "under";
    default:
      return "exact";
  }
}

GoalArg* GoalCall::find(std::string_view arg) {
  for (auto& a : args) {
    if (a.name == arg) return &a;
  }
  return nullptr;
}

const GoalArg* GoalCall::find(std::string_view arg) const {
  for (const auto& a : args) {
    if (a.name == arg) return &a;
  }
  return nullptr;
}

json Goal::to_json() const {
  json j;
  j["cooperation"] = std::string(cooperation_name(cooperation));
  j["seed_index"] = seed_index;
  j["calls"] = json::array();
  for (const auto& c : calls) {
    json cj;
    cj["api"] = c.api;
    json args = json::object();
    json linked = json::object();
    for (const auto& a : c.args) {
      args[a.name] = a.values;
      if (a.linked_call >= 0) linked[a.name] = a.linked_call;
    }
    cj["args"] = std::move(args);
    if (!linked.empty()) cj["linked"] = std::move(linked);
    j["calls"].push_back(std::move(cj));
  }
  j["revisions"] = json::array();
  for (const auto& r : revisions) {
    j["revisions"].push_back(
        {{"call", r.call}, {"arg", r.arg}, {"from", r.from}, {"to", r.to}, {"at_confirm", r.at_confirm}});
  }
  return j;
}

Skeleton extract_skeleton(const dml::AnnotatedDialogue& seed, const dml::DomainSchema& schema) {
  Skeleton sk;
  std::map<std::string, int> return_of;  // var -> skeleton call index
  for (const auto& e : seed.events) {
    if (e.kind != dml::EventKind::ApiCall) continue;
    const auto* api = schema.find_api(e.name);
    if (!api) throw SimError("seed '" + seed.id + "' calls unknown API " + e.name);
    Skeleton::Call call{e.name, {}};
    for (const auto& def : api->args) {
      const auto* b = e.find_arg(def.name);
      if (!b) continue;
      Skeleton::Arg a{def.name, def.entity_type, {}, {}, -1, false};
      if (b->value.literal) {
        a.seed_values = b->value.items;
      } else {
        for (const auto& v : b->value.items) {
          a.vars.push_back(v);
          a.seed_values.push_back(seed.variables.at(v).value);
          if (auto it = return_of.find(v); it != return_of.end()) a.linked_call = it->second;
        }
        // A user mention that repeats an earlier return value refers to it.
        if (a.linked_call < 0 && a.vars.size() == 1) {
          for (const auto& [rv, idx] : return_of) {
            const auto& var = seed.variables.at(rv);
            if (var.entity_type == def.entity_type && text::same_tokens(var.value, a.seed_values[0])) {
              a.linked_call = idx;
              a.mention = true;
            }
          }
        }
      }
      call.args.push_back(std::move(a));
    }
    if (!e.return_var.empty()) return_of[e.return_var] = static_cast<int>(sk.calls.size());
    sk.calls.push_back(std::move(call));
  }
  return sk;
}

ApiOutcome simulate_api(const dml::ApiDef& api, const dml::DomainSchema& schema, const SimConfig& cfg,
                        std::mt19937_64& rng) {
  ApiOutcome out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (cfg.p_api_failure > 0 && u(rng) < cfg.p_api_failure) {
    out.failed = true;
    return out;
  }
  if (!api.return_type) return out;
  const std::vector<std::string>* values = &schema.return_values(api);
  if (auto it = cfg.return_overrides.find(api.name); it != cfg.return_overrides.end()) values = &it->second;
  if (values->empty()) throw SimError("API " + api.name + " has a return type but no values to sample");
  out.value = (*values)[std::uniform_int_distribution<std::size_t>(0, values->size() - 1)(rng)];
  return out;
}

}  // namespace convkit::sim
