#include <algorithm>
#include <cctype>

#include "convkit/sim/simulator.hpp"
#include "convkit/text.hpp"

namespace convkit::sim {

using dml::ActKind;
using dml::ActLabel;

namespace {

bool same_values(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!text::same_tokens(a[i], b[i])) return false;
  }
  return true;
}

bool has_correct_template(const dml::DomainSchema& schema, const std::string& type) {
  for (const auto& t : schema.user_templates) {
    for (const auto& a : t.acts) {
      if (a.kind == ActKind::Correct && a.param == type) return true;
    }
  }
  return false;
}

std::string sample_catalog(const dml::DomainSchema& schema, const std::string& type, std::mt19937_64& rng) {
  const auto* t = schema.find_entity_type(type);
  if (!t || t->catalog.empty()) throw SimError("entity type " + type + " has no catalog to sample from");
  return t->catalog[std::uniform_int_distribution<std::size_t>(0, t->catalog.size() - 1)(rng)];
}

DialogueAct act(ActKind k, std::string param = {}) {
  DialogueAct a;
  a.kind = k;
  a.param = std::move(param);
  return a;
}

}  // namespace

std::string fresh_var(const std::string& type, const std::map<std::string, dml::Variable>& vars) {
  std::string prefix;
  for (char c : type) prefix += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (std::size_t n = 1;; ++n) {
    auto id = prefix + std::to_string(n);
    if (!vars.count(id)) return id;
  }
}

// ---------------------------------------------------------------- user

UserAgent::UserAgent(const dml::DomainSchema& schema, const SimConfig& cfg, Goal goal)
    : schema_(schema), cfg_(cfg), goal_(std::move(goal)), returns_(goal_.calls.size()) {}

std::ptrdiff_t UserAgent::pending_revision(const std::string& arg, bool at_confirm) const {
  for (std::size_t i = 0; i < goal_.revisions.size(); ++i) {
    const auto& r = goal_.revisions[i];
    if (r.call == cur_ && r.arg == arg && r.at_confirm == at_confirm && !fired_.count(i)) {
      return static_cast<std::ptrdiff_t>(i);
    }
  }
  return -1;
}

std::vector<std::string> UserAgent::value_of(const GoalArg& a) const {
  if (a.linked_call >= 0) {
    const auto& r = returns_[static_cast<std::size_t>(a.linked_call)];
    return r ? std::vector<std::string>{*r} : a.values;
  }
  for (std::size_t i = 0; i < goal_.revisions.size(); ++i) {
    const auto& r = goal_.revisions[i];
    if (r.call == cur_ && r.arg == a.name && !fired_.count(i)) return r.from;
  }
  return a.values;
}

bool UserAgent::carried_matches(const GoalArg& a) const {
  auto it = said_.find(a.entity_type);
  return it != said_.end() && same_values(it->second, value_of(a));
}

void UserAgent::voice(GoalArg& a, std::vector<DialogueAct>& acts, std::vector<DialogueAct>& tail,
                      std::mt19937_64& rng) {
  auto v = value_of(a);
  if (v.empty()) {
    // Nothing in the goal answers this; make something up and keep it.
    v = {sample_catalog(schema_, a.entity_type, rng)};
    a.values = v;
    a.linked_call = -1;
  }
  auto inf = act(ActKind::Inform, a.entity_type);
  inf.values = v;
  acts.push_back(std::move(inf));
  voiced_.insert(a.name);
  if (auto r = pending_revision(a.name, false); r >= 0) {
    fired_.insert(static_cast<std::size_t>(r));
    ++corrections_;
    auto cor = act(ActKind::Correct, a.entity_type);
    cor.values = goal_.revisions[static_cast<std::size_t>(r)].to;
    tail.push_back(std::move(cor));
  }
}

std::vector<DialogueAct> UserAgent::remember(std::vector<DialogueAct> acts) {
  for (const auto& a : acts) {
    if (a.kind == ActKind::Inform || a.kind == ActKind::Correct) said_[a.param] = a.values;
  }
  return acts;
}

std::vector<DialogueAct> UserAgent::start_call(std::mt19937_64& rng, bool accepted) {
  auto& call = goal_.calls[cur_];
  const auto* api = schema_.find_api(call.api);
  std::vector<DialogueAct> acts{accepted ? act(ActKind::AcceptOffer) : act(ActKind::Request, call.api)};
  std::vector<DialogueAct> tail;
  std::bernoulli_distribution coin(0.5);
  for (auto& a : call.args) {
    const auto* def = api->find_arg(a.name);
    const bool carried = carried_matches(a);
    // The system would silently reuse a stale value of this type.
    const bool forced = !carried && said_.count(a.entity_type);
    bool want = false;
    if (!def->required || forced || pending_revision(a.name, false) >= 0) {
      want = true;
    } else if (a.mention) {
      want = goal_.cooperation != Cooperation::Under;
    } else if (carried) {
      want = false;
    } else if (goal_.cooperation == Cooperation::Over) {
      want = true;
    } else if (goal_.cooperation == Cooperation::Exact) {
      want = coin(rng);
    }
    if (want) voice(a, acts, tail, rng);
  }
  acts.insert(acts.end(), tail.begin(), tail.end());
  return acts;
}

std::vector<DialogueAct> UserAgent::open(std::mt19937_64& rng) {
  if (done()) return remember({act(ActKind::Bye)});
  return remember(start_call(rng, false));
}

void UserAgent::advance() {
  ++cur_;
  while (cur_ < goal_.calls.size() && dropped_.count(cur_)) ++cur_;
  voiced_.clear();
}

void UserAgent::observe_call(const std::string& api, const std::optional<std::string>& ret, bool failed) {
  if (done() || goal_.calls[cur_].api != api) return;
  returns_[cur_] = ret;
  if (ret) {
    if (const auto* def = schema_.find_api(api); def && def->return_type) said_[*def->return_type] = {*ret};
  }
  for (std::size_t j = cur_ + 1; j < goal_.calls.size(); ++j) {
    for (auto& a : goal_.calls[j].args) {
      if (a.linked_call == static_cast<int>(cur_) && ret) a.values = {*ret};
    }
  }
  if (failed) {
    dropped_.insert(cur_);
    // Anything built on a dropped call's result goes too.
    for (std::size_t j = cur_ + 1; j < goal_.calls.size(); ++j) {
      for (const auto& a : goal_.calls[j].args) {
        if (a.linked_call >= 0 && dropped_.count(static_cast<std::size_t>(a.linked_call))) dropped_.insert(j);
      }
    }
  }
  advance();
}

std::vector<DialogueAct> UserAgent::step(const std::vector<DialogueAct>& incoming, std::mt19937_64& rng) {
  const DialogueAct* confirm = nullptr;
  const DialogueAct* offer = nullptr;
  std::vector<const DialogueAct*> requests;
  for (const auto& a : incoming) {
    if (a.kind == ActKind::Confirm) confirm = &a;
    if (a.kind == ActKind::Offer) offer = &a;
    if (a.kind == ActKind::Request) requests.push_back(&a);
  }

  if (confirm && !done() && goal_.calls[cur_].api == confirm->param) {
    auto& call = goal_.calls[cur_];
    for (auto& a : call.args) {
      if (auto r = pending_revision(a.name, true); r >= 0) {
        fired_.insert(static_cast<std::size_t>(r));
        ++corrections_;
        auto cor = act(ActKind::Correct, a.entity_type);
        cor.values = goal_.revisions[static_cast<std::size_t>(r)].to;
        return remember({act(ActKind::Deny), std::move(cor)});
      }
    }
    std::vector<DialogueAct> fixes;
    for (const auto& a : call.args) {
      const std::vector<std::string>* shown = nullptr;
      for (const auto& [name, vals] : confirm->bindings) {
        if (name == a.name) shown = &vals;
      }
      auto want = value_of(a);
      if (shown && same_values(*shown, want)) continue;
      auto fix = act(has_correct_template(schema_, a.entity_type) ? ActKind::Correct : ActKind::Inform,
                     a.entity_type);
      fix.values = want;
      fixes.push_back(std::move(fix));
    }
    if (fixes.empty()) return remember({act(ActKind::Affirm)});
    fixes.insert(fixes.begin(), act(ActKind::Deny));
    return remember(std::move(fixes));
  }

  if (!requests.empty() && !done()) {
    auto& call = goal_.calls[cur_];
    std::vector<DialogueAct> acts, tail;
    for (const auto* r : requests) {
      GoalArg* target = nullptr;
      for (auto& a : call.args) {
        if (a.entity_type == r->param) target = &a;
      }
      if (target) {
        voice(*target, acts, tail, rng);
      } else {
        auto inf = act(ActKind::Inform, r->param);
        inf.values = {sample_catalog(schema_, r->param, rng)};
        acts.push_back(std::move(inf));
      }
    }
    if (goal_.cooperation == Cooperation::Over) {
      for (auto& a : call.args) {
        if (!voiced_.count(a.name) && !carried_matches(a)) voice(a, acts, tail, rng);
      }
    }
    acts.insert(acts.end(), tail.begin(), tail.end());
    return remember(std::move(acts));
  }

  if (offer) {
    if (!done() && goal_.calls[cur_].api == offer->param) return remember(start_call(rng, true));
    std::vector<DialogueAct> acts{act(ActKind::DeclineOffer)};
    if (done()) {
      acts.push_back(act(ActKind::Bye));
    } else {
      auto next = start_call(rng, false);
      acts.insert(acts.end(), next.begin(), next.end());
    }
    return remember(std::move(acts));
  }
  if (done()) return remember({act(ActKind::Bye)});
  return remember(start_call(rng, false));
}

// -------------------------------------------------------------- system

SystemAgent::SystemAgent(const dml::DomainSchema& schema, const SimConfig& cfg,
                         std::map<std::string, std::set<std::string>> offer_candidates)
    : schema_(schema), cfg_(cfg), offer_candidates_(std::move(offer_candidates)) {}

void SystemAgent::bind(Active& a) const {
  a.bound.clear();
  const auto* api = schema_.find_api(a.api);
  for (const auto& def : api->args) {
    if (auto it = call_informs_.find(def.entity_type); it != call_informs_.end()) {
      a.bound[def.name] = it->second;
    } else if (def.required) {
      if (auto m = memory_.find(def.entity_type); m != memory_.end()) a.bound[def.name] = m->second;
    }
  }
}

dml::DialogueEvent SystemAgent::nlg_event(const dml::NlgDef& nlg, const Active* call, const std::string& ret_var,
                                          const std::map<std::string, dml::Variable>& vars,
                                          std::mt19937_64& rng) const {
  dml::DialogueEvent e;
  e.kind = dml::EventKind::NlgCall;
  e.name = nlg.name;
  std::map<std::string, std::vector<std::string>> values;
  for (const auto& def : nlg.args) {
    std::vector<std::string> bound;
    if (!ret_var.empty() && vars.at(ret_var).entity_type == def.entity_type) {
      bound = {ret_var};
    } else if (call) {
      auto it = call->bound.find(def.name);
      if (it != call->bound.end() && vars.at(it->second.front()).entity_type == def.entity_type) {
        bound = it->second;
      } else {
        for (const auto& [arg, vs] : call->bound) {
          if (vars.at(vs.front()).entity_type == def.entity_type) bound = vs;
        }
      }
    }
    if (bound.empty() && def.required) {
      if (auto m = memory_.find(def.entity_type); m != memory_.end()) bound = m->second;
    }
    if (bound.empty()) continue;
    if (!def.multi_valued && bound.size() > 1) bound = {bound.back()};
    dml::ArgValue v;
    v.items = bound;
    v.list = def.multi_valued;
    e.args.push_back({def.name, v});
    auto& out = values[def.name];
    for (const auto& id : bound) out.push_back(vars.at(id).value);
  }
  e.text = render_nlg(nlg, values, rng);
  for (const auto& a : nlg.acts) e.acts.push_back(a.str());
  return e;
}

void SystemAgent::execute(Output& out, std::map<std::string, dml::Variable>& vars, std::mt19937_64& rng) {
  Active call = *active_;
  active_.reset();
  call_informs_.clear();
  const auto* api = schema_.find_api(call.api);
  auto outcome = simulate_api(*api, schema_, cfg_, rng);

  dml::DialogueEvent e;
  e.kind = dml::EventKind::ApiCall;
  e.name = api->name;
  for (const auto& def : api->args) {
    auto it = call.bound.find(def.name);
    if (it == call.bound.end()) continue;
    dml::ArgValue v;
    v.items = it->second;
    v.list = def.multi_valued;
    e.args.push_back({def.name, v});
  }
  if (outcome.failed) {
    e.failed = true;
    ++failures_;
  } else if (api->return_type && outcome.value) {
    e.return_var = fresh_var(*api->return_type, vars);
    vars[e.return_var] = {*api->return_type, *outcome.value};
    memory_[*api->return_type] = {e.return_var};
  }
  out.events.push_back(e);

  ActLabel notify{ActKind::NotifyResult, api->name, outcome.failed};
  if (const auto* nlg = schema_.nlg_for_act(notify)) {
    out.events.push_back(nlg_event(*nlg, &call, e.return_var, vars, rng));
  }
  auto n = act(ActKind::NotifyResult, api->name);
  n.failure = outcome.failed;
  out.acts.push_back(std::move(n));
  if (outcome.failed) return;

  std::bernoulli_distribution offer_coin(cfg_.p_proactive_offer);
  if (!offer_coin(rng)) return;
  std::vector<std::pair<std::string, const dml::NlgDef*>> cands;
  if (auto it = offer_candidates_.find(api->name); it != offer_candidates_.end()) {
    for (const auto& next : it->second) {
      if (next == api->name) continue;
      if (const auto* nlg = schema_.nlg_for_act({ActKind::Offer, next, false})) cands.emplace_back(next, nlg);
    }
  }
  if (cands.empty()) return;
  const auto& [next, nlg] = cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
  out.events.push_back(nlg_event(*nlg, nullptr, {}, vars, rng));
  out.acts.push_back(act(ActKind::Offer, next));
  offered_ = next;
  ++offers_;
}

SystemAgent::Output SystemAgent::step(const std::vector<DialogueAct>& incoming,
                                      std::map<std::string, dml::Variable>& vars, std::mt19937_64& rng) {
  Output out;
  std::map<std::string, std::vector<std::string>> fresh;
  std::optional<std::string> requested;
  bool affirm = false, accept = false, bye = false;
  for (const auto& a : incoming) {
    switch (a.kind) {
      case ActKind::Inform:
      case ActKind::Correct:
        fresh[a.param] = a.vars;
        memory_[a.param] = a.vars;
        break;
      case ActKind::Request:
        if (schema_.find_api(a.param)) requested = a.param;
        break;
      case ActKind::Affirm:
        affirm = true;
        break;
      case ActKind::AcceptOffer:
        accept = true;
        break;
      case ActKind::Bye:
        bye = true;
        break;
      default:
        break;
    }
  }
  auto offered = std::exchange(offered_, std::nullopt);

  auto end_turn = [&] {
    dml::DialogueEvent e;
    e.kind = dml::EventKind::EndTurn;
    out.events.push_back(e);
  };

  if (bye) {
    if (const auto* nlg = schema_.nlg_for_act({ActKind::Bye, {}, false})) {
      out.events.push_back(nlg_event(*nlg, nullptr, {}, vars, rng));
    }
    out.acts.push_back(act(ActKind::Bye));
    dml::DialogueEvent e;
    e.kind = dml::EventKind::EndDialogue;
    out.events.push_back(e);
    out.ended = true;
    return out;
  }

  if (requested) {
    active_ = Active{*requested, {}, false};
    call_informs_ = fresh;
  } else if (accept && offered) {
    active_ = Active{*offered, {}, false};
    call_informs_ = fresh;
  } else if (active_) {
    for (auto& [t, v] : fresh) call_informs_[t] = v;
  }

  if (!active_) {
    if (const auto* nlg = schema_.find_nlg("cannot_handle")) out.events.push_back(nlg_event(*nlg, nullptr, {}, vars, rng));
    end_turn();
    return out;
  }

  if (active_->confirming && affirm && fresh.empty()) {
    execute(out, vars, rng);
    end_turn();
    return out;
  }
  active_->confirming = false;
  bind(*active_);
  const auto* api = schema_.find_api(active_->api);
  for (const auto& def : api->args) {
    if (!def.required || active_->bound.count(def.name)) continue;
    const auto* nlg = schema_.nlg_for_act({ActKind::Request, def.entity_type, false});
    if (!nlg) throw SimError("no NLG response requests " + def.entity_type);
    out.events.push_back(nlg_event(*nlg, nullptr, {}, vars, rng));
    out.acts.push_back(act(ActKind::Request, def.entity_type));
    end_turn();
    return out;
  }
  const auto* confirm_nlg = api->confirm_before_call ? schema_.nlg_for_act({ActKind::Confirm, api->name, false}) : nullptr;
  if (confirm_nlg) {
    active_->confirming = true;
    out.events.push_back(nlg_event(*confirm_nlg, &*active_, {}, vars, rng));
    auto c = act(ActKind::Confirm, api->name);
    for (const auto& [arg, vs] : active_->bound) {
      std::vector<std::string> vals;
      for (const auto& id : vs) vals.push_back(vars.at(id).value);
      c.bindings.emplace_back(arg, vals);
    }
    out.acts.push_back(std::move(c));
  } else {
    execute(out, vars, rng);
  }
  end_turn();
  return out;
}

}  // namespace convkit::sim
