#include "convkit/sim/simulator.hpp"

#include <algorithm>
#include <numeric>

#include "convkit/dml/validate.hpp"
#include "convkit/text.hpp"

namespace convkit::sim {

using dml::ActKind;
using json = nlohmann::ordered_json;

namespace {

template <typename T>
std::size_t uniform_index(const std::vector<T>& v, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng);
}

bool has_correct_template(const dml::DomainSchema& schema, const std::string& type) {
  for (const auto& t : schema.user_templates) {
    for (const auto& a : t.acts) {
      if (a.kind == ActKind::Correct && a.param == type) return true;
    }
  }
  return false;
}

// Assigns variable ids to the values a user act list introduces.
void assign_vars(std::vector<DialogueAct>& acts, std::map<std::string, dml::Variable>& vars) {
  for (auto& a : acts) {
    if (a.kind != ActKind::Inform && a.kind != ActKind::Correct) continue;
    a.vars.clear();
    for (const auto& v : a.values) {
      auto id = fresh_var(a.param, vars);
      vars[id] = {a.param, v};
      a.vars.push_back(id);
    }
  }
}

dml::DialogueEvent user_event(const std::vector<DialogueAct>& acts, const Realization& r) {
  dml::DialogueEvent e;
  e.kind = dml::EventKind::UserUtterance;
  e.text = r.text;
  e.entities = r.entities;
  for (const auto& a : acts) e.acts.push_back(a.label().str());
  return e;
}

}  // namespace

json GenerationStats::to_json() const {
  json j;
  j["dialogues"] = dialogues;
  j["corrections"] = corrections;
  j["offers"] = offers;
  j["api_failures"] = api_failures;
  j["discards"] = discards;
  j["cooperation"] = cooperation;
  return j;
}

std::mt19937_64 dialogue_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt) {
  auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x); };
  auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(index), hi(index), lo(attempt), hi(attempt)};
  return std::mt19937_64(seq);
}

Simulator::Simulator(const dml::DomainSchema& schema, std::vector<dml::AnnotatedDialogue> seeds, SimConfig cfg)
    : schema_(schema), seeds_(std::move(seeds)), cfg_(std::move(cfg)) {
  cfg_.check();
  if (seeds_.empty()) throw SimError("at least one seed dialogue is required");
  for (const auto& s : seeds_) {
    auto report = dml::validate_dialogue(s, schema_);
    if (!report.ok()) throw SimError("seed '" + s.id + "' is invalid: " + report.str());
    skeletons_.push_back(extract_skeleton(s, schema_));
    // Successor APIs: the next call in the seed, and anything offered after a call.
    std::string last;
    for (const auto& e : s.events) {
      if (e.kind == dml::EventKind::ApiCall) {
        if (!last.empty()) offers_[last].insert(e.name);
        last = e.name;
      } else if (e.kind == dml::EventKind::NlgCall && !last.empty()) {
        if (const auto* nlg = schema_.find_nlg(e.name)) {
          for (const auto& a : nlg->acts) {
            if (a.kind == ActKind::Offer) offers_[last].insert(a.param);
          }
        }
      }
    }
  }
  if (std::all_of(skeletons_.begin(), skeletons_.end(), [](const Skeleton& s) { return s.calls.empty(); })) {
    throw SimError("no seed dialogue contains an API call");
  }
}

std::vector<std::string> Simulator::sample_values(const std::string& type, std::size_t n,
                                                  std::mt19937_64& rng) const {
  const auto* t = schema_.find_entity_type(type);
  if (!t || t->catalog.empty()) throw SimError("entity type " + type + " has no catalog to sample from");
  std::vector<std::size_t> idx(t->catalog.size());
  std::iota(idx.begin(), idx.end(), 0);
  n = std::min(n, idx.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(idx[i], idx[std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng)]);
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(t->catalog[idx[i]]);
  return out;
}

Goal Simulator::sample_goal(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < skeletons_.size(); ++i) {
    if (!skeletons_[i].calls.empty()) usable.push_back(i);
  }

  // A few tries to land on a goal with a slot that can be revised.
  const bool want_revision = cfg_.p_correction > 0 && u(rng) < cfg_.p_correction;
  Goal goal;
  for (int tries = 0; tries < 50; ++tries) {
    goal = Goal{};
    const std::size_t k = usable[uniform_index(usable, rng)];
    goal.seed_index = k;

    // (skeleton instance, skeleton, call index)
    struct Pick {
      int instance;
      std::size_t sk, call;
    };
    std::vector<Pick> picks;
    {
      const auto n = skeletons_[k].calls.size();
      std::size_t a = 0, b = n - 1;
      if (n > 1 && u(rng) < cfg_.p_subsequence) {
        a = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        b = std::uniform_int_distribution<std::size_t>(a, n - 1)(rng);
      }
      for (std::size_t c = a; c <= b; ++c) picks.push_back({0, k, c});
    }
    if (u(rng) < cfg_.p_concatenate) {
      const std::size_t k2 = usable[uniform_index(usable, rng)];
      for (std::size_t c = 0; c < skeletons_[k2].calls.size(); ++c) picks.push_back({1, k2, c});
    }

    double r = u(rng);
    goal.cooperation = r < cfg_.p_over_cooperative ? Cooperation::Over
                       : u(rng) < cfg_.p_under_cooperative ? Cooperation::Under
                                                           : Cooperation::Exact;

    std::map<std::string, std::vector<std::string>> group_values;
    std::vector<std::vector<std::string>> group_of;  // per goal call, per arg
    for (std::size_t gi = 0; gi < picks.size(); ++gi) {
      const auto& p = picks[gi];
      const auto& sc = skeletons_[p.sk].calls[p.call];
      const auto* api = schema_.find_api(sc.api);
      GoalCall call{sc.api, {}};
      std::vector<std::string> groups;
      for (const auto& def : api->args) {
        const Skeleton::Arg* sa = nullptr;
        for (const auto& x : sc.args) {
          if (x.name == def.name) sa = &x;
        }
        if (!def.required) {
          if (goal.cooperation == Cooperation::Under) continue;
          if (!sa && goal.cooperation != Cooperation::Over) continue;
        }
        GoalArg a{def.name, def.entity_type, {}, -1, false};
        std::string group;
        if (sa && sa->linked_call >= 0) {
          // Position of the linked call among the picks, if it was kept.
          for (std::size_t j = 0; j < gi; ++j) {
            if (picks[j].instance == p.instance && picks[j].sk == p.sk &&
                picks[j].call == static_cast<std::size_t>(sa->linked_call)) {
              a.linked_call = static_cast<int>(j);
              a.mention = sa->mention;
            }
          }
          if (a.linked_call < 0) group = std::to_string(p.instance) + ":ret" + std::to_string(sa->linked_call);
        } else if (sa && !def.multi_valued && !sa->vars.empty()) {
          group = std::to_string(p.instance) + ":" + sa->vars.front();
        }
        if (a.linked_call < 0) {
          if (def.multi_valued) {
            const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
            a.values = sample_values(def.entity_type, n, rng);
          } else if (!group.empty()) {
            auto it = group_values.find(group);
            if (it == group_values.end()) it = group_values.emplace(group, sample_values(def.entity_type, 1, rng)).first;
            a.values = it->second;
          } else {
            a.values = sample_values(def.entity_type, 1, rng);
          }
        }
        groups.push_back(group);
        call.args.push_back(std::move(a));
      }
      goal.calls.push_back(std::move(call));
      group_of.push_back(std::move(groups));
    }

    if (!want_revision) return goal;

    std::vector<std::pair<std::size_t, std::size_t>> eligible;
    for (std::size_t c = 0; c < goal.calls.size(); ++c) {
      const auto* api = schema_.find_api(goal.calls[c].api);
      for (std::size_t ai = 0; ai < goal.calls[c].args.size(); ++ai) {
        const auto& a = goal.calls[c].args[ai];
        const auto* def = api->find_arg(a.name);
        const auto* t = schema_.find_entity_type(a.entity_type);
        if (def->multi_valued || a.linked_call >= 0 || !t || t->catalog.size() < 2) continue;
        if (!has_correct_template(schema_, a.entity_type)) continue;
        eligible.emplace_back(c, ai);
      }
    }
    if (eligible.empty()) continue;
    auto [c, ai] = eligible[uniform_index(eligible, rng)];
    auto& a = goal.calls[c].args[ai];
    Revision rev;
    rev.call = c;
    rev.arg = a.name;
    rev.from = a.values;
    std::vector<std::string> to;
    do {
      to = sample_values(a.entity_type, 1, rng);
    } while (text::same_tokens(to.front(), rev.from.front()));
    rev.to = to;
    rev.at_confirm = schema_.find_api(goal.calls[c].api)->confirm_before_call;
    // Later calls sharing the revised value follow it.
    const auto group = group_of[c][ai];
    for (std::size_t j = c; j < goal.calls.size(); ++j) {
      for (std::size_t aj = 0; aj < goal.calls[j].args.size(); ++aj) {
        if ((j == c && aj == ai) || (!group.empty() && group_of[j][aj] == group)) goal.calls[j].args[aj].values = to;
      }
    }
    goal.revisions.push_back(std::move(rev));
    return goal;
  }
  return goal;  // no revisable slot in reach; keep the last goal as is
}

dml::AnnotatedDialogue Simulator::self_play(const Goal& goal, std::mt19937_64& rng) const {
  dml::AnnotatedDialogue d;
  if (const auto* w = schema_.find_nlg(dml::kWelcome)) {
    dml::DialogueEvent e;
    e.kind = dml::EventKind::NlgCall;
    e.name = w->name;
    e.text = render_nlg(*w, {}, rng);
    d.events.push_back(e);
  }
  UserAgent user(schema_, cfg_, goal);
  SystemAgent system(schema_, cfg_, offers_);
  auto acts = user.open(rng);
  for (std::size_t turn = 0;; ++turn) {
    if (turn >= cfg_.max_turns) throw SimError("dialogue exceeded " + std::to_string(cfg_.max_turns) + " turns");
    assign_vars(acts, d.variables);
    auto real = realize_user(acts, schema_, rng, true);
    d.events.push_back(user_event(acts, real));
    auto out = system.step(acts, d.variables, rng);
    d.events.insert(d.events.end(), out.events.begin(), out.events.end());
    if (out.ended) break;
    for (const auto& e : out.events) {
      if (e.kind != dml::EventKind::ApiCall) continue;
      std::optional<std::string> ret;
      if (!e.return_var.empty()) ret = d.variables.at(e.return_var).value;
      user.observe_call(e.name, ret, e.failed);
    }
    acts = user.step(out.acts, rng);
  }

  auto gj = user.goal().to_json();
  json dropped = json::array();
  for (auto i : user.dropped()) dropped.push_back(i);
  gj["dropped"] = dropped;
  d.meta["mode"] = "full";
  d.meta["seed_index"] = goal.seed_index;
  d.meta["cooperation"] = std::string(cooperation_name(goal.cooperation));
  d.meta["goal"] = gj;
  d.meta["corrected"] = user.corrections() > 0;
  d.meta["offers"] = system.offers();
  d.meta["api_failures"] = system.failures();
  return d;
}

dml::AnnotatedDialogue Simulator::base_resample(std::size_t seed_index, std::mt19937_64& rng) const {
  dml::AnnotatedDialogue d = seeds_[seed_index];

  // Variables that denote the same entity keep sharing a value.
  std::map<std::string, std::string> return_api;
  for (const auto& e : d.events) {
    if (e.kind == dml::EventKind::ApiCall && !e.return_var.empty()) return_api[e.return_var] = e.name;
  }
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> groups;
  for (const auto& [id, v] : d.variables) groups[{v.entity_type, text::fold(v.value)}].push_back(id);
  std::map<std::string, std::set<std::string>> used;  // type -> values already taken
  for (const auto& [key, ids] : groups) {
    const std::vector<std::string>* pool = nullptr;
    for (const auto& id : ids) {
      if (auto it = return_api.find(id); it != return_api.end()) {
        const auto* api = schema_.find_api(it->second);
        auto ov = cfg_.return_overrides.find(api->name);
        pool = ov != cfg_.return_overrides.end() ? &ov->second : &schema_.return_values(*api);
      }
    }
    if (!pool) {
      const auto* t = schema_.find_entity_type(key.first);
      if (!t) throw SimError("unknown entity type " + key.first);
      pool = &t->catalog;
    }
    if (pool->empty()) throw SimError("nothing to sample for type " + key.first);
    std::vector<std::string> fresh;
    for (const auto& v : *pool) {
      if (!used[key.first].count(text::fold(v))) fresh.push_back(v);
    }
    const auto& from = fresh.empty() ? *pool : fresh;
    const auto value = from[uniform_index(from, rng)];
    used[key.first].insert(text::fold(value));
    for (const auto& id : ids) d.variables[id].value = value;
  }

  for (auto& e : d.events) {
    if (e.kind == dml::EventKind::UserUtterance) {
      if (e.acts.empty() && !e.text.empty()) {
        throw SimError("seed '" + d.id + "' has a user utterance without act labels");
      }
      std::vector<DialogueAct> acts;
      std::map<std::string, std::size_t> per_type;
      for (const auto& s : e.acts) {
        auto l = dml::ActLabel::parse(s);
        if (l.kind == ActKind::Inform || l.kind == ActKind::Correct) ++per_type[l.param];
      }
      std::map<std::string, std::size_t> next;  // type -> next annotation
      std::map<std::string, std::size_t> seen;  // type -> acts of that type so far
      for (const auto& s : e.acts) {
        auto l = dml::ActLabel::parse(s);
        DialogueAct a;
        a.kind = l.kind;
        a.param = l.param;
        a.failure = l.failure;
        if (l.kind == ActKind::Inform || l.kind == ActKind::Correct) {
          const bool last = ++seen[l.param] == per_type[l.param];
          std::size_t k = 0;
          for (const auto& ann : e.entities) {
            if (ann.entity_type != l.param) continue;
            if (k++ < next[l.param]) continue;
            a.vars.push_back(ann.variable);
            a.values.push_back(d.variables.at(ann.variable).value);
            ++next[l.param];
            if (!last) break;
          }
        }
        acts.push_back(std::move(a));
      }
      auto r = realize_user(acts, schema_, rng, false);
      e.text = r.text;
      e.entities = r.entities;
    } else if (e.kind == dml::EventKind::NlgCall) {
      const auto* nlg = schema_.find_nlg(e.name);
      std::map<std::string, std::vector<std::string>> values;
      for (const auto& b : e.args) {
        values[b.arg] = b.value.literal ? b.value.items : dml::resolve_values(d, b.value);
      }
      e.text = render_nlg(*nlg, values, rng);
    }
  }
  d.meta = json::object();
  d.meta["mode"] = "base";
  d.meta["seed_index"] = seed_index;
  return d;
}

dml::AnnotatedDialogue Simulator::simulate_dialogue(std::mt19937_64& rng) const {
  if (cfg_.mode == Mode::Base) {
    return base_resample(uniform_index(seeds_, rng), rng);
  }
  return self_play(sample_goal(rng), rng);
}

Corpus Simulator::generate() const {
  Corpus corpus;
  auto& st = corpus.stats;
  const std::string mode = cfg_.mode == Mode::Full ? "full" : "base";
  for (std::size_t i = 0; i < cfg_.num_dialogues; ++i) {
    std::string last_error;
    bool ok = false;
    for (std::size_t attempt = 0; attempt < cfg_.max_attempts && !ok; ++attempt) {
      auto rng = dialogue_rng(cfg_.seed, i, attempt);
      dml::AnnotatedDialogue d;
      try {
        d = simulate_dialogue(rng);
      } catch (const SimError& e) {
        last_error = e.what();
        ++st.discards;
        continue;
      }
      d.id = "sim-" + mode + "-" + std::to_string(cfg_.seed) + "-" + std::to_string(i);
      d.meta["attempt"] = attempt;
      auto report = dml::validate_dialogue(d, schema_);
      if (!report.ok()) {
        throw std::logic_error("simulator produced an invalid dialogue " + d.id + ": " + report.str());
      }
      ++st.dialogues;
      if (d.meta.value("corrected", false)) ++st.corrections;
      st.offers += d.meta.value("offers", std::size_t{0});
      st.api_failures += d.meta.value("api_failures", std::size_t{0});
      if (d.meta.contains("cooperation")) ++st.cooperation[d.meta["cooperation"].get<std::string>()];
      corpus.dialogues.push_back(std::move(d));
      ok = true;
    }
    if (!ok) {
      throw SimError("dialogue " + std::to_string(i) + " could not be generated in " +
                     std::to_string(cfg_.max_attempts) + " attempts: " + last_error);
    }
  }
  return corpus;
}

Goal sample_goal(const std::vector<dml::AnnotatedDialogue>& seeds, const dml::DomainSchema& schema,
                 const SimConfig& cfg, std::mt19937_64& rng) {
  return Simulator(schema, seeds, cfg).sample_goal(rng);
}

dml::AnnotatedDialogue simulate_dialogue(const std::vector<dml::AnnotatedDialogue>& seeds,
                                         const dml::DomainSchema& schema, const SimConfig& cfg,
                                         std::mt19937_64& rng) {
  return Simulator(schema, seeds, cfg).simulate_dialogue(rng);
}

Corpus generate_dataset(const std::vector<dml::AnnotatedDialogue>& seeds, const dml::DomainSchema& schema,
                        const SimConfig& cfg) {
  return Simulator(schema, seeds, cfg).generate();
}

}  // namespace convkit::sim
