#include <algorithm>
#include <set>
#include <tuple>

#include "convkit/context/context.hpp"
#include "convkit/eval/eval.hpp"
#include "convkit/text.hpp"

namespace convkit::eval {

namespace {

std::string canon(const std::string& v) { return text::join(text::fold_tokens(v), " "); }

std::vector<std::string> canon_set(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) out.push_back(canon(v));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double ratio(std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }

}  // namespace

double SpanScore::precision() const { return tp + fp ? ratio(tp, tp + fp) : 1.0; }
double SpanScore::recall() const { return tp + fn ? ratio(tp, tp + fn) : 1.0; }
double SpanScore::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

SpanScore& SpanScore::operator+=(const SpanScore& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

nlohmann::ordered_json SpanScore::to_json() const {
  return {{"precision", precision()}, {"recall", recall()}, {"f1", f1()}, {"tp", tp}, {"fp", fp}, {"fn", fn}};
}

SpanScore span_f1(const std::vector<dml::EntityAnnotation>& gold, const std::vector<dml::EntityAnnotation>& predicted,
                  const std::string& only_type) {
  using Key = std::tuple<std::size_t, std::size_t, std::string>;
  auto keys = [&](const std::vector<dml::EntityAnnotation>& v) {
    std::multiset<Key> out;
    for (const auto& a : v) {
      if (only_type.empty() || a.entity_type == only_type) out.insert({a.start, a.end, a.entity_type});
    }
    return out;
  };
  auto g = keys(gold), p = keys(predicted);
  SpanScore s;
  for (const auto& k : p) {
    auto it = g.find(k);
    if (it != g.end()) {
      ++s.tp;
      g.erase(it);
    } else {
      ++s.fp;
    }
  }
  s.fn = g.size();
  return s;
}

StepSignature gold_signature(const dml::AnnotatedDialogue& d, const dml::DialogueEvent& e) {
  StepSignature s;
  s.action = e.action_name();
  for (const auto& b : e.args) s.args[b.arg] = canon_set(dml::resolve_values(d, b.value));
  return s;
}

bool TurnEval::action_correct() const {
  if (gold.size() != predicted.size()) return false;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].action != predicted[i].action) return false;
  }
  return true;
}

bool TurnEval::signature_correct() const { return gold == predicted; }

double AspScore::ap() const { return ratio(action_correct, turns); }
double AspScore::asp() const { return ratio(signature_correct, turns); }

nlohmann::ordered_json AspScore::to_json() const {
  return {{"turns", turns}, {"ap", ap()}, {"asp", asp()}};
}

AspScore asp_accuracy(const std::vector<TurnEval>& evals) {
  AspScore s;
  for (const auto& e : evals) {
    ++s.turns;
    if (e.action_correct()) ++s.action_correct;
    if (e.signature_correct()) ++s.signature_correct;
  }
  return s;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["dialogues"] = dialogues;
  j["ner"] = ner.to_json();
  j["ner_by_type"] = nlohmann::ordered_json::object();
  for (const auto& [t, s] : ner_by_type) j["ner_by_type"][t] = s.to_json();
  j["actions"] = actions.to_json();
  return j;
}

bool mentions_returned_value(const dml::AnnotatedDialogue& d, std::size_t user_event, const dml::DomainSchema& schema,
                             const std::string& type) {
  const auto* def = schema.find_entity_type(type);
  if (!def || user_event >= d.events.size()) return false;
  std::set<std::string> returned;
  for (std::size_t i = 0; i < user_event; ++i) {
    const auto& e = d.events[i];
    if (e.kind != dml::EventKind::ApiCall || e.failed || e.return_var.empty()) continue;
    auto it = d.variables.find(e.return_var);
    if (it != d.variables.end() && it->second.entity_type == type) returned.insert(canon(it->second.value));
  }
  std::set<std::string> catalog;
  for (const auto& v : def->catalog) catalog.insert(canon(v));
  for (const auto& a : d.events[user_event].entities) {
    if (a.entity_type != type) continue;
    auto it = d.variables.find(a.variable);
    if (it == d.variables.end()) continue;
    const auto v = canon(it->second.value);
    if (returned.count(v) && !catalog.count(v)) return true;
  }
  return false;
}

EvalReport evaluate(const models::ModelBundle& bundle, const std::vector<dml::AnnotatedDialogue>& test,
                    const EvalOptions& opts) {
  EvalReport rep;
  const std::size_t W = bundle.config.window;
  std::vector<TurnEval> turns;
  for (const auto& d : test) {
    ++rep.dialogues;
    const auto di = context::index_dialogue(d, W);
    for (std::size_t t = 1; t < di.num_turns(); ++t) {
      const auto u = static_cast<std::size_t>(di.turn_user_event[t]);
      if (opts.filter && !opts.filter(d, u)) continue;
      std::size_t end = u + 1;
      while (end < d.events.size() && d.events[end].kind != dml::EventKind::UserUtterance) ++end;

      TurnEval te;
      te.dialogue = d.id;
      te.turn = t;
      te.gold_entities = d.events[u].entities;
      te.predicted_entities = bundle.ner->tag(di, u);
      rep.ner += span_f1(te.gold_entities, te.predicted_entities);
      for (const auto& type : bundle.ner->types()) {
        rep.ner_by_type[type] += span_f1(te.gold_entities, te.predicted_entities, type);
      }

      if (opts.actions) {
        // Gold history up to the end of the turn, with the tagged entities
        // in place of the gold ones. A tagged span that matches a gold span
        // keeps the gold variable so the gold steps still refer to it.
        dml::AnnotatedDialogue c;
        c.id = d.id;
        c.events.assign(d.events.begin(), d.events.begin() + static_cast<std::ptrdiff_t>(end));
        c.variables = d.variables;
        const auto toks = text::tokenize(d.events[u].text);
        std::vector<dml::EntityAnnotation> ents;
        std::size_t fresh = 0;
        for (auto a : te.predicted_entities) {
          for (const auto& g : te.gold_entities) {
            if (g.start == a.start && g.end == a.end && g.entity_type == a.entity_type) a.variable = g.variable;
          }
          if (a.variable.empty()) {
            do {
              a.variable = "ner" + std::to_string(++fresh);
            } while (c.variables.count(a.variable));
            c.variables[a.variable] = {a.entity_type, d.events[u].text.substr(toks[a.start].begin,
                                                                               toks[a.end - 1].end - toks[a.start].begin)};
          }
          ents.push_back(a);
        }
        c.events[u].entities = ents;
        const auto dc = context::index_dialogue(c, W);
        std::vector<std::size_t> points;
        for (std::size_t e = u + 1; e < end; ++e) points.push_back(e);
        const auto dists = bundle.actions->predict(dc, points);
        std::vector<std::size_t> fill_points;
        std::vector<std::string> fill_actions;
        for (std::size_t k = 0; k < points.size(); ++k) {
          const auto& ev = d.events[points[k]];
          te.gold.push_back(gold_signature(d, ev));
          const auto& dist = dists[k];
          const auto best = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
          StepSignature p;
          p.action = bundle.actions->actions()[best];
          te.predicted.push_back(p);
          const auto* args = bundle.schema->action_args(p.action);
          if (p.action == ev.action_name() && args && !args->empty()) {
            fill_points.push_back(points[k]);
            fill_actions.push_back(p.action);
          }
        }
        const auto sigs = bundle.arguments->fill(dc, fill_points, fill_actions);
        for (std::size_t f = 0; f < sigs.size(); ++f) {
          auto& p = te.predicted[fill_points[f] - u - 1];
          for (const auto& a : sigs[f].args) {
            if (a.unfilled || a.missing) continue;
            std::vector<std::string> vals;
            for (const auto& m : a.mentions) vals.push_back(m.value);
            p.args[a.arg] = canon_set(vals);
          }
        }
      }
      turns.push_back(std::move(te));
    }
  }
  if (opts.actions) rep.actions = asp_accuracy(turns);
  if (opts.keep_turns) rep.turns = std::move(turns);
  return rep;
}

}  // namespace convkit::eval
