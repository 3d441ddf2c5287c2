#include <algorithm>

#include "convkit/context/context.hpp"
#include "convkit/text.hpp"

namespace convkit::context {

std::string_view source_name(Source s) {
  switch (s) {
    case Source::User:
      return "user";
    case Source::Agent:
      return "agent";
    case Source::ApiReturn:
      return "api_return";
    default:
      return "optional";
  }
}

std::vector<EntityMention> DialogueContext::mentions() const {
  std::vector<EntityMention> out = past_entities;
  out.insert(out.end(), current_entities.begin(), current_entities.end());
  EntityMention opt;
  opt.source = Source::Optional;
  opt.position = out.size();
  out.push_back(opt);
  return out;
}

std::vector<std::size_t> DialogueIndex::context_mentions(std::size_t p) const {
  const std::size_t ws = window_start(turn_of_prefix(p));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    if (mentions[i].event >= p) break;
    if (mentions[i].turn >= ws) out.push_back(i);
  }
  return out;
}

DialogueIndex index_dialogue(const dml::AnnotatedDialogue& d, std::size_t window) {
  DialogueIndex di;
  di.dialogue = &d;
  di.window = window;
  di.turn_user_event.push_back(-1);
  di.turn_tokens.emplace_back();
  di.calls_before.push_back(0);
  std::size_t turn = 0;
  for (std::size_t i = 0; i < d.events.size(); ++i) {
    const auto& e = d.events[i];
    if (e.kind == dml::EventKind::UserUtterance) {
      ++turn;
      di.turn_user_event.push_back(static_cast<std::ptrdiff_t>(i));
      di.turn_tokens.push_back(text::fold_tokens(e.text));
      auto ents = e.entities;
      std::sort(ents.begin(), ents.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
      for (const auto& a : ents) {
        EntityMention m;
        auto it = d.variables.find(a.variable);
        if (it != d.variables.end()) {
          m.value = it->second.value;
        } else {
          const auto& toks = di.turn_tokens.back();
          std::vector<std::string> span(toks.begin() + static_cast<std::ptrdiff_t>(a.start),
                                        toks.begin() + static_cast<std::ptrdiff_t>(std::min(a.end, toks.size())));
          m.value = text::join(span, " ");
        }
        m.entity_type = a.entity_type;
        m.source = Source::User;
        m.turn = turn;
        m.variable = a.variable;
        m.event = i;
        m.start = a.start;
        m.end = a.end;
        di.mentions.push_back(std::move(m));
      }
    } else {
      di.agent_events.push_back(i);
    }
    di.event_turn.push_back(turn);
    if (e.kind == dml::EventKind::ApiCall) {
      for (const auto& b : e.args) {
        if (b.value.literal) continue;
        for (const auto& v : b.value.items) di.first_call_use.emplace(v, i);
      }
      if (!e.return_var.empty()) {
        EntityMention m;
        const auto& var = d.variables.at(e.return_var);
        m.value = var.value;
        m.entity_type = var.entity_type;
        m.source = Source::ApiReturn;
        m.turn = turn;
        m.variable = e.return_var;
        m.event = i;
        di.mentions.push_back(std::move(m));
      }
    } else if (e.kind == dml::EventKind::NlgCall) {
      for (const auto& b : e.args) {
        if (b.value.literal) continue;
        for (const auto& v : b.value.items) di.first_nlg_use.emplace(v, i);
      }
    }
    di.calls_before.push_back(di.calls_before.back() + (e.kind == dml::EventKind::ApiCall ? 1 : 0));
  }
  return di;
}

DialogueContext extract_features(const dml::AnnotatedDialogue& d, std::size_t prefix_len, std::size_t window) {
  if (prefix_len > d.events.size()) prefix_len = d.events.size();
  auto di = index_dialogue(d, window);
  DialogueContext ctx;
  const std::size_t t = di.turn_of_prefix(prefix_len);
  const std::size_t ws = di.window_start(t);
  if (t >= 1) ctx.current_user_utterance = di.turn_tokens[t];
  for (std::size_t u = std::max<std::size_t>(1, ws); u < t; ++u) ctx.past_user_utterances.push_back(di.turn_tokens[u]);
  for (auto e : di.agent_events) {
    if (e >= prefix_len) break;
    if (di.event_turn[e] >= ws) ctx.past_actions.push_back(d.events[e].action_name());
  }
  std::size_t pos = 0;
  for (auto i : di.context_mentions(prefix_len)) {
    auto m = di.mentions[i];
    m.position = pos++;
    (m.turn < t ? ctx.past_entities : ctx.current_entities).push_back(std::move(m));
  }
  for (std::size_t i = 0; i < prefix_len; ++i) {
    const auto& e = d.events[i];
    if (e.kind == dml::EventKind::ApiCall && !e.return_var.empty()) ctx.api_returns[e.return_var] = d.variables.at(e.return_var);
  }
  ctx.optional_token_position = pos;
  return ctx;
}

ActionInventory::ActionInventory(const dml::DomainSchema& schema) : actions(schema.action_names()) {
  for (std::size_t i = 0; i < actions.size(); ++i) index[actions[i]] = i;
}

std::size_t ActionInventory::input_id(const dml::DialogueEvent& e) const {
  auto it = index.find(e.action_name());
  if (it == index.end()) throw dml::DmlError("unknown action '" + e.action_name() + "'");
  return it->second + (e.failed ? actions.size() : 0);
}

}  // namespace convkit::context
