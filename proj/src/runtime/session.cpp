#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>

#include "convkit/context/context.hpp"
#include "convkit/runtime/runtime.hpp"
#include "convkit/sim/realize.hpp"
#include "convkit/sim/simulator.hpp"
#include "convkit/text.hpp"

namespace convkit::runtime {

using nlohmann::ordered_json;

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

ordered_json distribution_json(const std::vector<std::string>& names, const nn::Vec& dist) {
  std::vector<std::size_t> order(dist.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return dist[a] > dist[b]; });
  ordered_json j = ordered_json::object();
  for (auto i : order) j[names[i]] = dist[i];
  return j;
}

ordered_json pointer_json(const models::ActionSignature& sig, const context::DialogueContext& ctx) {
  const auto mentions = ctx.mentions();
  ordered_json j = ordered_json::object();
  for (const auto& a : sig.args) {
    ordered_json cand = ordered_json::array();
    for (std::size_t m = 0; m < a.scores.size(); ++m) {
      if (!std::isfinite(a.scores[m])) continue;
      ordered_json c;
      if (m < mentions.size() && mentions[m].source != context::Source::Optional) {
        c["value"] = mentions[m].value;
        c["variable"] = mentions[m].variable;
        c["source"] = std::string(context::source_name(mentions[m].source));
      } else {
        c["value"] = nullptr;
        c["source"] = "optional";
      }
      c["score"] = a.scores[m];
      cand.push_back(c);
    }
    j[a.arg] = {{"candidates", cand}, {"unfilled", a.unfilled}, {"missing", a.missing}};
  }
  return j;
}

}  // namespace

ordered_json ExecutedAction::to_json() const {
  ordered_json j;
  j["action"] = action;
  j["kind"] = std::string(dml::event_kind_name(kind));
  j["args"] = ordered_json::object();
  for (const auto& [k, v] : args) j["args"][k] = v;
  if (!return_var.empty()) j["return_var"] = return_var;
  if (return_value) j["return_value"] = *return_value;
  if (failed) j["failed"] = true;
  if (!text.empty()) j["text"] = text;
  return j;
}

ordered_json TurnResult::to_json(bool with_debug) const {
  ordered_json j;
  j["utterance"] = utterance;
  j["entities"] = ordered_json::array();
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const auto& e = entities[i];
    j["entities"].push_back({{"start", e.start},
                             {"end", e.end},
                             {"type", e.entity_type},
                             {"variable", e.variable},
                             {"value", entity_values[i]}});
  }
  j["executed_actions"] = ordered_json::array();
  for (const auto& a : actions) j["executed_actions"].push_back(a.to_json());
  j["agent_text"] = agent_text;
  j["ended"] = ended;
  if (with_debug) j["debug"] = debug;
  return j;
}

Session::Session(std::string id, std::shared_ptr<const models::ModelBundle> bundle,
                 std::shared_ptr<const ApiExecutor> executor, SessionOptions opts)
    : id_(std::move(id)),
      bundle_(std::move(bundle)),
      executor_(std::move(executor)),
      opts_(std::move(opts)),
      tau_high_(opts_.tau_high.value_or(bundle_->config.tau_high)),
      tau_low_(opts_.tau_low.value_or(bundle_->config.tau_low)),
      cap_(opts_.action_cap.value_or(bundle_->config.action_cap)),
      fallback_(opts_.fallback.value_or(bundle_->config.fallback)),
      rng_(opts_.seed) {
  if (!(0 <= tau_low_ && tau_low_ <= tau_high_ && tau_high_ <= 1)) {
    throw RuntimeError("thresholds need 0 <= tau_low <= tau_high <= 1");
  }
  if (cap_ == 0) throw RuntimeError("action cap must be positive");
  const auto& schema = *bundle_->schema;
  history_.id = id_;
  history_.meta["session"] = id_;
  ordered_json head;
  head["session"] = id_;
  head["dml_version"] = dml::kDmlVersion;
  head["domain"] = schema.name;
  head["schema_fingerprint"] = schema.fingerprint();
  head["seed"] = opts_.seed;
  head["t"] = timestamp();
  log_.push_back(head);
  if (!opts_.log_path.empty()) {
    std::ofstream(opts_.log_path, std::ios::trunc) << head.dump() << '\n';
  }
  if (schema.find_nlg(dml::kWelcome)) {
    ordered_json step;
    welcome_ = emit_nlg(std::string(dml::kWelcome), {}, step).text;
  }
}

void Session::append(dml::DialogueEvent e, const ordered_json& debug) {
  ordered_json rec;
  rec["seq"] = history_.events.size();
  rec["t"] = timestamp();
  rec["event"] = dml::event_to_json(e);
  // Variables this event introduces.
  ordered_json vars = ordered_json::object();
  auto add = [&](const std::string& v) {
    if (v.empty()) return;
    const auto& var = history_.variables.at(v);
    vars[v] = {{"type", var.entity_type}, {"value", var.value}};
  };
  for (const auto& a : e.entities) add(a.variable);
  add(e.return_var);
  if (!vars.empty()) rec["variables"] = vars;
  if (!debug.is_null()) rec["debug"] = debug;
  history_.events.push_back(std::move(e));
  log_.push_back(rec);
  if (!opts_.log_path.empty()) {
    std::ofstream(opts_.log_path, std::ios::app) << rec.dump() << '\n';
  }
}

void Session::continue_log(const std::string& path, std::size_t logged_events) {
  opts_.log_path = path;
  if (path.empty()) return;
  // Events the replay completed past the end of a truncated log.
  std::ofstream out(path, std::ios::app);
  for (std::size_t i = logged_events + 1; i < log_.size(); ++i) out << log_[i].dump() << '\n';
}

void Session::remember(const std::string& type, const std::string& value) {
  auto& vals = dynamic_[type];
  if (std::find(vals.begin(), vals.end(), value) == vals.end()) vals.push_back(value);
}

ExecutedAction Session::emit_end(dml::EventKind kind) {
  dml::DialogueEvent e;
  e.kind = kind;
  ExecutedAction a;
  a.kind = kind;
  a.action = e.action_name();
  append(std::move(e));
  if (kind == dml::EventKind::EndDialogue) ended_ = true;
  return a;
}

ExecutedAction Session::emit_nlg(const std::string& name, const std::vector<dml::Binding>& args,
                                 ordered_json& step) {
  const auto& schema = *bundle_->schema;
  const auto* nlg = schema.find_nlg(name);
  if (!nlg) throw RuntimeError("unknown NLG response '" + name + "'");
  std::map<std::string, std::vector<std::string>> values;
  ExecutedAction a;
  a.kind = dml::EventKind::NlgCall;
  a.action = name;
  for (const auto& b : args) {
    auto v = dml::resolve_values(history_, b.value);
    values[b.arg] = v;
    a.args.emplace_back(b.arg, v);
  }
  try {
    a.text = sim::render_nlg(*nlg, values, rng_);
  } catch (const dml::DmlError& err) {
    // Every template needs an argument the pointer left out.
    if (name == fallback_ || !schema.find_nlg(fallback_)) throw RuntimeError(err.what());
    step["note"] = std::string("no template fits: ") + err.what();
    return emit_nlg(fallback_, {}, step);
  }
  dml::DialogueEvent e;
  e.kind = dml::EventKind::NlgCall;
  e.name = name;
  e.args = args;
  append(std::move(e), step);
  for (const auto& b : args) {
    const auto* def = nlg->find_arg(b.arg);
    for (const auto& v : values[b.arg]) remember(def->entity_type, v);
  }
  return a;
}

ExecutedAction Session::execute(const models::ActionSignature& sig, ordered_json& step) {
  const auto& schema = *bundle_->schema;
  const auto* defs = schema.action_args(sig.action);
  std::vector<dml::Binding> bindings;
  for (const auto& f : sig.args) {
    if (f.unfilled || f.missing) continue;
    const dml::ArgDef* def = nullptr;
    for (const auto& d : *defs) {
      if (d.name == f.arg) def = &d;
    }
    dml::Binding b;
    b.arg = f.arg;
    b.value.list = def && def->multi_valued;
    bool literal = false;
    for (const auto& m : f.mentions) literal = literal || m.variable.empty();
    b.value.literal = literal;
    for (const auto& m : f.mentions) b.value.items.push_back(literal ? m.value : m.variable);
    bindings.push_back(std::move(b));
  }
  if (schema.find_nlg(sig.action)) return emit_nlg(sig.action, bindings, step);

  const auto* api = schema.find_api(sig.action);
  ApiRequest req;
  req.api = api->name;
  req.seed = rng_();
  ExecutedAction a;
  a.kind = dml::EventKind::ApiCall;
  a.action = api->name;
  for (const auto& b : bindings) {
    auto v = dml::resolve_values(history_, b.value);
    req.args[b.arg] = v;
    a.args.emplace_back(b.arg, v);
  }
  auto res = executor_->call(req);
  if (!res.failed && api->return_type && !res.value) {
    res.failed = true;
    res.error = "API '" + api->name + "' returned no value";
  }
  dml::DialogueEvent e;
  e.kind = dml::EventKind::ApiCall;
  e.name = api->name;
  e.args = bindings;
  if (res.failed) {
    e.failed = true;
    a.failed = true;
    step["api_error"] = res.error;
  } else if (api->return_type && res.value) {
    e.return_var = sim::fresh_var(*api->return_type, history_.variables);
    history_.variables[e.return_var] = {*api->return_type, *res.value};
    a.return_var = e.return_var;
    a.return_value = res.value;
    remember(*api->return_type, *res.value);
  }
  append(std::move(e), step);
  return a;
}

TurnResult Session::handle_utterance(const std::string& utterance) {
  if (ended_) throw SessionEnded("session '" + id_ + "' has ended");
  const auto& schema = *bundle_->schema;
  const auto& b = *bundle_;
  TurnResult out;
  out.utterance = utterance;
  out.debug = {{"ner", ordered_json::array()}, {"steps", ordered_json::array()}};

  // User event first, so the tagger sees it in context.
  const std::size_t u = history_.events.size();
  {
    dml::DialogueEvent e;
    e.kind = dml::EventKind::UserUtterance;
    e.text = utterance;
    history_.events.push_back(e);
    const auto di = context::index_dialogue(history_, b.config.window);
    auto spans = b.ner->tag(di, u);
    history_.events.pop_back();
    const auto toks = text::tokenize(utterance);
    for (auto& s : spans) {
      const auto value = utterance.substr(toks[s.start].begin, toks[s.end - 1].end - toks[s.start].begin);
      s.variable = sim::fresh_var(s.entity_type, history_.variables);
      history_.variables[s.variable] = {s.entity_type, value};
      out.entity_values.push_back(value);
      out.debug["ner"].push_back({{"start", s.start}, {"end", s.end}, {"type", s.entity_type}, {"value", value}});
    }
    e.entities = spans;
    out.entities = spans;
    append(std::move(e), {{"ner", out.debug["ner"]}});
  }

  const auto& names = b.actions->actions();
  bool force_no_result = false;
  std::string failed_api;
  for (std::size_t steps = 0;; ++steps) {
    ordered_json step;
    if (steps + 1 >= cap_ && !force_no_result) {
      // Last slot of the turn is reserved for closing it.
      step["note"] = "action cap reached";
      out.actions.push_back(emit_end(dml::EventKind::EndTurn));
      out.debug["steps"].push_back(step);
      break;
    }
    if (force_no_result) {
      force_no_result = false;
      const auto* nr = schema.nlg_for_act({dml::ActKind::NotifyResult, failed_api, true});
      if (nr) {
        step["executed"] = nr->name;
        step["note"] = "after failed call";
        out.actions.push_back(emit_nlg(nr->name, {}, step));
        out.debug["steps"].push_back(step);
        continue;
      }
    }
    const std::size_t p = history_.events.size();
    const auto di = context::index_dialogue(history_, b.config.window);
    const auto dist = b.actions->predict(di, p);
    const auto sel = models::select_action(dist, tau_high_, tau_low_, rng_);
    step["distribution"] = distribution_json(names, dist);
    step["bin"] = std::string(models::bin_name(sel.bin));
    if (!sel.index) {
      step["selected"] = nullptr;
      step["note"] = "no action above the lower threshold";
      if (schema.find_nlg(fallback_)) {
        step["executed"] = fallback_;
        out.actions.push_back(emit_nlg(fallback_, {}, step));
      }
      out.actions.push_back(emit_end(dml::EventKind::EndTurn));
      out.debug["steps"].push_back(step);
      break;
    }
    const auto& name = names[*sel.index];
    step["selected"] = name;
    if (name == dml::kEndTurn || name == dml::kEndDialogue) {
      step["executed"] = name;
      out.actions.push_back(
          emit_end(name == dml::kEndTurn ? dml::EventKind::EndTurn : dml::EventKind::EndDialogue));
      out.debug["steps"].push_back(step);
      break;
    }
    auto sig = b.arguments->fill(di, p, name);
    step["pointers"] = pointer_json(sig, context::extract_features(history_, p, b.config.window));
    if (const auto* miss = sig.missing()) {
      const auto* defs = schema.action_args(name);
      std::string type;
      for (const auto& d : *defs) {
        if (d.name == miss->arg) type = d.entity_type;
      }
      const auto* req = schema.nlg_for_act({dml::ActKind::Request, type, false});
      const std::string say = req ? req->name : fallback_;
      step["note"] = "missing argument " + miss->arg;
      step["executed"] = say;
      if (schema.find_nlg(say)) out.actions.push_back(emit_nlg(say, {}, step));
      out.debug["steps"].push_back(step);
      continue;
    }
    step["executed"] = name;
    auto a = execute(sig, step);
    if (a.kind == dml::EventKind::ApiCall && a.failed) {
      force_no_result = true;
      failed_api = a.action;
    }
    out.actions.push_back(std::move(a));
    out.debug["steps"].push_back(step);
  }

  std::vector<std::string> texts;
  for (const auto& a : out.actions) {
    if (!a.text.empty()) texts.push_back(a.text);
  }
  out.agent_text = text::join(texts, " ");
  out.ended = ended_;
  return out;
}

std::unique_ptr<Session> create_session(const dml::DomainSchema& schema,
                                        std::shared_ptr<const models::ModelBundle> bundle,
                                        std::shared_ptr<const ApiExecutor> executor, std::string id,
                                        SessionOptions opts) {
  if (!bundle || !executor) throw RuntimeError("session needs a model bundle and an API executor");
  if (bundle->schema->fingerprint() != schema.fingerprint()) {
    throw RuntimeError("model bundle was trained for schema " + bundle->schema->fingerprint() +
                       ", runtime schema is " + schema.fingerprint());
  }
  executor->check(schema);
  return std::make_unique<Session>(std::move(id), std::move(bundle), std::move(executor), std::move(opts));
}

std::vector<nlohmann::ordered_json> read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError("cannot open log '" + path + "'");
  std::vector<ordered_json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(ordered_json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw RuntimeError("bad log line in '" + path + "': " + e.what());
    }
  }
  return out;
}

std::unique_ptr<Session> replay_session(const std::vector<nlohmann::ordered_json>& log_lines,
                                        std::shared_ptr<const models::ModelBundle> bundle,
                                        std::shared_ptr<const ApiExecutor> executor, SessionOptions opts,
                                        std::vector<TurnResult>* results) {
  if (log_lines.empty() || !log_lines[0].contains("session")) throw RuntimeError("log has no header");
  const auto& head = log_lines[0];
  opts.seed = head.value("seed", std::uint64_t{1});
  if (head.value("schema_fingerprint", std::string()) != bundle->schema->fingerprint()) {
    throw RuntimeError("log was written for a different schema");
  }
  std::vector<dml::DialogueEvent> logged;
  for (std::size_t i = 1; i < log_lines.size(); ++i) {
    logged.push_back(dml::event_from_json(log_lines[i].at("event")));
  }
  const auto log_path = opts.log_path;
  opts.log_path.clear();
  auto s = create_session(*bundle->schema, bundle, executor, head.at("session").get<std::string>(), opts);
  for (const auto& e : logged) {
    if (e.kind != dml::EventKind::UserUtterance) continue;
    if (s->ended()) break;
    auto r = s->handle_utterance(e.text);
    if (results) results->push_back(std::move(r));
  }
  // A log cut off mid-turn replays to the complete turn.
  const auto& got = s->history().events;
  const std::size_t n = std::min(got.size(), logged.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!(got[i] == logged[i])) {
      throw RuntimeError("replay diverges from the log at event " + std::to_string(i));
    }
  }
  s->continue_log(log_path, logged.size());
  return s;
}

}  // namespace convkit::runtime
