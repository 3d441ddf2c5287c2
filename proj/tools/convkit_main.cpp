// convkit: command-line front end (validate, simulate, train, eval, ablation,
// chat, serve). Exit status: 0 success, 1 validation findings, 2 errors.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <unistd.h>

#include <CLI11.hpp>

#include "convkit/dml/validate.hpp"
#include "convkit/eval/eval.hpp"
#include "convkit/runtime/runtime.hpp"
#include "convkit/service/service.hpp"
#include "convkit/sim/simulator.hpp"
#include "convkit/text.hpp"

using namespace convkit;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kOk = 0, kFindings = 1, kError = 2;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure("cannot write '" + path + "'");
  out << content;
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Failure("'" + path + "' is not valid JSON: " + e.what());
  }
}

// One JSON document per file, or JSON Lines for .jsonl.
std::vector<dml::AnnotatedDialogue> read_dialogues(const std::string& path) {
  if (fs::path(path).extension() == ".jsonl") return dml::read_corpus(path);
  return {dml::parse_dialogue_unchecked(read_file(path))};
}

sim::Mode parse_mode(const std::string& m) {
  if (m == "full") return sim::Mode::Full;
  if (m == "base") return sim::Mode::Base;
  throw Failure("mode must be 'full' or 'base'");
}

std::shared_ptr<const models::ModelBundle> load_bundle(const std::string& dir, const std::string& schema_path) {
  if (schema_path.empty()) return std::make_shared<const models::ModelBundle>(models::ModelBundle::load(dir));
  return std::make_shared<const models::ModelBundle>(models::ModelBundle::load(dir, dml::load_domain(schema_path)));
}

// ---- validate ----

struct ValidateArgs {
  std::string schema;
  std::vector<std::string> files;
};

int run_validate(const ValidateArgs& a) {
  const auto schema = dml::load_domain(a.schema);
  std::size_t dialogues = 0, bad = 0;
  for (const auto& f : a.files) {
    for (const auto& d : read_dialogues(f)) {
      ++dialogues;
      auto rep = dml::validate_dialogue(d, schema);
      if (rep.ok()) continue;
      ++bad;
      for (const auto& finding : rep.findings) {
        std::cout << f << ": " << d.id << ": ";
        if (finding.event >= 0) std::cout << "event " << finding.event << ": ";
        std::cout << finding.message << "\n";
      }
    }
  }
  std::cout << "schema " << schema.name << " ok (" << schema.fingerprint() << "); " << dialogues << " dialogues, "
            << bad << " with findings\n";
  return bad ? kFindings : kOk;
}

// ---- simulate ----

struct SimulateArgs {
  std::string schema, seeds, out, stats, config, mode = "full";
  std::size_t num = 1000;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateArgs& a) {
  const auto schema = dml::load_domain(a.schema);
  const auto seeds = dml::load_corpus(a.seeds, schema);
  auto cfg = a.config.empty() ? sim::SimConfig{} : sim::SimConfig::from_json(read_json(a.config));
  cfg.num_dialogues = a.num;
  cfg.seed = a.seed;
  cfg.mode = parse_mode(a.mode);
  const auto corpus = sim::Simulator(schema, seeds, cfg).generate();
  if (auto dir = fs::path(a.out).parent_path(); !dir.empty()) fs::create_directories(dir);
  dml::write_corpus(a.out, corpus.dialogues);
  auto stats = corpus.stats.to_json();
  const auto stats_path =
      a.stats.empty() ? (fs::path(a.out).parent_path() / (fs::path(a.out).stem().string() + ".stats.json")).string()
                      : a.stats;
  ordered_json j;
  j["config"] = cfg.to_json();
  j["stats"] = stats;
  write_file(stats_path, j.dump(2) + "\n");
  std::cout << "wrote " << corpus.dialogues.size() << " dialogues to " << a.out << "\n" << stats.dump(2) << "\n";
  return kOk;
}

// ---- train ----

struct ModelFlags {
  std::string config;
  std::optional<std::size_t> epochs, hidden, embed;
  std::optional<std::uint64_t> seed;
  std::optional<double> entity_dropout;
  bool no_dynamic = false;

  void add(CLI::App* app) {
    app->add_option("--config", config, "model config JSON");
    app->add_option("--epochs", epochs);
    app->add_option("--hidden", hidden);
    app->add_option("--embed", embed);
    app->add_option("--model-seed", seed);
    app->add_option("--entity-dropout", entity_dropout, "tagger training: chance a gold span is read as unknown words");
    app->add_flag("--no-dynamic-catalogue", no_dynamic);
  }
  models::ModelConfig build() const {
    auto c = config.empty() ? models::ModelConfig{} : models::ModelConfig::from_json(read_json(config));
    if (epochs) c.epochs = *epochs;
    if (hidden) c.hidden = *hidden;
    if (embed) c.embed = *embed;
    if (seed) c.seed = *seed;
    if (entity_dropout) c.entity_dropout = *entity_dropout;
    if (no_dynamic) c.dynamic_catalogue = false;
    c.check();
    return c;
  }
};

struct TrainArgs {
  std::string corpus, schema, out, heldout;
  ModelFlags model;
};

int run_train(const TrainArgs& a) {
  const auto schema = dml::load_domain(a.schema);
  const auto corpus = dml::load_corpus(a.corpus, schema);
  std::vector<dml::AnnotatedDialogue> heldout;
  models::TrainOptions opts;
  if (!a.heldout.empty()) {
    heldout = dml::load_corpus(a.heldout, schema);
    opts.heldout = &heldout;
  }
  opts.progress = [](const models::EpochLoss& e) {
    std::cerr << "epoch " << e.epoch << ": ner " << e.ner << ", action " << e.action << ", argument " << e.argument
              << "\n";
  };
  models::TrainReport report;
  const auto bundle = models::train_models(corpus, schema, a.model.build(), &report, opts);
  bundle.save(a.out);
  write_file((fs::path(a.out) / "train_report.json").string(), report.to_json().dump(2) + "\n");
  std::cout << "saved bundle to " << a.out << " (" << corpus.size() << " dialogues, " << report.epochs.size()
            << " epochs)\n";
  if (!report.heldout.is_null()) std::cout << report.heldout.dump(2) << "\n";
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string bundle, test, schema, out;
  bool json = false;
};

std::string eval_table(const eval::EvalReport& r) {
  char buf[200];
  std::string s;
  std::snprintf(buf, sizeof buf, "%-14s %9s %9s %9s\n", "entity type", "P", "R", "F1");
  s += buf;
  auto row = [&](const std::string& name, const eval::SpanScore& x) {
    std::snprintf(buf, sizeof buf, "%-14s %9.2f %9.2f %9.2f\n", name.c_str(), 100 * x.precision(), 100 * x.recall(),
                  100 * x.f1());
    s += buf;
  };
  for (const auto& [t, x] : r.ner_by_type) row(t, x);
  row("all", r.ner);
  std::snprintf(buf, sizeof buf, "\n%zu dialogues, %zu turns: AP %.2f, ASP %.2f\n", r.dialogues, r.actions.turns,
                100 * r.actions.ap(), 100 * r.actions.asp());
  s += buf;
  return s;
}

int run_eval(const EvalArgs& a) {
  const auto bundle = load_bundle(a.bundle, a.schema);
  const auto test = dml::load_corpus(a.test, *bundle->schema);
  const auto rep = eval::evaluate(*bundle, test);
  const auto j = rep.to_json().dump(2) + "\n";
  if (!a.out.empty()) write_file(a.out, j);
  std::cout << (a.json ? j : eval_table(rep));
  return kOk;
}

// ---- ablation ----

struct AblationArgs {
  std::string schema, seeds, out, sim_config;
  // Unset sizes and seed fall back to each experiment's defaults.
  std::optional<std::size_t> runs, train, test;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool catalogue = false, base_for_both = false;
  std::string type = "Movie";
  std::vector<std::string> heldout_returns;  // API=file
  ModelFlags model;
};

int run_ablation(const AblationArgs& a) {
  const auto schema = dml::load_domain(a.schema);
  const auto seeds = dml::load_corpus(a.seeds, schema);
  const auto sim_cfg = a.sim_config.empty() ? sim::SimConfig{} : sim::SimConfig::from_json(read_json(a.sim_config));
  auto log = [](const std::string& s) { std::cerr << s << "\n"; };
  ordered_json j;
  if (a.catalogue) {
    eval::CatalogueAblationConfig c;
    if (a.runs) c.runs = *a.runs;
    if (a.train) c.train_dialogues = *a.train;
    if (a.test) c.test_dialogues = *a.test;
    if (a.seed) c.seed = *a.seed;
    c.type = a.type;
    c.sim = sim_cfg;
    c.model = a.model.build();
    for (const auto& entry : a.heldout_returns) {
      const auto eq = entry.find('=');
      if (eq == std::string::npos) throw Failure("--heldout-returns takes API=file, got '" + entry + "'");
      std::vector<std::string> values;
      std::istringstream in(read_file(entry.substr(eq + 1)));
      for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line[0] != '#') values.push_back(line);
      }
      c.test_return_overrides[entry.substr(0, eq)] = values;
    }
    const auto rep = eval::run_catalogue_ablation(schema, seeds, c, log);
    j = rep.to_json();
    std::printf("%s span F1 on %zu turns naming API-returned values (%zu runs pooled)\n", a.type.c_str(), rep.turns,
                rep.runs.size());
    std::printf("  with dynamic catalogue    %6.2f\n  without dynamic catalogue %6.2f\n  delta %+.2f\n",
                100 * rep.with_dynamic.f1(), 100 * rep.without_dynamic.f1(),
                100 * (rep.with_dynamic.f1() - rep.without_dynamic.f1()));
  } else {
    eval::AblationConfig c;
    if (a.runs) c.runs = *a.runs;
    if (a.train) c.train_dialogues = *a.train;
    if (a.test) c.test_dialogues = *a.test;
    if (a.seed) c.seed = *a.seed;
    c.sim = sim_cfg;
    c.model = a.model.build();
    c.base_for_both = a.base_for_both;
    c.jobs = a.jobs;
    const auto rep = eval::run_ablation(schema, seeds, c, log);
    j = rep.to_json();
    std::cout << rep.table();
  }
  if (!a.out.empty()) write_file(a.out, j.dump(2) + "\n");
  return kOk;
}

// ---- chat ----

struct SessionFlags {
  std::uint64_t seed = 1;
  double p_failure = 0.0;
  std::optional<double> tau_high, tau_low;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "session rng seed");
    app->add_option("--api-failure", p_failure, "probability that a mock API call fails");
    app->add_option("--tau-high", tau_high);
    app->add_option("--tau-low", tau_low);
  }
};

struct ChatArgs {
  std::string bundle, schema, script, log;
  bool json = false, debug = false;
  SessionFlags session;
};

void print_turn(const runtime::TurnResult& r, bool debug) {
  for (std::size_t i = 0; i < r.entities.size(); ++i) {
    std::cout << "  [" << r.entities[i].entity_type << "] " << r.entity_values[i] << "\n";
  }
  for (const auto& a : r.actions) {
    if (a.kind == dml::EventKind::EndTurn || a.kind == dml::EventKind::EndDialogue) continue;
    std::cout << "  " << (a.kind == dml::EventKind::ApiCall ? "call " : "nlg  ") << a.action << "(";
    for (std::size_t k = 0; k < a.args.size(); ++k) {
      std::cout << (k ? ", " : "") << a.args[k].first << "=" << text::join(a.args[k].second, "|");
    }
    std::cout << ")";
    if (a.failed) std::cout << " -> failed";
    if (a.return_value) std::cout << " -> " << *a.return_value;
    std::cout << "\n";
  }
  if (debug) std::cout << r.debug.dump(2) << "\n";
  std::cout << "agent: " << r.agent_text << "\n";
}

int run_chat(const ChatArgs& a) {
  const auto bundle = load_bundle(a.bundle, a.schema);
  auto ex = std::make_shared<const runtime::ApiExecutor>(runtime::ApiExecutor::mock(*bundle->schema, a.session.p_failure));
  runtime::SessionOptions so;
  so.seed = a.session.seed;
  so.tau_high = a.session.tau_high;
  so.tau_low = a.session.tau_low;
  so.log_path = a.log;
  auto s = runtime::create_session(*bundle->schema, bundle, ex, "chat", so);

  std::ifstream script;
  if (!a.script.empty()) {
    script.open(a.script);
    if (!script) throw Failure("cannot read '" + a.script + "'");
  }
  std::istream& in = a.script.empty() ? std::cin : script;
  const bool interactive = a.script.empty() && isatty(0);
  if (a.json) {
    std::cout << ordered_json{{"welcome_text", s->welcome_text()}}.dump() << "\n";
  } else {
    std::cout << "agent: " << s->welcome_text() << "\n";
  }
  std::string line;
  while (!s->ended()) {
    if (interactive) std::cout << "> " << std::flush;
    if (!std::getline(in, line)) break;
    if (line.empty() || line[0] == '#') continue;
    auto r = s->handle_utterance(line);
    if (a.json) {
      std::cout << r.to_json(a.debug).dump() << "\n";
    } else {
      if (!interactive) std::cout << "user: " << line << "\n";
      print_turn(r, a.debug);
    }
  }
  return kOk;
}

// ---- serve ----

struct ServeArgs {
  std::string bundle, schema, host = "127.0.0.1", log_dir;
  int port = 8080;
  SessionFlags session;
};

int run_serve(const ServeArgs& a) {
  const auto bundle = load_bundle(a.bundle, a.schema);
  auto ex = std::make_shared<const runtime::ApiExecutor>(runtime::ApiExecutor::mock(*bundle->schema, a.session.p_failure));
  service::ServiceOptions o;
  o.host = a.host;
  o.port = a.port;
  o.log_dir = a.log_dir;
  o.seed = a.session.seed;
  o.tau_high = a.session.tau_high;
  o.tau_low = a.session.tau_low;

  // Signals are taken synchronously so shutdown runs on this thread.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  service::Service svc(bundle, ex, o);
  if (const auto n = svc.restore()) std::cerr << "restored " << n << " sessions from " << a.log_dir << "\n";
  const int port = svc.start();
  std::cout << "serving " << bundle->schema->name << " on http://" << a.host << ":" << port << std::endl;
  int sig = 0;
  sigwait(&sigs, &sig);
  std::cerr << "shutting down\n";
  svc.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convkit: dialogue simulation, training and serving"};
  app.require_subcommand(1);

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "check a schema and annotated dialogues");
  validate->add_option("schema", va.schema, "schema JSON")->required()->check(CLI::ExistingFile);
  validate->add_option("dialogues", va.files, "dialogue JSON or JSON Lines files")->check(CLI::ExistingFile);

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "generate a training corpus from seed dialogues");
  simulate->add_option("--schema", sa.schema)->required()->check(CLI::ExistingFile);
  simulate->add_option("--seeds", sa.seeds, "seed dialogues (JSON Lines)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sa.out, "output corpus (JSON Lines)")->required();
  simulate->add_option("--num", sa.num, "number of dialogues");
  simulate->add_option("--mode", sa.mode, "full or base");
  simulate->add_option("--seed", sa.seed);
  simulate->add_option("--config", sa.config, "simulator config JSON");
  simulate->add_option("--stats", sa.stats, "statistics output (default: <out stem>.stats.json)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train the tagger, action and argument models");
  train->add_option("--corpus", ta.corpus)->required()->check(CLI::ExistingFile);
  train->add_option("--schema", ta.schema)->required()->check(CLI::ExistingFile);
  train->add_option("--out-bundle", ta.out, "bundle directory")->required();
  train->add_option("--heldout", ta.heldout, "corpus evaluated after training")->check(CLI::ExistingFile);
  ta.model.add(train);

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "score a bundle on a test corpus");
  evalc->add_option("--bundle", ea.bundle)->required()->check(CLI::ExistingDirectory);
  evalc->add_option("--test", ea.test)->required()->check(CLI::ExistingFile);
  evalc->add_option("--schema", ea.schema, "check the bundle against this schema")->check(CLI::ExistingFile);
  evalc->add_option("--out", ea.out, "JSON report path");
  evalc->add_flag("--json", ea.json, "print the JSON report instead of the table");

  AblationArgs aa;
  auto* ablation = app.add_subcommand("ablation", "full simulator vs base sampler, or dynamic catalogue on vs off");
  ablation->add_option("--schema", aa.schema)->required()->check(CLI::ExistingFile);
  ablation->add_option("--seeds", aa.seeds)->required()->check(CLI::ExistingFile);
  ablation->add_option("--runs", aa.runs);
  ablation->add_option("--train", aa.train, "training dialogues per corpus");
  ablation->add_option("--test", aa.test, "held-out dialogues");
  ablation->add_option("--seed", aa.seed);
  ablation->add_option("--jobs", aa.jobs, "runs trained in parallel");
  ablation->add_option("--sim-config", aa.sim_config)->check(CLI::ExistingFile);
  ablation->add_option("--out", aa.out, "JSON report path");
  ablation->add_flag("--base-for-both", aa.base_for_both, "train both arms on base-sampler data");
  ablation->add_flag("--catalogue", aa.catalogue, "run the dynamic catalogue ablation instead");
  ablation->add_option("--type", aa.type, "entity type scored by the catalogue ablation");
  ablation->add_option("--heldout-returns", aa.heldout_returns, "API=file: test-time return values, one per line");
  aa.model.add(ablation);

  ChatArgs ca;
  auto* chat = app.add_subcommand("chat", "talk to a bundle in the terminal, or replay a script");
  chat->add_option("--bundle", ca.bundle)->required()->check(CLI::ExistingDirectory);
  chat->add_option("--schema", ca.schema)->check(CLI::ExistingFile);
  chat->add_option("--script", ca.script, "one user utterance per line")->check(CLI::ExistingFile);
  chat->add_option("--log", ca.log, "session event log (JSON Lines)");
  chat->add_flag("--json", ca.json, "print one JSON turn result per line");
  chat->add_flag("--debug", ca.debug, "include distributions and pointer scores");
  ca.session.add(chat);

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "HTTP/JSON service");
  serve->add_option("--bundle", sv.bundle)->required()->check(CLI::ExistingDirectory);
  serve->add_option("--schema", sv.schema)->check(CLI::ExistingFile);
  serve->add_option("--port", sv.port);
  serve->add_option("--host", sv.host);
  serve->add_option("--log-dir", sv.log_dir, "session logs; existing ones are restored");
  sv.session.add(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kError;
  }

  try {
    if (*validate) return run_validate(va);
    if (*simulate) return run_simulate(sa);
    if (*train) return run_train(ta);
    if (*evalc) return run_eval(ea);
    if (*ablation) return run_ablation(aa);
    if (*chat) return run_chat(ca);
    if (*serve) return run_serve(sv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
