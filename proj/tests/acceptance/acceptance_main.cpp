// Acceptance run. Prints one PASS/FAIL line per criterion plus INFO lines;
// exits non-zero if any criterion fails. Thresholds are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convkit/context/context.hpp"
#include "convkit/dml/validate.hpp"
#include "convkit/eval/eval.hpp"
#include "convkit/models/models.hpp"
#include "convkit/nn/crf.hpp"
#include "convkit/nn/gradcheck.hpp"
#include "convkit/nn/layers.hpp"
#include "convkit/sim/simulator.hpp"
#include "crf_oracle.hpp"
#include "goal_oracle.hpp"
#include "test_util.hpp"

using namespace convkit;
using namespace convkit::testing;
namespace fs = std::filesystem;

namespace {

// CRF oracle
constexpr int kCrfInstances = 200;
constexpr std::size_t kCrfMaxLen = 5, kCrfMaxTags = 4;
constexpr double kPartitionTol = 1e-8;
// gradients
constexpr double kGradEps = 1e-5, kGradTol = 1e-4;
// simulator
constexpr std::size_t kPerCorner = 1000;
constexpr double kCorrectionP = 0.3, kCorrectionLo = 0.25, kCorrectionHi = 0.35;
// full simulator vs base sampler, absolute gains on 0..1 scores
constexpr std::size_t kAblationRuns = 5, kAblationTrain = 2000, kAblationTest = 500;
constexpr double kNerGain = 0.05, kApGain = 0.05, kAspGain = 0.10;
// dynamic catalogue
constexpr double kCatalogueGain = 0.05;
// overfit
constexpr std::size_t kOverfitEpochs = 200;

// Wall-clock budgets in seconds; 0 means none.
constexpr double kCrfBudget = 10, kGradBudget = 120, kSimBudget = 60, kAblationBudget = 45 * 60,
                 kCatalogueBudget = 10 * 60;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget > 0 && secs > budget) {
    o.pass = false;
    o.detail += "; over the " + std::to_string(static_cast<int>(budget)) + " s budget";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-22s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0, double e = 0, double g = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d, e, g);
  return buf;
}

// ---- CLI plumbing ----

std::string quote(const std::string& s) { return "'" + s + "'"; }

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CONVKIT_CLI) + " " + args + " > " + quote(log.string()) + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void cli_ok(const std::string& args, const fs::path& log) {
  if (cli(args, log) != 0) throw std::runtime_error("convkit " + args.substr(0, args.find(' ')) + " failed: " + slurp(log.string()));
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return fs::exists(a) && fs::exists(b) && slurp(a.string()) == slurp(b.string());
}

// ---- criteria ----

Outcome crf_oracle() {
  std::mt19937_64 rng(2025);
  std::normal_distribution<double> g;
  double worst = 0;
  int path_mismatch = 0;
  for (int trial = 0; trial < kCrfInstances; ++trial) {
    const std::size_t T = 1 + rng() % kCrfMaxTags, L = 1 + rng() % kCrfMaxLen;
    nn::ParamStore store;
    nn::Crf crf(store, "crf", T);
    for (auto* p : {&crf.transitions(), &crf.starts(), &crf.stops()}) {
      for (auto& x : p->value.data) x = g(rng);
    }
    if (trial % 2 && T > 1) {
      for (std::size_t i = 0; i < T; ++i) {
        for (std::size_t j = 1; j < T; ++j) {
          if (rng() % 3 == 0) crf.set_allowed(i, j, false);
        }
      }
      crf.set_start_allowed(T - 1, false);
    }
    std::vector<nn::Vec> em(L, nn::Vec(T));
    for (auto& row : em) {
      for (auto& x : row) x = g(rng);
    }
    const auto oracle = brute_force(crf, em);
    worst = std::max(worst, std::abs(nn::crf_log_partition(crf, em) - oracle.logz));
    if (nn::crf_viterbi(crf, em).first != oracle.best) ++path_mismatch;
  }
  return {worst <= kPartitionTol && path_mismatch == 0,
          fmt("%.0f instances, max |logZ - oracle| = %.2e, viterbi mismatches = %.0f", kCrfInstances, worst,
              path_mismatch)};
}

Outcome gradient_suite() {
  std::vector<std::pair<std::string, nn::GradCheckResult>> results;
  auto check = [&](const std::string& what, const std::function<double(bool)>& f, nn::ParamStore& store,
                   std::size_t per_param = 0) {
    results.emplace_back(what, nn::finite_diff_check(f, store, kGradEps, per_param, 7));
  };
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  auto vec = [&](std::size_t n) {
    nn::Vec v(n);
    for (auto& x : v) x = g(rng);
    return v;
  };

  {
    nn::ParamStore store(21);
    nn::Linear lin(store, "l", 4, 3);
    const auto x = vec(4);
    check("linear+softmax", [&](bool grad) {
      auto y = lin.forward(x);
      nn::Vec dy;
      const double loss = nn::softmax_cross_entropy(y, 1, grad ? &dy : nullptr);
      if (grad) lin.backward(x, dy, nullptr);
      return loss;
    }, store);
  }
  {
    nn::ParamStore store(22);
    nn::Embedding emb(store, "emb", 5, 3);
    nn::Linear lin(store, "l", 3, 2);
    check("embedding", [&](bool grad) {
      double loss = 0;
      for (std::size_t row : {0u, 4u, 0u}) {
        auto x = emb.lookup(row);
        auto y = lin.forward(x);
        nn::Vec dy;
        loss += nn::softmax_cross_entropy(y, row % 2, grad ? &dy : nullptr);
        if (grad) {
          nn::Vec dx(3, 0.0);
          lin.backward(x, dy, &dx);
          emb.backward(row, dx);
        }
      }
      return loss;
    }, store);
  }
  for (auto dir : {nn::Direction::Forward, nn::Direction::Backward, nn::Direction::Bi}) {
    nn::ParamStore store(23);
    nn::SequenceEncoder enc(store, "enc", 3, 4, dir);
    nn::Linear head(store, "head", enc.out_dim(), 2);
    std::vector<nn::Vec> xs;
    for (int t = 0; t < 4; ++t) xs.push_back(vec(3));
    check("lstm", [&](bool grad) {
      nn::SequenceEncoder::Cache cache;
      nn::Vec fin;
      auto out = enc.forward(xs, cache, &fin);
      double loss = 0;
      std::vector<nn::Vec> dout(out.size());
      nn::Vec dfin(fin.size(), 0.0);
      for (std::size_t t = 0; t < out.size(); ++t) {
        auto y = head.forward(out[t]);
        nn::Vec dy;
        loss += nn::softmax_cross_entropy(y, t % 2, grad ? &dy : nullptr);
        if (grad) {
          dout[t].assign(out[t].size(), 0.0);
          head.backward(out[t], dy, &dout[t]);
        }
      }
      for (std::size_t k = 0; k < fin.size(); ++k) {
        loss += 0.5 * fin[k] * fin[k];
        dfin[k] = fin[k];
      }
      if (grad) enc.backward(cache, dout, dfin, nullptr);
      return loss;
    }, store);
  }
  {
    nn::ParamStore store(24);
    nn::Crf crf(store, "crf", 3);
    nn::Linear proj(store, "proj", 2, 3);
    for (auto& x : crf.transitions().value.data) x = g(rng);
    crf.set_allowed(0, 2, false);
    std::vector<nn::Vec> xs;
    for (int t = 0; t < 5; ++t) xs.push_back(vec(2));
    const std::vector<std::size_t> gold{1, 2, 2, 0, 1};
    check("crf", [&](bool grad) {
      std::vector<nn::Vec> em;
      for (const auto& x : xs) em.push_back(proj.forward(x));
      std::vector<nn::Vec> dem;
      const double loss = crf.nll(em, gold, grad ? &dem : nullptr);
      if (grad) {
        for (std::size_t t = 0; t < xs.size(); ++t) proj.backward(xs[t], dem[t], nullptr);
      }
      return loss;
    }, store);
  }

  // Full model losses on a pizza order; the context encoder sits inside each.
  const dml::AnnotatedDialogue* dlg = nullptr;
  for (const auto& d : pizza_seeds()) {
    for (const auto& e : d.events) {
      if (e.kind == dml::EventKind::ApiCall && e.name == "OrderPizza" && e.find_arg("cheese")) dlg = &d;
    }
  }
  if (!dlg) throw std::runtime_error("no pizza seed orders cheese");
  models::ModelConfig tiny;
  tiny.hidden = 3;
  tiny.embed = 2;
  tiny.window = 2;
  tiny.word_dropout = 0.0;
  const std::vector<dml::AnnotatedDialogue> one{*dlg};
  auto vocab = std::make_shared<const context::Vocabulary>(context::Vocabulary::build(pizzabot(), {&one}));
  auto schema = std::make_shared<const dml::DomainSchema>(pizzabot());
  const auto di = context::index_dialogue(*dlg, 2);
  models::NerModel ner(schema, vocab, tiny, 31);
  models::ActionModel ap(schema, vocab, tiny, 32);
  models::ArgumentModel af(schema, vocab, tiny, 33);
  check("ner model", [&](bool grad) { return ner.loss(di, grad); }, ner.params());
  check("action model", [&](bool grad) { return ap.loss(di, grad); }, ap.params());
  check("argument model", [&](bool grad) { return af.loss(di, grad); }, af.params());

  double worst = 0;
  std::string where;
  std::size_t coords = 0;
  for (const auto& [what, r] : results) {
    coords += r.checked;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = what + " " + r.worst;
    }
  }
  return {worst < kGradTol, std::to_string(results.size()) + " checks, " + std::to_string(coords) +
                                " coordinates, max rel error " + fmt("%.2e", worst) + " at " + where};
}

Outcome simulator_validity() {
  using P = double sim::SimConfig::*;
  const std::pair<const char*, P> knobs[] = {
      {"p_correction", &sim::SimConfig::p_correction},
      {"p_over_cooperative", &sim::SimConfig::p_over_cooperative},
      {"p_under_cooperative", &sim::SimConfig::p_under_cooperative},
      {"p_proactive_offer", &sim::SimConfig::p_proactive_offer},
      {"p_api_failure", &sim::SimConfig::p_api_failure},
      {"p_subsequence", &sim::SimConfig::p_subsequence},
      {"p_concatenate", &sim::SimConfig::p_concatenate},
  };
  std::size_t total = 0, corners = 0;
  std::string problem;
  for (const auto& [name, field] : knobs) {
    for (double v : {0.0, 1.0}) {
      sim::SimConfig c;
      c.seed = 100 + corners;
      c.num_dialogues = kPerCorner;
      c.*field = v;
      ++corners;
      const auto corpus = sim::generate_dataset(pizza_seeds(), pizzabot(), c);
      if (corpus.dialogues.size() != kPerCorner && problem.empty()) {
        problem = std::string(name) + "=" + fmt("%.0f", v) + ": only " + std::to_string(corpus.dialogues.size());
      }
      for (const auto& d : corpus.dialogues) {
        ++total;
        if (!problem.empty()) continue;
        const auto r = dml::validate_dialogue(d, pizzabot());
        if (!r.ok()) problem = d.id + " invalid: " + r.str();
        const auto g = goal_problem(d);
        if (problem.empty() && !g.empty()) problem = d.id + ": " + g;
        if (!problem.empty()) problem = std::string(name) + "=" + fmt("%.0f", v) + " " + problem;
      }
    }
  }
  sim::SimConfig c;
  c.seed = 3;
  c.num_dialogues = kPerCorner;
  c.p_correction = kCorrectionP;
  const auto corpus = sim::generate_dataset(pizza_seeds(), pizzabot(), c);
  const double rate = static_cast<double>(corpus.stats.corrections) / static_cast<double>(corpus.dialogues.size());
  const bool rate_ok = rate >= kCorrectionLo && rate <= kCorrectionHi;
  std::string detail = std::to_string(total) + " dialogues over " + std::to_string(corners) +
                       " corners valid and goal-complete; correction rate " + fmt("%.3f", rate) + " at p=0.3";
  if (!problem.empty()) detail = problem;
  return {problem.empty() && rate_ok, detail};
}

Outcome simulator_ablation() {
  eval::AblationConfig cfg;
  cfg.runs = kAblationRuns;
  cfg.train_dialogues = kAblationTrain;
  cfg.test_dialogues = kAblationTest;
  cfg.seed = 1;
  cfg.model.hidden = 16;
  cfg.model.embed = 16;
  cfg.model.epochs = 4;
  const auto rep = eval::run_ablation(pizzabot(), pizza_seeds(), cfg);
  const double dn = rep.full_mean.ner_f1 - rep.base_mean.ner_f1, da = rep.full_mean.ap - rep.base_mean.ap,
               ds = rep.full_mean.asp - rep.base_mean.asp;
  std::printf("INFO  ablation table\n%s", rep.table().c_str());
  return {dn >= kNerGain && da >= kApGain && ds >= kAspGain,
          fmt("full - base over %.0f runs: NER %+.2f, AP %+.2f, ASP %+.2f", kAblationRuns, 100 * dn, 100 * da,
              100 * ds) +
              fmt(" (need +%.0f/+%.0f/+%.0f)", 100 * kNerGain, 100 * kApGain, 100 * kAspGain)};
}

Outcome catalogue_ablation() {
  eval::CatalogueAblationConfig cfg;
  cfg.type = "Movie";
  cfg.model.hidden = 16;
  cfg.model.embed = 16;
  cfg.model.epochs = 4;
  std::vector<std::string> held;
  std::ifstream in(domain_path("ticketbot_lite/heldout_movies.txt"));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) held.push_back(line);
  }
  if (held.empty()) throw std::runtime_error("no held-out titles");
  cfg.test_return_overrides["FindMovies"] = held;
  const auto rep = eval::run_catalogue_ablation(ticketbot(), ticket_seeds(), cfg);
  const double on = rep.with_dynamic.f1(), off = rep.without_dynamic.f1();
  std::string per_run;
  for (const auto& r : rep.runs) {
    per_run += fmt(" %+.1f", 100 * (r.with_dynamic.f1() - r.without_dynamic.f1()));
  }
  return {rep.turns > 0 && on - off >= kCatalogueGain,
          fmt("Movie span F1 %.2f with vs %.2f without on %.0f turns (delta %+.2f, need +%.0f);", 100 * on,
              100 * off, static_cast<double>(rep.turns), 100 * (on - off), 100 * kCatalogueGain) +
              " per run" + per_run};
}

struct CliRun {
  fs::path dir;
  fs::path bundle_a;
};

// simulate, train and eval twice each with the same seeds; the first bundle
// is kept for the replay check.
Outcome determinism(CliRun& run) {
  const auto schema = quote(domain_path("ticketbot_lite/schema.json"));
  const auto seeds = quote(domain_path("ticketbot_lite/seeds.jsonl"));
  const auto& w = run.dir;
  std::vector<std::string> differ;
  for (const char* side : {"a", "b"}) {
    const auto d = w / side;
    fs::create_directories(d);
    cli_ok("simulate --schema " + schema + " --seeds " + seeds + " --num 600 --seed 3 --out " +
               quote((d / "train.jsonl").string()),
           d / "simulate.log");
    cli_ok("simulate --schema " + schema + " --seeds " + seeds + " --num 200 --seed 99 --out " +
               quote((d / "test.jsonl").string()),
           d / "simulate_test.log");
    cli_ok("train --corpus " + quote((d / "train.jsonl").string()) + " --schema " + schema + " --out-bundle " +
               quote((d / "bundle").string()) + " --hidden 16 --embed 16 --epochs 4",
           d / "train.log");
    cli_ok("eval --bundle " + quote((d / "bundle").string()) + " --test " + quote((d / "test.jsonl").string()) +
               " --schema " + schema + " --json --out " + quote((d / "eval.json").string()),
           d / "eval.log");
  }
  std::size_t compared = 0;
  for (const char* f : {"train.jsonl", "train.stats.json", "test.jsonl", "eval.json"}) {
    ++compared;
    if (!same_bytes(w / "a" / f, w / "b" / f)) differ.push_back(f);
  }
  for (const auto& e : fs::directory_iterator(w / "a" / "bundle")) {
    ++compared;
    const auto name = e.path().filename();
    if (!same_bytes(e.path(), w / "b" / "bundle" / name)) differ.push_back("bundle/" + name.string());
  }
  run.bundle_a = w / "a" / "bundle";
  std::string detail = std::to_string(compared) + " outputs byte-identical across two runs";
  if (!differ.empty()) {
    detail = "differ:";
    for (const auto& f : differ) detail += " " + f;
  }
  return {differ.empty(), detail};
}

Outcome duration_cast_replay(const CliRun& run) {
  if (run.bundle_a.empty()) throw std::runtime_error("no bundle from the determinism step");
  const auto script = run.dir / "duration_cast.txt";
  std::ofstream(script) << "how long is la la land\nwho stars in it\nexit\n";
  const auto out = run.dir / "duration_cast.out";
  cli_ok("chat --bundle " + quote(run.bundle_a.string()) + " --script " + quote(script.string()) + " --json --seed 1",
         out);
  std::vector<std::string> actions;
  std::vector<std::string> titles;
  std::istringstream lines(slurp(out.string()));
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    if (!j.contains("executed_actions")) continue;
    for (const auto& a : j["executed_actions"]) {
      actions.push_back(a["action"]);
      if (a["action"] == "GetDuration" || a["action"] == "GetCast") {
        const auto& t = a["args"]["movieTitle"];
        titles.push_back(t.is_array() && t.size() == 1 ? t[0].get<std::string>() : t.dump());
      }
    }
  }
  const std::vector<std::string> want{"GetDuration", "inform_movie_duration", "<end_turn>", "GetCast",
                                      "inform_movie_cast", "<end_turn>", "stop", "<end_dialogue>"};
  const std::vector<std::string> want_titles{"la la land", "la la land"};
  std::string got;
  for (const auto& a : actions) got += (got.empty() ? "" : " ") + a;
  std::string bound;
  for (const auto& t : titles) bound += (bound.empty() ? "" : ", ") + t;
  return {actions == want && titles == want_titles, got + "; movieTitle = " + bound};
}

Outcome overfit() {
  const dml::AnnotatedDialogue* dlg = nullptr;
  for (const auto& d : pizza_seeds()) {
    for (const auto& e : d.events) {
      if (e.kind == dml::EventKind::ApiCall && e.name == "OrderPizza" && e.find_arg("cheese")) dlg = &d;
    }
  }
  if (!dlg) throw std::runtime_error("no pizza seed orders cheese");
  models::ModelConfig mc;
  mc.hidden = 16;
  mc.embed = 16;
  mc.epochs = kOverfitEpochs;
  mc.word_dropout = 0.0;
  const auto b = models::train_models({*dlg}, pizzabot(), mc);
  const auto r = eval::evaluate(b, {*dlg});
  return {r.actions.turns > 0 && r.actions.asp() == 1.0,
          fmt("%.0f turns, ASP %.2f, AP %.2f, NER F1 %.2f", static_cast<double>(r.actions.turns),
              100 * r.actions.asp(), 100 * r.actions.ap(), 100 * r.ner.f1())};
}

void challenge_info(const std::string& domain, const models::ModelBundle& b) {
  const auto test = dml::load_corpus(domain_path(domain + "/challenge.jsonl"), *b.schema);
  const auto m = eval::metrics_of(eval::evaluate(b, test));
  std::printf("INFO  challenge %-15s %zu dialogues: NER F1 %.2f, AP %.2f, ASP %.2f\n", domain.c_str(), test.size(),
              100 * m.ner_f1, 100 * m.ap, 100 * m.asp);
}

}  // namespace

int main() {
  CliRun run;
  run.dir = fs::temp_directory_path() / "convkit_acceptance";
  fs::remove_all(run.dir);
  fs::create_directories(run.dir);

  criterion("crf-oracle", kCrfBudget, crf_oracle);
  criterion("gradients", kGradBudget, gradient_suite);
  criterion("simulator-validity", kSimBudget, simulator_validity);
  criterion("determinism", 0, [&] { return determinism(run); });
  criterion("duration-cast-replay", 0, [&] { return duration_cast_replay(run); });
  criterion("overfit", 0, overfit);
  criterion("dynamic-catalogue", kCatalogueBudget, catalogue_ablation);
  criterion("simulator-ablation", kAblationBudget, simulator_ablation);

  // Hand-written challenge sets; reported, not gated.
  try {
    if (!run.bundle_a.empty()) challenge_info("ticketbot_lite", models::ModelBundle::load(run.bundle_a, ticketbot()));
    sim::SimConfig sc;
    sc.seed = 5;
    sc.num_dialogues = kAblationTrain;
    models::ModelConfig mc;
    mc.hidden = 16;
    mc.embed = 16;
    mc.epochs = 4;
    challenge_info("pizzabot", models::train_models(sim::generate_dataset(pizza_seeds(), pizzabot(), sc).dialogues,
                                                    pizzabot(), mc));
  } catch (const std::exception& e) {
    std::printf("INFO  challenge sets not scored: %s\n", e.what());
  }

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
