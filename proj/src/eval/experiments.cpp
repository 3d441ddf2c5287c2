#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "convkit/eval/eval.hpp"

namespace convkit::eval {

nlohmann::ordered_json Metrics::to_json() const {
  return {{"ner_f1", ner_f1}, {"ap", ap}, {"asp", asp}};
}

Metrics metrics_of(const EvalReport& r) { return {r.ner.f1(), r.actions.ap(), r.actions.asp()}; }

double relative_delta(double treatment, double baseline) {
  if (baseline == 0.0) return treatment == 0.0 ? 0.0 : INFINITY;
  return (treatment - baseline) / baseline;
}

nlohmann::ordered_json AblationConfig::to_json() const {
  nlohmann::ordered_json j;
  j["runs"] = runs;
  j["train_dialogues"] = train_dialogues;
  j["test_dialogues"] = test_dialogues;
  j["seed"] = seed;
  j["base_for_both"] = base_for_both;
  j["sim"] = sim.to_json();
  j["model"] = model.to_json();
  return j;
}

namespace {

Metrics mean_of(const std::vector<Metrics>& v) {
  Metrics m;
  for (const auto& x : v) {
    m.ner_f1 += x.ner_f1 / static_cast<double>(v.size());
    m.ap += x.ap / static_cast<double>(v.size());
    m.asp += x.asp / static_cast<double>(v.size());
  }
  return m;
}

Metrics std_of(const std::vector<Metrics>& v, const Metrics& mean) {
  Metrics s;
  if (v.size() < 2) return s;
  for (const auto& x : v) {
    s.ner_f1 += (x.ner_f1 - mean.ner_f1) * (x.ner_f1 - mean.ner_f1);
    s.ap += (x.ap - mean.ap) * (x.ap - mean.ap);
    s.asp += (x.asp - mean.asp) * (x.asp - mean.asp);
  }
  const double n = static_cast<double>(v.size() - 1);
  return {std::sqrt(s.ner_f1 / n), std::sqrt(s.ap / n), std::sqrt(s.asp / n)};
}

std::vector<dml::AnnotatedDialogue> corpus(const dml::DomainSchema& schema,
                                           const std::vector<dml::AnnotatedDialogue>& seeds, sim::SimConfig cfg,
                                           sim::Mode mode, std::uint64_t seed, std::size_t n) {
  cfg.mode = mode;
  cfg.seed = seed;
  cfg.num_dialogues = n;
  return sim::Simulator(schema, seeds, cfg).generate().dialogues;
}

}  // namespace

nlohmann::ordered_json AblationReport::to_json() const {
  nlohmann::ordered_json j;
  j["config"] = config;
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : runs) j["runs"].push_back({{"seed", r.seed}, {"full", r.full.to_json()}, {"base", r.base.to_json()}});
  j["full"] = {{"mean", full_mean.to_json()}, {"std", full_std.to_json()}};
  j["base"] = {{"mean", base_mean.to_json()}, {"std", base_std.to_json()}};
  j["absolute_delta"] = {{"ner_f1", full_mean.ner_f1 - base_mean.ner_f1},
                         {"ap", full_mean.ap - base_mean.ap},
                         {"asp", full_mean.asp - base_mean.asp}};
  j["relative_delta"] = {{"ner_f1", relative_delta(full_mean.ner_f1, base_mean.ner_f1)},
                         {"ap", relative_delta(full_mean.ap, base_mean.ap)},
                         {"asp", relative_delta(full_mean.asp, base_mean.asp)}};
  return j;
}

std::string AblationReport::table() const {
  std::ostringstream o;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %16s %16s %16s\n", "", "NER F1", "AP", "ASP");
  o << buf;
  auto row = [&](const char* name, const Metrics& m, const Metrics& s) {
    std::snprintf(buf, sizeof buf, "%-10s %9.2f ±%5.2f %9.2f ±%5.2f %9.2f ±%5.2f\n", name, 100 * m.ner_f1,
                  100 * s.ner_f1, 100 * m.ap, 100 * s.ap, 100 * m.asp, 100 * s.asp);
    o << buf;
  };
  row("base", base_mean, base_std);
  row("full", full_mean, full_std);
  std::snprintf(buf, sizeof buf, "%-10s %+16.2f %+16.2f %+16.2f\n", "abs delta", 100 * (full_mean.ner_f1 - base_mean.ner_f1),
                100 * (full_mean.ap - base_mean.ap), 100 * (full_mean.asp - base_mean.asp));
  o << buf;
  std::snprintf(buf, sizeof buf, "%-10s %+15.2f%% %+15.2f%% %+15.2f%%\n", "rel delta",
                100 * relative_delta(full_mean.ner_f1, base_mean.ner_f1), 100 * relative_delta(full_mean.ap, base_mean.ap),
                100 * relative_delta(full_mean.asp, base_mean.asp));
  o << buf;
  std::snprintf(buf, sizeof buf, "(%zu runs)\n", runs.size());
  o << buf;
  return o.str();
}

AblationReport run_ablation(const dml::DomainSchema& schema, const std::vector<dml::AnnotatedDialogue>& seeds,
                            const AblationConfig& cfg, const LogFn& log) {
  if (cfg.runs == 0) throw models::ModelError("ablation needs at least one run");
  AblationReport rep;
  rep.config = cfg.to_json();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  // Shared held-out set: full simulator, seed outside the training range.
  const auto test = corpus(schema, seeds, cfg.sim, sim::Mode::Full, cfg.seed + 0x7e57'0000ULL, cfg.test_dialogues);
  std::mutex log_mu;
  rep.runs.resize(cfg.runs);
  auto one_run = [&](std::size_t r) {
    const std::uint64_t seed = cfg.seed + r;
    auto mcfg = cfg.model;
    mcfg.seed = cfg.model.seed + r;
    AblationRun run;
    run.seed = seed;
    for (int arm = 0; arm < 2; ++arm) {
      const bool full = arm == 0;
      const auto mode = full && !cfg.base_for_both ? sim::Mode::Full : sim::Mode::Base;
      const auto train = corpus(schema, seeds, cfg.sim, mode, seed, cfg.train_dialogues);
      auto bundle = models::train_models(train, schema, mcfg);
      const auto m = metrics_of(evaluate(bundle, test));
      (full ? run.full : run.base) = m;
      std::lock_guard<std::mutex> lock(log_mu);
      say("run " + std::to_string(r + 1) + "/" + std::to_string(cfg.runs) + " " + (full ? "full" : "base") +
          ": " + m.to_json().dump());
    }
    rep.runs[r] = run;
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, cfg.runs));
  if (jobs == 1) {
    for (std::size_t r = 0; r < cfg.runs; ++r) one_run(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (std::size_t r; (r = next++) < cfg.runs;) {
          try {
            one_run(r);
          } catch (...) {
            std::lock_guard<std::mutex> lock(log_mu);
            if (!err) err = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
  }
  std::vector<Metrics> fulls, bases;
  for (const auto& run : rep.runs) {
    fulls.push_back(run.full);
    bases.push_back(run.base);
  }
  rep.full_mean = mean_of(fulls);
  rep.base_mean = mean_of(bases);
  rep.full_std = std_of(fulls, rep.full_mean);
  rep.base_std = std_of(bases, rep.base_mean);
  return rep;
}

nlohmann::ordered_json CatalogueAblationReport::to_json() const {
  nlohmann::ordered_json j;
  j["turns"] = turns;
  j["with_dynamic"] = with_dynamic.to_json();
  j["without_dynamic"] = without_dynamic.to_json();
  j["f1_delta"] = with_dynamic.f1() - without_dynamic.f1();
  j["relative_delta"] = relative_delta(with_dynamic.f1(), without_dynamic.f1());
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : runs) {
    j["runs"].push_back({{"seed", r.seed},
                         {"turns", r.turns},
                         {"with_dynamic_f1", r.with_dynamic.f1()},
                         {"without_dynamic_f1", r.without_dynamic.f1()}});
  }
  return j;
}

CatalogueAblationReport run_catalogue_ablation(const dml::DomainSchema& schema,
                                               const std::vector<dml::AnnotatedDialogue>& seeds,
                                               const CatalogueAblationConfig& cfg, const LogFn& log) {
  if (!schema.find_entity_type(cfg.type)) throw models::ModelError("unknown entity type '" + cfg.type + "'");
  if (cfg.runs == 0) throw models::ModelError("ablation needs at least one run");
  auto test_sim = cfg.sim;
  test_sim.return_overrides = cfg.test_return_overrides;
  EvalOptions eo;
  eo.actions = false;
  eo.filter = [&](const dml::AnnotatedDialogue& d, std::size_t u) {
    return mentions_returned_value(d, u, schema, cfg.type);
  };
  models::TrainOptions to;
  to.parts = models::kNerPart;

  CatalogueAblationReport rep;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    CatalogueAblationRun run;
    run.seed = cfg.seed + r;
    const auto train = corpus(schema, seeds, cfg.sim, sim::Mode::Full, run.seed, cfg.train_dialogues);
    const auto test = corpus(schema, seeds, test_sim, sim::Mode::Full, run.seed + 0x7e57'0000ULL, cfg.test_dialogues);
    for (int arm = 0; arm < 2; ++arm) {
      auto mcfg = cfg.model;
      mcfg.seed = cfg.model.seed + r;
      mcfg.dynamic_catalogue = arm == 0;
      auto bundle = models::train_models(train, schema, mcfg, nullptr, to);
      const auto s = evaluate(bundle, test, eo).ner_by_type[cfg.type];
      (arm == 0 ? run.with_dynamic : run.without_dynamic) = s;
      if (log) {
        log("run " + std::to_string(r + 1) + "/" + std::to_string(cfg.runs) + (arm == 0 ? " with" : " without") +
            " dynamic catalogue: " + s.to_json().dump());
      }
    }
    for (const auto& d : test) {
      for (std::size_t i = 0; i < d.events.size(); ++i) {
        if (d.events[i].kind == dml::EventKind::UserUtterance && mentions_returned_value(d, i, schema, cfg.type)) {
          ++run.turns;
        }
      }
    }
    rep.with_dynamic += run.with_dynamic;
    rep.without_dynamic += run.without_dynamic;
    rep.turns += run.turns;
    rep.runs.push_back(run);
  }
  return rep;
}

}  // namespace convkit::eval
