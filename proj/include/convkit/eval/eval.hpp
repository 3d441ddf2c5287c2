#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "convkit/dml/dialogue.hpp"
#include "convkit/dml/schema.hpp"
#include "convkit/models/models.hpp"
#include "convkit/sim/simulator.hpp"

namespace convkit::eval {

// Micro-averaged span counts. Precision with no predictions and recall with
// no gold spans count as 1; F1 is 0 when both are 0.
struct SpanScore {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision() const;
  double recall() const;
  double f1() const;
  SpanScore& operator+=(const SpanScore& o);
  nlohmann::ordered_json to_json() const;
};

// A span is correct iff its boundaries and type match exactly. With
// `only_type`, spans of other types are ignored on both sides.
SpanScore span_f1(const std::vector<dml::EntityAnnotation>& gold, const std::vector<dml::EntityAnnotation>& predicted,
                  const std::string& only_type = "");

// Action name plus argument values (case-folded, sorted); unbound arguments
// are absent.
struct StepSignature {
  std::string action;
  std::map<std::string, std::vector<std::string>> args;
  bool operator==(const StepSignature&) const = default;
};

StepSignature gold_signature(const dml::AnnotatedDialogue& d, const dml::DialogueEvent& e);

struct TurnEval {
  std::string dialogue;
  std::size_t turn = 0;
  std::vector<dml::EntityAnnotation> gold_entities, predicted_entities;
  std::vector<StepSignature> gold, predicted;

  bool action_correct() const;
  bool signature_correct() const;
};

struct AspScore {
  std::size_t turns = 0, action_correct = 0, signature_correct = 0;
  double ap() const;
  double asp() const;
  nlohmann::ordered_json to_json() const;
};

// Turn-level action (AP) and action-signature (ASP) accuracy.
AspScore asp_accuracy(const std::vector<TurnEval>& evals);

using TurnFilter = std::function<bool(const dml::AnnotatedDialogue&, std::size_t user_event)>;

struct EvalOptions {
  bool actions = true;     // also run action prediction and argument filling
  TurnFilter filter;       // turns to score; all when empty
  bool keep_turns = false; // keep per-turn details in the report
};

struct EvalReport {
  std::size_t dialogues = 0;
  SpanScore ner;
  std::map<std::string, SpanScore> ner_by_type;
  AspScore actions;
  std::vector<TurnEval> turns;
  nlohmann::ordered_json to_json() const;
};

// Scores every user turn given the gold history before it. The turn's
// entities come from the tagger; each agent step is the argmax action given
// the gold steps before it, with arguments filled over the tagged mentions.
EvalReport evaluate(const models::ModelBundle& bundle, const std::vector<dml::AnnotatedDialogue>& test,
                    const EvalOptions& opts = {});

// The user utterance at `user_event` mentions a `type` value that an API
// returned earlier in the dialogue and that is not in the type's catalog.
bool mentions_returned_value(const dml::AnnotatedDialogue& d, std::size_t user_event, const dml::DomainSchema& schema,
                             const std::string& type);

// ---- experiments -----------------------------------------------------------

struct Metrics {
  double ner_f1 = 0, ap = 0, asp = 0;
  nlohmann::ordered_json to_json() const;
};

Metrics metrics_of(const EvalReport& r);
double relative_delta(double treatment, double baseline);

struct AblationConfig {
  std::size_t runs = 5;
  std::size_t train_dialogues = 2000;
  std::size_t test_dialogues = 500;
  std::uint64_t seed = 1;
  sim::SimConfig sim;            // shared variation settings; mode and seed are set per corpus
  models::ModelConfig model;
  bool base_for_both = false;    // sanity check: treat both arms as the base sampler
  std::size_t jobs = 1;          // runs in flight at once; results do not depend on it
  nlohmann::ordered_json to_json() const;
};

struct AblationRun {
  std::uint64_t seed = 0;
  Metrics full, base;
};

struct AblationReport {
  std::vector<AblationRun> runs;
  Metrics full_mean, base_mean, full_std, base_std;
  nlohmann::ordered_json config;
  nlohmann::ordered_json to_json() const;
  std::string table() const;
};

using LogFn = std::function<void(const std::string&)>;

// Trains one model set on a full-simulator corpus and one on a base-sampler
// corpus of the same size per run, and scores both on a shared test corpus
// generated by the full simulator from a disjoint seed.
AblationReport run_ablation(const dml::DomainSchema& schema, const std::vector<dml::AnnotatedDialogue>& seeds,
                            const AblationConfig& cfg, const LogFn& log = {});

struct CatalogueAblationConfig {
  std::size_t runs = 3;  // run r uses seed + r for its corpora and model
  std::size_t train_dialogues = 1500;
  std::size_t test_dialogues = 600;
  std::uint64_t seed = 11;
  std::string type = "Movie";
  sim::SimConfig sim;
  // Return values used only when generating the test corpus.
  std::map<std::string, std::vector<std::string>> test_return_overrides;
  models::ModelConfig model;
};

struct CatalogueAblationRun {
  std::uint64_t seed = 0;
  std::size_t turns = 0;
  SpanScore with_dynamic, without_dynamic;
};

// Span counts are pooled over runs.
struct CatalogueAblationReport {
  std::size_t turns = 0;
  SpanScore with_dynamic, without_dynamic;
  std::vector<CatalogueAblationRun> runs;
  nlohmann::ordered_json to_json() const;
};

// Per run, trains the tagger with and without dynamic catalogue features and scores
// `type` spans on test turns that mention a value an API returned earlier
// and that is absent from the type's catalog.
CatalogueAblationReport run_catalogue_ablation(const dml::DomainSchema& schema,
                                               const std::vector<dml::AnnotatedDialogue>& seeds,
                                               const CatalogueAblationConfig& cfg, const LogFn& log = {});

}  // namespace convkit::eval
