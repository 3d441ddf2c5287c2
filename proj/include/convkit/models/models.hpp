#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convkit/context/context.hpp"
#include "convkit/context/vocab.hpp"
#include "convkit/dml/dialogue.hpp"
#include "convkit/dml/schema.hpp"
#include "convkit/nn/crf.hpp"
#include "convkit/nn/layers.hpp"
#include "convkit/nn/optim.hpp"

namespace convkit::models {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t hidden = 64;
  std::size_t embed = 32;
  std::size_t window = context::kDefaultWindow;
  std::size_t catalogue_window = 6;
  double fuzzy_threshold = 0.8;
  bool dynamic_catalogue = true;
  double word_dropout = 0.05;
  // Tagger training only: every token of a gold span becomes out-of-vocabulary
  // together, so spans are also learned from catalogue features and context.
  double entity_dropout = 0.25;
  std::size_t epochs = 10;
  nn::AdamConfig adam;
  std::uint64_t seed = 1;
  double tau_high = 0.7;
  double tau_low = 0.3;
  std::string fallback = "cannot_handle";
  std::size_t action_cap = 8;

  void check() const;
  context::EncoderConfig encoder() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// ---- catalogue features -------------------------------------------------

// One column per catalogue: static columns first, then dynamic ones.
struct CatalogueFeatures {
  std::size_t num_static = 0, num_dynamic = 0;
  std::vector<nn::Vec> rows;  // per token
};

using Catalogs = std::vector<std::vector<std::string>>;

// Every window of 1..n tokens that equals a catalogue entry (case-folded)
// flags its tokens in that catalogue's column. Dynamic catalogues also
// accept windows whose similarity to an entry reaches `fuzzy_threshold`.
CatalogueFeatures catalogue_features(const std::vector<std::string>& tokens, const Catalogs& static_catalogs,
                                     const Catalogs& dynamic_catalogs, std::size_t n, double fuzzy_threshold);

// Values the agent referred to or APIs returned among events [0, prefix),
// per entity type, in order of first appearance.
std::map<std::string, std::vector<std::string>> session_values(const dml::AnnotatedDialogue& d,
                                                              std::size_t prefix,
                                                              const dml::DomainSchema& schema);

// ---- BIO tagging ---------------------------------------------------------

// Tag 0 is O; entity type i has B = 1 + 2i and I = 2 + 2i.
std::size_t num_bio_tags(std::size_t num_types);
std::vector<std::string> bio_tag_names(const std::vector<std::string>& types);
// I-x only after B-x or I-x, and never first.
void mask_bio(nn::Crf& crf, std::size_t num_types);
std::vector<std::size_t> bio_encode(const std::vector<dml::EntityAnnotation>& ents, std::size_t length,
                                    const std::map<std::string, std::size_t>& type_index);
// Spans of a tag path; a stray I starts a new span (masked paths never have one).
std::vector<dml::EntityAnnotation> bio_decode(const std::vector<std::size_t>& path,
                                              const std::vector<std::string>& types);

// ---- models ----------------------------------------------------------------

using SchemaPtr = std::shared_ptr<const dml::DomainSchema>;
using VocabPtr = std::shared_ptr<const context::Vocabulary>;

// Bi-directional recurrent tagger with a CRF output layer. Each token sees
// its word embedding, its catalogue features and a projection of the
// dialogue context before the utterance.
class NerModel {
 public:
  NerModel(SchemaPtr schema, VocabPtr vocab, const ModelConfig& cfg, std::uint64_t seed);

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const std::vector<std::string>& types() const { return types_; }
  const nn::Crf& crf() const { return crf_; }

  // CRF negative log-likelihood summed over the user utterances of the
  // dialogue. With `grad`, accumulates parameter gradients.
  double loss(const context::DialogueIndex& di, bool grad, std::mt19937_64* dropout_rng = nullptr);
  // Entity spans for the user utterance at `event`; variables are left empty.
  std::vector<dml::EntityAnnotation> tag(const context::DialogueIndex& di, std::size_t event) const;
  std::vector<nn::Vec> emissions(const context::DialogueIndex& di, std::size_t event) const;

 private:
  struct Step;
  void forward_step(const context::DialogueIndex& di, std::size_t event, const nn::Vec& ctx,
                    std::mt19937_64* rng, Step& s) const;

  SchemaPtr schema_;
  VocabPtr vocab_;
  ModelConfig cfg_;
  nn::ParamStore store_;
  std::vector<std::string> types_;
  std::map<std::string, std::size_t> type_index_;
  Catalogs static_catalogs_;
  context::ContextEncoder enc_;
  nn::Linear proj_, emit_;
  nn::SequenceEncoder lstm_;
  nn::Crf crf_;
};

// Next-action classifier over schema actions plus end-of-turn and
// end-of-dialogue.
class ActionModel {
 public:
  ActionModel(SchemaPtr schema, VocabPtr vocab, const ModelConfig& cfg, std::uint64_t seed);

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const std::vector<std::string>& actions() const { return actions_; }
  std::size_t action_index(const std::string& name) const;

  // Cross-entropy of every agent event after the opening turn.
  double loss(const context::DialogueIndex& di, bool grad, std::mt19937_64* dropout_rng = nullptr);
  // Distribution over actions() for each prefix length.
  std::vector<nn::Vec> predict(const context::DialogueIndex& di, const std::vector<std::size_t>& points) const;
  nn::Vec predict(const context::DialogueIndex& di, std::size_t point) const;

 private:
  SchemaPtr schema_;
  VocabPtr vocab_;
  ModelConfig cfg_;
  nn::ParamStore store_;
  std::vector<std::string> actions_;
  std::map<std::string, std::size_t> index_;
  context::ContextEncoder enc_;
  nn::Linear hidden_, out_;
};

struct ArgFill {
  std::string arg;
  std::vector<std::size_t> positions;             // into the context mention list
  std::vector<context::EntityMention> mentions;  // the chosen mentions
  bool unfilled = false;                         // optional arg left out
  bool missing = false;                          // required arg without a compatible mention
  nn::Vec scores;                                // per position, optional token last; masked = -inf
};

struct ActionSignature {
  std::string action;
  std::vector<ArgFill> args;

  const ArgFill* missing() const;
  const ArgFill* find(const std::string& arg) const;
};

// The pointer decision rule over raw scores (`scores[a]` has one entry per
// mention plus the optional token). Mentions of another type are masked;
// optional and multi-valued args also consider the optional token; a
// multi-valued arg takes every mention scoring above the optional token.
ActionSignature decide_arguments(const std::string& action, const std::vector<dml::ArgDef>& args,
                                 const std::vector<context::EntityMention>& mentions,
                                 const std::vector<nn::Vec>& scores);

// Pointer network: each mention encoding is scored against a projection of
// [action embedding; (action, argument) embedding; context].
class ArgumentModel {
 public:
  ArgumentModel(SchemaPtr schema, VocabPtr vocab, const ModelConfig& cfg, std::uint64_t seed);

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  double loss(const context::DialogueIndex& di, bool grad, std::mt19937_64* dropout_rng = nullptr);
  ActionSignature fill(const context::DialogueIndex& di, std::size_t point, const std::string& action) const;
  std::vector<ActionSignature> fill(const context::DialogueIndex& di, const std::vector<std::size_t>& points,
                                    const std::vector<std::string>& actions) const;

 private:
  std::size_t pair_id(const std::string& action, const std::string& arg) const;
  nn::Vec query(std::size_t action, std::size_t pair, const nn::Vec& ctx) const;

  SchemaPtr schema_;
  VocabPtr vocab_;
  ModelConfig cfg_;
  nn::ParamStore store_;
  std::vector<std::string> actions_;
  std::map<std::string, std::size_t> action_index_;
  std::map<std::pair<std::string, std::string>, std::size_t> pairs_;
  context::ContextEncoder enc_;
  nn::Embedding action_emb_, pair_emb_;
  nn::Linear bilinear_;
};

// ---- action selection ---------------------------------------------------------

enum class Bin { High, Medium, Low };
std::string_view bin_name(Bin b);
Bin bin_of(double p, double tau_high, double tau_low);

struct Selection {
  std::optional<std::size_t> index;  // empty: every action was rejected
  Bin bin = Bin::Low;
};

// Highest action at or above tau_high; otherwise a draw among the actions in
// [tau_low, tau_high) proportional to their probability; otherwise none.
Selection select_action(const nn::Vec& dist, double tau_high, double tau_low, std::mt19937_64& rng);

// ---- bundle and training -------------------------------------------------------

struct ModelBundle {
  SchemaPtr schema;
  VocabPtr vocab;
  ModelConfig config;
  std::unique_ptr<NerModel> ner;
  std::unique_ptr<ActionModel> actions;
  std::unique_ptr<ArgumentModel> arguments;

  // Freshly initialized models.
  static ModelBundle create(SchemaPtr schema, VocabPtr vocab, const ModelConfig& cfg);

  // Directory with ner.ckpt, action.ckpt, argument.ckpt, vocab.json,
  // schema.json and bundle.json (fingerprint and config).
  void save(const std::filesystem::path& dir) const;
  static ModelBundle load(const std::filesystem::path& dir);
  // Also checks the stored fingerprint against `runtime_schema`.
  static ModelBundle load(const std::filesystem::path& dir, const dml::DomainSchema& runtime_schema);
};

struct EpochLoss {
  std::size_t epoch = 0;
  double ner = 0, action = 0, argument = 0;  // mean per dialogue
};

struct TrainReport {
  std::size_t dialogues = 0;
  std::vector<EpochLoss> epochs;
  nlohmann::ordered_json heldout;  // null unless a held-out set was given
  nlohmann::ordered_json to_json() const;
};

using ProgressFn = std::function<void(const EpochLoss&)>;

enum ModelPart : unsigned { kNerPart = 1, kActionPart = 2, kArgumentPart = 4, kAllParts = 7 };

struct TrainOptions {
  unsigned parts = kAllParts;  // models left out keep their initial weights
  const std::vector<dml::AnnotatedDialogue>* heldout = nullptr;
  ProgressFn progress;
};

// Trains the models separately, one optimizer step per dialogue and model,
// visiting dialogues in a seeded shuffled order each epoch. Throws
// ModelError for an empty corpus or a dialogue the schema rejects.
ModelBundle train_models(const std::vector<dml::AnnotatedDialogue>& corpus, const dml::DomainSchema& schema,
                         const ModelConfig& cfg, TrainReport* report = nullptr, const TrainOptions& opts = {});

}  // namespace convkit::models
