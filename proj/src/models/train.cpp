#include <algorithm>
#include <numeric>

#include "convkit/dml/validate.hpp"
#include "convkit/eval/eval.hpp"
#include "convkit/models/models.hpp"

namespace convkit::models {

nlohmann::ordered_json TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["dialogues"] = dialogues;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    j["epochs"].push_back({{"epoch", e.epoch}, {"ner", e.ner}, {"action", e.action}, {"argument", e.argument}});
  }
  j["heldout"] = heldout;
  return j;
}

ModelBundle train_models(const std::vector<dml::AnnotatedDialogue>& corpus, const dml::DomainSchema& schema,
                         const ModelConfig& cfg, TrainReport* report, const TrainOptions& opts) {
  cfg.check();
  if (corpus.empty()) throw ModelError("empty training corpus");
  for (const auto& d : corpus) {
    auto rep = dml::validate_dialogue(d, schema);
    if (!rep.ok()) {
      throw ModelError("dialogue '" + d.id + "' does not match the schema: " + rep.findings.front().message);
    }
  }
  auto schema_ptr = std::make_shared<const dml::DomainSchema>(schema);
  auto vocab = std::make_shared<const context::Vocabulary>(context::Vocabulary::build(schema, {&corpus}));
  auto bundle = ModelBundle::create(schema_ptr, vocab, cfg);

  std::vector<context::DialogueIndex> index;
  index.reserve(corpus.size());
  for (const auto& d : corpus) index.push_back(context::index_dialogue(d, cfg.window));

  nn::Adam ner_opt(bundle.ner->params(), cfg.adam);
  nn::Adam ap_opt(bundle.actions->params(), cfg.adam);
  nn::Adam af_opt(bundle.arguments->params(), cfg.adam);
  std::mt19937_64 order_rng(cfg.seed ^ 0x5eedULL);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xd409ULL);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport rep;
  rep.dialogues = corpus.size();
  const double n = static_cast<double>(corpus.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochLoss el;
    el.epoch = epoch;
    for (auto i : order) {
      if (opts.parts & kNerPart) {
        el.ner += bundle.ner->loss(index[i], true, &dropout_rng) / n;
        ner_opt.step();
      }
      if (opts.parts & kActionPart) {
        el.action += bundle.actions->loss(index[i], true, &dropout_rng) / n;
        ap_opt.step();
      }
      if (opts.parts & kArgumentPart) {
        el.argument += bundle.arguments->loss(index[i], true, &dropout_rng) / n;
        af_opt.step();
      }
    }
    rep.epochs.push_back(el);
    if (opts.progress) opts.progress(el);
  }
  if (opts.heldout) {
    eval::EvalOptions eo;
    eo.actions = (opts.parts & (kActionPart | kArgumentPart)) != 0;
    rep.heldout = eval::evaluate(bundle, *opts.heldout, eo).to_json();
  }
  if (report) *report = std::move(rep);
  return bundle;
}

}  // namespace convkit::models
