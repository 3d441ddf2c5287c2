#include <set>

#include "convkit/models/models.hpp"

namespace convkit::models {

void ModelConfig::check() const {
  if (hidden == 0 || embed == 0) throw ModelError("hidden and embed sizes must be positive");
  if (window == 0) throw ModelError("history window must be at least 1");
  if (catalogue_window == 0) throw ModelError("catalogue window must be at least 1");
  if (fuzzy_threshold < 0 || fuzzy_threshold > 1) throw ModelError("fuzzy threshold must be in [0,1]");
  if (word_dropout < 0 || word_dropout >= 1) throw ModelError("word dropout must be in [0,1)");
  if (entity_dropout < 0 || entity_dropout > 1) throw ModelError("entity dropout must be in [0,1]");
  if (!(0.0 <= tau_low && tau_low <= tau_high && tau_high <= 1.0)) {
    throw ModelError("confidence thresholds must satisfy 0 <= tau_low <= tau_high <= 1");
  }
  if (action_cap == 0) throw ModelError("action cap must be at least 1");
  if (adam.learning_rate <= 0) throw ModelError("learning rate must be positive");
}

context::EncoderConfig ModelConfig::encoder() const {
  context::EncoderConfig e;
  e.hidden = hidden;
  e.embed = embed;
  e.window = window;
  e.word_dropout = word_dropout;
  return e;
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["hidden"] = hidden;
  j["embed"] = embed;
  j["window"] = window;
  j["catalogue_window"] = catalogue_window;
  j["fuzzy_threshold"] = fuzzy_threshold;
  j["dynamic_catalogue"] = dynamic_catalogue;
  j["word_dropout"] = word_dropout;
  j["entity_dropout"] = entity_dropout;
  j["epochs"] = epochs;
  j["learning_rate"] = adam.learning_rate;
  j["clip_norm"] = adam.clip_norm;
  j["seed"] = seed;
  j["tau_high"] = tau_high;
  j["tau_low"] = tau_low;
  j["fallback"] = fallback;
  j["action_cap"] = action_cap;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (!j.is_object()) throw ModelError("model config must be a JSON object");
  static const std::set<std::string> known{"hidden",  "embed", "window",   "catalogue_window", "fuzzy_threshold",
                                           "dynamic_catalogue", "word_dropout", "entity_dropout", "epochs", "learning_rate",
                                           "clip_norm", "seed",  "tau_high", "tau_low", "fallback", "action_cap"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ModelError("unknown model config field '" + it.key() + "'");
  }
  try {
    c.hidden = j.value("hidden", c.hidden);
    c.embed = j.value("embed", c.embed);
    c.window = j.value("window", c.window);
    c.catalogue_window = j.value("catalogue_window", c.catalogue_window);
    c.fuzzy_threshold = j.value("fuzzy_threshold", c.fuzzy_threshold);
    c.dynamic_catalogue = j.value("dynamic_catalogue", c.dynamic_catalogue);
    c.word_dropout = j.value("word_dropout", c.word_dropout);
    c.entity_dropout = j.value("entity_dropout", c.entity_dropout);
    c.epochs = j.value("epochs", c.epochs);
    c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
    c.adam.clip_norm = j.value("clip_norm", c.adam.clip_norm);
    c.seed = j.value("seed", c.seed);
    c.tau_high = j.value("tau_high", c.tau_high);
    c.tau_low = j.value("tau_low", c.tau_low);
    c.fallback = j.value("fallback", c.fallback);
    c.action_cap = j.value("action_cap", c.action_cap);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("bad model config: ") + e.what());
  }
  c.check();
  return c;
}

}  // namespace convkit::models
