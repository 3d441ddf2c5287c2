#include <cmath>

#include "convkit/models/models.hpp"
#include "convkit/text.hpp"

namespace convkit::models {

using nn::Vec;

struct NerModel::Step {
  std::vector<std::size_t> ids;
  std::vector<Vec> xs, outs, em;
  Vec proj;
  nn::SequenceEncoder::Cache cache;
};

NerModel::NerModel(SchemaPtr schema, VocabPtr vocab, const ModelConfig& cfg, std::uint64_t seed)
    : schema_(std::move(schema)), vocab_(std::move(vocab)), cfg_(cfg), store_(seed) {
  for (const auto& t : schema_->entity_types) {
    type_index_[t.name] = types_.size();
    types_.push_back(t.name);
    static_catalogs_.push_back(t.catalog);
  }
  const std::size_t K = types_.size(), h = cfg_.hidden, E = cfg_.embed;
  enc_ = context::ContextEncoder(store_, "ner.ctx", *vocab_, *schema_, cfg_.encoder());
  proj_ = nn::Linear(store_, "ner.proj", enc_.context_dim(), h);
  lstm_ = nn::SequenceEncoder(store_, "ner.lstm", E + 2 * K + h, h, nn::Direction::Bi);
  emit_ = nn::Linear(store_, "ner.emit", lstm_.out_dim(), num_bio_tags(K));
  crf_ = nn::Crf(store_, "ner.crf", num_bio_tags(K));
  mask_bio(crf_, K);
}

void NerModel::forward_step(const context::DialogueIndex& di, std::size_t event, const Vec& ctx,
                            std::mt19937_64* rng, Step& s) const {
  const auto& tokens = di.turn_tokens[di.event_turn[event]];
  const std::size_t K = types_.size(), h = cfg_.hidden;
  Catalogs dynamic(K);
  if (cfg_.dynamic_catalogue) {
    for (auto& [type, values] : session_values(*di.dialogue, event, *schema_)) {
      dynamic[type_index_.at(type)] = values;
    }
  }
  const auto cat = catalogue_features(tokens, static_catalogs_, dynamic, cfg_.catalogue_window,
                                      cfg_.fuzzy_threshold);
  s.ids = enc_.token_ids(tokens, rng);
  if (rng && cfg_.entity_dropout > 0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& e : di.dialogue->events[event].entities) {
      if (u(*rng) >= cfg_.entity_dropout) continue;
      for (std::size_t i = e.start; i < e.end && i < tokens.size(); ++i) s.ids[i] = enc_.vocab().oov_id(tokens[i]);
    }
  }
  s.proj = proj_.forward(ctx);
  for (auto& v : s.proj) v = std::tanh(v);
  s.xs.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Vec w = enc_.words().lookup(s.ids[i]);
    Vec x;
    x.reserve(w.size() + 2 * K + h);
    x.insert(x.end(), w.begin(), w.end());
    x.insert(x.end(), cat.rows[i].begin(), cat.rows[i].end());
    x.insert(x.end(), s.proj.begin(), s.proj.end());
    s.xs.push_back(std::move(x));
  }
  s.outs = lstm_.forward(s.xs, s.cache);
  s.em.clear();
  for (const auto& o : s.outs) s.em.push_back(emit_.forward(o));
}

double NerModel::loss(const context::DialogueIndex& di, bool grad, std::mt19937_64* rng) {
  const auto& d = *di.dialogue;
  std::vector<std::size_t> points;
  for (std::size_t t = 1; t < di.num_turns(); ++t) {
    if (!di.turn_tokens[t].empty()) points.push_back(static_cast<std::size_t>(di.turn_user_event[t]));
  }
  if (points.empty()) return 0.0;
  auto pass = enc_.forward(di, points, grad ? rng : nullptr);
  const std::size_t K = types_.size(), h = cfg_.hidden, E = cfg_.embed;
  double total = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    Step s;
    forward_step(di, points[k], pass->ctx[k], grad ? rng : nullptr, s);
    const auto gold = bio_encode(d.events[points[k]].entities, s.em.size(), type_index_);
    std::vector<Vec> dem;
    total += crf_.nll(s.em, gold, grad ? &dem : nullptr);
    if (!grad) continue;
    const std::size_t L = s.em.size();
    std::vector<Vec> dout(L, Vec(lstm_.out_dim(), 0.0));
    for (std::size_t i = 0; i < L; ++i) emit_.backward(s.outs[i], dem[i], &dout[i]);
    std::vector<Vec> dx(L, Vec(lstm_.in(), 0.0));
    lstm_.backward(s.cache, dout, Vec(), &dx);
    Vec dproj(h, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
      enc_.words().backward(s.ids[i], Vec(dx[i].begin(), dx[i].begin() + static_cast<std::ptrdiff_t>(E)));
      for (std::size_t j = 0; j < h; ++j) dproj[j] += dx[i][E + 2 * K + j];
    }
    for (std::size_t j = 0; j < h; ++j) dproj[j] *= 1.0 - s.proj[j] * s.proj[j];
    Vec dctx(enc_.context_dim(), 0.0);
    proj_.backward(pass->ctx[k], dproj, &dctx);
    pass->d_ctx[k] = std::move(dctx);
  }
  if (grad) enc_.backward(*pass);
  return total;
}

std::vector<Vec> NerModel::emissions(const context::DialogueIndex& di, std::size_t event) const {
  if (event >= di.dialogue->events.size() || di.dialogue->events[event].kind != dml::EventKind::UserUtterance) {
    throw ModelError("tagging point is not a user utterance");
  }
  if (di.turn_tokens[di.event_turn[event]].empty()) return {};
  auto pass = enc_.forward(di, {event});
  Step s;
  forward_step(di, event, pass->ctx[0], nullptr, s);
  return s.em;
}

std::vector<dml::EntityAnnotation> NerModel::tag(const context::DialogueIndex& di, std::size_t event) const {
  const auto em = emissions(di, event);
  if (em.empty()) return {};
  return bio_decode(crf_.viterbi(em).first, types_);
}

}  // namespace convkit::models
