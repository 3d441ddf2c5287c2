#include <cmath>

#include "convkit/models/models.hpp"

namespace convkit::models {

using nn::Vec;

ActionModel::ActionModel(SchemaPtr schema, VocabPtr vocab, const ModelConfig& cfg, std::uint64_t seed)
    : schema_(std::move(schema)), vocab_(std::move(vocab)), cfg_(cfg), store_(seed) {
  actions_ = schema_->action_names();
  for (std::size_t i = 0; i < actions_.size(); ++i) index_[actions_[i]] = i;
  enc_ = context::ContextEncoder(store_, "ap.ctx", *vocab_, *schema_, cfg_.encoder());
  hidden_ = nn::Linear(store_, "ap.hidden", enc_.context_dim(), cfg_.hidden);
  out_ = nn::Linear(store_, "ap.out", cfg_.hidden, actions_.size());
}

std::size_t ActionModel::action_index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown action '" + name + "'");
  return it->second;
}

double ActionModel::loss(const context::DialogueIndex& di, bool grad, std::mt19937_64* rng) {
  const auto& d = *di.dialogue;
  std::vector<std::size_t> points;
  for (auto e : di.agent_events) {
    if (di.event_turn[e] >= 1) points.push_back(e);
  }
  if (points.empty()) return 0.0;
  auto pass = enc_.forward(di, points, grad ? rng : nullptr);
  double total = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    Vec z = hidden_.forward(pass->ctx[k]);
    for (auto& v : z) v = std::tanh(v);
    const Vec logits = out_.forward(z);
    Vec dlogits;
    total += nn::softmax_cross_entropy(logits, action_index(d.events[points[k]].action_name()), &dlogits);
    if (!grad) continue;
    Vec dz(z.size(), 0.0);
    out_.backward(z, dlogits, &dz);
    for (std::size_t i = 0; i < z.size(); ++i) dz[i] *= 1.0 - z[i] * z[i];
    Vec dctx(enc_.context_dim(), 0.0);
    hidden_.backward(pass->ctx[k], dz, &dctx);
    pass->d_ctx[k] = std::move(dctx);
  }
  if (grad) enc_.backward(*pass);
  return total;
}

std::vector<Vec> ActionModel::predict(const context::DialogueIndex& di, const std::vector<std::size_t>& points) const {
  if (points.empty()) return {};
  auto pass = enc_.forward(di, points);
  std::vector<Vec> out;
  for (const auto& ctx : pass->ctx) {
    Vec z = hidden_.forward(ctx);
    for (auto& v : z) v = std::tanh(v);
    out.push_back(nn::softmax(out_.forward(z)));
  }
  return out;
}

Vec ActionModel::predict(const context::DialogueIndex& di, std::size_t point) const {
  return predict(di, std::vector<std::size_t>{point}).front();
}

}  // namespace convkit::models
