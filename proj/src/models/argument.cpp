#include <cmath>
#include <limits>

#include "convkit/models/models.hpp"

namespace convkit::models {

using nn::Vec;

namespace {

constexpr double kMasked = -std::numeric_limits<double>::infinity();

const std::vector<dml::ArgDef>& args_of(const dml::DomainSchema& schema, const std::string& action) {
  static const std::vector<dml::ArgDef> none;
  const auto* a = schema.action_args(action);
  return a ? *a : none;
}

}  // namespace

const ArgFill* ActionSignature::missing() const {
  for (const auto& a : args) {
    if (a.missing) return &a;
  }
  return nullptr;
}

const ArgFill* ActionSignature::find(const std::string& arg) const {
  for (const auto& a : args) {
    if (a.arg == arg) return &a;
  }
  return nullptr;
}

ActionSignature decide_arguments(const std::string& action, const std::vector<dml::ArgDef>& args,
                                 const std::vector<context::EntityMention>& mentions,
                                 const std::vector<Vec>& scores) {
  if (scores.size() != args.size()) throw ModelError("one score vector per argument expected");
  ActionSignature sig;
  sig.action = action;
  const std::size_t M = mentions.size();
  for (std::size_t a = 0; a < args.size(); ++a) {
    const auto& def = args[a];
    const Vec& raw = scores[a];
    if (raw.size() != M + 1) throw ModelError("score vector must cover every mention and the optional token");
    ArgFill f;
    f.arg = def.name;
    f.scores.assign(M + 1, kMasked);
    std::vector<std::size_t> compat;
    for (std::size_t j = 0; j < M; ++j) {
      if (mentions[j].entity_type == def.entity_type) {
        compat.push_back(j);
        f.scores[j] = raw[j];
      }
    }
    const bool use_optional = !def.required || def.multi_valued;
    if (use_optional) f.scores[M] = raw[M];
    auto argmax = [&] {
      std::size_t best = compat.front();
      for (auto j : compat) {
        if (raw[j] > raw[best]) best = j;
      }
      return best;
    };
    if (compat.empty()) {
      (def.required ? f.missing : f.unfilled) = true;
    } else if (def.multi_valued) {
      for (auto j : compat) {
        if (raw[j] > raw[M]) f.positions.push_back(j);
      }
      if (f.positions.empty()) {
        if (def.required) {
          f.positions.push_back(argmax());
        } else {
          f.unfilled = true;
        }
      }
    } else {
      const std::size_t best = argmax();
      if (!def.required && raw[M] >= raw[best]) {
        f.unfilled = true;
      } else {
        f.positions.push_back(best);
      }
    }
    for (auto j : f.positions) f.mentions.push_back(mentions[j]);
    sig.args.push_back(std::move(f));
  }
  return sig;
}

ArgumentModel::ArgumentModel(SchemaPtr schema, VocabPtr vocab, const ModelConfig& cfg, std::uint64_t seed)
    : schema_(std::move(schema)), vocab_(std::move(vocab)), cfg_(cfg), store_(seed) {
  actions_ = schema_->action_names();
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    action_index_[actions_[i]] = i;
    for (const auto& a : args_of(*schema_, actions_[i])) {
      pairs_.emplace(std::make_pair(actions_[i], a.name), pairs_.size());
    }
  }
  const std::size_t h = cfg_.hidden;
  enc_ = context::ContextEncoder(store_, "af.ctx", *vocab_, *schema_, cfg_.encoder());
  action_emb_ = nn::Embedding(store_, "af.action", actions_.size(), h);
  pair_emb_ = nn::Embedding(store_, "af.pair", std::max<std::size_t>(pairs_.size(), 1), h);
  bilinear_ = nn::Linear(store_, "af.bilinear", 2 * h + enc_.context_dim(), h, false);
}

std::size_t ArgumentModel::pair_id(const std::string& action, const std::string& arg) const {
  return pairs_.at({action, arg});
}

Vec ArgumentModel::query(std::size_t action, std::size_t pair, const Vec& ctx) const {
  const Vec a = action_emb_.lookup(action), p = pair_emb_.lookup(pair);
  return nn::concat({&a, &p, &ctx});
}

double ArgumentModel::loss(const context::DialogueIndex& di, bool grad, std::mt19937_64* rng) {
  const auto& d = *di.dialogue;
  std::vector<std::size_t> points;
  for (auto e : di.agent_events) {
    if (di.event_turn[e] >= 1 && !args_of(*schema_, d.events[e].action_name()).empty()) points.push_back(e);
  }
  if (points.empty()) return 0.0;
  auto pass = enc_.forward(di, points, grad ? rng : nullptr);
  const std::size_t h = cfg_.hidden;
  double total = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& ev = d.events[points[k]];
    const std::string action = ev.action_name();
    const auto& ids = pass->mention_ids[k];
    const auto& ms = pass->mentions[k];
    const std::size_t M = ids.size();
    Vec dctx;
    for (const auto& def : args_of(*schema_, action)) {
      const auto* b = ev.find_arg(def.name);
      if (b && b->value.literal) continue;
      std::vector<std::size_t> compat;
      for (std::size_t j = 0; j < M; ++j) {
        if (di.mentions[ids[j]].entity_type == def.entity_type) compat.push_back(j);
      }
      if (compat.empty()) continue;
      // Gold: the latest visible mention of each bound variable.
      std::vector<std::size_t> gold;
      bool resolvable = true;
      if (b) {
        for (const auto& var : b->value.items) {
          std::optional<std::size_t> pos;
          for (auto j : compat) {
            if (di.mentions[ids[j]].variable == var) pos = j;
          }
          if (!pos) {
            resolvable = false;
            break;
          }
          gold.push_back(*pos);
        }
      } else if (def.required) {
        resolvable = false;
      }
      if (!resolvable) continue;

      const std::size_t a_id = action_index_.at(action), p_id = pair_id(action, def.name);
      const Vec x = query(a_id, p_id, pass->ctx[k]);
      const Vec q = bilinear_.forward(x);
      auto score = [&](std::size_t j) { return nn::dot(ms[j].data(), q.data(), h); };
      std::vector<std::pair<std::size_t, double>> ds;  // mention position -> dloss/dscore

      if (def.multi_valued) {
        const double s_opt = score(M);
        double d_opt = 0.0;
        for (auto j : compat) {
          const double y = std::find(gold.begin(), gold.end(), j) != gold.end() ? 1.0 : 0.0;
          const double z = score(j) - s_opt;
          // -[y log s(z) + (1-y) log(1-s(z))], computed stably
          total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
          const double g = nn::sigmoid(z) - y;
          ds.emplace_back(j, g);
          d_opt -= g;
        }
        ds.emplace_back(M, d_opt);
      } else {
        std::vector<std::size_t> cand = compat;
        if (!def.required) cand.push_back(M);
        const std::size_t target = gold.empty() ? M : gold.front();
        std::size_t gi = 0;
        Vec logits;
        for (std::size_t c = 0; c < cand.size(); ++c) {
          logits.push_back(score(cand[c]));
          if (cand[c] == target) gi = c;
        }
        if (cand.size() < 2) continue;
        Vec dl;
        total += nn::softmax_cross_entropy(logits, gi, &dl);
        for (std::size_t c = 0; c < cand.size(); ++c) ds.emplace_back(cand[c], dl[c]);
      }
      if (!grad) continue;
      Vec dq(h, 0.0);
      for (auto [j, g] : ds) {
        nn::axpy(g, ms[j].data(), dq.data(), h);
        auto& dm = pass->d_mentions[k][j];
        if (dm.empty()) dm.assign(h, 0.0);
        nn::axpy(g, q.data(), dm.data(), h);
      }
      Vec dx(x.size(), 0.0);
      bilinear_.backward(x, dq, &dx);
      action_emb_.backward(a_id, Vec(dx.begin(), dx.begin() + static_cast<std::ptrdiff_t>(h)));
      pair_emb_.backward(p_id, Vec(dx.begin() + static_cast<std::ptrdiff_t>(h), dx.begin() + static_cast<std::ptrdiff_t>(2 * h)));
      if (dctx.empty()) dctx.assign(enc_.context_dim(), 0.0);
      for (std::size_t i = 0; i < dctx.size(); ++i) dctx[i] += dx[2 * h + i];
    }
    if (grad && !dctx.empty()) pass->d_ctx[k] = std::move(dctx);
  }
  if (grad) enc_.backward(*pass);
  return total;
}

std::vector<ActionSignature> ArgumentModel::fill(const context::DialogueIndex& di, const std::vector<std::size_t>& points,
                                                 const std::vector<std::string>& actions) const {
  if (points.size() != actions.size()) throw ModelError("one action per point expected");
  for (const auto& a : actions) {
    if (!action_index_.count(a)) throw ModelError("unknown action '" + a + "'");
  }
  if (points.empty()) return {};
  auto pass = enc_.forward(di, points);
  const std::size_t h = cfg_.hidden;
  std::vector<ActionSignature> out;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& args = args_of(*schema_, actions[k]);
    const auto& ids = pass->mention_ids[k];
    std::vector<context::EntityMention> mentions;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      mentions.push_back(di.mentions[ids[j]]);
      mentions.back().position = j;
    }
    std::vector<Vec> scores;
    for (const auto& def : args) {
      const Vec q = bilinear_.forward(query(action_index_.at(actions[k]), pair_id(actions[k], def.name), pass->ctx[k]));
      Vec s;
      for (const auto& m : pass->mentions[k]) s.push_back(nn::dot(m.data(), q.data(), h));
      scores.push_back(std::move(s));
    }
    out.push_back(decide_arguments(actions[k], args, mentions, scores));
  }
  return out;
}

ActionSignature ArgumentModel::fill(const context::DialogueIndex& di, std::size_t point, const std::string& action) const {
  return fill(di, std::vector<std::size_t>{point}, std::vector<std::string>{action}).front();
}

}  // namespace convkit::models
