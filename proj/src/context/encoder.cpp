#include <algorithm>
#include <cmath>
#include <set>

#include "convkit/context/context.hpp"
#include "convkit/text.hpp"

namespace convkit::context {

using nn::axpy;
using nn::Vec;

namespace {

constexpr std::size_t kDistBuckets = 4, kRankBuckets = 3, kCallBuckets = 3;
// source(2) + distance + rank + used_in_call + agent_mentioned + calls_since + in_current_utterance
constexpr std::size_t kExtraFeatures = 2 + kDistBuckets + kRankBuckets + 1 + 1 + kCallBuckets + 1;

void add_into(Vec& dst, const double* src, std::size_t n, double scale = 1.0) {
  if (dst.empty()) dst.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) dst[i] += scale * src[i];
}

bool all_zero(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

ContextEncoder::ContextEncoder(nn::ParamStore& store, const std::string& name, const Vocabulary& vocab,
                               const dml::DomainSchema& schema, EncoderConfig cfg)
    : vocab_(&vocab), cfg_(cfg), inventory_(schema) {
  for (std::size_t i = 0; i < schema.entity_types.size(); ++i) types_[schema.entity_types[i].name] = i;
  const std::size_t h = cfg_.hidden, E = cfg_.embed;
  words_ = nn::Embedding(store, name + ".word", vocab.size(), E);
  action_emb_ = nn::Embedding(store, name + ".action", inventory_.num_inputs(), E);
  inner_ = nn::Lstm(store, name + ".inner", E, h);
  outer_ = nn::Lstm(store, name + ".outer", h, h);
  actions_ = nn::Lstm(store, name + ".actions", E, h);
  mention_ = nn::Linear(store, name + ".mention", feature_dim(), h);
  optional_ = &store.add_uniform(name + ".optional", {h}, h);
}

std::size_t ContextEncoder::feature_dim() const { return cfg_.embed + types_.size() + kExtraFeatures; }

std::vector<std::size_t> ContextEncoder::token_ids(const std::vector<std::string>& tokens,
                                                   std::mt19937_64* rng) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& t : tokens) {
    if (rng && cfg_.word_dropout > 0 && u(*rng) < cfg_.word_dropout) {
      ids.push_back(vocab_->oov_id(t));
    } else {
      ids.push_back(vocab_->id(t));
    }
  }
  return ids;
}

void ContextEncoder::mention_features(const DialogueIndex& di, std::size_t p, const std::vector<std::size_t>& ids,
                                      const std::vector<std::vector<std::size_t>>& mtok,
                                      std::vector<Vec>& out) const {
  const std::size_t E = cfg_.embed, K = types_.size();
  const std::size_t t = di.turn_of_prefix(p);
  // Rank among same-type mentions, most recent first.
  std::map<std::string, std::size_t> seen_of_type;
  std::vector<std::size_t> rank(ids.size());
  for (std::size_t j = ids.size(); j-- > 0;) rank[j] = seen_of_type[di.mentions[ids[j]].entity_type]++;
  out.assign(ids.size(), Vec());
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const auto& m = di.mentions[ids[j]];
    Vec f(feature_dim(), 0.0);
    const auto& toks = mtok[ids[j]];
    for (auto id : toks) axpy(1.0, words_.table().value.row(id), f.data(), E);
    if (!toks.empty()) {
      for (std::size_t k = 0; k < E; ++k) f[k] /= static_cast<double>(toks.size());
    }
    std::size_t o = E;
    f[o + types_.at(m.entity_type)] = 1.0;
    o += K;
    f[o + (m.source == Source::User ? 0 : 1)] = 1.0;
    o += 2;
    f[o + std::min(t - m.turn, kDistBuckets - 1)] = 1.0;
    o += kDistBuckets;
    f[o + std::min(rank[j], kRankBuckets - 1)] = 1.0;
    o += kRankBuckets;
    if (!m.variable.empty()) {
      if (auto it = di.first_call_use.find(m.variable); it != di.first_call_use.end() && it->second < p) f[o] = 1.0;
      if (auto it = di.first_nlg_use.find(m.variable); it != di.first_nlg_use.end() && it->second < p) f[o + 1] = 1.0;
    }
    o += 2;
    const std::size_t since = di.calls_before[p] - di.calls_before[m.event + 1];
    f[o + std::min(since, kCallBuckets - 1)] = 1.0;
    o += kCallBuckets;
    if (m.source == Source::User && m.turn == t) f[o] = 1.0;
    out[j] = std::move(f);
  }
}

std::unique_ptr<ContextEncoder::Pass> ContextEncoder::forward(const DialogueIndex& di,
                                                              const std::vector<std::size_t>& points,
                                                              std::mt19937_64* rng) const {
  const std::size_t h = cfg_.hidden, K = types_.size();
  const auto& d = *di.dialogue;
  auto pass = std::make_unique<Pass>();
  pass->index = &di;
  pass->points = points;
  pass->cache.resize(points.size());

  // Which utterances, outer steps and action steps the points need.
  std::set<std::size_t> turns;
  std::map<std::size_t, std::size_t> outer_len, act_len;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const std::size_t p = points[k];
    if (p > d.events.size()) throw nn::NumericError("context point beyond the end of the dialogue");
    auto& pc = pass->cache[k];
    pc.turn = di.turn_of_prefix(p);
    const std::size_t ws = di.window_start(pc.turn);
    if (pc.turn >= 1) turns.insert(pc.turn);
    const std::size_t s = std::max<std::size_t>(1, ws);
    if (pc.turn > s) {
      for (std::size_t u = s; u < pc.turn; ++u) turns.insert(u);
      pc.utt_run = s;
      pc.utt_pos = static_cast<std::ptrdiff_t>(pc.turn - s) - 1;
      outer_len[s] = std::max(outer_len[s], pc.turn - s);
    }
    std::size_t c = 0;
    for (auto e : di.agent_events) {
      if (e >= p) break;
      if (di.event_turn[e] >= ws) ++c;
    }
    if (c) {
      pc.act_run = ws;
      pc.act_pos = static_cast<std::ptrdiff_t>(c) - 1;
      act_len[ws] = std::max(act_len[ws], c);
    }
  }

  for (auto u : turns) {
    auto ids = token_ids(di.turn_tokens[u], rng);
    std::vector<Vec> xs;
    for (auto id : ids) xs.push_back(words_.lookup(id));
    inner_.forward(xs, pass->inner[u]);
    pass->token_ids[u] = std::move(ids);
  }
  auto utt_vec = [&](std::size_t u) {
    const auto& c = pass->inner.at(u);
    return c.h.empty() ? Vec(h, 0.0) : c.h.back();
  };

  for (auto [s, len] : outer_len) {
    auto& run = pass->outer[s];
    std::vector<Vec> xs;
    for (std::size_t i = 0; i < len; ++i) {
      run.items.push_back(s + i);
      xs.push_back(utt_vec(s + i));
    }
    outer_.forward(xs, run.cache);
    run.dh.assign(len, Vec());
  }
  for (auto [ws, len] : act_len) {
    auto& run = pass->acts[ws];
    std::vector<Vec> xs;
    for (auto e : di.agent_events) {
      if (run.items.size() == len) break;
      if (di.event_turn[e] < ws) continue;
      run.items.push_back(e);
      xs.push_back(action_emb_.lookup(inventory_.input_id(d.events[e])));
    }
    actions_.forward(xs, run.cache);
    run.dh.assign(len, Vec());
  }

  pass->mention_token_ids.resize(di.mentions.size());
  for (std::size_t i = 0; i < di.mentions.size(); ++i) {
    pass->mention_token_ids[i] = token_ids(text::fold_tokens(di.mentions[i].value), nullptr);
  }

  pass->ctx.resize(points.size());
  pass->mention_ids.resize(points.size());
  pass->mentions.resize(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const std::size_t p = points[k];
    auto& pc = pass->cache[k];
    Vec ctx(context_dim(), 0.0);
    if (pc.turn >= 1) {
      auto u = utt_vec(pc.turn);
      std::copy(u.begin(), u.end(), ctx.begin());
    }
    if (pc.utt_pos >= 0) {
      const auto& hv = pass->outer.at(pc.utt_run).cache.h[static_cast<std::size_t>(pc.utt_pos)];
      std::copy(hv.begin(), hv.end(), ctx.begin() + static_cast<std::ptrdiff_t>(h));
    }
    if (pc.act_pos >= 0) {
      const auto& hv = pass->acts.at(pc.act_run).cache.h[static_cast<std::size_t>(pc.act_pos)];
      std::copy(hv.begin(), hv.end(), ctx.begin() + static_cast<std::ptrdiff_t>(2 * h));
    }
    auto ids = di.context_mentions(p);
    mention_features(di, p, ids, pass->mention_token_ids, pc.features);
    auto& ms = pass->mentions[k];
    pc.pre.resize(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) {
      pc.pre[j] = mention_.forward(pc.features[j]);
      Vec m(h);
      for (std::size_t i = 0; i < h; ++i) m[i] = std::tanh(pc.pre[j][i]);
      for (std::size_t i = 0; i < h; ++i) ctx[3 * h + i] += m[i] / static_cast<double>(ids.size());
      ms.push_back(std::move(m));
      const auto& men = di.mentions[ids[j]];
      ctx[4 * h + types_.at(men.entity_type)] = 1.0;
      if (men.turn == pc.turn) ctx[4 * h + K + types_.at(men.entity_type)] = 1.0;
    }
    ms.push_back(optional_->value.data);
    pass->mention_ids[k] = std::move(ids);
    pass->ctx[k] = std::move(ctx);
  }
  pass->d_ctx.assign(points.size(), Vec());
  pass->d_mentions.resize(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) pass->d_mentions[k].assign(pass->mentions[k].size(), Vec());
  return pass;
}

void ContextEncoder::backward(Pass& pass) const {
  const std::size_t h = cfg_.hidden, E = cfg_.embed;
  const auto& d = *pass.index->dialogue;
  for (std::size_t k = 0; k < pass.points.size(); ++k) {
    auto& pc = pass.cache[k];
    const Vec& dctx = pass.d_ctx[k];
    Vec dpool;
    if (!dctx.empty()) {
      if (pc.turn >= 1) add_into(pass.inner_dfinal[pc.turn], dctx.data(), h);
      if (pc.utt_pos >= 0) add_into(pass.outer.at(pc.utt_run).dh[static_cast<std::size_t>(pc.utt_pos)], dctx.data() + h, h);
      if (pc.act_pos >= 0) add_into(pass.acts.at(pc.act_run).dh[static_cast<std::size_t>(pc.act_pos)], dctx.data() + 2 * h, h);
      dpool.assign(dctx.begin() + static_cast<std::ptrdiff_t>(3 * h), dctx.begin() + static_cast<std::ptrdiff_t>(4 * h));
    }
    const auto& ids = pass.mention_ids[k];
    const auto& dms = pass.d_mentions[k];
    for (std::size_t j = 0; j < ids.size(); ++j) {
      Vec dm(h, 0.0);
      if (j < dms.size() && !dms[j].empty()) add_into(dm, dms[j].data(), h);
      if (!dpool.empty()) add_into(dm, dpool.data(), h, 1.0 / static_cast<double>(ids.size()));
      if (all_zero(dm)) continue;
      const Vec& m = pass.mentions[k][j];
      for (std::size_t i = 0; i < h; ++i) dm[i] *= 1.0 - m[i] * m[i];
      Vec df(feature_dim(), 0.0);
      mention_.backward(pc.features[j], dm, &df);
      const auto& toks = pass.mention_token_ids[ids[j]];
      if (toks.empty()) continue;
      Vec dw(df.begin(), df.begin() + static_cast<std::ptrdiff_t>(E));
      for (auto& x : dw) x /= static_cast<double>(toks.size());
      for (auto id : toks) words_.backward(id, dw);
    }
    if (ids.size() < dms.size() && !dms[ids.size()].empty()) {
      axpy(1.0, dms[ids.size()].data(), optional_->grad.data.data(), h);
    }
  }

  for (auto& [s, run] : pass.outer) {
    std::vector<Vec> dx(run.items.size(), Vec(h, 0.0));
    outer_.backward(run.cache, run.dh, &dx);
    for (std::size_t i = 0; i < run.items.size(); ++i) {
      if (!pass.inner.at(run.items[i]).h.empty()) add_into(pass.inner_dfinal[run.items[i]], dx[i].data(), h);
    }
  }
  for (auto& [ws, run] : pass.acts) {
    std::vector<Vec> dx(run.items.size(), Vec(E, 0.0));
    actions_.backward(run.cache, run.dh, &dx);
    for (std::size_t i = 0; i < run.items.size(); ++i) {
      action_emb_.backward(inventory_.input_id(d.events[run.items[i]]), dx[i]);
    }
  }
  for (auto& [u, dfinal] : pass.inner_dfinal) {
    const auto& cache = pass.inner.at(u);
    const std::size_t L = cache.h.size();
    if (!L) continue;
    std::vector<Vec> dh(L);
    dh[L - 1] = dfinal;
    std::vector<Vec> dx(L, Vec(E, 0.0));
    inner_.backward(cache, dh, &dx);
    const auto& ids = pass.token_ids.at(u);
    for (std::size_t i = 0; i < L; ++i) words_.backward(ids[i], dx[i]);
  }
}

}  // namespace convkit::context
