#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "convkit/eval/eval.hpp"
#include "convkit/models/models.hpp"
#include "convkit/nn/gradcheck.hpp"
#include "convkit/sim/simulator.hpp"
#include "convkit/text.hpp"
#include "test_util.hpp"

using namespace convkit;
using models::ModelConfig;
using convkit::testing::kDurationCast;
using convkit::testing::pizza_seeds;
using convkit::testing::pizzabot;
using convkit::testing::ticketbot;
using convkit::testing::ticket_seeds;

namespace {

// Plain edit distance, kept separate from the library's.
std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = std::min({t[i - 1][j] + 1, t[i][j - 1] + 1, t[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return t[a.size()][b.size()];
}

// Brute-force scan: every (start, length) window against every entry.
std::vector<std::vector<int>> catalogue_oracle(const std::vector<std::string>& toks, const models::Catalogs& st,
                                               const models::Catalogs& dy, std::size_t n, double thr) {
  const std::size_t K = st.size() + dy.size();
  std::vector<std::vector<int>> out(toks.size(), std::vector<int>(K, 0));
  for (std::size_t c = 0; c < K; ++c) {
    const bool dyn = c >= st.size();
    const auto& cat = dyn ? dy[c - st.size()] : st[c];
    for (std::size_t i = 0; i < toks.size(); ++i) {
      for (std::size_t len = 1; len <= n && i + len <= toks.size(); ++len) {
        std::string w;
        for (std::size_t k = i; k < i + len; ++k) w += (k > i ? " " : "") + text::fold(toks[k]);
        bool hit = false;
        for (const auto& e : cat) {
          const auto f = text::join(text::fold_tokens(e), " ");
          if (f == w) hit = true;
          if (dyn && !f.empty()) {
            const double sim = 1.0 - static_cast<double>(edit_distance(w, f)) /
                                         static_cast<double>(std::max(w.size(), f.size()));
            if (sim >= thr) hit = true;
          }
        }
        if (hit) {
          for (std::size_t k = i; k < i + len; ++k) out[k][c] = 1;
        }
      }
    }
  }
  return out;
}

std::vector<std::vector<int>> as_ints(const models::CatalogueFeatures& f) {
  std::vector<std::vector<int>> out;
  for (const auto& r : f.rows) {
    std::vector<int> row;
    for (double v : r) row.push_back(static_cast<int>(v));
    out.push_back(row);
  }
  return out;
}

const dml::AnnotatedDialogue& duration_cast() {
  static const auto d = dml::parse_dialogue(kDurationCast, ticketbot());
  return d;
}

// The pizza seed whose order carries toppings and cheese.
const dml::AnnotatedDialogue& pizza_with_cheese() {
  for (const auto& d : pizza_seeds()) {
    for (const auto& e : d.events) {
      if (e.kind == dml::EventKind::ApiCall && e.name == "OrderPizza" && e.find_arg("cheese")) return d;
    }
  }
  throw std::runtime_error("no pizza seed with cheese");
}

ModelConfig tiny() {
  ModelConfig c;
  c.hidden = 3;
  c.embed = 2;
  c.window = 2;
  c.word_dropout = 0.0;
  return c;
}

std::shared_ptr<const context::Vocabulary> vocab_of(const dml::DomainSchema& schema,
                                                    const std::vector<dml::AnnotatedDialogue>& c) {
  return std::make_shared<const context::Vocabulary>(context::Vocabulary::build(schema, {&c}));
}

double total_loss_epoch(const models::TrainReport& r, std::size_t e) {
  const auto& x = r.epochs.at(e);
  return x.ner + x.action + x.argument;
}

// Shared small Pizzabot model for behavioural checks.
const models::ModelBundle& trained_pizzabot() {
  static const models::ModelBundle b = [] {
    sim::SimConfig sc;
    sc.seed = 3;
    sc.num_dialogues = 400;
    auto corpus = sim::generate_dataset(pizza_seeds(), pizzabot(), sc).dialogues;
    ModelConfig mc;
    mc.hidden = 16;
    mc.embed = 16;
    mc.epochs = 4;
    return models::train_models(corpus, pizzabot(), mc);
  }();
  return b;
}

}  // namespace

// ---- catalogue features ----

TEST(Catalogue, MovieTitleInUtterance) {
  const auto toks = text::fold_tokens("how long is la la land");
  auto f = models::catalogue_features(toks, {{"la la land", "roma"}}, {}, 3, 0.8);
  ASSERT_EQ(f.rows.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(f.rows[i][0], i >= 3 ? 1.0 : 0.0) << i;
}

TEST(Catalogue, EmptyCatalogsGiveZeros) {
  const auto toks = text::fold_tokens("how long is la la land");
  auto f = models::catalogue_features(toks, {{}, {}}, {{}}, 6, 0.8);
  for (const auto& r : f.rows) {
    for (double v : r) EXPECT_EQ(v, 0.0);
  }
}

TEST(Catalogue, FuzzyDynamicMatchMatchesBruteForce) {
  const auto toks = text::fold_tokens("what are the showtimes for a star is born again");
  const models::Catalogs st{{}}, dy{{"a star is born"}};
  auto f = models::catalogue_features(toks, st, dy, 6, 0.8);
  const auto want = catalogue_oracle(toks, st, dy, 6, 0.8);
  EXPECT_EQ(as_ints(f), want);
  int flagged = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) flagged += want[i][1];
  EXPECT_EQ(flagged, 4);
  EXPECT_EQ(want[5][1], 1);
  EXPECT_EQ(want[8][1], 1);
}

TEST(Catalogue, FuzzyOnlyForDynamicColumns) {
  const auto toks = text::fold_tokens("tickets for the lion kingg");
  auto f = models::catalogue_features(toks, {{"the lion king"}}, {{"the lion king"}}, 6, 0.8);
  EXPECT_EQ(f.rows[2][0], 0.0);
  EXPECT_EQ(f.rows[2][1], 1.0);
}

TEST(Catalogue, RandomInstancesMatchBruteForce) {
  std::mt19937_64 rng(4);
  const std::vector<std::string> words{"a", "star", "is", "born", "la", "land", "roma", "ro", "mas", "vice"};
  std::uniform_int_distribution<std::size_t> w(0, words.size() - 1), len(0, 7), clen(1, 3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> toks;
    for (std::size_t i = len(rng); i > 0; --i) toks.push_back(words[w(rng)]);
    auto entry = [&] {
      std::string e;
      for (std::size_t i = clen(rng); i > 0; --i) e += (e.empty() ? "" : " ") + words[w(rng)];
      return e;
    };
    models::Catalogs st{{entry(), entry()}, {entry()}}, dy{{entry(), entry()}};
    const std::size_t n = 1 + trial % 4;
    EXPECT_EQ(as_ints(models::catalogue_features(toks, st, dy, n, 0.75)), catalogue_oracle(toks, st, dy, n, 0.75));
  }
}

TEST(Catalogue, SessionValuesCoverReturnsAndAgentReferences) {
  const auto v = models::session_values(duration_cast(), duration_cast().events.size(), ticketbot());
  ASSERT_TRUE(v.count("Duration"));
  EXPECT_EQ(v.at("Duration"), std::vector<std::string>{"2 hours 8 minutes"});
  // la la land reaches the agent side through inform_movie_duration.
  EXPECT_EQ(v.at("Movie"), std::vector<std::string>{"la la land"});
  EXPECT_TRUE(models::session_values(duration_cast(), 2, ticketbot()).empty());
}

// ---- BIO decoding ----

namespace {

// Every tag path allowed under the mask, scored directly.
std::pair<std::vector<std::size_t>, double> exhaustive_best(const nn::Crf& crf, const std::vector<nn::Vec>& em) {
  const std::size_t T = crf.tags(), L = em.size();
  std::vector<std::size_t> path(L, 0), best;
  double best_score = -std::numeric_limits<double>::infinity();
  while (true) {
    const double s = crf.path_score(em, path);
    if (s > best_score) {
      best_score = s;
      best = path;
    }
    std::size_t k = 0;
    while (k < L && ++path[k] == T) path[k++] = 0;
    if (k == L) break;
  }
  return {best, best_score};
}

bool well_formed(const std::vector<std::size_t>& path) {
  for (std::size_t k = 0; k < path.size(); ++k) {
    if (path[k] == 0 || path[k] % 2 == 1) continue;
    if (k == 0) return false;
    const std::size_t prev = path[k - 1];
    if (prev != path[k] && prev != path[k] - 1) return false;
  }
  return true;
}

}  // namespace

TEST(Bio, CraftedEmissionsDecodeOneMovieSpan) {
  nn::ParamStore store(1);
  const std::vector<std::string> types{"Movie", "Date"};
  nn::Crf crf(store, "crf", models::num_bio_tags(2));
  models::mask_bio(crf, 2);
  for (auto* p : {&crf.transitions(), &crf.starts(), &crf.stops()}) p->value.fill(0.0);
  // how long is la la land: O O O B-Movie I-Movie I-Movie
  std::vector<nn::Vec> em(6, nn::Vec(5, 0.0));
  for (std::size_t i = 0; i < 3; ++i) em[i][0] = 2.0;
  em[3][1] = 2.0;
  em[4][2] = 1.0;
  em[5][2] = 1.0;
  // Tempting but malformed: I-Date after B-Movie.
  em[4][4] = 1.5;
  const auto [path, score] = crf.viterbi(em);
  const auto oracle = exhaustive_best(crf, em);
  EXPECT_EQ(path, oracle.first);
  EXPECT_NEAR(score, oracle.second, 1e-12);
  const auto spans = models::bio_decode(path, types);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].start, 3u);
  EXPECT_EQ(spans[0].end, 6u);
  EXPECT_EQ(spans[0].entity_type, "Movie");
}

TEST(Bio, DecodeNeverEmitsMalformedSpans) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> len(1, 5);
  const std::vector<std::string> types{"A", "B"};
  for (int trial = 0; trial < 200; ++trial) {
    nn::ParamStore store(static_cast<std::uint64_t>(trial));
    nn::Crf crf(store, "crf", 5);
    models::mask_bio(crf, 2);
    for (auto* p : {&crf.transitions(), &crf.starts(), &crf.stops()}) {
      for (auto& v : p->value.data) v = g(rng);
    }
    std::vector<nn::Vec> em(len(rng), nn::Vec(5));
    for (auto& r : em) {
      for (auto& v : r) v = g(rng);
    }
    const auto path = crf.viterbi(em).first;
    EXPECT_TRUE(well_formed(path));
    EXPECT_EQ(path, exhaustive_best(crf, em).first);
    std::map<std::string, std::size_t> idx{{"A", 0}, {"B", 1}};
    EXPECT_EQ(models::bio_encode(models::bio_decode(path, types), path.size(), idx), path);
  }
}

TEST(Bio, EmptyUtteranceHasNoMentions) {
  auto d = duration_cast();
  d.events[5].text = "";
  auto schema = std::make_shared<const dml::DomainSchema>(ticketbot());
  models::NerModel ner(schema, vocab_of(ticketbot(), {duration_cast()}), tiny(), 1);
  const auto di = context::index_dialogue(d);
  EXPECT_TRUE(ner.tag(di, 5).empty());
}

// ---- action selection ----

TEST(SelectAction, HighBinTakesArgmax) {
  std::mt19937_64 rng(1);
  auto s = models::select_action({0.9, 0.08, 0.02}, 0.7, 0.3, rng);
  ASSERT_TRUE(s.index);
  EXPECT_EQ(*s.index, 0u);
  EXPECT_EQ(s.bin, models::Bin::High);
}

TEST(SelectAction, MediumBinSamplesProportionally) {
  std::mt19937_64 rng(2);
  std::size_t a = 0, b = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    auto s = models::select_action({0.5, 0.45, 0.05}, 0.7, 0.3, rng);
    ASSERT_TRUE(s.index);
    ASSERT_NE(*s.index, 2u);
    EXPECT_EQ(s.bin, models::Bin::Medium);
    (*s.index == 0 ? a : b) += 1;
  }
  // Share of A is 0.5 / 0.95; binomial sd is about 0.0025.
  EXPECT_NEAR(static_cast<double>(a) / n, 0.5 / 0.95, 0.0125);
  EXPECT_NEAR(static_cast<double>(a) / static_cast<double>(b), 0.5 / 0.45, 0.06);
}

TEST(SelectAction, AllLowFallsBack) {
  std::mt19937_64 rng(3);
  auto s = models::select_action({0.2, 0.2, 0.2, 0.2, 0.2}, 0.7, 0.3, rng);
  EXPECT_FALSE(s.index);
  EXPECT_EQ(s.bin, models::Bin::Low);
}

TEST(SelectAction, ThresholdCorners) {
  std::mt19937_64 rng(4), unused(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    nn::Vec p(5);
    for (auto& v : p) v = u(rng);
    double s = 0;
    for (auto v : p) s += v;
    for (auto& v : p) v /= s;
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    auto argmax = models::select_action(p, 0.0, 0.0, rng);
    ASSERT_TRUE(argmax.index);
    EXPECT_EQ(*argmax.index, best);
    auto none_rejected = models::select_action(p, 0.9, 0.0, rng);
    EXPECT_TRUE(none_rejected.index);
    // High-bin picks consume no randomness.
    auto before = unused;
    models::select_action({0.95, 0.05}, 0.7, 0.3, unused);
    EXPECT_EQ(before, unused);
  }
  EXPECT_THROW(models::select_action({1.0}, 0.3, 0.7, rng), models::ModelError);
}

// ---- argument decision rule ----

namespace {

context::EntityMention mention(const std::string& type, const std::string& value) {
  context::EntityMention m;
  m.entity_type = type;
  m.value = value;
  return m;
}

}  // namespace

TEST(ArgumentRule, RequiredArgTakesBestCompatibleMention) {
  std::vector<context::EntityMention> ms{mention("Movie", "roma"), mention("Date", "friday"), mention("Movie", "vice")};
  std::vector<dml::ArgDef> args{{"movieTitle", "Movie", true, false}};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    nn::Vec s(4);
    for (auto& v : s) v = g(rng);
    auto sig = models::decide_arguments("GetDuration", args, ms, {s});
    ASSERT_EQ(sig.args.size(), 1u);
    // Exhaustive: the highest-scoring Movie mention.
    std::size_t want = s[0] >= s[2] ? 0 : 2;
    ASSERT_EQ(sig.args[0].positions, std::vector<std::size_t>{want});
    EXPECT_FALSE(sig.args[0].unfilled);
    EXPECT_TRUE(std::isinf(sig.args[0].scores[1]));
    EXPECT_TRUE(std::isinf(sig.args[0].scores[3]));
  }
}

TEST(ArgumentRule, OptionalTokenLeavesArgUnfilled) {
  std::vector<context::EntityMention> ms{mention("Theater", "the castro")};
  std::vector<dml::ArgDef> args{{"theater", "Theater", false, false}};
  auto sig = models::decide_arguments("FindMovies", args, ms, {{0.2, 1.5}});
  EXPECT_TRUE(sig.args[0].unfilled);
  EXPECT_TRUE(sig.args[0].positions.empty());
  sig = models::decide_arguments("FindMovies", args, ms, {{2.0, 1.5}});
  EXPECT_FALSE(sig.args[0].unfilled);
  EXPECT_EQ(sig.args[0].positions, std::vector<std::size_t>{0});
}

TEST(ArgumentRule, MultiValuedTakesEverythingAboveOptional) {
  std::vector<context::EntityMention> ms{mention("Topping", "olives"), mention("Size", "large"),
                                         mention("Topping", "tomatoes"), mention("Topping", "ham")};
  std::vector<dml::ArgDef> args{{"toppingsList", "Topping", true, true}};
  auto sig = models::decide_arguments("OrderPizza", args, ms, {{3.0, 9.0, 2.5, 0.1, 1.0}});
  EXPECT_EQ(sig.args[0].positions, (std::vector<std::size_t>{0, 2}));
  // Nothing above the optional token: required falls back to the best one.
  sig = models::decide_arguments("OrderPizza", args, ms, {{0.0, 9.0, 0.5, 0.1, 1.0}});
  EXPECT_EQ(sig.args[0].positions, std::vector<std::size_t>{2});
}

TEST(ArgumentRule, MissingRequiredArgument) {
  std::vector<context::EntityMention> ms{mention("Date", "friday")};
  std::vector<dml::ArgDef> args{{"movieTitle", "Movie", true, false}, {"date", "Date", true, false}};
  auto sig = models::decide_arguments("FindShowtimes", args, ms, {{0.0, 0.0}, {0.0, 0.0}});
  ASSERT_NE(sig.missing(), nullptr);
  EXPECT_EQ(sig.missing()->arg, "movieTitle");
  EXPECT_FALSE(sig.args[1].missing);
}

TEST(ArgumentRule, NeverBindsMismatchedType) {
  const std::vector<std::string> types{"Movie", "Date", "Time", "Theater"};
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> tpick(0, types.size() - 1), mcount(0, 6);
  std::normal_distribution<double> g;
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<context::EntityMention> ms;
    for (std::size_t i = mcount(rng); i > 0; --i) ms.push_back(mention(types[tpick(rng)], "x"));
    std::vector<dml::ArgDef> args;
    std::vector<nn::Vec> scores;
    for (int a = 0; a < 3; ++a) {
      args.push_back({"a" + std::to_string(a), types[tpick(rng)], coin(rng), coin(rng)});
      nn::Vec s(ms.size() + 1);
      for (auto& v : s) v = g(rng);
      scores.push_back(s);
    }
    auto sig = models::decide_arguments("X", args, ms, scores);
    for (std::size_t a = 0; a < args.size(); ++a) {
      for (const auto& m : sig.args[a].mentions) EXPECT_EQ(m.entity_type, args[a].entity_type);
      if (args[a].required) EXPECT_FALSE(sig.args[a].unfilled);
      if (!sig.args[a].missing && !sig.args[a].unfilled) EXPECT_FALSE(sig.args[a].positions.empty());
    }
  }
}

// ---- models ----

TEST(Models, AnaphoraResolvedByTypeMasking) {
  auto schema = std::make_shared<const dml::DomainSchema>(ticketbot());
  models::ArgumentModel af(schema, vocab_of(ticketbot(), {duration_cast()}), tiny(), 7);
  const auto di = context::index_dialogue(duration_cast());
  // After "who stars in it": only mt1 is a Movie mention.
  auto sig = af.fill(di, 6, "GetCast");
  ASSERT_EQ(sig.args.size(), 1u);
  ASSERT_EQ(sig.args[0].mentions.size(), 1u);
  EXPECT_EQ(sig.args[0].mentions[0].variable, "mt1");
}

TEST(Models, ZeroOutputLayerGivesUniformDistribution) {
  auto schema = std::make_shared<const dml::DomainSchema>(ticketbot());
  models::ActionModel ap(schema, vocab_of(ticketbot(), {duration_cast()}), tiny(), 8);
  ap.params().get("ap.out.W").value.fill(0.0);
  ap.params().get("ap.out.b").value.fill(0.0);
  const auto di = context::index_dialogue(duration_cast());
  const auto p = ap.predict(di, 2);
  const double u = 1.0 / static_cast<double>(ap.actions().size());
  double sum = 0;
  for (double v : p) {
    EXPECT_NEAR(v, u, 1e-12);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Models, PredictionsAreDistributionsAndDeterministic) {
  auto schema = std::make_shared<const dml::DomainSchema>(ticketbot());
  models::ActionModel ap(schema, vocab_of(ticketbot(), {duration_cast()}), tiny(), 9);
  const auto di = context::index_dialogue(duration_cast());
  for (std::size_t p = 0; p <= duration_cast().events.size(); ++p) {
    const auto a = ap.predict(di, p), b = ap.predict(di, p);
    EXPECT_EQ(a, b);
    double sum = 0;
    for (double v : a) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(ModelGradients, NerLossMatchesFiniteDifferences) {
  auto schema = std::make_shared<const dml::DomainSchema>(pizzabot());
  const auto& d = pizza_with_cheese();
  models::NerModel ner(schema, vocab_of(pizzabot(), {d}), tiny(), 11);
  const auto di = context::index_dialogue(d, 2);
  auto r = nn::finite_diff_check([&](bool g) { return ner.loss(di, g); }, ner.params(), 1e-5, 40, 3);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_GT(r.checked, 100u);
}

TEST(ModelGradients, ActionLossMatchesFiniteDifferences) {
  auto schema = std::make_shared<const dml::DomainSchema>(pizzabot());
  const auto& d = pizza_with_cheese();
  models::ActionModel ap(schema, vocab_of(pizzabot(), {d}), tiny(), 12);
  const auto di = context::index_dialogue(d, 2);
  auto r = nn::finite_diff_check([&](bool g) { return ap.loss(di, g); }, ap.params(), 1e-5, 40, 4);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_GT(r.checked, 100u);
}

TEST(ModelGradients, ArgumentLossMatchesFiniteDifferences) {
  auto schema = std::make_shared<const dml::DomainSchema>(pizzabot());
  const auto& d = pizza_with_cheese();
  models::ArgumentModel af(schema, vocab_of(pizzabot(), {d}), tiny(), 13);
  const auto di = context::index_dialogue(d, 2);
  ASSERT_GT(af.loss(di, false), 0.0);
  auto r = nn::finite_diff_check([&](bool g) { return af.loss(di, g); }, af.params(), 1e-5, 40, 5);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_GT(r.checked, 100u);
}

// ---- training ----

TEST(Training, RejectsEmptyOrMismatchedCorpus) {
  EXPECT_THROW(models::train_models({}, pizzabot(), tiny()), models::ModelError);
  EXPECT_THROW(models::train_models({duration_cast()}, pizzabot(), tiny()), models::ModelError);
}

TEST(Training, ZeroEpochsLeavesParametersUnchanged) {
  auto cfg = tiny();
  cfg.epochs = 0;
  auto trained = models::train_models({duration_cast()}, ticketbot(), cfg);
  std::vector<dml::AnnotatedDialogue> c{duration_cast()};
  auto fresh = models::ModelBundle::create(std::make_shared<const dml::DomainSchema>(ticketbot()),
                                           vocab_of(ticketbot(), c), cfg);
  for (auto [a, b] : {std::pair{&trained.ner->params(), &fresh.ner->params()},
                      std::pair{&trained.actions->params(), &fresh.actions->params()},
                      std::pair{&trained.arguments->params(), &fresh.arguments->params()}}) {
    ASSERT_EQ(a->count(), b->count());
    for (std::size_t i = 0; i < a->count(); ++i) EXPECT_EQ(a->at(i).value, b->at(i).value) << a->at(i).name;
  }
}

TEST(Training, LossDecreasesOverFirstEpochs) {
  sim::SimConfig sc;
  sc.seed = 21;
  sc.num_dialogues = 200;
  auto corpus = sim::generate_dataset(pizza_seeds(), pizzabot(), sc).dialogues;
  ModelConfig mc;
  mc.hidden = 16;
  mc.embed = 16;
  mc.epochs = 3;
  models::TrainReport rep;
  models::train_models(corpus, pizzabot(), mc, &rep);
  ASSERT_EQ(rep.epochs.size(), 3u);
  EXPECT_GT(total_loss_epoch(rep, 0), total_loss_epoch(rep, 1));
  EXPECT_GT(total_loss_epoch(rep, 1), total_loss_epoch(rep, 2));
  EXPECT_GT(rep.epochs[0].ner, rep.epochs[2].ner);
  EXPECT_GT(rep.epochs[0].action, rep.epochs[2].action);
  EXPECT_GT(rep.epochs[0].argument, rep.epochs[2].argument);
}

TEST(Training, OverfitsSingleDialogue) {
  ModelConfig mc;
  mc.hidden = 16;
  mc.embed = 16;
  mc.epochs = 200;
  mc.word_dropout = 0.0;
  const auto& d = pizza_with_cheese();
  auto b = models::train_models({d}, pizzabot(), mc);
  auto r = eval::evaluate(b, {d});
  EXPECT_EQ(r.ner.f1(), 1.0);
  EXPECT_GT(r.actions.turns, 0u);
  EXPECT_EQ(r.actions.ap(), 1.0);
  EXPECT_EQ(r.actions.asp(), 1.0);
}

TEST(Training, TaggerFindsEachToppingOfAList) {
  const auto& b = trained_pizzabot();
  dml::AnnotatedDialogue d;
  d.id = "toppings";
  dml::DialogueEvent w;
  w.kind = dml::EventKind::NlgCall;
  w.name = "welcome";
  dml::DialogueEvent u;
  u.kind = dml::EventKind::UserUtterance;
  u.text = "olives tomatoes and green peppers";
  d.events = {w, u};
  const auto di = context::index_dialogue(d);
  const auto spans = b.ner->tag(di, 1);
  ASSERT_EQ(spans.size(), 3u);
  for (const auto& s : spans) EXPECT_EQ(s.entity_type, "Topping");
  EXPECT_EQ(spans[2].start, 3u);
  EXPECT_EQ(spans[2].end, 5u);
}

TEST(Bundle, RoundTripReproducesPredictions) {
  const auto& b = trained_pizzabot();
  const auto dir = std::filesystem::temp_directory_path() / "convkit_bundle_test";
  std::filesystem::remove_all(dir);
  b.save(dir);
  auto c = models::ModelBundle::load(dir, pizzabot());
  sim::SimConfig sc;
  sc.seed = 77;
  sc.num_dialogues = 20;
  auto test = sim::generate_dataset(pizza_seeds(), pizzabot(), sc).dialogues;
  eval::EvalOptions eo;
  eo.keep_turns = true;
  auto r1 = eval::evaluate(b, test, eo), r2 = eval::evaluate(c, test, eo);
  EXPECT_EQ(r1.to_json(), r2.to_json());
  ASSERT_EQ(r1.turns.size(), r2.turns.size());
  for (std::size_t i = 0; i < r1.turns.size(); ++i) {
    EXPECT_EQ(r1.turns[i].predicted, r2.turns[i].predicted);
    EXPECT_EQ(r1.turns[i].predicted_entities, r2.turns[i].predicted_entities);
  }
  for (std::size_t i = 0; i < b.actions->params().count(); ++i) {
    EXPECT_EQ(b.actions->params().at(i).value, c.actions->params().at(i).value);
  }
  EXPECT_THROW(models::ModelBundle::load(dir, ticketbot()), models::ModelError);
  std::filesystem::remove_all(dir);
}

TEST(Bundle, ConfigJsonRoundTrip) {
  ModelConfig c;
  c.hidden = 20;
  c.dynamic_catalogue = false;
  c.tau_low = 0.1;
  const auto back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(ModelConfig::from_json({{"hiden", 3}}), models::ModelError);
  EXPECT_THROW(ModelConfig::from_json({{"tau_low", 0.9}, {"tau_high", 0.2}}), models::ModelError);
}
