#include "convkit/sim/realize.hpp"

#include <algorithm>
#include <cctype>

#include "convkit/text.hpp"

namespace convkit::sim {

using dml::ActKind;
using dml::ActLabel;
using dml::DmlError;

std::string DialogueAct::str() const {
  std::string s = label().str();
  if (!values.empty()) s += "=" + text::join(values, "|");
  return s;
}

namespace {

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || (c & 0x80) || c == '\''; }

struct Piece {
  std::string literal;
  const DialogueAct* act = nullptr;  // value piece when set
};

// Splits a template into literal text and $placeholder pieces.
std::vector<std::pair<std::string, std::string>> split_template(const std::string& tmpl) {
  std::vector<std::pair<std::string, std::string>> out;  // (literal, placeholder) pairs
  std::string lit;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '$' && i + 1 < tmpl.size() &&
        (std::isalpha(static_cast<unsigned char>(tmpl[i + 1])) || tmpl[i + 1] == '_')) {
      std::size_t j = i + 1;
      while (j < tmpl.size() && (std::isalnum(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) ++j;
      out.emplace_back(lit, tmpl.substr(i + 1, j - i - 1));
      lit.clear();
      i = j;
    } else {
      lit += tmpl[i++];
    }
  }
  out.emplace_back(lit, "");
  return out;
}

class TextBuilder {
 public:
  void literal(const std::string& s) {
    if (s.empty()) return;
    if (!text_.empty() && word_char(text_.back()) && word_char(s.front()) && after_value_) text_ += ' ';
    text_ += s;
    after_value_ = false;
  }
  // Appends one entity value and returns its token span.
  std::pair<std::size_t, std::size_t> value(const std::string& v) {
    if (!text_.empty() && !std::isspace(static_cast<unsigned char>(text_.back())) && word_char(text_.back())) {
      text_ += ' ';
    }
    const std::size_t start = text::tokenize(text_).size();
    text_ += v;
    const std::size_t end = text::tokenize(text_).size();
    after_value_ = true;
    return {start, end};
  }
  void separator(const std::string& s) {
    if (!text_.empty()) text_ += s;
    after_value_ = false;
  }
  std::string& text() { return text_; }

 private:
  std::string text_;
  bool after_value_ = false;
};

void fill_user_template(const std::string& tmpl, const std::vector<const DialogueAct*>& acts,
                        const dml::DomainSchema& schema, TextBuilder& tb,
                        std::vector<dml::EntityAnnotation>& ents, bool spoken_lists) {
  for (const auto& [lit, ph] : split_template(tmpl)) {
    tb.literal(lit);
    if (ph.empty()) continue;
    const auto* type = schema.find_entity_type_folded(ph);
    const DialogueAct* src = nullptr;
    for (const auto* a : acts) {
      if ((a->kind == ActKind::Inform || a->kind == ActKind::Correct) && type && a->param == type->name) src = a;
    }
    if (!src) throw DmlError("template '" + tmpl + "' has no value for $" + ph);
    // Lists are said as "a, b and c" (or "a b and c") with one span per item.
    for (std::size_t k = 0; k < src->values.size(); ++k) {
      if (k) tb.literal(k + 1 == src->values.size() ? " and " : spoken_lists ? " " : ", ");
      auto [s, e] = tb.value(src->values[k]);
      auto want = text::tokenize(src->values[k]).size();
      if (e - s != want) throw DmlError("value '" + src->values[k] + "' does not align with tokens");
      ents.push_back({s, e, src->param, k < src->vars.size() ? src->vars[k] : std::string{}});
    }
  }
}

// Templates whose act multiset equals the given labels.
std::vector<const dml::UserTemplateDef*> matching_templates(const dml::DomainSchema& schema,
                                                            std::vector<ActLabel> labels) {
  std::sort(labels.begin(), labels.end());
  std::vector<const dml::UserTemplateDef*> out;
  for (const auto& t : schema.user_templates) {
    if (t.acts.size() != labels.size()) continue;
    auto acts = t.acts;
    std::sort(acts.begin(), acts.end());
    if (acts == labels) out.push_back(&t);
  }
  return out;
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

Realization realize_user(const std::vector<DialogueAct>& acts, const dml::DomainSchema& schema,
                         std::mt19937_64& rng, bool paraphrase) {
  Realization out;
  if (acts.empty()) return out;
  TextBuilder tb;
  bool spoken_lists = false;
  if (paraphrase && std::any_of(acts.begin(), acts.end(), [](const DialogueAct& a) { return a.values.size() > 2; })) {
    spoken_lists = std::bernoulli_distribution(0.5)(rng);
  }
  std::size_t i = 0;
  while (i < acts.size()) {
    // Longest chunk starting at i that some template covers exactly.
    std::size_t best = 0;
    std::vector<const dml::UserTemplateDef*> cands;
    for (std::size_t j = acts.size(); j > i; --j) {
      std::vector<ActLabel> labels;
      for (std::size_t k = i; k < j; ++k) labels.push_back(acts[k].label());
      cands = matching_templates(schema, labels);
      if (!cands.empty()) {
        best = j;
        break;
      }
    }
    if (!best) throw DmlError("no user template covers act " + acts[i].label().str());
    const auto* tmpl = pick(cands, rng);
    std::vector<std::string> texts{tmpl->text};
    if (paraphrase) texts.insert(texts.end(), tmpl->paraphrases.begin(), tmpl->paraphrases.end());
    std::vector<const DialogueAct*> chunk;
    for (std::size_t k = i; k < best; ++k) chunk.push_back(&acts[k]);
    tb.separator(", ");
    fill_user_template(pick(texts, rng), chunk, schema, tb, out.entities, spoken_lists);
    i = best;
  }
  out.text = tb.text();
  return out;
}

const std::string* choose_nlg_template(const dml::NlgDef& nlg,
                                       const std::map<std::string, std::vector<std::string>>& values,
                                       std::mt19937_64& rng) {
  std::vector<const std::string*> best;
  std::size_t best_used = 0;
  for (const auto& t : nlg.templates) {
    auto ph = text::placeholders(t);
    bool ok = std::all_of(ph.begin(), ph.end(), [&](const std::string& p) { return values.count(p) > 0; });
    if (!ok) continue;
    std::sort(ph.begin(), ph.end());
    ph.erase(std::unique(ph.begin(), ph.end()), ph.end());
    if (best.empty() || ph.size() > best_used) {
      best = {&t};
      best_used = ph.size();
    } else if (ph.size() == best_used) {
      best.push_back(&t);
    }
  }
  if (best.empty()) return nullptr;
  return pick(best, rng);
}

std::string render_nlg(const dml::NlgDef& nlg, const std::map<std::string, std::vector<std::string>>& values,
                       std::mt19937_64& rng) {
  const auto* tmpl = choose_nlg_template(nlg, values, rng);
  if (!tmpl) throw DmlError("no template of NLG response '" + nlg.name + "' fits the bound arguments");
  std::string out;
  for (const auto& [lit, ph] : split_template(*tmpl)) {
    out += lit;
    if (!ph.empty()) out += text::say_list(values.at(ph));
  }
  return out;
}

std::string realize_system(const std::vector<DialogueAct>& acts, const dml::DomainSchema& schema,
                           std::mt19937_64& rng) {
  std::vector<std::string> parts;
  for (const auto& a : acts) {
    const auto* nlg = schema.nlg_for_act(a.label());
    if (!nlg) throw DmlError("no NLG response expresses act " + a.label().str());
    std::map<std::string, std::vector<std::string>> vals(a.bindings.begin(), a.bindings.end());
    parts.push_back(render_nlg(*nlg, vals, rng));
  }
  return text::join(parts, " ");
}

}  // namespace convkit::sim
