#include <algorithm>
#include <set>

#include "convkit/models/models.hpp"
#include "convkit/text.hpp"

namespace convkit::models {

namespace {

std::vector<std::string> folded_entries(const std::vector<std::string>& catalog) {
  std::vector<std::string> out;
  for (const auto& v : catalog) {
    auto f = text::join(text::fold_tokens(v), " ");
    if (!f.empty()) out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

CatalogueFeatures catalogue_features(const std::vector<std::string>& tokens, const Catalogs& static_catalogs,
                                     const Catalogs& dynamic_catalogs, std::size_t n, double fuzzy_threshold) {
  if (n == 0) throw ModelError("catalogue window must be at least 1");
  CatalogueFeatures out;
  out.num_static = static_catalogs.size();
  out.num_dynamic = dynamic_catalogs.size();
  const std::size_t K = out.num_static + out.num_dynamic;
  out.rows.assign(tokens.size(), nn::Vec(K, 0.0));
  std::vector<std::string> toks;
  for (const auto& t : tokens) toks.push_back(text::fold(t));

  for (std::size_t c = 0; c < K; ++c) {
    const bool dynamic = c >= out.num_static;
    const auto entries = folded_entries(dynamic ? dynamic_catalogs[c - out.num_static] : static_catalogs[c]);
    if (entries.empty()) continue;
    std::set<std::string, std::less<>> exact(entries.begin(), entries.end());
    for (std::size_t i = 0; i < toks.size(); ++i) {
      std::string window;
      for (std::size_t len = 1; len <= n && i + len <= toks.size(); ++len) {
        if (len > 1) window += ' ';
        window += toks[i + len - 1];
        bool hit = exact.count(window) > 0;
        if (!hit && dynamic) {
          for (const auto& e : entries) {
            if (text::similarity(window, e) >= fuzzy_threshold) {
              hit = true;
              break;
            }
          }
        }
        if (hit) {
          for (std::size_t k = i; k < i + len; ++k) out.rows[k][c] = 1.0;
        }
      }
    }
  }
  return out;
}

std::map<std::string, std::vector<std::string>> session_values(const dml::AnnotatedDialogue& d,
                                                              std::size_t prefix,
                                                              const dml::DomainSchema& schema) {
  std::map<std::string, std::vector<std::string>> out;
  std::set<std::pair<std::string, std::string>> seen;
  auto add = [&](const std::string& type, const std::string& value) {
    if (seen.insert({type, text::fold(value)}).second) out[type].push_back(value);
  };
  prefix = std::min(prefix, d.events.size());
  for (std::size_t i = 0; i < prefix; ++i) {
    const auto& e = d.events[i];
    if (e.kind == dml::EventKind::ApiCall && !e.failed && !e.return_var.empty()) {
      if (auto it = d.variables.find(e.return_var); it != d.variables.end()) {
        add(it->second.entity_type, it->second.value);
      }
    } else if (e.kind == dml::EventKind::NlgCall) {
      const auto* nlg = schema.find_nlg(e.name);
      for (const auto& b : e.args) {
        if (b.value.literal) {
          const auto* def = nlg ? nlg->find_arg(b.arg) : nullptr;
          if (!def) continue;
          for (const auto& v : b.value.items) add(def->entity_type, v);
        } else {
          for (const auto& var : b.value.items) {
            if (auto it = d.variables.find(var); it != d.variables.end()) {
              add(it->second.entity_type, it->second.value);
            }
          }
        }
      }
    }
  }
  return out;
}

std::size_t num_bio_tags(std::size_t num_types) { return 1 + 2 * num_types; }

std::vector<std::string> bio_tag_names(const std::vector<std::string>& types) {
  std::vector<std::string> out{"O"};
  for (const auto& t : types) {
    out.push_back("B-" + t);
    out.push_back("I-" + t);
  }
  return out;
}

void mask_bio(nn::Crf& crf, std::size_t num_types) {
  const std::size_t T = num_bio_tags(num_types);
  for (std::size_t x = 0; x < num_types; ++x) {
    const std::size_t b = 1 + 2 * x, in = 2 + 2 * x;
    crf.set_start_allowed(in, false);
    for (std::size_t i = 0; i < T; ++i) crf.set_allowed(i, in, i == b || i == in);
  }
}

std::vector<std::size_t> bio_encode(const std::vector<dml::EntityAnnotation>& ents, std::size_t length,
                                    const std::map<std::string, std::size_t>& type_index) {
  std::vector<std::size_t> tags(length, 0);
  for (const auto& a : ents) {
    const std::size_t x = type_index.at(a.entity_type);
    for (std::size_t k = a.start; k < std::min(a.end, length); ++k) tags[k] = k == a.start ? 1 + 2 * x : 2 + 2 * x;
  }
  return tags;
}

std::vector<dml::EntityAnnotation> bio_decode(const std::vector<std::size_t>& path,
                                              const std::vector<std::string>& types) {
  std::vector<dml::EntityAnnotation> out;
  std::ptrdiff_t open = -1;  // type of the span being extended
  for (std::size_t k = 0; k < path.size(); ++k) {
    const std::size_t tag = path[k];
    if (tag == 0) {
      open = -1;
      continue;
    }
    const auto x = static_cast<std::ptrdiff_t>((tag - 1) / 2);
    const bool inside = tag % 2 == 0;
    if (inside && open == x) {
      out.back().end = k + 1;
      continue;
    }
    out.push_back({k, k + 1, types.at(static_cast<std::size_t>(x)), ""});
    open = x;
  }
  return out;
}

std::string_view bin_name(Bin b) {
  switch (b) {
    case Bin::High:
      return "high";
    case Bin::Medium:
      return "medium";
    default:
      return "low";
  }
}

Bin bin_of(double p, double tau_high, double tau_low) {
  if (p >= tau_high) return Bin::High;
  if (p >= tau_low) return Bin::Medium;
  return Bin::Low;
}

Selection select_action(const nn::Vec& dist, double tau_high, double tau_low, std::mt19937_64& rng) {
  if (!(0.0 <= tau_low && tau_low <= tau_high && tau_high <= 1.0)) {
    throw ModelError("confidence thresholds must satisfy 0 <= tau_low <= tau_high <= 1");
  }
  Selection s;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] >= tau_high && (!best || dist[i] > dist[*best])) best = i;
  }
  if (best) {
    s.index = best;
    s.bin = Bin::High;
    return s;
  }
  std::vector<std::size_t> medium;
  double mass = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] >= tau_low) {
      medium.push_back(i);
      mass += dist[i];
    }
  }
  if (medium.empty()) return s;
  std::uniform_real_distribution<double> u(0.0, mass);
  double r = u(rng);
  s.index = medium.back();
  for (auto i : medium) {
    if (r < dist[i]) {
      s.index = i;
      break;
    }
    r -= dist[i];
  }
  s.bin = Bin::Medium;
  return s;
}

}  // namespace convkit::models
