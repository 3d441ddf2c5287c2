#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convkit/dml/dialogue.hpp"
#include "convkit/dml/schema.hpp"
#include "convkit/sim/realize.hpp"

namespace convkit::sim {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Full, Base };

struct SimConfig {
  std::uint64_t seed = 1;
  std::size_t num_dialogues = 100;
  double p_correction = 0.2;
  double p_over_cooperative = 0.3;
  double p_under_cooperative = 0.3;
  double p_proactive_offer = 0.5;
  double p_api_failure = 0.05;
  // Goal-sampling moves: take a contiguous sub-sequence of a seed's calls,
  // or concatenate two seeds' calls.
  double p_subsequence = 0.3;
  double p_concatenate = 0.3;
  Mode mode = Mode::Full;
  std::size_t max_turns = 30;
  std::size_t max_attempts = 100;
  // Replaces an API's simulated return values (e.g. held-out titles).
  std::map<std::string, std::vector<std::string>> return_overrides;

  void check() const;
  nlohmann::ordered_json to_json() const;
  static SimConfig from_json(const nlohmann::json& j);
};

enum class Cooperation { Over, Exact, Under };
std::string_view cooperation_name(Cooperation c);

struct GoalArg {
  std::string name;
  std::string entity_type;
  std::vector<std::string> values;  // empty while linked and unresolved
  int linked_call = -1;             // goal call whose return fills this arg
  bool mention = false;             // linked, but the user names the value
  bool operator==(const GoalArg&) const = default;
};

struct GoalCall {
  std::string api;
  std::vector<GoalArg> args;
  GoalArg* find(std::string_view arg);
  const GoalArg* find(std::string_view arg) const;
  bool operator==(const GoalCall&) const = default;
};

// Change of mind: `arg` of call `call` is first given as `from`, then
// corrected to `to` (at the confirmation for confirm-before-call APIs,
// otherwise right after the first mention).
struct Revision {
  std::size_t call = 0;
  std::string arg;
  std::vector<std::string> from, to;
  bool at_confirm = false;
  bool operator==(const Revision&) const = default;
};

struct Goal {
  std::vector<GoalCall> calls;  // bindings hold the post-revision values
  std::vector<Revision> revisions;
  Cooperation cooperation = Cooperation::Exact;
  std::size_t seed_index = 0;

  nlohmann::ordered_json to_json() const;
  bool operator==(const Goal&) const = default;
};

// API-call structure of one seed dialogue.
struct Skeleton {
  struct Arg {
    std::string name;
    std::string entity_type;
    std::vector<std::string> vars;  // seed variables (user mentions)
    std::vector<std::string> seed_values;
    int linked_call = -1;
    bool mention = false;
  };
  struct Call {
    std::string api;
    std::vector<Arg> args;
  };
  std::vector<Call> calls;
};

Skeleton extract_skeleton(const dml::AnnotatedDialogue& seed, const dml::DomainSchema& schema);

// The simulated API return: a value or a failure marker; empty for APIs
// without a return type.
struct ApiOutcome {
  bool failed = false;
  std::optional<std::string> value;
};

ApiOutcome simulate_api(const dml::ApiDef& api, const dml::DomainSchema& schema, const SimConfig& cfg,
                        std::mt19937_64& rng);

// User agent: reveals the goal act by act.
class UserAgent {
 public:
  UserAgent(const dml::DomainSchema& schema, const SimConfig& cfg, Goal goal);

  // First utterance of the dialogue.
  std::vector<DialogueAct> open(std::mt19937_64& rng);
  std::vector<DialogueAct> step(const std::vector<DialogueAct>& incoming, std::mt19937_64& rng);

  // Records an executed call so linked arguments see its return.
  void observe_call(const std::string& api, const std::optional<std::string>& ret, bool failed);

  const Goal& goal() const { return goal_; }
  bool done() const { return cur_ >= goal_.calls.size(); }
  std::size_t current_call() const { return cur_; }
  std::size_t corrections() const { return corrections_; }
  const std::set<std::size_t>& dropped() const { return dropped_; }

 private:
  // Opening of the current call: request(API), or accept_offer when the
  // system offered it.
  std::vector<DialogueAct> start_call(std::mt19937_64& rng, bool accepted);
  void advance();
  std::vector<std::string> value_of(const GoalArg& a) const;
  // inform(a), followed by the correction when a same-utterance revision is
  // pending for it.
  void voice(GoalArg& a, std::vector<DialogueAct>& acts, std::vector<DialogueAct>& tail, std::mt19937_64& rng);
  // Value the system would carry for this type right now.
  bool carried_matches(const GoalArg& a) const;
  std::vector<DialogueAct> remember(std::vector<DialogueAct> acts);
  std::ptrdiff_t pending_revision(const std::string& arg, bool at_confirm) const;

  const dml::DomainSchema& schema_;
  const SimConfig& cfg_;
  Goal goal_;
  std::size_t cur_ = 0;
  std::map<std::string, std::vector<std::string>> said_;  // type -> values last mentioned
  std::vector<std::optional<std::string>> returns_;       // per goal call
  std::set<std::size_t> dropped_;
  std::set<std::size_t> fired_;  // revisions already voiced
  std::set<std::string> voiced_;  // args of the current call already said
  std::size_t corrections_ = 0;
};

// Heuristic system agent. Emits dialogue acts and the events that become
// training labels.
class SystemAgent {
 public:
  struct Output {
    std::vector<DialogueAct> acts;
    std::vector<dml::DialogueEvent> events;
    bool ended = false;
  };

  SystemAgent(const dml::DomainSchema& schema, const SimConfig& cfg,
              std::map<std::string, std::set<std::string>> offer_candidates);

  // `vars` maps variable ids to their values.
  Output step(const std::vector<DialogueAct>& incoming, std::map<std::string, dml::Variable>& vars,
              std::mt19937_64& rng);

  std::size_t offers() const { return offers_; }
  std::size_t failures() const { return failures_; }

 private:
  struct Active {
    std::string api;
    std::map<std::string, std::vector<std::string>> bound;  // arg -> vars
    bool confirming = false;
  };
  void bind(Active& a) const;
  void execute(Output& out, std::map<std::string, dml::Variable>& vars, std::mt19937_64& rng);
  // NLG event with arguments filled from the return variable, the call's
  // bindings and (required args only) memory.
  dml::DialogueEvent nlg_event(const dml::NlgDef& nlg, const Active* call, const std::string& ret_var,
                               const std::map<std::string, dml::Variable>& vars, std::mt19937_64& rng) const;

  const dml::DomainSchema& schema_;
  const SimConfig& cfg_;
  std::map<std::string, std::set<std::string>> offer_candidates_;
  std::map<std::string, std::vector<std::string>> memory_;  // type -> latest vars
  std::optional<Active> active_;
  std::map<std::string, std::vector<std::string>> call_informs_;  // type -> vars said since activation
  std::optional<std::string> offered_;
  std::size_t offers_ = 0, failures_ = 0;
};

struct GenerationStats {
  std::size_t dialogues = 0;
  std::size_t corrections = 0;  // dialogues containing a change of mind
  std::size_t offers = 0;
  std::size_t api_failures = 0;
  std::size_t discards = 0;
  std::map<std::string, std::size_t> cooperation;
  nlohmann::ordered_json to_json() const;
};

struct Corpus {
  std::vector<dml::AnnotatedDialogue> dialogues;
  GenerationStats stats;
};

class Simulator {
 public:
  Simulator(const dml::DomainSchema& schema, std::vector<dml::AnnotatedDialogue> seeds, SimConfig cfg);

  Goal sample_goal(std::mt19937_64& rng) const;
  // One self-play dialogue (full mode) or seed resample (base mode). Throws
  // SimError when the turn cap is exceeded.
  dml::AnnotatedDialogue simulate_dialogue(std::mt19937_64& rng) const;
  // Deterministic in (schema, seeds, config): dialogue i uses an rng derived
  // from (seed, i, attempt).
  Corpus generate() const;

  const SimConfig& config() const { return cfg_; }
  const std::vector<Skeleton>& skeletons() const { return skeletons_; }
  const std::map<std::string, std::set<std::string>>& offer_candidates() const { return offers_; }

 private:
  dml::AnnotatedDialogue self_play(const Goal& goal, std::mt19937_64& rng) const;
  dml::AnnotatedDialogue base_resample(std::size_t seed_index, std::mt19937_64& rng) const;
  std::vector<std::string> sample_values(const std::string& type, std::size_t n, std::mt19937_64& rng) const;

  const dml::DomainSchema& schema_;
  std::vector<dml::AnnotatedDialogue> seeds_;
  SimConfig cfg_;
  std::vector<Skeleton> skeletons_;
  std::map<std::string, std::set<std::string>> offers_;
};

// Lowercased type name plus the smallest unused number, e.g. "size2".
std::string fresh_var(const std::string& type, const std::map<std::string, dml::Variable>& vars);

std::mt19937_64 dialogue_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t attempt);

Goal sample_goal(const std::vector<dml::AnnotatedDialogue>& seeds, const dml::DomainSchema& schema,
                 const SimConfig& cfg, std::mt19937_64& rng);
dml::AnnotatedDialogue simulate_dialogue(const std::vector<dml::AnnotatedDialogue>& seeds,
                                         const dml::DomainSchema& schema, const SimConfig& cfg,
                                         std::mt19937_64& rng);
Corpus generate_dataset(const std::vector<dml::AnnotatedDialogue>& seeds, const dml::DomainSchema& schema,
                        const SimConfig& cfg);

}  // namespace convkit::sim
