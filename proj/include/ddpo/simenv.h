#ifndef DDPO_SIMENV_H_
#define DDPO_SIMENV_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "ddpo/lexicon.h"
#include "ddpo/policy.h"
#include "ddpo/rng.h"
#include "json.hpp"

namespace ddpo {

enum class Bucket { kOpening, kMiddle, kClosing };
std::optional<Bucket> parse_bucket(std::string_view s);
std::string to_string(Bucket b);
// Phase of the user utterance that opens turn `turn` (1-based) of `turns`:
// turn 2 opens, the final turn (when there are at least 3) closes, the rest
// are middle.
Bucket bucket_for_turn(std::size_t turn, std::size_t turns);

struct Scenario {
  std::size_t topic = 0;
  Level level = Level::kL1;
  std::string prompt;     // shared first user utterance
  std::size_t turns = 1;  // K
};

struct Utterance {
  std::string role;  // "user" or "assistant"
  std::string text;
};

// One session in the corpus format: also what trajectories export to.
struct Dialogue {
  std::string topic;
  Level level = Level::kL1;
  std::vector<Utterance> turns;
};

// Scripted learner. Draws a bank utterance for (topic, level, bucket) by
// weight, then with `echo_probability` appends one content word taken from the
// assistant's last response.
class UserSimulator {
 public:
  struct Candidate {
    std::string text;
    double weight;
  };
  using Key = std::tuple<std::size_t, Level, Bucket>;

  UserSimulator() = default;
  UserSimulator(std::map<Key, std::vector<Candidate>> bank, double echo_probability,
                const GradedLexicon* lexicon);

  const std::vector<Candidate>& candidates(const Key& key) const;
  double echo_probability() const { return echo_probability_; }
  void set_echo_probability(double p) { echo_probability_ = p; }
  const std::map<Key, std::vector<Candidate>>& bank() const { return bank_; }

  // Non-exempt words of `response` eligible for echoing, in order.
  std::vector<std::string> content_words(std::string_view response) const;

 private:
  std::map<Key, std::vector<Candidate>> bank_;
  double echo_probability_ = 0.0;
  const GradedLexicon* lexicon_ = nullptr;
};

// The default simulator conditions on (topic, level, bucket, last response);
// `history` is accepted for interface parity and currently unused. Throws
// ConfigError when the bank has no entry for the key.
std::string simulate_user(const UserSimulator& sim, const Scenario& scenario, std::size_t turn,
                          const std::vector<Utterance>& history, std::string_view last_response,
                          Rng& rng);

struct Turn {
  std::string user;
  ResponseSample response;
  std::string response_text;
};

struct Trajectory {
  Scenario scenario;
  std::vector<Turn> turns;

  // Texts preceding the assistant response of turn `turn` (1-based): all
  // earlier pairs plus that turn's user utterance.
  std::vector<std::string> history_before(std::size_t turn) const;
  Dialogue to_dialogue(const std::vector<std::string>& topic_names) const;
};

// Token budget for a response at `level`: the top of its word window plus 5.
std::size_t response_budget(Level level);

struct RolloutOptions {
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t turns = 0;  // 0 keeps the scenario's K
};

struct World;

// G independent sessions sharing the scenario prompt. Trajectory i draws from
// its own stream derive_seed(seed, {i}), so trajectories do not depend on one
// another or on rollout order. Throws std::invalid_argument if G < 2.
std::vector<Trajectory> sample_group(const Scenario& scenario, std::size_t group_size,
                                     const PolicyParams& params, const UserSimulator& sim,
                                     const Vocabulary& vocab, const RolloutOptions& options);

// Single-trajectory rollout used by sample_group.
Trajectory rollout(const Scenario& scenario, const PolicyParams& params, const UserSimulator& sim,
                   const Vocabulary& vocab, double temperature, std::size_t turns, Rng& rng);

struct CorpusResponse {
  std::size_t topic;
  Level level;
  std::string text;
};

// Everything the toy dialogue world defines.
struct World {
  std::vector<std::string> topics;
  Vocabulary vocab;
  UserSimulator simulator;
  std::vector<Scenario> scenarios;
  std::vector<CorpusResponse> base_corpus;

  std::size_t topic_id(const std::string& name) const;  // throws ConfigError
  FeatureLayout layout() const;
};

// JSON world definition: `topics`, `levels`, `vocabulary`, `bank` entries
// `{topic, level, bucket, text, weight}`, `scenarios`, optional
// `echo_probability` and `base_corpus`. The lexicon must outlive the world.
World parse_world(const nlohmann::json& j, const GradedLexicon& lexicon,
                  const std::string& source = "<json>");
World load_world(const std::filesystem::path& path, const GradedLexicon& lexicon);

// Starting policy: zero weights, optionally fitted to the world's base corpus.
PolicyParams initial_params(const World& world, std::size_t fit_epochs, double fit_learning_rate);

// JSON Lines corpus: `{topic, level, turns:[{role, text}]}` per line.
nlohmann::json to_json(const Dialogue& d);
void write_jsonl(const std::vector<Dialogue>& dialogues, std::ostream& out);
// Throws ParseError naming the offending line.
std::vector<Dialogue> read_jsonl(std::istream& in, const std::string& source = "<stream>");

}  // namespace ddpo

#endif  // DDPO_SIMENV_H_
