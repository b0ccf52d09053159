#ifndef DDPO_EVAL_H_
#define DDPO_EVAL_H_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddpo/decode.h"
#include "ddpo/lexicon.h"
#include "ddpo/optim.h"
#include "ddpo/policy.h"
#include "ddpo/simenv.h"
#include "json.hpp"

namespace ddpo {

inline constexpr double kCollapseThreshold = 0.8;
inline constexpr std::size_t kEvalSamples = 8;
inline constexpr double kEvalTemperature = 0.7;

struct DiversityReport {
  double inter_sample = 0.0;   // mean Rouge-L over unordered first-turn pairs
  double intra_session = 0.0;  // mean over sessions of consecutive-turn Rouge-L
  double div = 0.0;            // 1 - 0.5 * inter - 0.5 * intra
};

// Mean Rouge-L F1 over all unordered pairs; 0 for fewer than two texts.
double inter_sample_rouge(std::span<const std::string> texts);
// Mean Rouge-L over consecutive pairs; 0 for fewer than two turns.
double consecutive_rouge(std::span<const std::string> turns);

// Each session is its ordered list of assistant responses. Throws
// std::invalid_argument for fewer than two sessions or an empty session.
DiversityReport diversity_from_sessions(const std::vector<std::vector<std::string>>& sessions);

// Samples n_samples sessions of the scenario and scores them.
DiversityReport diversity_score(const PolicyParams& params, const Scenario& scenario,
                                const World& world, std::size_t n_samples = kEvalSamples,
                                double temperature = kEvalTemperature, std::uint64_t seed = 0);

struct ViolationTally {
  std::size_t turns = 0;
  std::size_t violations = 0;
  double rate() const {  // percent
    return turns == 0 ? 0.0 : 100.0 * static_cast<double>(violations) / static_cast<double>(turns);
  }
};

// Checks every assistant turn at the dialogue's level, with all earlier
// utterances of that dialogue as history.
ViolationTally count_violations(const std::vector<Dialogue>& dialogues,
                                const GradedLexicon& lexicon);
// Percentage of violating assistant turns (0 for a corpus without any).
double violation_rate(const std::vector<Dialogue>& dialogues, const GradedLexicon& lexicon);

// `per_scenario` sessions for every scenario of the world. Session j of
// scenario s is seeded with derive_seed(seed, {s, j}).
std::vector<Dialogue> sample_corpus(const PolicyParams& params, const World& world,
                                    std::size_t per_scenario, double temperature,
                                    std::uint64_t seed);
// Same, with every assistant turn decoded through the level's trie.
std::vector<Dialogue> sample_constrained_corpus(const PolicyParams& params, const World& world,
                                                const std::map<Level, VocabTrie>& tries,
                                                std::size_t per_scenario, double temperature,
                                                std::uint64_t seed);

struct CollapseSummary {
  double final_entropy = 0.0;
  double entropy_slope = 0.0;  // least squares per step over the last quartile
  double final_inter_sample = 0.0;
  bool collapsed = false;
};
// Throws std::invalid_argument on an empty history.
CollapseSummary collapse_probe(std::span<const MetricsRow> history,
                               double threshold = kCollapseThreshold);
nlohmann::json to_json(const CollapseSummary& s);
nlohmann::json to_json(const DiversityReport& r);

// ---------------------------------------------------------------------------
// External judge

struct JudgeRequest {
  std::vector<std::string> context;  // earlier utterances, oldest first
  std::string user_input;
  std::string response;
  std::string rubric_id = "tutor-v1";
};

struct JudgeVerdict {
  int relevance = 0;
  int task = 0;
  int richness = 0;
  int guidance = 0;
  std::map<std::string, std::string> reasons;
};

class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
// 401/403 from the endpoint; never retried.
class JudgeAuthError : public JudgeError {
 public:
  using JudgeError::JudgeError;
};
// Connection failures and unexpected statuses after all attempts.
class JudgeTransportError : public JudgeError {
 public:
  using JudgeError::JudgeError;
};
// The endpoint answered, but not with a usable verdict.
class JudgeParseError : public JudgeError {
 public:
  JudgeParseError(const std::string& what, std::string raw)
      : JudgeError(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// System prompt for a rubric id. Throws std::invalid_argument for unknown ids.
std::string rubric_prompt(const std::string& rubric_id);
// POST body sent to the endpoint.
nlohmann::json judge_payload(const JudgeRequest& request);
// Parses a verdict from a response body: the body itself or the first JSON
// object embedded in it. Scores must be integers in [1, 5].
JudgeVerdict parse_verdict(const std::string& body);
nlohmann::json to_json(const JudgeVerdict& v);

struct JudgeOptions {
  std::string endpoint;  // http(s)://host[:port]/path
  std::string token;     // bearer token; empty sends no Authorization header
  std::optional<std::filesystem::path> cache_dir;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{30};
};

// Reads the bearer token from the environment (DDPO_JUDGE_TOKEN).
std::string judge_token_from_env();

// Synchronous client. Verdicts are cached in memory and, when cache_dir is
// set, on disk, keyed by a hash of endpoint and payload. Calls are serialized.
class JudgeClient {
 public:
  explicit JudgeClient(JudgeOptions options);

  JudgeVerdict submit(const JudgeRequest& request);

  std::size_t network_calls() const { return network_calls_; }
  std::size_t cache_hits() const { return cache_hits_; }
  static std::string request_key(const std::string& endpoint, const JudgeRequest& request);

 private:
  std::string post(const std::string& body);

  JudgeOptions options_;
  std::string scheme_host_;
  std::string path_;
  std::map<std::string, JudgeVerdict> memory_;
  std::mutex mu_;
  std::size_t network_calls_ = 0;
  std::size_t cache_hits_ = 0;
};

}  // namespace ddpo

#endif  // DDPO_EVAL_H_
