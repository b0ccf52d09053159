#ifndef DDPO_POLICY_H_
#define DDPO_POLICY_H_

// Log-linear autoregressive policy over a word-level vocabulary plus END.
//
// The logit of output token v in a context is the sum of w[f, v] over the four
// active indicator features f: previous token (or BOS), position bucket
// (position / 3, last bucket absorbs the tail), level and topic. Stored
// log-probabilities and gradients are always at temperature 1; temperature only
// reshapes the sampling distribution.

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ddpo/lexicon.h"
#include "ddpo/rng.h"

namespace ddpo {

inline constexpr int kBos = -1;
inline constexpr int kFeatureMapVersion = 1;
inline constexpr std::size_t kPositionBucketSize = 3;
inline constexpr std::string_view kEndToken = "</s>";

// Ordered token list. Ids 0..size()-1 are tokens; size() is END.
class Vocabulary {
 public:
  Vocabulary() = default;
  // `capitalized` lists tokens rendered with a leading capital anywhere
  // (names). Throws std::invalid_argument on duplicates or empty tokens.
  explicit Vocabulary(std::vector<std::string> tokens, std::set<std::string> capitalized = {});

  std::size_t size() const { return tokens_.size(); }
  std::size_t num_outputs() const { return tokens_.size() + 1; }
  int end_id() const { return static_cast<int>(tokens_.size()); }

  std::optional<int> id(std::string_view token) const;
  const std::string& token(int id) const;
  bool is_punctuation(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Text -> ids: punctuation marks that are vocabulary entries become their
  // own tokens; words go through tokenize(). Throws std::invalid_argument on a
  // word outside the vocabulary.
  std::vector<int> encode(std::string_view text) const;
  // Ids -> display text: punctuation attaches to the previous word, sentences
  // and "i" are capitalized, END is dropped.
  std::string render(std::span<const int> ids) const;

  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::set<std::string> capitalized_;
  std::string end_text_{kEndToken};
};

struct FeatureLayout {
  std::size_t vocab_size = 0;  // V, without END
  std::size_t position_buckets = 1;
  std::size_t levels = 4;
  std::size_t topics = 1;

  std::size_t num_outputs() const { return vocab_size + 1; }
  std::size_t num_features() const { return vocab_size + 1 + position_buckets + levels + topics; }

  std::size_t prev_feature(int prev) const {
    return prev == kBos ? 0 : static_cast<std::size_t>(prev) + 1;
  }
  std::size_t position_feature(std::size_t position) const {
    const std::size_t b = position / kPositionBucketSize;
    return vocab_size + 1 + (b < position_buckets ? b : position_buckets - 1);
  }
  std::size_t level_feature(Level level) const {
    return vocab_size + 1 + position_buckets + level_index(level);
  }
  std::size_t topic_feature(std::size_t topic) const {
    return vocab_size + 1 + position_buckets + levels + topic;
  }

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

// What the policy is conditioned on for a whole response.
struct Conditioning {
  Level level = Level::kL1;
  std::size_t topic = 0;
};

struct TokenContext {
  int prev = kBos;
  std::size_t position = 0;
  Conditioning cond;
};

using ActiveFeatures = std::array<std::size_t, 4>;

class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(FeatureLayout layout);

  const FeatureLayout& layout() const { return layout_; }
  std::size_t num_outputs() const { return layout_.num_outputs(); }
  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }
  double& at(std::size_t feature, std::size_t token) {
    return weights_[feature * layout_.num_outputs() + token];
  }
  double at(std::size_t feature, std::size_t token) const {
    return weights_[feature * layout_.num_outputs() + token];
  }

  ActiveFeatures active(const TokenContext& ctx) const;
  // Unnormalized temperature-1 logits.
  void logits(const TokenContext& ctx, std::span<double> out) const;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  FeatureLayout layout_;
  std::vector<double> weights_;
};

// Softmax of logits / temperature. Throws std::invalid_argument unless
// temperature > 0.
std::vector<double> next_token_distribution(const PolicyParams& params, const TokenContext& ctx,
                                            double temperature = 1.0);

struct ResponseSample {
  std::vector<int> tokens;      // includes END as the last entry when terminated
  std::vector<double> logprobs;  // temperature-1 log-probabilities, same length
  bool terminated = false;
};

// Ancestral sampling until END or `max_len` tokens (END included in the count).
ResponseSample sample_response(const PolicyParams& params, const Conditioning& cond,
                               std::size_t max_len, double temperature, Rng& rng);

// Teacher-forced per-token log-probabilities. Throws std::out_of_range for ids
// outside [0, num_outputs).
std::vector<double> log_prob(const PolicyParams& params, const Conditioning& cond,
                             std::span<const int> tokens);

// d log pi(token | ctx) / d w[f, v] = coeff[v] for each active feature f, zero
// elsewhere; coeff[v] = 1{v == token} - pi(v | ctx).
struct SparseGradient {
  ActiveFeatures features{};
  std::vector<double> coeff;

  // grad[f, v] += scale * coeff[v] for each active f.
  void accumulate(std::span<double> grad, std::size_t num_outputs, double scale) const;
};
SparseGradient grad_log_prob(const PolicyParams& params, const TokenContext& ctx, int token);

// Shannon entropy (nats) of the temperature-1 next-token distribution.
double entropy(const PolicyParams& params, const TokenContext& ctx);

// Frozen deep copy for the importance-ratio denominator.
inline PolicyParams snapshot(const PolicyParams& params) { return params; }

// Text serialization: header lines with dimensions, then `feature,token,weight`
// rows for non-zero weights (printed with 17 significant digits).
void save_params(const PolicyParams& params, std::uint64_t vocab_fingerprint, std::ostream& out);
struct LoadedParams {
  PolicyParams params;
  std::uint64_t vocab_fingerprint = 0;
};
LoadedParams load_params(std::istream& in, const std::string& source = "<stream>");

// A response to imitate when fitting the starting policy.
struct LikelihoodExample {
  Conditioning cond;
  std::vector<int> tokens;  // should end with END
};

// Full-batch gradient ascent on the mean per-token log-likelihood. Returns the
// final mean log-likelihood.
double fit_likelihood(PolicyParams& params, std::span<const LikelihoodExample> examples,
                      std::size_t epochs, double learning_rate);

}  // namespace ddpo

#endif  // DDPO_POLICY_H_
