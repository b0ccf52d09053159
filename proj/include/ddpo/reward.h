#ifndef DDPO_REWARD_H_
#define DDPO_REWARD_H_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ddpo/lexicon.h"
#include "ddpo/text.h"

namespace ddpo {

struct RewardWeights {
  double qual = 1.0;
  double sgl = 0.5;
  double mul = 0.5;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

struct RewardBreakdown {
  double qual = 0.0;
  double sgl = 0.0;
  double mul = 0.0;
  double total = 0.0;
  RewardWeights weights;
};

// Counts gathered by the vocabulary-constraint quality reward, exposed for
// tests and diagnostics.
struct QualityTrace {
  std::size_t words = 0;   // non-exempt words
  std::size_t target = 0;  // words whose lemma sits exactly at the level
  bool violation = false;
  bool gate_failed = false;
  double score = 0.0;
};

// Inclusive word-count window per level: L1 [10,15], L2 [10,20], L3/L4 [20,30].
struct LengthRange {
  std::size_t min;
  std::size_t max;
};
LengthRange length_range(Level level);

// Rule-based vocabulary-constraint reward. Hard gate (0.0): at most one
// sentence, no '?', two or more '?', or non-English letters. Otherwise 0.8 for
// an in-range, violation-free L1 response; 0.5 + min(0.15 * target, 2.0) for
// in-range, violation-free higher levels; 0.2 when length or vocabulary fails.
double quality_reward(std::string_view response, Level level, const GradedLexicon& lexicon);
QualityTrace quality_trace(std::string_view response, Level level, const GradedLexicon& lexicon);

// -max(mean_{j != i} RougeL(a_i, a_j), gamma) over the first-turn group.
// Throws std::invalid_argument if the group has fewer than two members or i is
// out of range.
double single_turn_diversity(std::span<const TokenSeq> first_turn_group, std::size_t i,
                             double gamma);
// All members at once; O(G^2) Rouge-L evaluations instead of O(G^3).
std::vector<double> single_turn_diversity_all(std::span<const TokenSeq> first_turn_group,
                                              double gamma);

// -(overlap(a_k, u_k) + overlap(a_k, a_prev)); defined for turns after the
// first. Throws DegenerateResponseError when a_k has no tokens.
double multi_turn_diversity(const TokenSeq& response, const TokenSeq& user,
                            const TokenSeq& previous_response);
double multi_turn_diversity(std::string_view response, std::string_view user,
                            std::string_view previous_response);

// Piecewise-linear weights over the global step, constant beyond the ends.
class WeightSchedule {
 public:
  struct Breakpoint {
    double step;
    RewardWeights weights;
  };

  WeightSchedule() : WeightSchedule(RewardWeights{}) {}
  explicit WeightSchedule(RewardWeights constant);
  // Breakpoints must have distinct steps >= 0 and non-negative weights; they
  // are sorted on construction.
  explicit WeightSchedule(std::vector<Breakpoint> breakpoints);

  RewardWeights at(double step) const;
  const std::vector<Breakpoint>& breakpoints() const { return points_; }

 private:
  std::vector<Breakpoint> points_;
};

inline RewardWeights schedule_weights(const WeightSchedule& schedule, double step) {
  return schedule.at(step);
}

// Weighted sum for turn `turn` (1-based). The multi-turn term is dropped on
// turn 1; the first-turn diversity term enters every turn unless
// `sgl_every_turn` is false, in which case it only enters turn 1.
RewardBreakdown compose(double qual, double sgl, double mul, const RewardWeights& weights,
                        std::size_t turn, bool sgl_every_turn = true);

}  // namespace ddpo

#endif  // DDPO_REWARD_H_
