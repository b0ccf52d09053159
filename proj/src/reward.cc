#include "ddpo/reward.h"

#include <algorithm>
#include <stdexcept>

#include "ddpo/errors.h"

namespace ddpo {

LengthRange length_range(Level level) {
  switch (level) {
    case Level::kL1: return {10, 15};
    case Level::kL2: return {10, 20};
    case Level::kL3:
    case Level::kL4: return {20, 30};
  }
  return {0, 0};
}

QualityTrace quality_trace(std::string_view response, Level level, const GradedLexicon& lexicon) {
  QualityTrace trace;
  const std::set<std::string> no_history;
  for (const auto& tok : tokenize_cased(response)) {
    if (classify_exemption(lexicon, tok, no_history)) continue;
    const std::string lemma = lexicon.lemmatize(tok.lower);
    ++trace.words;
    const auto lv = lexicon.level_of(lemma);
    if (!lv || rank(*lv) > rank(level)) trace.violation = true;
    if (lv && *lv == level) ++trace.target;
  }

  const auto questions = std::count(response.begin(), response.end(), '?');
  if (split_sentences(response).size() <= 1 || questions != 1 || has_non_english(response)) {
    trace.gate_failed = true;
    trace.score = 0.0;
    return trace;
  }
  const auto range = length_range(level);
  if (trace.words >= range.min && trace.words <= range.max && !trace.violation) {
    trace.score = level == Level::kL1
                      ? 0.8
                      : 0.5 + std::min(static_cast<double>(trace.target) * 0.15, 2.0);
  } else {
    trace.score = 0.2;
  }
  return trace;
}

double quality_reward(std::string_view response, Level level, const GradedLexicon& lexicon) {
  return quality_trace(response, level, lexicon).score;
}

double single_turn_diversity(std::span<const TokenSeq> group, std::size_t i, double gamma) {
  if (group.size() < 2) throw std::invalid_argument("single_turn_diversity: group size < 2");
  if (i >= group.size()) throw std::invalid_argument("single_turn_diversity: index out of range");
  double sum = 0.0;
  for (std::size_t j = 0; j < group.size(); ++j) {
    if (j != i) sum += rouge_l_f1(group[i], group[j]);
  }
  const double mean = sum / static_cast<double>(group.size() - 1);
  return -std::max(mean, gamma);
}

std::vector<double> single_turn_diversity_all(std::span<const TokenSeq> group, double gamma) {
  const std::size_t g = group.size();
  if (g < 2) throw std::invalid_argument("single_turn_diversity: group size < 2");
  std::vector<double> sums(g, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = i + 1; j < g; ++j) {
      const double r = rouge_l_f1(group[i], group[j]);
      sums[i] += r;
      sums[j] += r;
    }
  }
  std::vector<double> out(g);
  for (std::size_t i = 0; i < g; ++i) {
    out[i] = -std::max(sums[i] / static_cast<double>(g - 1), gamma);
  }
  return out;
}

double multi_turn_diversity(const TokenSeq& response, const TokenSeq& user,
                            const TokenSeq& previous_response) {
  if (response.empty()) throw DegenerateResponseError("multi_turn_diversity: empty response");
  return -(overlap_ratio(response, user) + overlap_ratio(response, previous_response));
}

double multi_turn_diversity(std::string_view response, std::string_view user,
                            std::string_view previous_response) {
  return multi_turn_diversity(tokenize(response), tokenize(user), tokenize(previous_response));
}

WeightSchedule::WeightSchedule(RewardWeights constant) : points_{{0.0, constant}} {}

WeightSchedule::WeightSchedule(std::vector<Breakpoint> breakpoints)
    : points_(std::move(breakpoints)) {
  if (points_.empty()) throw std::invalid_argument("schedule needs at least one breakpoint");
  std::sort(points_.begin(), points_.end(),
            [](const Breakpoint& a, const Breakpoint& b) { return a.step < b.step; });
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    if (p.step < 0) throw std::invalid_argument("schedule step must be >= 0");
    if (i > 0 && points_[i - 1].step == p.step) {
      throw std::invalid_argument("duplicate schedule step");
    }
    if (p.weights.qual < 0 || p.weights.sgl < 0 || p.weights.mul < 0) {
      throw std::invalid_argument("schedule weights must be non-negative");
    }
  }
}

RewardWeights WeightSchedule::at(double step) const {
  if (step <= points_.front().step) return points_.front().weights;
  if (step >= points_.back().step) return points_.back().weights;
  auto hi = std::upper_bound(points_.begin(), points_.end(), step,
                             [](double s, const Breakpoint& b) { return s < b.step; });
  auto lo = hi - 1;
  const double t = (step - lo->step) / (hi->step - lo->step);
  auto lerp = [t](double a, double b) { return a + t * (b - a); };
  return {lerp(lo->weights.qual, hi->weights.qual), lerp(lo->weights.sgl, hi->weights.sgl),
          lerp(lo->weights.mul, hi->weights.mul)};
}

RewardBreakdown compose(double qual, double sgl, double mul, const RewardWeights& weights,
                        std::size_t turn, bool sgl_every_turn) {
  RewardBreakdown r;
  r.qual = qual;
  r.sgl = (turn == 1 || sgl_every_turn) ? sgl : 0.0;
  r.mul = turn == 1 ? 0.0 : mul;
  r.weights = weights;
  r.total = weights.qual * r.qual + weights.sgl * r.sgl + weights.mul * r.mul;
  return r;
}

}  // namespace ddpo
