#ifndef DDPO_OPTIM_H_
#define DDPO_OPTIM_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ddpo/lexicon.h"
#include "ddpo/policy.h"
#include "ddpo/reward.h"
#include "ddpo/simenv.h"

namespace ddpo {

enum class Mode { kGrpo, kDdpo };
std::optional<Mode> parse_mode(std::string_view s);  // "grpo" / "ddpo"
std::string to_string(Mode m);

struct TrainConfig {
  std::size_t group_size = 8;  // G
  std::size_t turns = 3;       // K
  double epsilon = 0.2;
  double delta = 1e-4;
  double gamma = 0.2;
  WeightSchedule schedule;
  double learning_rate = 0.5;
  std::size_t steps = 300;
  std::size_t inner_epochs = 1;
  std::uint64_t seed = 1;
  Mode mode = Mode::kDdpo;
  double temperature = 1.0;  // rollout temperature during training
  bool sgl_every_turn = true;

  // Every violated constraint, empty when valid.
  std::vector<std::string> validate() const;
  // Weights in force at step `step` for this mode: GRPO ignores the schedule.
  RewardWeights weights_at(std::size_t step) const;
};

// One scenario group, ready for the surrogate.
struct GroupBatch {
  Conditioning cond;
  std::vector<Trajectory> trajectories;            // G
  std::vector<std::vector<RewardBreakdown>> rewards;  // [i][k]
  std::vector<std::vector<double>> advantages;        // [i][k]
  std::size_t z = 0;                                  // total response tokens
};

// (R - mean) / (population std + delta). Throws std::invalid_argument if fewer
// than two rewards are given.
std::vector<double> turn_advantages(std::span<const double> rewards, double delta);

// min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv).
double clipped_token_loss(double ratio, double advantage, double epsilon);

// Reward breakdowns for every (trajectory, turn) of a sampled group. A turn
// whose response renders to no words gets the floor multi-turn value -2.
std::vector<std::vector<RewardBreakdown>> group_rewards(const std::vector<Trajectory>& group,
                                                        const GradedLexicon& lexicon,
                                                        const RewardWeights& weights, double gamma,
                                                        bool sgl_every_turn);

// Fills rewards, per-turn advantages and Z. Throws std::invalid_argument when
// the group is empty of tokens (Z = 0) or turns are ragged.
GroupBatch make_batch(std::vector<Trajectory> group, const GradedLexicon& lexicon,
                      const RewardWeights& weights, const TrainConfig& config);

// Token-averaged clipped surrogate of one group. Ratios compare `live` with
// `snapshot` log-probabilities.
double batch_objective(const GroupBatch& batch, const PolicyParams& live,
                       const PolicyParams& snapshot, double epsilon);
// Gradient of batch_objective with respect to the live weights (flattened like
// PolicyParams::weights). Clip-plateau tokens contribute zero; ties count as
// unclipped.
std::vector<double> objective_gradient(const GroupBatch& batch, const PolicyParams& live,
                                       const PolicyParams& snapshot, double epsilon);

// A training step covers several scenario groups; the step objective is their
// mean.
double step_objective(std::span<const GroupBatch> batches, const PolicyParams& live,
                      const PolicyParams& snapshot, double epsilon);
std::vector<double> step_gradient(std::span<const GroupBatch> batches, const PolicyParams& live,
                                  const PolicyParams& snapshot, double epsilon);

struct MetricsRow {
  std::size_t step = 0;
  double mean_qual = 0.0;
  double mean_sgl = 0.0;
  double mean_mul = 0.0;
  double mean_entropy = 0.0;        // nats per sampled token context
  double first_turn_rouge_l = 0.0;  // mean unordered-pair Rouge-L, averaged over groups
  double violation_rate = 0.0;      // percent of assistant turns
};

inline constexpr std::string_view kMetricsHeader =
    "step,mean_qual,mean_sgl,mean_mul,mean_entropy,first_turn_rouge_l,violation_rate";
void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out);

struct TrainState {
  std::size_t step = 0;
  PolicyParams params;
  PolicyParams snapshot;
  std::vector<MetricsRow> history;
};

inline constexpr double kDivergenceLimit = 1e6;

using StepObserver = std::function<void(const MetricsRow&)>;

// Runs config.steps outer steps on `state`, one group per scenario per step.
// Step S samples scenario s with seed derive_seed(seed, {S, s}). Throws
// ConfigError for an invalid config and DivergenceError when a weight leaves
// [-1e6, 1e6].
void train(const TrainConfig& config, const World& world, const GradedLexicon& lexicon,
           TrainState& state, const StepObserver& observer = {});

// Convenience form: trains `params` in place and returns the metric history.
std::vector<MetricsRow> train(const TrainConfig& config, const World& world,
                              const GradedLexicon& lexicon, PolicyParams& params,
                              const StepObserver& observer = {});

}  // namespace ddpo

#endif  // DDPO_OPTIM_H_
