#include "ddpo/optim.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "ddpo/errors.h"
#include "ddpo/text.h"

namespace ddpo {
namespace {

// Shared pass for the objective and (optionally) its gradient.
double surrogate(const GroupBatch& batch, const PolicyParams& live, const PolicyParams& snapshot,
                 double epsilon, std::vector<double>* grad) {
  if (batch.z == 0) throw std::invalid_argument("batch has no tokens");
  if (!(live.layout() == snapshot.layout())) {
    throw std::invalid_argument("live and snapshot layouts differ");
  }
  const std::size_t n = live.num_outputs();
  const double inv_z = 1.0 / static_cast<double>(batch.z);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const auto& traj = batch.trajectories[i];
    for (std::size_t k = 0; k < traj.turns.size(); ++k) {
      const auto& tokens = traj.turns[k].response.tokens;
      const double adv = batch.advantages[i][k];
      const auto lp_new = log_prob(live, batch.cond, tokens);
      const auto lp_old = log_prob(snapshot, batch.cond, tokens);
      TokenContext ctx{kBos, 0, batch.cond};
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        ctx.position = t;
        const double ratio = std::exp(lp_new[t] - lp_old[t]);
        const double unclipped = ratio * adv;
        const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv;
        total += std::min(unclipped, clipped);
        if (grad != nullptr && unclipped <= clipped && adv != 0.0) {
          grad_log_prob(live, ctx, tokens[t]).accumulate(*grad, n, adv * ratio * inv_z);
        }
        ctx.prev = tokens[t];
      }
    }
  }
  return total * inv_z;
}

double mean_pairwise_rouge(const std::vector<TokenSeq>& seqs) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (std::size_t j = i + 1; j < seqs.size(); ++j) {
      sum += rouge_l_f1(seqs[i], seqs[j]);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

std::string fmt_metric(double v) { return fmt::format("{:.10g}", v); }

}  // namespace

std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "grpo" || s == "GRPO") return Mode::kGrpo;
  if (s == "ddpo" || s == "DDPO") return Mode::kDdpo;
  return std::nullopt;
}

std::string to_string(Mode m) { return m == Mode::kGrpo ? "grpo" : "ddpo"; }

std::vector<std::string> TrainConfig::validate() const {
  std::vector<std::string> p;
  if (group_size < 2) p.push_back("group_size must be >= 2");
  if (turns < 1) p.push_back("turns must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) p.push_back("epsilon must lie in (0, 1)");
  if (!(delta > 0.0)) p.push_back("delta must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) p.push_back("gamma must lie in [0, 1]");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    p.push_back("learning_rate must be a positive number");
  }
  if (inner_epochs < 1 || inner_epochs > 4) p.push_back("inner_epochs must lie in [1, 4]");
  if (!(temperature > 0.0)) p.push_back("temperature must be > 0");
  return p;
}

RewardWeights TrainConfig::weights_at(std::size_t step) const {
  if (mode == Mode::kGrpo) return {1.0, 0.0, 0.0};
  return schedule.at(static_cast<double>(step));
}

std::vector<double> turn_advantages(std::span<const double> rewards, double delta) {
  const std::size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("turn_advantages needs at least two rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(g));
  std::vector<double> out(g);
  for (std::size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / (sd + delta);
  return out;
}

double clipped_token_loss(double ratio, double advantage, double epsilon) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage);
}

std::vector<std::vector<RewardBreakdown>> group_rewards(const std::vector<Trajectory>& group,
                                                        const GradedLexicon& lexicon,
                                                        const RewardWeights& weights, double gamma,
                                                        bool sgl_every_turn) {
  const std::size_t g = group.size();
  std::vector<TokenSeq> first(g);
  for (std::size_t i = 0; i < g; ++i) {
    if (group[i].turns.empty()) throw std::invalid_argument("trajectory without turns");
    first[i] = tokenize(group[i].turns[0].response_text);
  }
  const auto sgl = single_turn_diversity_all(first, gamma);
  std::vector<std::vector<RewardBreakdown>> out(g);
  for (std::size_t i = 0; i < g; ++i) {
    const auto& traj = group[i];
    const Level level = traj.scenario.level;
    TokenSeq prev = first[i];
    for (std::size_t k = 0; k < traj.turns.size(); ++k) {
      const auto& turn = traj.turns[k];
      const double qual = quality_reward(turn.response_text, level, lexicon);
      TokenSeq cur = k == 0 ? first[i] : tokenize(turn.response_text);
      double mul = 0.0;
      if (k > 0) mul = cur.empty() ? -2.0 : multi_turn_diversity(cur, tokenize(turn.user), prev);
      out[i].push_back(compose(qual, sgl[i], mul, weights, k + 1, sgl_every_turn));
      prev = std::move(cur);
    }
  }
  return out;
}

GroupBatch make_batch(std::vector<Trajectory> group, const GradedLexicon& lexicon,
                      const RewardWeights& weights, const TrainConfig& config) {
  if (group.size() < 2) throw std::invalid_argument("group needs at least two trajectories");
  GroupBatch b;
  b.cond = {group[0].scenario.level, group[0].scenario.topic};
  const std::size_t turns = group[0].turns.size();
  for (const auto& t : group) {
    if (t.turns.size() != turns) throw std::invalid_argument("ragged group");
    for (const auto& turn : t.turns) b.z += turn.response.tokens.size();
  }
  if (b.z == 0) throw std::invalid_argument("group has no response tokens");
  b.rewards = group_rewards(group, lexicon, weights, config.gamma, config.sgl_every_turn);
  b.advantages.assign(group.size(), std::vector<double>(turns, 0.0));
  std::vector<double> totals(group.size());
  for (std::size_t k = 0; k < turns; ++k) {
    for (std::size_t i = 0; i < group.size(); ++i) totals[i] = b.rewards[i][k].total;
    const auto adv = turn_advantages(totals, config.delta);
    for (std::size_t i = 0; i < group.size(); ++i) b.advantages[i][k] = adv[i];
  }
  b.trajectories = std::move(group);
  return b;
}

double batch_objective(const GroupBatch& batch, const PolicyParams& live,
                       const PolicyParams& snapshot, double epsilon) {
  return surrogate(batch, live, snapshot, epsilon, nullptr);
}

std::vector<double> objective_gradient(const GroupBatch& batch, const PolicyParams& live,
                                       const PolicyParams& snapshot, double epsilon) {
  std::vector<double> grad(live.weights().size(), 0.0);
  surrogate(batch, live, snapshot, epsilon, &grad);
  return grad;
}

double step_objective(std::span<const GroupBatch> batches, const PolicyParams& live,
                      const PolicyParams& snapshot, double epsilon) {
  if (batches.empty()) throw std::invalid_argument("no batches");
  double j = 0.0;
  for (const auto& b : batches) j += surrogate(b, live, snapshot, epsilon, nullptr);
  return j / static_cast<double>(batches.size());
}

std::vector<double> step_gradient(std::span<const GroupBatch> batches, const PolicyParams& live,
                                  const PolicyParams& snapshot, double epsilon) {
  if (batches.empty()) throw std::invalid_argument("no batches");
  std::vector<double> grad(live.weights().size(), 0.0);
  for (const auto& b : batches) surrogate(b, live, snapshot, epsilon, &grad);
  const double inv = 1.0 / static_cast<double>(batches.size());
  for (double& g : grad) g *= inv;
  return grad;
}

void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.step << ',' << fmt_metric(r.mean_qual) << ',' << fmt_metric(r.mean_sgl) << ','
        << fmt_metric(r.mean_mul) << ',' << fmt_metric(r.mean_entropy) << ','
        << fmt_metric(r.first_turn_rouge_l) << ',' << fmt_metric(r.violation_rate) << '\n';
  }
}

void train(const TrainConfig& config, const World& world, const GradedLexicon& lexicon,
           TrainState& state, const StepObserver& observer) {
  if (auto problems = config.validate(); !problems.empty()) throw ConfigError(problems);
  if (world.scenarios.empty()) throw ConfigError("world defines no scenarios");
  if (!(state.params.layout() == world.layout())) {
    throw ConfigError("policy feature layout does not match the world");
  }
  for (std::size_t s = 0; s < config.steps; ++s) {
    const std::size_t step = state.step + 1;
    state.snapshot = snapshot(state.params);
    const RewardWeights weights = config.weights_at(step);

    std::vector<GroupBatch> batches;
    batches.reserve(world.scenarios.size());
    for (std::size_t sc = 0; sc < world.scenarios.size(); ++sc) {
      RolloutOptions opts{config.temperature, derive_seed(config.seed, {step, sc}), config.turns};
      auto group = sample_group(world.scenarios[sc], config.group_size, state.snapshot,
                                world.simulator, world.vocab, opts);
      batches.push_back(make_batch(std::move(group), lexicon, weights, config));
    }

    MetricsRow row;
    row.step = step;
    std::size_t n_turns = 0, n_violations = 0, n_contexts = 0;
    for (const auto& b : batches) {
      std::vector<TokenSeq> first;
      for (std::size_t i = 0; i < b.trajectories.size(); ++i) {
        const auto& traj = b.trajectories[i];
        first.push_back(tokenize(traj.turns[0].response_text));
        for (std::size_t k = 0; k < traj.turns.size(); ++k) {
          const auto& r = b.rewards[i][k];
          row.mean_qual += r.qual;
          row.mean_sgl += r.sgl;
          row.mean_mul += r.mul;
          ++n_turns;
          if (violation_check(traj.turns[k].response_text, b.cond.level, traj.history_before(k + 1),
                              lexicon)
                  .violated) {
            ++n_violations;
          }
          TokenContext ctx{kBos, 0, b.cond};
          for (std::size_t t = 0; t < traj.turns[k].response.tokens.size(); ++t) {
            ctx.position = t;
            row.mean_entropy += entropy(state.snapshot, ctx);
            ++n_contexts;
            ctx.prev = traj.turns[k].response.tokens[t];
          }
        }
      }
      row.first_turn_rouge_l += mean_pairwise_rouge(first);
    }
    row.mean_qual /= static_cast<double>(n_turns);
    row.mean_sgl /= static_cast<double>(n_turns);
    row.mean_mul /= static_cast<double>(n_turns);
    row.mean_entropy /= static_cast<double>(std::max<std::size_t>(n_contexts, 1));
    row.first_turn_rouge_l /= static_cast<double>(batches.size());
    row.violation_rate = 100.0 * static_cast<double>(n_violations) / static_cast<double>(n_turns);

    for (std::size_t e = 0; e < config.inner_epochs; ++e) {
      const auto grad = step_gradient(batches, state.params, state.snapshot, config.epsilon);
      auto w = state.params.weights();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] += config.learning_rate * grad[i];
        if (!(std::abs(w[i]) <= kDivergenceLimit)) {
          throw DivergenceError(fmt::format("weight {} reached {} at step {}", i, w[i], step));
        }
      }
    }
    state.step = step;
    state.history.push_back(row);
    if (observer) observer(row);
  }
}

std::vector<MetricsRow> train(const TrainConfig& config, const World& world,
                              const GradedLexicon& lexicon, PolicyParams& params,
                              const StepObserver& observer) {
  TrainState state;
  state.params = std::move(params);
  try {
    train(config, world, lexicon, state, observer);
  } catch (...) {
    params = std::move(state.params);
    throw;
  }
  params = std::move(state.params);
  return std::move(state.history);
}

}  // namespace ddpo
