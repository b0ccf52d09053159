#ifndef DDPO_CONFIG_H_
#define DDPO_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "ddpo/optim.h"

namespace ddpo {

// Everything a run needs, resolved from an INI file:
//
//   [paths]     world, lexicon, inflections, output_dir (relative to the file)
//   [train]     mode, group_size, turns, epsilon, delta, gamma, learning_rate,
//               steps, inner_epochs, seed, temperature, sgl_every_turn,
//               init (base|zero), prior_epochs, prior_learning_rate, eval_every
//   [schedule]  <step> = <qual> <sgl> <mul>   (optional; default 1 0.5 0.5)
//   [eval]      n_samples, temperature, seed, demo_scenario, judge_endpoint,
//               judge_cache
//
// The judge token is read from the environment, never from the file.
struct ExperimentConfig {
  std::filesystem::path source;
  std::filesystem::path world;
  std::filesystem::path lexicon;
  std::filesystem::path inflections;
  std::filesystem::path output_dir;

  TrainConfig train;
  bool zero_init = false;
  std::size_t prior_epochs = 200;
  double prior_learning_rate = 20.0;
  std::size_t eval_every = 25;  // 0 disables the periodic diversity curve

  std::size_t eval_samples = 8;
  double eval_temperature = 0.7;
  std::uint64_t eval_seed = 7;
  std::size_t demo_scenario = 0;
  std::string judge_endpoint;
  std::filesystem::path judge_cache;

  // Stable `section.key=value` lines covering every field.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

  // Problems with referenced files and directories.
  std::vector<std::string> check_paths() const;
};

// Parses and validates in one pass; every problem is reported together in a
// ConfigError. `base_dir` anchors relative paths.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                              const std::string& source = "<config>");
// Throws IoError if the file cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies command-line overrides and revalidates.
struct ConfigOverrides {
  std::optional<Mode> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::filesystem::path> output_dir;
};
void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides);

}  // namespace ddpo

#endif  // DDPO_CONFIG_H_
