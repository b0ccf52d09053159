#ifndef DDPO_CLI_H_
#define DDPO_CLI_H_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "ddpo/config.h"
#include "ddpo/eval.h"
#include "ddpo/lexicon.h"
#include "ddpo/optim.h"
#include "ddpo/simenv.h"

namespace ddpo {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitIo = 4,
};

// Lexicon, world and starting policy named by a config.
struct Workspace {
  Workspace() = default;
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  GradedLexicon lexicon;
  InflectionTable inflections;
  World world;
};
// Loads into `ws` in place; the world keeps a pointer to ws.lexicon.
void load_workspace(const ExperimentConfig& config, Workspace& ws);
PolicyParams starting_params(const ExperimentConfig& config, const World& world);

struct TrainArtifacts {
  std::vector<MetricsRow> history;
  PolicyParams params;
};

// Writes metrics.csv, diversity_curve.csv, policy.params and summary.json to
// the output directory. A diverging run still writes the rows it finished
// before DivergenceError propagates.
TrainArtifacts cmd_train(const ExperimentConfig& config, std::ostream& log);

struct EvalOptions {
  bool constrained = false;
};
// Writes eval.csv, report.json and samples.jsonl; returns the report.
nlohmann::json cmd_eval(const std::filesystem::path& params_path, const ExperimentConfig& config,
                        const EvalOptions& options, std::ostream& log);

// Trains both modes from the same start and seed and prints eight first-turn
// samples of each side by side, followed by the collapse summaries. The same
// transcript goes to demo.txt.
std::string cmd_demo(const ExperimentConfig& config, std::ostream& log);

// Counts for a JSON Lines corpus.
nlohmann::json cmd_corpus_stats(const std::filesystem::path& corpus);

// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ddpo

#endif  // DDPO_CLI_H_
