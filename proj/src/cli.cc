#include "ddpo/cli.h"

#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "ddpo/decode.h"
#include "ddpo/errors.h"
#include "ddpo/text.h"

namespace ddpo {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string num(double v) { return fmt::format("{:.6f}", v); }

nlohmann::json row_json(const MetricsRow& r) {
  return {{"step", r.step},
          {"mean_qual", r.mean_qual},
          {"mean_sgl", r.mean_sgl},
          {"mean_mul", r.mean_mul},
          {"mean_entropy", r.mean_entropy},
          {"first_turn_rouge_l", r.first_turn_rouge_l},
          {"violation_rate", r.violation_rate}};
}

nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream in(c.canonical());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

// Mean diversity and violation rate over all scenarios, as sampled at eval
// settings.
struct CurvePoint {
  std::size_t step;
  double inter = 0.0, intra = 0.0, div = 0.0, violation = 0.0;
};

CurvePoint curve_point(std::size_t step, const PolicyParams& params, const ExperimentConfig& c,
                       const World& world, const GradedLexicon& lexicon) {
  CurvePoint p{step};
  const auto corpus = sample_corpus(params, world, c.eval_samples, c.eval_temperature, c.eval_seed);
  const std::size_t n = c.eval_samples;
  for (std::size_t s = 0; s < world.scenarios.size(); ++s) {
    std::vector<std::vector<std::string>> sessions;
    for (std::size_t j = 0; j < n; ++j) {
      auto& sess = sessions.emplace_back();
      for (const auto& u : corpus[s * n + j].turns) {
        if (u.role == "assistant") sess.push_back(u.text);
      }
    }
    const auto r = diversity_from_sessions(sessions);
    p.inter += r.inter_sample;
    p.intra += r.intra_session;
    p.div += r.div;
  }
  const double m = static_cast<double>(world.scenarios.size());
  p.inter /= m;
  p.intra /= m;
  p.div /= m;
  p.violation = violation_rate(corpus, lexicon);
  return p;
}

// Mean temperature-1 entropy over the contexts of the given responses.
double response_entropy(const PolicyParams& params, const World& world, const Conditioning& cond,
                        const std::vector<std::string>& texts) {
  double h = 0.0;
  std::size_t count = 0;
  for (const auto& text : texts) {
    std::vector<int> ids;
    try {
      ids = world.vocab.encode(text);
    } catch (const std::invalid_argument&) {
      continue;
    }
    ids.push_back(world.vocab.end_id());
    TokenContext ctx{kBos, 0, cond};
    for (std::size_t t = 0; t < ids.size(); ++t) {
      ctx.position = t;
      h += entropy(params, ctx);
      ++count;
      ctx.prev = ids[t];
    }
  }
  return count == 0 ? 0.0 : h / static_cast<double>(count);
}

void check_params_match(const LoadedParams& loaded, const World& world) {
  std::vector<std::string> problems;
  const auto& got = loaded.params.layout();
  const auto want = world.layout();
  if (got.levels != want.levels) {
    problems.push_back(fmt::format("params encode {} levels but the lexicon defines {}",
                                   got.levels, want.levels));
  }
  if (got.topics != want.topics) {
    problems.push_back(
        fmt::format("params encode {} topics but the world has {}", got.topics, want.topics));
  }
  if (got.vocab_size != want.vocab_size || loaded.vocab_fingerprint != world.vocab.fingerprint()) {
    problems.push_back("params were trained on a different vocabulary");
  }
  if (got.position_buckets != want.position_buckets) {
    problems.push_back("params use a different position bucketing");
  }
  if (!problems.empty()) throw ConfigError(problems);
}

void write_params(const std::filesystem::path& path, const PolicyParams& params,
                  const World& world, const std::string& hash) {
  auto out = open_out(path);
  out << "# config " << hash << '\n';
  save_params(params, world.vocab.fingerprint(), out);
}

std::vector<std::string> first_turn_samples(const PolicyParams& params, const ExperimentConfig& c,
                                            const World& world) {
  const auto& sc = world.scenarios.at(c.demo_scenario);
  const auto group = sample_group(sc, kEvalSamples, params, world.simulator, world.vocab,
                                  {c.eval_temperature, derive_seed(c.eval_seed, {c.demo_scenario}), 1});
  std::vector<std::string> out;
  for (const auto& t : group) out.push_back(t.turns[0].response_text);
  return out;
}

}  // namespace

void load_workspace(const ExperimentConfig& config, Workspace& ws) {
  ws.inflections = load_inflections(config.inflections);
  ws.lexicon = load_lexicon(config.lexicon, config.inflections);
  ws.world = load_world(config.world, ws.lexicon);
  if (config.demo_scenario >= ws.world.scenarios.size()) {
    throw ConfigError("eval.demo_scenario: world has only " +
                      std::to_string(ws.world.scenarios.size()) + " scenarios");
  }
}

PolicyParams starting_params(const ExperimentConfig& config, const World& world) {
  return initial_params(world, config.zero_init ? 0 : config.prior_epochs,
                        config.prior_learning_rate);
}

TrainArtifacts cmd_train(const ExperimentConfig& config, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  Workspace ws;
  load_workspace(config, ws);
  ensure_dir(config.output_dir);
  const std::string hash = config.hash_hex();

  TrainState state;
  state.params = starting_params(config, ws.world);
  std::vector<CurvePoint> curve;
  if (config.eval_every > 0) {
    curve.push_back(curve_point(0, state.params, config, ws.world, ws.lexicon));
  }

  auto observer = [&](const MetricsRow& r) {
    if (r.step % 25 == 0 || r.step == 1) {
      log << fmt::format("step {:>4}  qual {:.3f}  entropy {:.3f}  rouge-l {:.3f}  viol {:.1f}%\n",
                         r.step, r.mean_qual, r.mean_entropy, r.first_turn_rouge_l,
                         r.violation_rate);
    }
  };

  auto write_all = [&](bool diverged) {
    {
      auto out = open_out(config.output_dir / "metrics.csv");
      out << "# config " << hash << '\n';
      write_metrics_csv(state.history, out);
    }
    {
      auto out = open_out(config.output_dir / "diversity_curve.csv");
      out << "# config " << hash << '\n';
      out << "step,inter_sample,intra_session,div,violation_rate\n";
      for (const auto& p : curve) {
        out << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g}\n", p.step, p.inter, p.intra,
                           p.div, p.violation);
      }
    }
    if (!diverged) write_params(config.output_dir / "policy.params", state.params, ws.world, hash);
    nlohmann::json summary = {
        {"config_hash", hash},
        {"config", config_json(config)},
        {"mode", to_string(config.train.mode)},
        {"steps_completed", state.step},
        {"diverged", diverged},
        {"wall_time_seconds",
         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    if (!state.history.empty()) {
      summary["final"] = row_json(state.history.back());
      summary["collapse"] = to_json(collapse_probe(state.history));
    }
    auto out = open_out(config.output_dir / "summary.json");
    out << summary.dump(2) << '\n';
  };

  TrainConfig chunk = config.train;
  try {
    while (state.step < config.train.steps) {
      const std::size_t left = config.train.steps - state.step;
      chunk.steps = config.eval_every > 0 ? std::min(left, config.eval_every) : left;
      train(chunk, ws.world, ws.lexicon, state, observer);
      if (config.eval_every > 0) {
        curve.push_back(curve_point(state.step, state.params, config, ws.world, ws.lexicon));
      }
    }
  } catch (const DivergenceError&) {
    write_all(true);
    throw;
  }
  write_all(false);
  log << "wrote " << (config.output_dir / "metrics.csv").string() << '\n';
  return {std::move(state.history), std::move(state.params)};
}

nlohmann::json cmd_eval(const std::filesystem::path& params_path, const ExperimentConfig& config,
                        const EvalOptions& options, std::ostream& log) {
  Workspace ws;
  load_workspace(config, ws);
  std::ifstream pin(params_path);
  if (!pin) throw IoError("cannot open params " + params_path.string());
  const LoadedParams loaded = load_params(pin, params_path.string());
  check_params_match(loaded, ws.world);
  ensure_dir(config.output_dir);
  const std::string hash = config.hash_hex();
  const World& world = ws.world;
  const std::size_t n = config.eval_samples;

  std::vector<Dialogue> corpus;
  if (options.constrained) {
    std::map<Level, VocabTrie> tries;
    for (Level l : kAllLevels) {
      tries.emplace(l, build_trie(ws.lexicon, l, ws.inflections, world.vocab));
    }
    corpus = sample_constrained_corpus(loaded.params, world, tries, n, config.eval_temperature,
                                       config.eval_seed);
  } else {
    corpus = sample_corpus(loaded.params, world, n, config.eval_temperature, config.eval_seed);
  }

  std::optional<JudgeClient> judge;
  if (!config.judge_endpoint.empty()) {
    JudgeOptions jo;
    jo.endpoint = config.judge_endpoint;
    jo.token = judge_token_from_env();
    if (!config.judge_cache.empty()) jo.cache_dir = config.judge_cache;
    judge.emplace(jo);
  }

  nlohmann::json scenarios = nlohmann::json::array();
  auto csv = open_out(config.output_dir / "eval.csv");
  csv << "# config " << hash << '\n';
  csv << "scenario,topic,level,inter_sample,intra_session,div,violation_rate,entropy,collapsed,"
         "relevance,task,richness,guidance\n";
  double sum_div = 0.0;
  for (std::size_t s = 0; s < world.scenarios.size(); ++s) {
    const auto& sc = world.scenarios[s];
    const std::vector<Dialogue> slice(corpus.begin() + static_cast<long>(s * n),
                                      corpus.begin() + static_cast<long>((s + 1) * n));
    std::vector<std::vector<std::string>> sessions;
    std::vector<std::string> all_responses;
    for (const auto& d : slice) {
      auto& sess = sessions.emplace_back();
      for (const auto& u : d.turns) {
        if (u.role == "assistant") {
          sess.push_back(u.text);
          all_responses.push_back(u.text);
        }
      }
    }
    const DiversityReport div = diversity_from_sessions(sessions);
    const double viol = violation_rate(slice, ws.lexicon);
    MetricsRow probe_row;
    probe_row.mean_entropy =
        response_entropy(loaded.params, world, {sc.level, sc.topic}, all_responses);
    probe_row.first_turn_rouge_l = div.inter_sample;
    const CollapseSummary collapse = collapse_probe(std::span<const MetricsRow>(&probe_row, 1));
    sum_div += div.div;

    nlohmann::json quality = "skipped";
    std::string qcols = "skipped,skipped,skipped,skipped";
    if (judge) {
      try {
        double rel = 0, task = 0, rich = 0, guide = 0;
        for (const auto& d : slice) {
          const auto v = judge->submit({{}, d.turns[0].text, d.turns[1].text, "tutor-v1"});
          rel += v.relevance;
          task += v.task;
          rich += v.richness;
          guide += v.guidance;
        }
        const double m = static_cast<double>(slice.size());
        quality = {{"relevance", rel / m}, {"task", task / m}, {"richness", rich / m},
                   {"guidance", guide / m}};
        qcols = fmt::format("{:.3f},{:.3f},{:.3f},{:.3f}", rel / m, task / m, rich / m, guide / m);
      } catch (const JudgeError& e) {
        quality = {{"error", e.what()}};
        qcols = "error,error,error,error";
      }
    }
    csv << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", s, world.topics[sc.topic],
                       to_string(sc.level), num(div.inter_sample), num(div.intra_session),
                       num(div.div), num(viol), num(probe_row.mean_entropy),
                       collapse.collapsed ? "true" : "false", qcols);
    scenarios.push_back({{"scenario", s},
                         {"topic", world.topics[sc.topic]},
                         {"level", to_string(sc.level)},
                         {"diversity", to_json(div)},
                         {"violation_rate", viol},
                         {"collapse", to_json(collapse)},
                         {"quality", quality}});
  }

  {
    auto out = open_out(config.output_dir / "samples.jsonl");
    write_jsonl(corpus, out);
  }
  nlohmann::json report = {
      {"config_hash", hash},
      {"params", params_path.filename().string()},
      {"decoding", options.constrained ? "constrained" : "free"},
      {"n_samples", n},
      {"temperature", config.eval_temperature},
      {"violation_rate", violation_rate(corpus, ws.lexicon)},
      {"mean_div", sum_div / static_cast<double>(world.scenarios.size())},
      {"scenarios", scenarios}};
  auto out = open_out(config.output_dir / "report.json");
  out << report.dump(2) << '\n';
  log << fmt::format("violation rate {:.2f}%  mean div {:.4f}\n", report["violation_rate"].get<double>(),
                     report["mean_div"].get<double>());
  return report;
}

std::string cmd_demo(const ExperimentConfig& config, std::ostream& log) {
  Workspace ws;
  load_workspace(config, ws);
  ensure_dir(config.output_dir);
  const std::string hash = config.hash_hex();
  const PolicyParams start = starting_params(config, ws.world);
  const auto& sc = ws.world.scenarios.at(config.demo_scenario);

  std::ostringstream t;
  t << "# config " << hash << '\n';
  t << fmt::format("Scenario: {} / {}\nUser: {}\n", ws.world.topics[sc.topic], to_string(sc.level),
                   sc.prompt);
  std::vector<std::pair<Mode, CollapseSummary>> summaries;
  for (Mode mode : {Mode::kGrpo, Mode::kDdpo}) {
    TrainConfig tc = config.train;
    tc.mode = mode;
    PolicyParams params = start;
    log << "training " << to_string(mode) << '\n';
    const auto history = train(tc, ws.world, ws.lexicon, params);
    {
      auto out = open_out(config.output_dir / ("metrics_" + to_string(mode) + ".csv"));
      out << "# config " << hash << '\n';
      write_metrics_csv(history, out);
    }
    const auto samples = first_turn_samples(params, config, ws.world);
    std::string label = mode == Mode::kGrpo ? "GRPO" : "DDPO";
    t << fmt::format("\n{}  (inter-sample Rouge-L {:.3f})\n", label, inter_sample_rouge(samples));
    for (std::size_t i = 0; i < samples.size(); ++i) t << "  " << i + 1 << ". " << samples[i] << '\n';
    if (!history.empty()) summaries.emplace_back(mode, collapse_probe(history));
  }
  t << "\nCollapse summary (training metrics, final step)\n";
  if (summaries.empty()) t << "  no training steps\n";
  for (const auto& [mode, s] : summaries) {
    t << fmt::format("  {}: entropy {:.4f}  slope {:+.2e}/step  inter-sample {:.4f}  collapsed {}\n",
                     to_string(mode), s.final_entropy, s.entropy_slope, s.final_inter_sample,
                     s.collapsed ? "yes" : "no");
  }
  auto out = open_out(config.output_dir / "demo.txt");
  out << t.str();
  return t.str();
}

nlohmann::json cmd_corpus_stats(const std::filesystem::path& corpus) {
  std::ifstream in(corpus);
  if (!in) throw IoError("cannot open corpus " + corpus.string());
  const auto dialogues = read_jsonl(in, corpus.string());
  std::set<std::string> topics;
  std::map<std::string, std::size_t> per_level;
  std::size_t turns = 0, assistant = 0, words = 0;
  for (const auto& d : dialogues) {
    topics.insert(d.topic);
    ++per_level[to_string(d.level)];
    for (const auto& u : d.turns) {
      ++turns;
      if (u.role == "assistant") ++assistant;
      words += tokenize(u.text).size();
    }
  }
  return {{"dialogues", dialogues.size()},
          {"turns", turns},
          {"assistant_turns", assistant},
          {"topics", topics.size()},
          {"words", words},
          {"avg_turns_per_topic",
           topics.empty() ? 0.0 : static_cast<double>(turns) / static_cast<double>(topics.size())},
          {"dialogues_per_level", per_level}};
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diversity-regularized group policy optimization on a toy tutoring world"};
  app.require_subcommand(1);

  std::filesystem::path config_path, params_path, corpus_path;
  std::string mode_name;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::filesystem::path out_dir;
  std::string judge_endpoint;
  bool constrained = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (INI)")->required();
    sub->add_option("--seed", seed, "override train.seed");
    sub->add_option("--out", out_dir, "override paths.output_dir");
  };
  auto* train_cmd = app.add_subcommand("train", "train one policy and write its artifacts");
  add_common(train_cmd);
  train_cmd->add_option("--mode", mode_name, "grpo or ddpo");
  train_cmd->add_option("--steps", steps, "override train.steps");

  auto* eval_cmd = app.add_subcommand("eval", "score a saved policy");
  add_common(eval_cmd);
  eval_cmd->add_option("--params", params_path, "policy.params file")->required();
  eval_cmd->add_flag("--constrained", constrained, "decode through the level's vocabulary trie");
  eval_cmd->add_option("--judge-endpoint", judge_endpoint, "optional quality judge URL");

  auto* demo_cmd = app.add_subcommand("demo", "train both modes and compare their samples");
  add_common(demo_cmd);
  demo_cmd->add_option("--steps", steps, "override train.steps");

  auto* stats_cmd = app.add_subcommand("corpus-stats", "count turns, topics and words");
  stats_cmd->add_option("corpus", corpus_path, "JSON Lines corpus")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (stats_cmd->parsed()) {
      out << cmd_corpus_stats(corpus_path).dump(2) << '\n';
      return kExitOk;
    }
    ExperimentConfig config = load_config(config_path);
    ConfigOverrides o;
    if (!mode_name.empty()) {
      o.mode = parse_mode(mode_name);
      if (!o.mode) throw ConfigError("--mode: expected 'grpo' or 'ddpo'");
    }
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed") > 0) o.seed = seed;
    if (auto* opt = sub->get_option_no_throw("--steps"); opt != nullptr && opt->count() > 0) {
      o.steps = steps;
    }
    if (!out_dir.empty()) o.output_dir = out_dir;
    if (!judge_endpoint.empty()) config.judge_endpoint = judge_endpoint;
    apply_overrides(config, o);

    if (train_cmd->parsed()) {
      cmd_train(config, err);
    } else if (eval_cmd->parsed()) {
      cmd_eval(params_path, config, {constrained}, err);
    } else if (demo_cmd->parsed()) {
      out << cmd_demo(config, err);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error:\n";
    for (const auto& p : e.problems()) err << "  " << p << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace ddpo
