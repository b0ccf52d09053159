#include "ddpo/config.h"

#include <unistd.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "ddpo/errors.h"
#include "ddpo/text.h"

namespace ddpo {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> kKeys = {
      {"paths", {"world", "lexicon", "inflections", "output_dir"}},
      {"train",
       {"mode", "group_size", "turns", "epsilon", "delta", "gamma", "learning_rate", "steps",
        "inner_epochs", "seed", "temperature", "sgl_every_turn", "init", "prior_epochs",
        "prior_learning_rate", "eval_every"}},
      {"schedule", {}},
      {"eval",
       {"n_samples", "temperature", "seed", "demo_scenario", "judge_endpoint", "judge_cache"}},
  };
  return kKeys;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::vector<std::string>& problems)
      : tree_(tree), problems_(problems) {}

  std::optional<std::string> raw(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return *v;
  }

  template <typename T>
  void number(const std::string& key, T& out) {
    auto v = raw(key);
    if (!v) return;
    std::istringstream in(*v);
    T parsed{};
    in >> parsed;
    if (!in || !(in >> std::ws).eof()) {
      problems_.push_back(key + ": '" + *v + "' is not a valid number");
      return;
    }
    if constexpr (std::is_unsigned_v<T>) {
      if (v->find('-') != std::string::npos) {
        problems_.push_back(key + ": must not be negative");
        return;
      }
    }
    out = parsed;
  }

  void boolean(const std::string& key, bool& out) {
    auto v = raw(key);
    if (!v) return;
    if (*v == "true" || *v == "1" || *v == "yes") out = true;
    else if (*v == "false" || *v == "0" || *v == "no") out = false;
    else problems_.push_back(key + ": '" + *v + "' is not a boolean");
  }

 private:
  const pt::ptree& tree_;
  std::vector<std::string>& problems_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::vector<std::string> validate_fields(const ExperimentConfig& c) {
  auto problems = c.train.validate();
  for (auto& p : problems) p = "train." + p;
  if (c.prior_epochs > 0 && !(c.prior_learning_rate > 0.0)) {
    problems.push_back("train.prior_learning_rate must be > 0");
  }
  if (c.eval_samples < 2) problems.push_back("eval.n_samples must be >= 2");
  if (!(c.eval_temperature > 0.0)) problems.push_back("eval.temperature must be > 0");
  return problems;
}

std::string content_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "missing";
  const std::string data((std::istreambuf_iterator<char>(in)), {});
  return hex64(fnv1a64(data));
}

}  // namespace

std::string ExperimentConfig::canonical() const {
  std::string out;
  auto add = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  auto num = [](double v) { return fmt::format("{}", v); };
  // Data files enter by content so the hash does not depend on where the run
  // was launched from.
  add("paths.world", content_digest(world));
  add("paths.lexicon", content_digest(lexicon));
  add("paths.inflections", content_digest(inflections));
  add("train.mode", to_string(train.mode));
  add("train.group_size", std::to_string(train.group_size));
  add("train.turns", std::to_string(train.turns));
  add("train.epsilon", num(train.epsilon));
  add("train.delta", num(train.delta));
  add("train.gamma", num(train.gamma));
  add("train.learning_rate", num(train.learning_rate));
  add("train.steps", std::to_string(train.steps));
  add("train.inner_epochs", std::to_string(train.inner_epochs));
  add("train.seed", std::to_string(train.seed));
  add("train.temperature", num(train.temperature));
  add("train.sgl_every_turn", train.sgl_every_turn ? "true" : "false");
  add("train.init", zero_init ? "zero" : "base");
  add("train.prior_epochs", std::to_string(prior_epochs));
  add("train.prior_learning_rate", num(prior_learning_rate));
  add("train.eval_every", std::to_string(eval_every));
  for (const auto& bp : train.schedule.breakpoints()) {
    add("schedule." + num(bp.step),
        num(bp.weights.qual) + " " + num(bp.weights.sgl) + " " + num(bp.weights.mul));
  }
  add("eval.n_samples", std::to_string(eval_samples));
  add("eval.temperature", num(eval_temperature));
  add("eval.seed", std::to_string(eval_seed));
  add("eval.demo_scenario", std::to_string(demo_scenario));
  add("eval.judge_endpoint", judge_endpoint);
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical()); }
std::string ExperimentConfig::hash_hex() const { return hex64(hash()); }

std::vector<std::string> ExperimentConfig::check_paths() const {
  std::vector<std::string> problems;
  auto need_file = [&](const std::string& field, const std::filesystem::path& p) {
    if (p.empty()) problems.push_back(field + ": missing");
    else if (!std::filesystem::is_regular_file(p)) {
      problems.push_back(field + ": no such file '" + p.string() + "'");
    }
  };
  need_file("paths.world", world);
  need_file("paths.lexicon", lexicon);
  need_file("paths.inflections", inflections);
  if (output_dir.empty()) {
    problems.push_back("paths.output_dir: missing");
  } else {
    // The directory may not exist yet; its nearest existing ancestor must be
    // a writable directory.
    std::filesystem::path probe = std::filesystem::absolute(output_dir);
    while (!probe.empty() && !std::filesystem::exists(probe) && probe != probe.parent_path()) {
      probe = probe.parent_path();
    }
    if (!std::filesystem::is_directory(probe) || ::access(probe.c_str(), W_OK) != 0) {
      problems.push_back("paths.output_dir: '" + output_dir.string() + "' is not writable");
    }
  }
  return problems;
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                              const std::string& source) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  std::vector<std::string> problems;
  for (const auto& [section, body] : tree) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) {
      problems.push_back("unknown section [" + section + "]");
      continue;
    }
    if (section == "schedule") continue;
    for (const auto& [key, _] : body) {
      if (it->second.count(key) == 0) problems.push_back(section + "." + key + ": unknown key");
    }
  }

  ExperimentConfig c;
  c.source = source;
  Reader r(tree, problems);
  if (auto v = r.raw("paths.world")) c.world = resolve(base_dir, *v);
  if (auto v = r.raw("paths.lexicon")) c.lexicon = resolve(base_dir, *v);
  if (auto v = r.raw("paths.inflections")) c.inflections = resolve(base_dir, *v);
  if (auto v = r.raw("paths.output_dir")) c.output_dir = resolve(base_dir, *v);

  if (auto v = r.raw("train.mode")) {
    if (auto m = parse_mode(*v)) c.train.mode = *m;
    else problems.push_back("train.mode: expected 'grpo' or 'ddpo', got '" + *v + "'");
  }
  r.number("train.group_size", c.train.group_size);
  r.number("train.turns", c.train.turns);
  r.number("train.epsilon", c.train.epsilon);
  r.number("train.delta", c.train.delta);
  r.number("train.gamma", c.train.gamma);
  r.number("train.learning_rate", c.train.learning_rate);
  r.number("train.steps", c.train.steps);
  r.number("train.inner_epochs", c.train.inner_epochs);
  r.number("train.seed", c.train.seed);
  r.number("train.temperature", c.train.temperature);
  r.boolean("train.sgl_every_turn", c.train.sgl_every_turn);
  if (auto v = r.raw("train.init")) {
    if (*v == "zero") c.zero_init = true;
    else if (*v != "base") problems.push_back("train.init: expected 'base' or 'zero'");
  }
  r.number("train.prior_epochs", c.prior_epochs);
  r.number("train.prior_learning_rate", c.prior_learning_rate);
  r.number("train.eval_every", c.eval_every);

  if (auto sched = tree.get_child_optional("schedule"); sched && !sched->empty()) {
    std::vector<WeightSchedule::Breakpoint> points;
    for (const auto& [key, value] : *sched) {
      const std::string text = value.get_value<std::string>();
      std::istringstream ks(key), vs(text);
      WeightSchedule::Breakpoint bp{};
      ks >> bp.step;
      vs >> bp.weights.qual >> bp.weights.sgl >> bp.weights.mul;
      if (!ks || !(ks >> std::ws).eof() || !vs || !(vs >> std::ws).eof()) {
        problems.push_back("schedule." + key + ": expected '<step> = <qual> <sgl> <mul>'");
        continue;
      }
      points.push_back(bp);
    }
    if (!points.empty()) {
      try {
        c.train.schedule = WeightSchedule(std::move(points));
      } catch (const std::invalid_argument& e) {
        problems.push_back(std::string("schedule: ") + e.what());
      }
    }
  }

  r.number("eval.n_samples", c.eval_samples);
  r.number("eval.temperature", c.eval_temperature);
  r.number("eval.seed", c.eval_seed);
  r.number("eval.demo_scenario", c.demo_scenario);
  if (auto v = r.raw("eval.judge_endpoint")) c.judge_endpoint = *v;
  if (auto v = r.raw("eval.judge_cache")) c.judge_cache = resolve(base_dir, *v);

  for (auto& p : validate_fields(c)) problems.push_back(std::move(p));
  for (auto& p : c.check_paths()) problems.push_back(std::move(p));
  if (!problems.empty()) {
    for (auto& p : problems) p = source + ": " + p;
    throw ConfigError(problems);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, path.parent_path(), path.string());
}

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& o) {
  if (o.mode) config.train.mode = *o.mode;
  if (o.seed) config.train.seed = *o.seed;
  if (o.steps) config.train.steps = *o.steps;
  if (o.output_dir) config.output_dir = *o.output_dir;
  auto problems = validate_fields(config);
  for (auto& p : config.check_paths()) problems.push_back(std::move(p));
  if (!problems.empty()) throw ConfigError(problems);
}

}  // namespace ddpo
