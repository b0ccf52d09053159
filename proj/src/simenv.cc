#include "ddpo/simenv.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ddpo/errors.h"
#include "ddpo/reward.h"

namespace ddpo {
namespace {

// Words too common to count as a reused teacher word.
const std::set<std::string>& function_words() {
  static const std::set<std::string> kWords = {
      "a",    "the",  "and",  "i",     "you",     "we",    "it",   "be",    "do",
      "have", "can",  "must", "my",    "your",    "me",    "to",   "with",  "for",
      "too",  "very", "yes",  "about", "what",    "how",   "why",  "where", "when",
      "also", "is",   "are",  "am",    "because", "often", "not",  "n't",   "'s"};
  return kWords;
}

std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

}  // namespace

std::optional<Bucket> parse_bucket(std::string_view s) {
  if (s == "opening") return Bucket::kOpening;
  if (s == "middle") return Bucket::kMiddle;
  if (s == "closing") return Bucket::kClosing;
  return std::nullopt;
}

std::string to_string(Bucket b) {
  switch (b) {
    case Bucket::kOpening: return "opening";
    case Bucket::kMiddle: return "middle";
    case Bucket::kClosing: return "closing";
  }
  return "unknown";
}

Bucket bucket_for_turn(std::size_t turn, std::size_t turns) {
  if (turn <= 2) return Bucket::kOpening;
  if (turn >= turns) return Bucket::kClosing;
  return Bucket::kMiddle;
}

UserSimulator::UserSimulator(std::map<Key, std::vector<Candidate>> bank, double echo_probability,
                             const GradedLexicon* lexicon)
    : bank_(std::move(bank)), echo_probability_(echo_probability), lexicon_(lexicon) {
  for (const auto& [key, cands] : bank_) {
    if (cands.empty()) throw ConfigError("empty utterance bank entry");
    for (const auto& c : cands) {
      if (!(c.weight > 0.0)) throw ConfigError("bank weights must be positive");
    }
  }
}

const std::vector<UserSimulator::Candidate>& UserSimulator::candidates(const Key& key) const {
  auto it = bank_.find(key);
  if (it == bank_.end()) {
    throw ConfigError("no user utterances for topic " + std::to_string(std::get<0>(key)) + ", " +
                      to_string(std::get<1>(key)) + ", " + to_string(std::get<2>(key)));
  }
  return it->second;
}

std::vector<std::string> UserSimulator::content_words(std::string_view response) const {
  std::vector<std::string> out;
  const std::set<std::string> none;
  for (const auto& tok : tokenize_cased(response)) {
    if (lexicon_ != nullptr && classify_exemption(*lexicon_, tok, none)) continue;
    if (lexicon_ == nullptr && is_number_token(tok.lower)) continue;
    if (function_words().count(tok.lower) > 0) continue;
    out.push_back(tok.lower);
  }
  return out;
}

std::string simulate_user(const UserSimulator& sim, const Scenario& scenario, std::size_t turn,
                          const std::vector<Utterance>& /*history*/,
                          std::string_view last_response, Rng& rng) {
  const auto& cands =
      sim.candidates({scenario.topic, scenario.level, bucket_for_turn(turn, scenario.turns)});
  double total = 0.0;
  for (const auto& c : cands) total += c.weight;
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t pick = cands.size() - 1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    acc += cands[i].weight;
    if (u < acc) {
      pick = i;
      break;
    }
  }
  std::string text = cands[pick].text;
  // The echo draw happens unconditionally so the stream stays aligned.
  const double echo = rng.uniform();
  if (echo < sim.echo_probability()) {
    const auto words = sim.content_words(last_response);
    if (!words.empty()) {
      text += " " + capitalize(words[rng.below(words.size())]) + ".";
    }
  }
  return text;
}

std::vector<std::string> Trajectory::history_before(std::size_t turn) const {
  std::vector<std::string> h;
  for (std::size_t k = 0; k + 1 < turn && k < turns.size(); ++k) {
    h.push_back(turns[k].user);
    h.push_back(turns[k].response_text);
  }
  if (turn >= 1 && turn <= turns.size()) h.push_back(turns[turn - 1].user);
  return h;
}

Dialogue Trajectory::to_dialogue(const std::vector<std::string>& topic_names) const {
  Dialogue d;
  d.topic = scenario.topic < topic_names.size() ? topic_names[scenario.topic]
                                                : std::to_string(scenario.topic);
  d.level = scenario.level;
  for (const auto& t : turns) {
    d.turns.push_back({"user", t.user});
    d.turns.push_back({"assistant", t.response_text});
  }
  return d;
}

std::size_t response_budget(Level level) { return length_range(level).max + 5; }

Trajectory rollout(const Scenario& scenario, const PolicyParams& params, const UserSimulator& sim,
                   const Vocabulary& vocab, double temperature, std::size_t turns, Rng& rng) {
  Trajectory traj;
  traj.scenario = scenario;
  traj.scenario.turns = turns;
  const Conditioning cond{scenario.level, scenario.topic};
  std::vector<Utterance> history;
  std::string user = scenario.prompt;
  for (std::size_t k = 1; k <= turns; ++k) {
    if (k > 1) user = simulate_user(sim, traj.scenario, k, history, traj.turns.back().response_text, rng);
    history.push_back({"user", user});
    Turn turn;
    turn.user = user;
    turn.response = sample_response(params, cond, response_budget(scenario.level), temperature, rng);
    turn.response_text = vocab.render(turn.response.tokens);
    history.push_back({"assistant", turn.response_text});
    traj.turns.push_back(std::move(turn));
  }
  return traj;
}

std::vector<Trajectory> sample_group(const Scenario& scenario, std::size_t group_size,
                                     const PolicyParams& params, const UserSimulator& sim,
                                     const Vocabulary& vocab, const RolloutOptions& options) {
  if (group_size < 2) throw std::invalid_argument("group size must be at least 2");
  const std::size_t turns = options.turns == 0 ? scenario.turns : options.turns;
  if (turns == 0) throw std::invalid_argument("scenario needs at least one turn");
  std::vector<Trajectory> group;
  group.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    Rng rng(derive_seed(options.seed, {i}));
    group.push_back(rollout(scenario, params, sim, vocab, options.temperature, turns, rng));
  }
  return group;
}

std::size_t World::topic_id(const std::string& name) const {
  auto it = std::find(topics.begin(), topics.end(), name);
  if (it == topics.end()) throw ConfigError("unknown topic '" + name + "'");
  return static_cast<std::size_t>(it - topics.begin());
}

FeatureLayout World::layout() const {
  std::size_t longest = 1;
  for (Level l : kAllLevels) longest = std::max(longest, response_budget(l));
  FeatureLayout layout;
  layout.vocab_size = vocab.size();
  layout.position_buckets = (longest + kPositionBucketSize - 1) / kPositionBucketSize;
  layout.levels = kAllLevels.size();
  layout.topics = topics.size();
  return layout;
}

World parse_world(const nlohmann::json& j, const GradedLexicon& lexicon,
                  const std::string& source) {
  std::vector<std::string> problems;
  World world;
  auto level_field = [&](const nlohmann::json& e, const std::string& where) -> Level {
    const auto lv = parse_level(e.value("level", std::string()));
    if (!lv) {
      problems.push_back(source + ": " + where + ": bad level");
      return Level::kL1;
    }
    return *lv;
  };
  auto topic_field = [&](const nlohmann::json& e, const std::string& where) -> std::size_t {
    const std::string name = e.value("topic", std::string());
    auto it = std::find(world.topics.begin(), world.topics.end(), name);
    if (it == world.topics.end()) {
      problems.push_back(source + ": " + where + ": unknown topic '" + name + "'");
      return 0;
    }
    return static_cast<std::size_t>(it - world.topics.begin());
  };

  try {
    world.topics = j.at("topics").get<std::vector<std::string>>();
    auto tokens = j.at("vocabulary").get<std::vector<std::string>>();
    std::set<std::string> caps;
    for (const auto& t : tokens) {
      if (lexicon.is_proper(t)) caps.insert(t);
    }
    world.vocab = Vocabulary(std::move(tokens), std::move(caps));
    if (world.topics.empty()) problems.push_back(source + ": no topics");

    std::map<UserSimulator::Key, std::vector<UserSimulator::Candidate>> bank;
    std::size_t idx = 0;
    for (const auto& e : j.at("bank")) {
      const std::string where = "bank[" + std::to_string(idx++) + "]";
      const auto bucket = parse_bucket(e.value("bucket", std::string()));
      if (!bucket) {
        problems.push_back(source + ": " + where + ": bad bucket");
        continue;
      }
      const std::string text = e.value("text", std::string());
      if (text.empty()) problems.push_back(source + ": " + where + ": empty text");
      bank[{topic_field(e, where), level_field(e, where), *bucket}].push_back(
          {text, e.value("weight", 1.0)});
    }
    idx = 0;
    for (const auto& e : j.at("scenarios")) {
      const std::string where = "scenarios[" + std::to_string(idx++) + "]";
      Scenario s;
      s.topic = topic_field(e, where);
      s.level = level_field(e, where);
      s.prompt = e.value("prompt", std::string());
      s.turns = e.value("turns", std::size_t{1});
      if (s.prompt.empty()) problems.push_back(source + ": " + where + ": empty prompt");
      if (s.turns < 1) problems.push_back(source + ": " + where + ": turns must be >= 1");
      world.scenarios.push_back(std::move(s));
    }
    if (j.contains("base_corpus")) {
      idx = 0;
      for (const auto& e : j.at("base_corpus")) {
        const std::string where = "base_corpus[" + std::to_string(idx++) + "]";
        world.base_corpus.push_back(
            {topic_field(e, where), level_field(e, where), e.value("text", std::string())});
      }
    }
    if (!problems.empty()) throw ConfigError(problems);
    world.simulator = UserSimulator(std::move(bank), j.value("echo_probability", 0.0), &lexicon);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return world;
}

World load_world(const std::filesystem::path& path, const GradedLexicon& lexicon) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return parse_world(j, lexicon, path.string());
}

PolicyParams initial_params(const World& world, std::size_t fit_epochs, double fit_learning_rate) {
  PolicyParams params(world.layout());
  if (fit_epochs == 0 || world.base_corpus.empty()) return params;
  std::vector<LikelihoodExample> examples;
  for (const auto& r : world.base_corpus) {
    LikelihoodExample ex{{r.level, r.topic}, world.vocab.encode(r.text)};
    ex.tokens.push_back(world.vocab.end_id());
    examples.push_back(std::move(ex));
  }
  fit_likelihood(params, examples, fit_epochs, fit_learning_rate);
  return params;
}

nlohmann::json to_json(const Dialogue& d) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& u : d.turns) turns.push_back({{"role", u.role}, {"text", u.text}});
  return {{"topic", d.topic}, {"level", to_string(d.level)}, {"turns", turns}};
}

void write_jsonl(const std::vector<Dialogue>& dialogues, std::ostream& out) {
  for (const auto& d : dialogues) out << to_json(d).dump() << '\n';
}

std::vector<Dialogue> read_jsonl(std::istream& in, const std::string& source) {
  std::vector<Dialogue> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Dialogue d;
      d.topic = j.at("topic").get<std::string>();
      const auto lv = parse_level(j.at("level").get<std::string>());
      if (!lv) throw ParseError(source, lineno, "bad level");
      d.level = *lv;
      for (const auto& t : j.at("turns")) {
        Utterance u{t.at("role").get<std::string>(), t.at("text").get<std::string>()};
        if (u.role != "user" && u.role != "assistant") {
          throw ParseError(source, lineno, "role must be 'user' or 'assistant'");
        }
        d.turns.push_back(std::move(u));
      }
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return out;
}

}  // namespace ddpo
