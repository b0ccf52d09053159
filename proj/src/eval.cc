#include "ddpo/eval.h"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include "httplib.h"

#include "ddpo/errors.h"
#include "ddpo/text.h"

namespace ddpo {
namespace {

const char* const kScoreKeys[] = {"relevance", "task", "richness", "guidance"};

int score_field(const nlohmann::json& j, const std::string& name, const std::string& raw) {
  const std::string key = "score_" + name;
  const nlohmann::json* v = nullptr;
  if (j.contains(key)) v = &j.at(key);
  else if (j.contains(name)) v = &j.at(name);
  if (v == nullptr) throw JudgeParseError("verdict lacks '" + key + "'", raw);
  if (!v->is_number_integer()) throw JudgeParseError("'" + key + "' is not an integer", raw);
  const int s = v->get<int>();
  if (s < 1 || s > 5) throw JudgeParseError("'" + key + "' outside 1..5", raw);
  return s;
}

Dialogue constrained_rollout(const Scenario& scenario, const PolicyParams& params,
                             const World& world, const VocabTrie& trie, double temperature,
                             const std::vector<std::string>& topic_names, Rng& rng) {
  Dialogue d;
  d.topic = topic_names.at(scenario.topic);
  d.level = scenario.level;
  std::string last;
  for (std::size_t k = 1; k <= scenario.turns; ++k) {
    const std::string user =
        k == 1 ? scenario.prompt : simulate_user(world.simulator, scenario, k, d.turns, last, rng);
    d.turns.push_back({"user", user});
    const auto r = constrained_sample(params, {scenario.level, scenario.topic}, trie,
                                      response_budget(scenario.level), temperature, rng);
    last = world.vocab.render(r.tokens);
    d.turns.push_back({"assistant", last});
  }
  return d;
}

}  // namespace

double inter_sample_rouge(std::span<const std::string> texts) {
  std::vector<TokenSeq> seqs;
  for (const auto& t : texts) seqs.push_back(tokenize(t));
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

double consecutive_rouge(std::span<const std::string> turns) {
  if (turns.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 1; k < turns.size(); ++k) {
    sum += rouge_l_f1(tokenize(turns[k]), tokenize(turns[k - 1]));
  }
  return sum / static_cast<double>(turns.size() - 1);
}

DiversityReport diversity_from_sessions(const std::vector<std::vector<std::string>>& sessions) {
  if (sessions.size() < 2) throw std::invalid_argument("need at least two sessions");
  std::vector<std::string> first;
  double intra = 0.0;
  for (const auto& s : sessions) {
    if (s.empty()) throw std::invalid_argument("empty session");
    first.push_back(s.front());
    intra += consecutive_rouge(s);
  }
  DiversityReport r;
  r.inter_sample = inter_sample_rouge(first);
  r.intra_session = intra / static_cast<double>(sessions.size());
  r.div = 1.0 - (0.5 * r.inter_sample + 0.5 * r.intra_session);
  return r;
}

DiversityReport diversity_score(const PolicyParams& params, const Scenario& scenario,
                                const World& world, std::size_t n_samples, double temperature,
                                std::uint64_t seed) {
  if (n_samples < 2) throw std::invalid_argument("n_samples must be at least 2");
  const auto group = sample_group(scenario, n_samples, params, world.simulator, world.vocab,
                                  {temperature, seed, scenario.turns});
  std::vector<std::vector<std::string>> sessions;
  for (const auto& traj : group) {
    auto& s = sessions.emplace_back();
    for (const auto& t : traj.turns) s.push_back(t.response_text);
  }
  return diversity_from_sessions(sessions);
}

ViolationTally count_violations(const std::vector<Dialogue>& dialogues,
                                const GradedLexicon& lexicon) {
  ViolationTally tally;
  for (const auto& d : dialogues) {
    std::vector<std::string> history;
    for (const auto& u : d.turns) {
      if (u.role == "assistant") {
        ++tally.turns;
        if (violation_check(u.text, d.level, history, lexicon).violated) ++tally.violations;
      }
      history.push_back(u.text);
    }
  }
  return tally;
}

double violation_rate(const std::vector<Dialogue>& dialogues, const GradedLexicon& lexicon) {
  return count_violations(dialogues, lexicon).rate();
}

std::vector<Dialogue> sample_corpus(const PolicyParams& params, const World& world,
                                    std::size_t per_scenario, double temperature,
                                    std::uint64_t seed) {
  std::vector<Dialogue> out;
  for (std::size_t s = 0; s < world.scenarios.size(); ++s) {
    const auto& sc = world.scenarios[s];
    for (std::size_t j = 0; j < per_scenario; ++j) {
      Rng rng(derive_seed(seed, {s, j}));
      out.push_back(rollout(sc, params, world.simulator, world.vocab, temperature, sc.turns, rng)
                        .to_dialogue(world.topics));
    }
  }
  return out;
}

std::vector<Dialogue> sample_constrained_corpus(const PolicyParams& params, const World& world,
                                                const std::map<Level, VocabTrie>& tries,
                                                std::size_t per_scenario, double temperature,
                                                std::uint64_t seed) {
  std::vector<Dialogue> out;
  for (std::size_t s = 0; s < world.scenarios.size(); ++s) {
    const auto& sc = world.scenarios[s];
    const auto& trie = tries.at(sc.level);
    for (std::size_t j = 0; j < per_scenario; ++j) {
      Rng rng(derive_seed(seed, {s, j}));
      out.push_back(constrained_rollout(sc, params, world, trie, temperature, world.topics, rng));
    }
  }
  return out;
}

CollapseSummary collapse_probe(std::span<const MetricsRow> history, double threshold) {
  if (history.empty()) throw std::invalid_argument("collapse_probe needs a non-empty history");
  CollapseSummary s;
  s.final_entropy = history.back().mean_entropy;
  s.final_inter_sample = history.back().first_turn_rouge_l;
  s.collapsed = s.final_inter_sample >= threshold;
  const std::size_t begin = history.size() * 3 / 4;
  const auto tail = history.subspan(std::min(begin, history.size() - 1));
  if (tail.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (const auto& r : tail) {
      mx += static_cast<double>(r.step);
      my += r.mean_entropy;
    }
    mx /= static_cast<double>(tail.size());
    my /= static_cast<double>(tail.size());
    double sxy = 0.0, sxx = 0.0;
    for (const auto& r : tail) {
      const double dx = static_cast<double>(r.step) - mx;
      sxy += dx * (r.mean_entropy - my);
      sxx += dx * dx;
    }
    s.entropy_slope = sxx > 0.0 ? sxy / sxx : 0.0;
  }
  return s;
}

nlohmann::json to_json(const CollapseSummary& s) {
  return {{"final_entropy", s.final_entropy},
          {"entropy_slope", s.entropy_slope},
          {"final_inter_sample", s.final_inter_sample},
          {"collapsed", s.collapsed}};
}

nlohmann::json to_json(const DiversityReport& r) {
  return {{"inter_sample", r.inter_sample}, {"intra_session", r.intra_session}, {"div", r.div}};
}

// ---------------------------------------------------------------------------
// Judge

std::string rubric_prompt(const std::string& rubric_id) {
  if (rubric_id != "tutor-v1") throw std::invalid_argument("unknown rubric '" + rubric_id + "'");
  return R"(You grade one reply written by a spoken-English tutor for a young learner.
You receive the earlier conversation, the learner's latest message, and the tutor reply to grade.
A good reply first reacts to or builds on what the learner said and then asks one question.
It should sound like natural speech: no brackets, slashes or other written-only notation.

Score each dimension from 1 (very poor) to 5 (excellent):
- relevance: start at 5. Subtract 1 for a small drift or for following the learner off topic,
  2 if the reply does not fit the topic, 3 if it ignores the topic entirely.
- task: start at 3. Subtract 1 if there is no question, the length is wrong, or the
  instructions were ignored; 2 for symbols a person would not say; 4 for non-English text.
  Add 1 for a reaction or extension before the question, 2 if that extension is excellent.
- richness: 3 for a bare question, 4 for one or two extra pieces of information,
  5 for three or more.
- guidance: 3 for a yes/no question, 4 for a question about a concrete fact,
  5 for a question that asks the learner to think or explain.
Clamp every score to the range 1..5.

Reply with a single JSON object and nothing else:
{"score_relevance": int, "reason_relevance": str, "score_task": int, "reason_task": str,
 "score_richness": int, "reason_richness": str, "score_guidance": int, "reason_guidance": str})";
}

nlohmann::json judge_payload(const JudgeRequest& request) {
  return {{"system", rubric_prompt(request.rubric_id)},
          {"rubric", request.rubric_id},
          {"dialogue",
           {{"context", request.context},
            {"user_input", request.user_input},
            {"response", request.response}}}};
}

JudgeVerdict parse_verdict(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    const auto open = body.find('{');
    const auto close = body.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open) {
      j = nlohmann::json::parse(body.substr(open, close - open + 1), nullptr, false);
    }
  }
  if (j.is_discarded() || !j.is_object()) throw JudgeParseError("response is not JSON", body);
  JudgeVerdict v;
  v.relevance = score_field(j, "relevance", body);
  v.task = score_field(j, "task", body);
  v.richness = score_field(j, "richness", body);
  v.guidance = score_field(j, "guidance", body);
  for (const char* name : kScoreKeys) {
    const std::string key = std::string("reason_") + name;
    if (j.contains(key) && j.at(key).is_string()) v.reasons[name] = j.at(key).get<std::string>();
  }
  return v;
}

nlohmann::json to_json(const JudgeVerdict& v) {
  nlohmann::json j = {{"score_relevance", v.relevance},
                      {"score_task", v.task},
                      {"score_richness", v.richness},
                      {"score_guidance", v.guidance}};
  for (const auto& [name, reason] : v.reasons) j["reason_" + name] = reason;
  return j;
}

std::string judge_token_from_env() {
  const char* t = std::getenv("DDPO_JUDGE_TOKEN");
  return t == nullptr ? std::string() : std::string(t);
}

JudgeClient::JudgeClient(JudgeOptions options) : options_(std::move(options)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(options_.endpoint, m, kUrl)) {
    throw std::invalid_argument("judge endpoint must be an http(s) URL: " + options_.endpoint);
  }
  scheme_host_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
  if (options_.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  if (options_.cache_dir) std::filesystem::create_directories(*options_.cache_dir);
}

std::string JudgeClient::request_key(const std::string& endpoint, const JudgeRequest& request) {
  return hex64(fnv1a64(endpoint + '\n' + judge_payload(request).dump()));
}

std::string JudgeClient::post(const std::string& body) {
  httplib::Client cli(scheme_host_);
  cli.set_connection_timeout(options_.timeout);
  cli.set_read_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.token.empty()) headers.emplace("Authorization", "Bearer " + options_.token);

  std::string last_error;
  auto backoff = options_.initial_backoff;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    ++network_calls_;
    auto res = cli.Post(path_, headers, body, "application/json");
    if (res) {
      const int status = res->status;
      if (status == 401 || status == 403) {
        throw JudgeAuthError("judge rejected credentials (HTTP " + std::to_string(status) + ")");
      }
      if (status >= 200 && status < 300) return res->body;
      last_error = "HTTP " + std::to_string(status);
      if (status != 429 && status < 500) throw JudgeTransportError("judge returned " + last_error);
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw JudgeTransportError("judge unreachable after " + std::to_string(options_.max_attempts) +
                            " attempts: " + last_error);
}

JudgeVerdict JudgeClient::submit(const JudgeRequest& request) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string key = request_key(options_.endpoint, request);
  if (auto it = memory_.find(key); it != memory_.end()) {
    ++cache_hits_;
    return it->second;
  }
  std::optional<std::filesystem::path> file;
  if (options_.cache_dir) {
    file = *options_.cache_dir / (key + ".json");
    std::ifstream in(*file);
    if (in) {
      const std::string cached((std::istreambuf_iterator<char>(in)), {});
      try {
        auto v = parse_verdict(cached);
        ++cache_hits_;
        memory_.emplace(key, v);
        return v;
      } catch (const JudgeParseError&) {
        // A corrupt cache entry is refetched.
      }
    }
  }
  const std::string body = post(judge_payload(request).dump());
  JudgeVerdict v = parse_verdict(body);
  memory_.emplace(key, v);
  if (file) {
    std::ofstream out(*file);
    if (out) out << to_json(v).dump() << '\n';
  }
  return v;
}

}  // namespace ddpo
