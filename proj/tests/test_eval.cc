#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <fstream>
#include <thread>

#include "ddpo/eval.h"
#include "httplib.h"
#include "support.h"

using namespace ddpo;
using namespace ddpo::testing;

namespace {

std::vector<std::string> lines_of(const std::string& fixture) {
  std::ifstream in(fixture_path(fixture));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double oracle_pair_mean(const std::vector<std::string>& texts) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    for (std::size_t j = i + 1; j < texts.size(); ++j) {
      const auto a = tokenize(texts[i]), b = tokenize(texts[j]);
      sum += rouge_from_lcs(brute_force_lcs(a, b), a.size(), b.size());
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

Dialogue dialogue(Level level, std::vector<std::string> texts) {
  Dialogue d{"food", level, {}};
  for (std::size_t i = 0; i < texts.size(); ++i) {
    d.turns.push_back({i % 2 == 0 ? "user" : "assistant", texts[i]});
  }
  return d;
}

std::vector<MetricsRow> history_with(std::vector<double> entropy, double last_rouge) {
  std::vector<MetricsRow> h;
  for (std::size_t i = 0; i < entropy.size(); ++i) {
    MetricsRow r;
    r.step = i + 1;
    r.mean_entropy = entropy[i];
    r.first_turn_rouge_l = last_rouge;
    h.push_back(r);
  }
  return h;
}

// Local HTTP endpoint standing in for the judge.
class StubJudge {
 public:
  StubJudge() {
    server_.Post("/ok", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      res.set_content(
          R"({"score_relevance": 4, "reason_relevance": "on topic", "score_task": 4,
              "score_richness": 3, "score_guidance": 5})",
          "application/json");
    });
    server_.Post("/prose", [this](const httplib::Request&, httplib::Response& res) {
      ++hits_;
      res.set_content("The reply seems fine to me.", "text/plain");
    });
    server_.Post("/auth", [this](const httplib::Request&, httplib::Response& res) {
      ++hits_;
      res.status = 401;
    });
    server_.Post("/flaky", [this](const httplib::Request&, httplib::Response& res) {
      if (hits_++ == 0) {
        res.status = 503;
        return;
      }
      res.set_content(R"(Verdict: {"relevance": 5, "task": 4, "richness": 4, "guidance": 3})",
                      "text/plain");
    });
    server_.Post("/down", [this](const httplib::Request&, httplib::Response& res) {
      ++hits_;
      res.status = 500;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubJudge() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }
  int hits() const { return hits_; }
  const std::string& last_auth() const { return last_auth_; }
  const std::string& last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::string last_auth_;
  std::string last_body_;
};

JudgeOptions fast(const std::string& endpoint) {
  JudgeOptions o;
  o.endpoint = endpoint;
  o.initial_backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

const JudgeRequest kRequest{{"Hi! Let's talk about food."}, "I like rice.", "Great! Do you eat rice?"};

}  // namespace

TEST_CASE("diversity of a collapsed and of a fully varied group") {
  const std::vector<std::vector<std::string>> same(4, {"i like cats", "i like cats"});
  const auto r = diversity_from_sessions(same);
  CHECK(r.inter_sample == 1.0);
  CHECK(r.intra_session == 1.0);
  CHECK(r.div == 0.0);

  const std::vector<std::vector<std::string>> varied = {
      {"a b", "c d"}, {"e f", "g h"}, {"i j", "k l"}};
  const auto v = diversity_from_sessions(varied);
  CHECK(v.inter_sample == 0.0);
  CHECK(v.intra_session == 0.0);
  CHECK(v.div == 1.0);

  CHECK_THROWS_AS(diversity_from_sessions({{"a"}}), std::invalid_argument);
  CHECK_THROWS_AS(diversity_from_sessions({{"a"}, {}}), std::invalid_argument);
}

TEST_CASE("diversity on a hand-listed three-session set") {
  const std::vector<std::vector<std::string>> s = {
      {"good job do you like rice", "do you like rice too"},
      {"nice do you eat fish", "i eat fish for lunch"},
      {"good job what food do you like", "what food is good"}};
  const std::vector<std::string> firsts = {s[0][0], s[1][0], s[2][0]};
  const double inter = oracle_pair_mean(firsts);
  double intra = 0.0;
  for (const auto& session : s) intra += oracle_pair_mean(session);
  intra /= 3.0;
  const auto r = diversity_from_sessions(s);
  CHECK(r.inter_sample == doctest::Approx(inter).epsilon(1e-12));
  CHECK(r.intra_session == doctest::Approx(intra).epsilon(1e-12));
  CHECK(r.div == doctest::Approx(1.0 - 0.5 * inter - 0.5 * intra).epsilon(1e-12));

  // Permuting sessions changes nothing.
  const std::vector<std::vector<std::string>> permuted = {s[2], s[0], s[1]};
  CHECK(diversity_from_sessions(permuted).div == doctest::Approx(r.div).epsilon(1e-14));
}

TEST_CASE("single-turn sessions have zero intra-session similarity") {
  const auto r = diversity_from_sessions({{"a b"}, {"a c"}});
  CHECK(r.intra_session == 0.0);
  CHECK(consecutive_rouge(std::vector<std::string>{"only"}) == 0.0);
  CHECK(inter_sample_rouge(std::vector<std::string>{"only"}) == 0.0);
}

TEST_CASE("diversity_score is seeded and bounded") {
  const auto& w = toy_world();
  PolicyParams p(w.layout());
  Rng rng(1);
  randomize(p, rng, 1.0);
  const auto a = diversity_score(p, w.scenarios[4], w, 8, 0.7, 99);
  const auto b = diversity_score(p, w.scenarios[4], w, 8, 0.7, 99);
  CHECK(a.div == b.div);
  CHECK(a.inter_sample >= 0.0);
  CHECK(a.inter_sample <= 1.0);
  CHECK(a.div >= 0.0);
  CHECK(a.div <= 1.0);
  CHECK_THROWS_AS(diversity_score(p, w.scenarios[4], w, 1, 0.7, 99), std::invalid_argument);
}

TEST_CASE("violation rate examples") {
  const auto& lex = toy_lexicon();
  const std::vector<Dialogue> clean = {
      dialogue(Level::kL1, {"Hi!", "I like cats.", "Me too.", "Do you like dogs?"})};
  CHECK(violation_rate(clean, lex) == 0.0);

  const std::vector<Dialogue> quarter = {
      dialogue(Level::kL1, {"Hi!", "I like cats.", "Ok.", "We analyze it."}),
      dialogue(Level::kL1, {"Hi!", "I like dogs.", "Ok.", "Good!"})};
  CHECK(violation_rate(quarter, lex) == 25.0);

  // Running history: a word the user introduced is fine afterwards.
  const std::vector<Dialogue> echoed = {
      dialogue(Level::kL1, {"I saw a dinosaur.", "Do you like dinosaurs?"})};
  CHECK(violation_rate(echoed, lex) == 0.0);
  CHECK(violation_rate({}, lex) == 0.0);
}

TEST_CASE("violation rate over concatenated corpora is turn-weighted") {
  const auto& w = toy_world();
  PolicyParams p(w.layout());
  Rng rng(2);
  randomize(p, rng, 1.0);
  const auto a = sample_corpus(p, w, 1, 0.7, 3);
  const auto b = sample_corpus(p, w, 2, 0.7, 4);
  auto both = a;
  both.insert(both.end(), b.begin(), b.end());
  const auto ta = count_violations(a, toy_lexicon());
  const auto tb = count_violations(b, toy_lexicon());
  const double mixed = (ta.rate() * static_cast<double>(ta.turns) +
                        tb.rate() * static_cast<double>(tb.turns)) /
                       static_cast<double>(ta.turns + tb.turns);
  CHECK(violation_rate(both, toy_lexicon()) == doctest::Approx(mixed).epsilon(1e-12));
  CHECK(a.size() == w.scenarios.size());
}

TEST_CASE("constrained corpus never violates") {
  const auto& w = toy_world();
  std::map<Level, VocabTrie> tries;
  for (Level l : kAllLevels) tries.emplace(l, build_trie(toy_lexicon(), l, toy_inflections(), w.vocab));
  PolicyParams p(w.layout());
  Rng rng(6);
  randomize(p, rng, 2.0);
  const auto corpus = sample_constrained_corpus(p, w, tries, 2, 0.7, 5);
  CHECK(count_violations(corpus, toy_lexicon()).turns > 0);
  CHECK(violation_rate(corpus, toy_lexicon()) == 0.0);
}

TEST_CASE("collapse probe on synthetic histories") {
  const auto flat = collapse_probe(history_with({2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0}, 0.85));
  CHECK(flat.entropy_slope == 0.0);
  CHECK(flat.final_entropy == 2.0);
  CHECK(flat.collapsed);
  CHECK_FALSE(collapse_probe(history_with({2.0, 2.0}, 0.79)).collapsed);

  // Entropy falling by 0.1 per step over the last quartile.
  const auto falling = collapse_probe(history_with({3, 3, 3, 3, 3, 3, 2.9, 2.8}, 0.2));
  CHECK(falling.entropy_slope == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(collapse_probe(history_with({1.5}, 0.3)).entropy_slope == 0.0);
  CHECK_THROWS_AS(collapse_probe(std::vector<MetricsRow>{}), std::invalid_argument);
}

TEST_CASE("collapsed and diverse reference groups") {
  const auto collapsed = lines_of("collapsed_samples.txt");
  const auto diverse = lines_of("diverse_samples.txt");
  REQUIRE(collapsed.size() == 8);
  REQUIRE(diverse.size() == 8);
  const double c = inter_sample_rouge(collapsed);
  const double d = inter_sample_rouge(diverse);
  CHECK(c == doctest::Approx(oracle_pair_mean(collapsed)).epsilon(1e-12));
  CHECK(d == doctest::Approx(oracle_pair_mean(diverse)).epsilon(1e-12));
  CHECK(c > 0.9);
  CHECK(c >= kCollapseThreshold);
  CHECK(d < kCollapseThreshold);
}

TEST_CASE("verdict parsing") {
  const auto v = parse_verdict(R"({"score_relevance": 4, "score_task": 4, "score_richness": 3,
                                   "score_guidance": 5, "reason_task": "fine"})");
  CHECK(v.relevance == 4);
  CHECK(v.richness == 3);
  CHECK(v.guidance == 5);
  CHECK(v.reasons.at("task") == "fine");
  CHECK(parse_verdict(R"(Here you go: {"relevance": 1, "task": 2, "richness": 3, "guidance": 4} ok)")
            .task == 2);
  for (const std::string bad :
       {"no json here", R"({"relevance": 6, "task": 2, "richness": 3, "guidance": 4})",
        R"({"relevance": 2.5, "task": 2, "richness": 3, "guidance": 4})",
        R"({"relevance": 2, "task": 2, "richness": 3})"}) {
    try {
      parse_verdict(bad);
      FAIL("expected JudgeParseError");
    } catch (const JudgeParseError& e) {
      CHECK(e.raw() == bad);
    }
  }
}

TEST_CASE("judge payload") {
  const auto j = judge_payload(kRequest);
  CHECK(j["rubric"] == "tutor-v1");
  CHECK(j["dialogue"]["user_input"] == "I like rice.");
  CHECK(j["dialogue"]["context"].size() == 1);
  CHECK_FALSE(j["system"].get<std::string>().empty());
  CHECK_THROWS_AS(rubric_prompt("nope"), std::invalid_argument);
  CHECK(JudgeClient::request_key("a", kRequest) != JudgeClient::request_key("b", kRequest));
  CHECK_THROWS_AS(JudgeClient(fast("ftp://x")), std::invalid_argument);
}

TEST_CASE("judge client against a stub endpoint") {
  StubJudge stub;

  SUBCASE("verdict, bearer token and memory cache") {
    auto opt = fast(stub.url("/ok"));
    opt.token = "secret";
    JudgeClient client(opt);
    const auto v = client.submit(kRequest);
    CHECK(v.relevance == 4);
    CHECK(v.task == 4);
    CHECK(v.richness == 3);
    CHECK(v.guidance == 5);
    CHECK(stub.last_auth() == "Bearer secret");
    CHECK(nlohmann::json::parse(stub.last_body()) == judge_payload(kRequest));
    CHECK(client.network_calls() == 1);
    client.submit(kRequest);
    CHECK(client.network_calls() == 1);
    CHECK(client.cache_hits() == 1);
    CHECK(stub.hits() == 1);
  }

  SUBCASE("disk cache survives the client") {
    const auto dir = std::filesystem::temp_directory_path() / "ddpo_judge_cache_test";
    std::filesystem::remove_all(dir);
    auto opt = fast(stub.url("/ok"));
    opt.cache_dir = dir;
    JudgeClient(opt).submit(kRequest);
    JudgeClient second(opt);
    CHECK(second.submit(kRequest).guidance == 5);
    CHECK(second.network_calls() == 0);
    CHECK(stub.hits() == 1);
    std::filesystem::remove_all(dir);
  }

  SUBCASE("prose is a parse error with the raw body") {
    JudgeClient client(fast(stub.url("/prose")));
    try {
      client.submit(kRequest);
      FAIL("expected JudgeParseError");
    } catch (const JudgeParseError& e) {
      CHECK(e.raw() == "The reply seems fine to me.");
    }
  }

  SUBCASE("auth failure is distinct and not retried") {
    JudgeClient client(fast(stub.url("/auth")));
    CHECK_THROWS_AS(client.submit(kRequest), JudgeAuthError);
    CHECK(stub.hits() == 1);
  }

  SUBCASE("transient failure is retried") {
    JudgeClient client(fast(stub.url("/flaky")));
    CHECK(client.submit(kRequest).relevance == 5);
    CHECK(stub.hits() == 2);
  }

  SUBCASE("persistent failure gives up after three attempts") {
    JudgeClient client(fast(stub.url("/down")));
    CHECK_THROWS_AS(client.submit(kRequest), JudgeTransportError);
    CHECK(stub.hits() == 3);
  }
}

TEST_CASE("unreachable endpoint is a transport error") {
  auto opt = fast("http://127.0.0.1:1/judge");
  opt.max_attempts = 2;
  JudgeClient client(opt);
  CHECK_THROWS_AS(client.submit(kRequest), JudgeTransportError);
}
