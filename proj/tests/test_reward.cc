#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>
#include <set>

#include "ddpo/errors.h"
#include "ddpo/reward.h"
#include "support.h"

using namespace ddpo;
using namespace ddpo::testing;

namespace {

TokenSeq toks(const std::string& s) { return tokenize(s); }

// Mean pairwise Rouge-L for member i using the brute-force LCS.
double oracle_mean_rouge(const std::vector<TokenSeq>& group, std::size_t i) {
  double sum = 0.0;
  for (std::size_t j = 0; j < group.size(); ++j) {
    if (j == i) continue;
    sum += rouge_from_lcs(brute_force_lcs(group[i], group[j]), group[i].size(), group[j].size());
  }
  return sum / static_cast<double>(group.size() - 1);
}

double oracle_overlap(const TokenSeq& a, const TokenSeq& b) {
  const std::set<std::string> ua(a.begin(), a.end()), ub(b.begin(), b.end());
  std::size_t shared = 0;
  for (const auto& t : ua) shared += ub.count(t);
  return static_cast<double>(shared) / static_cast<double>(ua.size());
}

std::string random_text(Rng& rng, const Vocabulary& vocab, std::size_t max_words) {
  std::string text;
  const std::size_t n = 1 + rng.below(max_words);
  for (std::size_t k = 0; k < n; ++k) {
    if (k) text += " ";
    text += vocab.tokens()[rng.below(vocab.size())];
  }
  return text;
}

bool valid_quality(double q) {
  return q == 0.0 || q == 0.2 || q == 0.8 || (q >= 0.5 && q <= 2.5);
}

}  // namespace

TEST_CASE("quality_reward golden table") {
  const auto cases = quality_golden();
  REQUIRE(cases.size() >= 20);
  for (const auto& c : cases) {
    CAPTURE(c.text);
    CAPTURE(to_string(c.level));
    CHECK(quality_reward(c.text, c.level, toy_lexicon()) == c.expected);
  }
}

TEST_CASE("quality_trace counts") {
  const auto& lex = toy_lexicon();
  const auto t = quality_trace("Great! I like to cook with my family. Do you enjoy music?", Level::kL2,
                               lex);
  CHECK(t.words == 12);
  CHECK(t.target == 4);
  CHECK_FALSE(t.violation);
  CHECK_FALSE(t.gate_failed);

  const auto ex = quality_trace("Um, yes! Anna and I like 7 big dogs. Do you like cats?", Level::kL1,
                                lex);
  CHECK(ex.words == 10);

  CHECK(quality_trace("Good! I like cats.", Level::kL1, lex).gate_failed);
}

TEST_CASE("length ranges") {
  CHECK(length_range(Level::kL1).min == 10);
  CHECK(length_range(Level::kL1).max == 15);
  CHECK(length_range(Level::kL2).max == 20);
  CHECK(length_range(Level::kL3).min == 20);
  CHECK(length_range(Level::kL4).max == 30);
}

TEST_CASE("quality ignores appended exempt tokens") {
  for (const auto& c : quality_golden()) {
    if (c.expected == 0.0) continue;
    CAPTURE(c.text);
    for (const std::string tail : {" 42", " um 7", " Um.", " Paris"}) {
      CHECK(quality_reward(c.text + tail, c.level, toy_lexicon()) == c.expected);
    }
  }
}

TEST_CASE("quality stays in its range for random text") {
  Rng rng(31);
  const auto& vocab = toy_world().vocab;
  for (int i = 0; i < 500; ++i) {
    const std::string text = random_text(rng, vocab, 35);
    for (Level l : kAllLevels) {
      const double q = quality_reward(text, l, toy_lexicon());
      CAPTURE(text);
      CHECK(valid_quality(q));
    }
  }
}

TEST_CASE("single_turn_diversity examples") {
  const std::vector<TokenSeq> same(4, toks("i like cats"));
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(single_turn_diversity(same, i, 0.2) == -1.0);

  const std::vector<TokenSeq> disjoint = {toks("a b"), toks("c d"), toks("e f")};
  for (std::size_t i = 0; i < 3; ++i) CHECK(single_turn_diversity(disjoint, i, 0.2) == -0.2);

  const std::vector<TokenSeq> triple = {toks("a b c d"), toks("a b x y"), toks("a b p q r s")};
  const double mean0 = oracle_mean_rouge(triple, 0);
  CHECK(mean0 == doctest::Approx(0.45).epsilon(1e-12));
  CHECK(single_turn_diversity(triple, 0, 0.2) == doctest::Approx(-0.45).epsilon(1e-12));
}

TEST_CASE("single_turn_diversity errors") {
  const std::vector<TokenSeq> one = {toks("a")};
  CHECK_THROWS_AS(single_turn_diversity(one, 0, 0.2), std::invalid_argument);
  const std::vector<TokenSeq> two = {toks("a"), toks("b")};
  CHECK_THROWS_AS(single_turn_diversity(two, 2, 0.2), std::invalid_argument);
}

TEST_CASE("single_turn_diversity matches the oracle, stays in range, and is equivariant") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t g = 2 + rng.below(5);
    std::vector<TokenSeq> group(g);
    for (auto& s : group) {
      s = random_seq(rng, 9, 4);
      if (s.empty()) s.push_back("z");
    }
    const double gamma = 0.3 * rng.uniform();
    const auto all = single_turn_diversity_all(group, gamma);
    for (std::size_t i = 0; i < g; ++i) {
      const double one = single_turn_diversity(group, i, gamma);
      CHECK(std::abs(one - -std::max(oracle_mean_rouge(group, i), gamma)) <= 1e-12);
      CHECK(std::abs(one - all[i]) <= 1e-12);
      CHECK(one >= -1.0);
      CHECK(one <= -gamma);
    }
    std::vector<std::size_t> perm(g);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = g; k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
    std::vector<TokenSeq> shuffled(g);
    for (std::size_t i = 0; i < g; ++i) shuffled[i] = group[perm[i]];
    const auto moved = single_turn_diversity_all(shuffled, gamma);
    for (std::size_t i = 0; i < g; ++i) CHECK(std::abs(moved[i] - all[perm[i]]) <= 1e-12);
  }
}

TEST_CASE("multi_turn_diversity examples") {
  CHECK(multi_turn_diversity("do you like cats", "do you like cats", "no way") == -1.0);
  CHECK(multi_turn_diversity("a b", "c d", "e f") == 0.0);
  CHECK(multi_turn_diversity("a b c d", "a b z", "c y") == -0.75);
  CHECK_THROWS_AS(multi_turn_diversity("?!", "a", "b"), DegenerateResponseError);
}

TEST_CASE("multi_turn_diversity matches a set oracle and stays in [-2, 0]") {
  Rng rng(19);
  for (int i = 0; i < 300; ++i) {
    auto a = random_seq(rng, 8, 6);
    if (a.empty()) a.push_back("a");
    const auto u = random_seq(rng, 8, 6);
    const auto p = random_seq(rng, 8, 6);
    const double m = multi_turn_diversity(a, u, p);
    CHECK(std::abs(m + oracle_overlap(a, u) + oracle_overlap(a, p)) <= 1e-12);
    CHECK(m >= -2.0);
    CHECK(m <= 0.0);
  }
}

TEST_CASE("weight schedule") {
  const WeightSchedule constant;
  for (double s : {0.0, 17.0, 1e6}) CHECK(constant.at(s) == RewardWeights{1.0, 0.5, 0.5});

  const WeightSchedule ramp({{100, {1, 0, 0}}, {0, {1, 1, 1}}});
  CHECK(ramp.at(50) == RewardWeights{1.0, 0.5, 0.5});
  CHECK(ramp.at(500) == RewardWeights{1.0, 0.0, 0.0});
  CHECK(ramp.at(0) == RewardWeights{1.0, 1.0, 1.0});
  CHECK(schedule_weights(ramp, 25).sgl == 0.75);

  using BP = WeightSchedule::Breakpoint;
  CHECK_THROWS_AS(WeightSchedule(std::vector<BP>{}), std::invalid_argument);
  CHECK_THROWS_AS(WeightSchedule(std::vector<BP>{{0, {1, 1, 1}}, {0, {1, 0, 0}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(WeightSchedule(std::vector<BP>{{0, {1, -1, 1}}}), std::invalid_argument);
}

TEST_CASE("schedule weights stay non-negative between breakpoints") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<WeightSchedule::Breakpoint> pts;
    const std::size_t n = 1 + rng.below(4);
    for (std::size_t k = 0; k < n; ++k) {
      pts.push_back({100.0 * static_cast<double>(k) + rng.uniform(),
                     {rng.uniform(), rng.uniform(), rng.uniform()}});
    }
    const WeightSchedule s(pts);
    for (int step = 0; step < 500; step += 7) {
      const auto w = s.at(step);
      CHECK(w.qual >= 0.0);
      CHECK(w.sgl >= 0.0);
      CHECK(w.mul >= 0.0);
    }
  }
}

TEST_CASE("compose examples") {
  CHECK(compose(0.8, -0.3, -0.7, {1, 0, 0}, 2).total == 0.8);
  CHECK(compose(1.1, -0.45, -0.75, {1, 0.5, 0.5}, 2).total == doctest::Approx(0.5).epsilon(1e-12));
  const auto first = compose(0.8, -0.2, -1.5, {1, 0.5, 0.5}, 1);
  CHECK(first.total == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(first.mul == 0.0);
  // With the per-turn flag off, later turns drop the first-turn term.
  CHECK(compose(0.8, -0.2, -0.5, {1, 0.5, 0.5}, 2, false).total ==
        doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("compose is linear in each component") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const RewardWeights w{rng.uniform(), rng.uniform(), rng.uniform()};
    const double q = 2.5 * rng.uniform(), s = -rng.uniform(), m = -2 * rng.uniform();
    const double d = rng.uniform();
    const std::size_t k = 1 + rng.below(3);
    const double base = compose(q, s, m, w, k).total;
    CHECK(compose(q + d, s, m, w, k).total - base == doctest::Approx(w.qual * d).epsilon(1e-9));
    CHECK(compose(q, s + d, m, w, k).total - base == doctest::Approx(w.sgl * d).epsilon(1e-9));
    CHECK(compose(q, s, m + d, w, k).total - base ==
          doctest::Approx(k == 1 ? 0.0 : w.mul * d).epsilon(1e-9));
  }
}
