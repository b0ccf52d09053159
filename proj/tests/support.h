#ifndef DDPO_TESTS_SUPPORT_H_
#define DDPO_TESTS_SUPPORT_H_

// Shared fixtures and independent oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ddpo/lexicon.h"
#include "ddpo/policy.h"
#include "ddpo/rng.h"
#include "ddpo/simenv.h"
#include "ddpo/text.h"

namespace ddpo::testing {

inline std::filesystem::path source_dir() { return DDPO_SOURCE_DIR; }
inline std::filesystem::path data_path(const std::string& name) { return source_dir() / "data" / name; }
inline std::filesystem::path fixture_path(const std::string& name) {
  return source_dir() / "tests" / "fixtures" / name;
}

inline const GradedLexicon& toy_lexicon() {
  static const GradedLexicon lex =
      load_lexicon(data_path("toy_lexicon.csv"), data_path("inflections.csv"));
  return lex;
}

inline const InflectionTable& toy_inflections() {
  static const InflectionTable t = load_inflections(data_path("inflections.csv"));
  return t;
}

inline const World& toy_world() {
  static const World w = load_world(data_path("toy_world.json"), toy_lexicon());
  return w;
}

// Longest common subsequence by exhaustive subset search over the shorter
// sequence. Exponential, so only for short inputs; shares no code with the
// library's dynamic program.
inline std::size_t brute_force_lcs(const TokenSeq& a, const TokenSeq& b) {
  const TokenSeq& s = a.size() <= b.size() ? a : b;
  const TokenSeq& t = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  const std::size_t n = s.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::size_t bits = static_cast<std::size_t>(__builtin_popcountll(mask));
    if (bits <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!(mask & (std::size_t{1} << i))) continue;
      while (j < t.size() && t[j] != s[i]) ++j;
      if (j == t.size()) ok = false;
      else ++j;
    }
    if (ok) best = bits;
  }
  return best;
}

// Rouge-L F1 straight from the definition on a given LCS length.
inline double rouge_from_lcs(std::size_t lcs, std::size_t m, std::size_t n) {
  if (lcs == 0 || m == 0 || n == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(m);
  const double r = static_cast<double>(lcs) / static_cast<double>(n);
  return 2.0 * p * r / (p + r);
}

inline TokenSeq random_seq(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  TokenSeq s(rng.below(max_len + 1));
  for (auto& t : s) t = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
  return s;
}

// One row of tests/fixtures/quality_golden.tsv with the score worked out by
// hand from the row's annotation.
struct QualityCase {
  Level level;
  std::string text;
  double expected;
};

inline std::vector<QualityCase> quality_golden() {
  std::ifstream in(fixture_path("quality_golden.tsv"));
  std::vector<QualityCase> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    QualityCase c{*parse_level(line.substr(0, t1)), line.substr(t2 + 1), 0.0};
    const std::string expect = line.substr(t1 + 1, t2 - t1 - 1);
    if (expect.rfind("bonus ", 0) == 0) {
      const int n = std::stoi(expect.substr(6));
      c.expected = 0.5 + std::min(n * 0.15, 2.0);
    } else {
      c.expected = std::stod(expect);
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Forward pass written out from the feature definition, independent of
// PolicyParams::active.
inline std::vector<double> oracle_distribution(const PolicyParams& p, const TokenContext& ctx, double temp) {
  const auto& l = p.layout();
  const std::size_t v = l.vocab_size;
  const std::size_t bucket = std::min(ctx.position / 3, l.position_buckets - 1);
  const std::size_t rows[4] = {ctx.prev < 0 ? 0 : static_cast<std::size_t>(ctx.prev) + 1,
                               v + 1 + bucket,
                               v + 1 + l.position_buckets + level_index(ctx.cond.level),
                               v + 1 + l.position_buckets + l.levels + ctx.cond.topic};
  std::vector<double> z(v + 1, 0.0);
  for (std::size_t t = 0; t <= v; ++t) {
    for (std::size_t r : rows) z[t] += p.weights()[r * (v + 1) + t];
    z[t] /= temp;
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) sum += (x = std::exp(x - mx));
  for (double& x : z) x /= sum;
  return z;
}

inline void randomize(PolicyParams& p, Rng& rng, double scale) {
  for (double& w : p.weights()) w = scale * (2.0 * rng.uniform() - 1.0);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

}  // namespace ddpo::testing

#endif  // DDPO_TESTS_SUPPORT_H_
