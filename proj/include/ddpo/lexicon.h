#ifndef DDPO_LEXICON_H_
#define DDPO_LEXICON_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ddpo/text.h"
#include "json.hpp"

namespace ddpo {

// Proficiency tier. Ordered: L1 < L2 < L3 < L4.
enum class Level : std::uint8_t { kL1 = 1, kL2 = 2, kL3 = 3, kL4 = 4 };

inline constexpr std::array<Level, 4> kAllLevels = {Level::kL1, Level::kL2, Level::kL3,
                                                    Level::kL4};

constexpr int rank(Level l) { return static_cast<int>(l); }
// 0-based index, for tables keyed by level.
constexpr std::size_t level_index(Level l) { return static_cast<std::size_t>(l) - 1; }
std::optional<Level> parse_level(std::string_view s);  // "L1".."L4"
std::string to_string(Level l);

enum class Exemption { kProperNoun, kNumber, kFiller, kHistoryIntroduced };
std::string to_string(Exemption e);

// lemma -> level, plus spoken fillers and a proper-noun allowlist. Immutable
// once loaded; safe to share across threads.
class GradedLexicon {
 public:
  GradedLexicon() = default;

  // Throws std::invalid_argument if the lemma already has a level.
  void add(const std::string& lemma, Level level);
  void add_filler(const std::string& token);
  void add_proper(const std::string& token);
  // Installs the irregular-form table; the lemmatizer also learns the
  // lexicon's lemmas so suffix rules prefer real entries.
  void set_inflections(InflectionTable table);

  std::optional<Level> level_of(std::string_view lemma) const;
  bool is_filler(std::string_view token) const { return fillers_.count(std::string(token)) > 0; }
  bool is_proper(std::string_view token) const { return proper_.count(std::string(token)) > 0; }

  std::string lemmatize(std::string_view token) const { return lemmatizer_.lemmatize(token); }
  const Lemmatizer& lemmatizer() const { return lemmatizer_; }

  std::size_t size() const { return entries_.size(); }
  std::size_t count(Level level) const;
  const std::map<std::string, Level>& entries() const { return entries_; }
  const std::set<std::string>& fillers() const { return fillers_; }
  const std::set<std::string>& proper() const { return proper_; }

 private:
  std::map<std::string, Level> entries_;
  std::set<std::string> fillers_;
  std::set<std::string> proper_;
  Lemmatizer lemmatizer_;
};

// CSV `lemma,level` rows, optional `lemma,level` header, then optional
// `#fillers` and `#proper` sections with one token per line.
GradedLexicon parse_lexicon(std::istream& in, const std::string& source = "<stream>");
GradedLexicon load_lexicon(const std::filesystem::path& path);
// Lexicon plus inflection table in one call.
GradedLexicon load_lexicon(const std::filesystem::path& path,
                           const std::filesystem::path& inflections);

// Why a token is skipped by vocabulary checks, if it is. `history_oov` holds
// lemmas already introduced in the dialogue.
std::optional<Exemption> classify_exemption(const GradedLexicon& lexicon, const CasedToken& token,
                                            const std::set<std::string>& history_oov);

struct ExemptToken {
  std::string token;
  Exemption reason;
};

struct ViolationReport {
  std::set<std::string> violating_lemmas;
  std::vector<ExemptToken> exempt_tokens;
  bool violated = false;
};

// Lemmas from prior turns (either speaker) that are off-list or above `level`.
std::set<std::string> history_oov(const std::vector<std::string>& history, Level level,
                                  const GradedLexicon& lexicon);

ViolationReport violation_check(std::string_view response, Level level,
                                const std::vector<std::string>& history,
                                const GradedLexicon& lexicon);

nlohmann::json to_json(const ViolationReport& report);

}  // namespace ddpo

#endif  // DDPO_LEXICON_H_
