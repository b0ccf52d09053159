#ifndef DDPO_TEXT_H_
#define DDPO_TEXT_H_

// Text primitives shared by the reward and metric code. Everything here is a
// pure function of its arguments.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ddpo {

// Lowercase word tokens, punctuation removed.
using TokenSeq = std::vector<std::string>;

// A word token that remembers its surface casing and where it sits.
struct CasedToken {
  std::string surface;   // original casing
  std::string lower;     // what tokenize() would emit
  std::size_t sentence;  // index into split_sentences()
  std::size_t position;  // index within its sentence
};

// Word tokenizer. Runs of letters/digits (plus intra-word apostrophes) form
// words; everything else separates them. Clitics split off: "I'm" -> "i",
// "'m"; "don't" -> "do", "n't". Non-ASCII bytes count as letters so foreign
// words survive as (out-of-list) tokens.
TokenSeq tokenize(std::string_view text);
std::vector<CasedToken> tokenize_cased(std::string_view text);

// Splits after '.', '!' or '?' when followed by whitespace or end of text.
// Sentences are trimmed; empty pieces are dropped.
std::vector<std::string> split_sentences(std::string_view text);

// True if the text holds a letter outside ASCII a-z/A-Z. Non-ASCII code points
// in the common punctuation/symbol blocks are not letters.
bool has_non_english(std::string_view text);

bool is_number_token(std::string_view token);

// inflected form -> lemma
using InflectionTable = std::unordered_map<std::string, std::string>;

// Reads a two-column `inflected,lemma` CSV with a mandatory header row.
InflectionTable parse_inflections(std::istream& in, const std::string& source = "<stream>");
InflectionTable load_inflections(const std::filesystem::path& path);

// Closed-rule lemmatizer. Order: irregular table, known-lemma identity, then
// suffix rules (-ies, -es, -s, -ed, -ing with doubling undo and silent-e
// restore). When a known-lemma set is supplied, a suffix rule only fires if it
// produces a known lemma; otherwise the first matching rule's plain result is
// used.
class Lemmatizer {
 public:
  Lemmatizer() = default;
  explicit Lemmatizer(InflectionTable table,
                      std::unordered_set<std::string> known = {});

  std::string lemmatize(std::string_view token) const;

  const InflectionTable& table() const { return table_; }

 private:
  std::string apply_suffix_rules(const std::string& w) const;
  bool known(const std::string& w) const { return known_.count(w) > 0; }

  InflectionTable table_;
  std::unordered_set<std::string> known_;
};

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

// Rouge-L F1 from the LCS. 0 when either side is empty or nothing matches.
double rouge_l_f1(const TokenSeq& candidate, const TokenSeq& reference);

// |unique(a) ∩ unique(b)| / |unique(a)|. Throws DegenerateResponseError on
// empty `a`.
double overlap_ratio(const TokenSeq& a, const TokenSeq& b);

// 64-bit FNV-1a, used for content hashes in artifacts and caches.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace ddpo

#endif  // DDPO_TEXT_H_
