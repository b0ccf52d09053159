#include "ddpo/text.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ddpo/errors.h"

namespace ddpo {
namespace {

constexpr char32_t kInvalid = 0xFFFFFFFF;

// Decodes one UTF-8 code point at `i`, advancing `i`. Malformed input yields
// kInvalid and consumes a single byte.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int extra = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    ++i;
    return kInvalid;
  }
  if (i + extra >= s.size()) {
    ++i;
    return kInvalid;
  }
  for (int k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return kInvalid;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += extra + 1;
  return cp;
}

bool is_apostrophe(char32_t cp) { return cp == U'\'' || cp == U'’' || cp == U'‘'; }

// Non-ASCII code points that are punctuation, symbols or emoji rather than
// letters.
bool is_symbol_code_point(char32_t cp) {
  return (cp >= 0x80 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 ||
         (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x20A0 && cp <= 0x20CF) ||
         (cp >= 0x2190 && cp <= 0x2BFF) || (cp >= 0xFE00 && cp <= 0xFE0F) ||
         (cp >= 0x1F000 && cp <= 0x1FAFF);
}

bool is_word_code_point(char32_t cp) {
  if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0;
  if (cp == kInvalid) return true;
  return !is_apostrophe(cp) && !is_symbol_code_point(cp);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Pushes one raw word (apostrophes already normalized to ASCII) as one or two
// tokens.
void emit_word(const std::string& surface, std::size_t sentence, std::size_t& position,
               std::vector<CasedToken>& out) {
  const std::string lower = ascii_lower(surface);
  auto push = [&](std::string s, std::string l) {
    out.push_back({std::move(s), std::move(l), sentence, position++});
  };
  if (lower.size() > 3 && ends_with(lower, "n't")) {
    std::string base = lower.substr(0, lower.size() - 3);
    if (base == "ca") base = "can";
    else if (base == "wo") base = "will";
    else if (base == "sha") base = "shall";
    push(surface.substr(0, surface.size() - 3), base);
    push(surface.substr(surface.size() - 3), "n't");
    return;
  }
  const auto apos = lower.find('\'');
  if (apos != std::string::npos && apos > 0) {
    push(surface.substr(0, apos), lower.substr(0, apos));
    push(surface.substr(apos), lower.substr(apos));
    return;
  }
  push(surface, lower);
}

void tokenize_sentence(std::string_view s, std::size_t sentence,
                       std::vector<CasedToken>& out) {
  std::size_t position = 0;
  std::string word;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t start = i;
    const char32_t cp = next_code_point(s, i);
    if (is_word_code_point(cp)) {
      word.append(s.substr(start, i - start));
      continue;
    }
    if (is_apostrophe(cp) && !word.empty() && i < s.size()) {
      std::size_t j = i;
      if (is_word_code_point(next_code_point(s, j))) {
        word.push_back('\'');
        continue;
      }
    }
    if (!word.empty()) {
      emit_word(word, sentence, position, out);
      word.clear();
    }
  }
  if (!word.empty()) emit_word(word, sentence, position, out);
}

bool is_consonant(char c) { return std::string_view("aeiou").find(c) == std::string_view::npos; }

// "runn" -> "run"; leaves ll/ss/zz/ff doubles alone ("fall", "miss").
std::string undouble(const std::string& stem) {
  const std::size_t n = stem.size();
  if (n >= 3 && stem[n - 1] == stem[n - 2] && is_consonant(stem[n - 1]) &&
      std::string_view("lszf").find(stem[n - 1]) == std::string_view::npos) {
    return stem.substr(0, n - 1);
  }
  return stem;
}

struct RuleMatch {
  std::vector<std::string> candidates;  // preference order
  std::string fallback;                 // plain rule output
};

std::vector<RuleMatch> match_rules(const std::string& w) {
  std::vector<RuleMatch> rules;
  const std::size_t n = w.size();
  if (n > 4 && ends_with(w, "ies")) {
    const std::string y = w.substr(0, n - 3) + "y";
    rules.push_back({{y}, y});
  }
  if (n > 3 && ends_with(w, "es")) {
    const std::string stem = w.substr(0, n - 2);
    const bool sibilant = ends_with(stem, "s") || ends_with(stem, "x") ||
                          ends_with(stem, "z") || ends_with(stem, "ch") ||
                          ends_with(stem, "sh") || ends_with(stem, "o");
    rules.push_back({{stem}, sibilant ? stem : w.substr(0, n - 1)});
  }
  if (n > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
      !ends_with(w, "is")) {
    const std::string stem = w.substr(0, n - 1);
    rules.push_back({{stem}, stem});
  }
  for (std::string_view suffix : {std::string_view("ed"), std::string_view("ing")}) {
    if (n > suffix.size() + 2 && ends_with(w, suffix)) {
      const std::string stem = w.substr(0, n - suffix.size());
      const std::string und = undouble(stem);
      std::vector<std::string> cands;
      if (und != stem) cands.push_back(und);
      cands.push_back(stem);
      cands.push_back(stem + "e");
      rules.push_back({std::move(cands), und});
    }
  }
  return rules;
}

}  // namespace

std::vector<CasedToken> tokenize_cased(std::string_view text) {
  std::vector<CasedToken> out;
  const auto sentences = split_sentences(text);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    tokenize_sentence(sentences[s], s, out);
  }
  return out;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  for (auto& t : tokenize_cased(text)) out.push_back(std::move(t.lower));
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_terminal(text[i])) continue;
    const bool at_end = i + 1 == text.size();
    if (at_end || std::isspace(static_cast<unsigned char>(text[i + 1]))) {
      auto piece = trim(text.substr(begin, i + 1 - begin));
      if (!piece.empty()) out.push_back(std::move(piece));
      begin = i + 1;
    }
  }
  auto tail = trim(text.substr(std::min(begin, text.size())));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

bool has_non_english(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = next_code_point(text, i);
    if (cp >= 0x80 && !is_symbol_code_point(cp) && !is_apostrophe(cp)) return true;
  }
  return false;
}

bool is_number_token(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
  });
}

InflectionTable parse_inflections(std::istream& in, const std::string& source) {
  InflectionTable table;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      if (trim(line) != "inflected,lemma") {
        throw ParseError(source, lineno, "expected header 'inflected,lemma'");
      }
      header = false;
      continue;
    }
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError(source, lineno, "expected two columns");
    }
    auto form = ascii_lower(trim(line.substr(0, comma)));
    auto lemma = ascii_lower(trim(line.substr(comma + 1)));
    if (form.empty() || lemma.empty()) throw ParseError(source, lineno, "empty field");
    table[form] = lemma;
  }
  if (header) throw ParseError(source, 1, "missing header row");
  return table;
}

InflectionTable load_inflections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_inflections(in, path.string());
}

Lemmatizer::Lemmatizer(InflectionTable table, std::unordered_set<std::string> known)
    : table_(std::move(table)), known_(std::move(known)) {}

std::string Lemmatizer::lemmatize(std::string_view token) const {
  const std::string w = ascii_lower(token);
  if (auto it = table_.find(w); it != table_.end()) return it->second;
  if (known(w)) return w;
  return apply_suffix_rules(w);
}

std::string Lemmatizer::apply_suffix_rules(const std::string& w) const {
  const auto rules = match_rules(w);
  if (rules.empty()) return w;
  if (!known_.empty()) {
    for (const auto& r : rules) {
      for (const auto& c : r.candidates) {
        if (known(c)) return c;
      }
    }
  }
  return rules.front().fallback;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_f1(const TokenSeq& candidate, const TokenSeq& reference) {
  const std::size_t lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double overlap_ratio(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty()) throw DegenerateResponseError("overlap_ratio: empty response");
  const std::unordered_set<std::string> ua(a.begin(), a.end());
  const std::unordered_set<std::string> ub(b.begin(), b.end());
  std::size_t common = 0;
  for (const auto& t : ua) common += ub.count(t);
  return static_cast<double>(common) / static_cast<double>(ua.size());
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace ddpo
