#include "ddpo/lexicon.h"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include "ddpo/errors.h"

namespace ddpo {
namespace {

std::string trim_copy(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower_copy(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool starts_upper(std::string_view s) {
  return !s.empty() && std::isupper(static_cast<unsigned char>(s.front()));
}

bool above_or_absent(const GradedLexicon& lexicon, const std::string& lemma, Level level) {
  const auto lv = lexicon.level_of(lemma);
  return !lv || rank(*lv) > rank(level);
}

}  // namespace

std::optional<Level> parse_level(std::string_view s) {
  if (s == "L1") return Level::kL1;
  if (s == "L2") return Level::kL2;
  if (s == "L3") return Level::kL3;
  if (s == "L4") return Level::kL4;
  return std::nullopt;
}

std::string to_string(Level l) { return "L" + std::to_string(rank(l)); }

std::string to_string(Exemption e) {
  switch (e) {
    case Exemption::kProperNoun: return "proper-noun";
    case Exemption::kNumber: return "number";
    case Exemption::kFiller: return "filler";
    case Exemption::kHistoryIntroduced: return "history-introduced";
  }
  return "unknown";
}

void GradedLexicon::add(const std::string& lemma, Level level) {
  auto [it, inserted] = entries_.emplace(lemma, level);
  if (!inserted) {
    throw std::invalid_argument("lemma '" + lemma + "' listed at both " +
                                to_string(it->second) + " and " + to_string(level));
  }
}

void GradedLexicon::add_filler(const std::string& token) { fillers_.insert(token); }
void GradedLexicon::add_proper(const std::string& token) { proper_.insert(token); }

void GradedLexicon::set_inflections(InflectionTable table) {
  std::unordered_set<std::string> known;
  for (const auto& [lemma, level] : entries_) known.insert(lemma);
  lemmatizer_ = Lemmatizer(std::move(table), std::move(known));
}

std::optional<Level> GradedLexicon::level_of(std::string_view lemma) const {
  auto it = entries_.find(std::string(lemma));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t GradedLexicon::count(Level level) const {
  std::size_t n = 0;
  for (const auto& [lemma, lv] : entries_) n += lv == level;
  return n;
}

GradedLexicon parse_lexicon(std::istream& in, const std::string& source) {
  enum class Section { kEntries, kFillers, kProper };
  GradedLexicon lex;
  Section section = Section::kEntries;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim_copy(raw);
    if (line.empty()) continue;
    if (line == "#fillers") {
      section = Section::kFillers;
      continue;
    }
    if (line == "#proper") {
      section = Section::kProper;
      continue;
    }
    if (line.front() == '#') throw ParseError(source, lineno, "unknown section '" + line + "'");
    if (section == Section::kFillers) {
      lex.add_filler(lower_copy(line));
      continue;
    }
    if (section == Section::kProper) {
      lex.add_proper(lower_copy(line));
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError(source, lineno, "expected 'lemma,level'");
    }
    const std::string lemma = lower_copy(trim_copy(line.substr(0, comma)));
    const std::string level_text = trim_copy(line.substr(comma + 1));
    if (lineno == 1 && lemma == "lemma" && level_text == "level") continue;
    const auto level = parse_level(level_text);
    if (lemma.empty()) throw ParseError(source, lineno, "empty lemma");
    if (!level) throw ParseError(source, lineno, "bad level '" + level_text + "'");
    try {
      lex.add(lemma, *level);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  for (const auto& f : lex.fillers()) {
    if (lex.level_of(f)) throw ParseError(source, lineno, "filler '" + f + "' is also graded");
  }
  for (const auto& p : lex.proper()) {
    if (lex.level_of(p)) throw ParseError(source, lineno, "proper noun '" + p + "' is also graded");
  }
  lex.set_inflections({});
  return lex;
}

GradedLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_lexicon(in, path.string());
}

GradedLexicon load_lexicon(const std::filesystem::path& path,
                           const std::filesystem::path& inflections) {
  auto lex = load_lexicon(path);
  lex.set_inflections(load_inflections(inflections));
  return lex;
}

std::optional<Exemption> classify_exemption(const GradedLexicon& lexicon, const CasedToken& token,
                                            const std::set<std::string>& history_oov) {
  if (is_number_token(token.lower)) return Exemption::kNumber;
  if (lexicon.is_filler(token.lower)) return Exemption::kFiller;
  if (lexicon.is_proper(token.lower)) return Exemption::kProperNoun;
  // Mid-sentence capitals read as names. The pronoun "I" is always capitalized
  // and is not one.
  if (token.position > 0 && starts_upper(token.surface) && token.lower != "i") {
    return Exemption::kProperNoun;
  }
  if (!history_oov.empty() && history_oov.count(lexicon.lemmatize(token.lower)) > 0) {
    return Exemption::kHistoryIntroduced;
  }
  return std::nullopt;
}

std::set<std::string> history_oov(const std::vector<std::string>& history, Level level,
                                  const GradedLexicon& lexicon) {
  std::set<std::string> oov;
  const std::set<std::string> none;
  for (const auto& turn : history) {
    for (const auto& tok : tokenize_cased(turn)) {
      if (classify_exemption(lexicon, tok, none)) continue;
      std::string lemma = lexicon.lemmatize(tok.lower);
      if (above_or_absent(lexicon, lemma, level)) oov.insert(std::move(lemma));
    }
  }
  return oov;
}

ViolationReport violation_check(std::string_view response, Level level,
                                const std::vector<std::string>& history,
                                const GradedLexicon& lexicon) {
  ViolationReport report;
  const auto introduced = history_oov(history, level, lexicon);
  for (const auto& tok : tokenize_cased(response)) {
    if (auto why = classify_exemption(lexicon, tok, introduced)) {
      report.exempt_tokens.push_back({tok.surface, *why});
      continue;
    }
    std::string lemma = lexicon.lemmatize(tok.lower);
    if (above_or_absent(lexicon, lemma, level)) report.violating_lemmas.insert(std::move(lemma));
  }
  report.violated = !report.violating_lemmas.empty();
  return report;
}

nlohmann::json to_json(const ViolationReport& report) {
  nlohmann::json exempt = nlohmann::json::array();
  for (const auto& e : report.exempt_tokens) {
    exempt.push_back({{"token", e.token}, {"reason", to_string(e.reason)}});
  }
  return {{"violated", report.violated},
          {"violating_lemmas", report.violating_lemmas},
          {"exempt_tokens", exempt}};
}

}  // namespace ddpo
