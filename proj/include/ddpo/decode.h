#ifndef DDPO_DECODE_H_
#define DDPO_DECODE_H_

// Constrained decoding: a prefix trie over the token spellings of every word
// admissible at a level. Sampling walks the trie and masks everything else.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddpo/lexicon.h"
#include "ddpo/policy.h"
#include "ddpo/rng.h"

namespace ddpo {

class VocabTrie {
 public:
  using NodeId = std::size_t;
  static constexpr NodeId kRoot = 0;

  // `boundary` lists the tokens allowed wherever a word may start or end (END
  // and punctuation).
  VocabTrie(Level level, std::size_t num_outputs, std::vector<int> boundary);

  // Adds one word spelled by `tokens`. Returns false if the path is empty.
  bool insert(const std::vector<int>& tokens, std::string word);

  Level level() const { return level_; }
  std::size_t num_outputs() const { return num_outputs_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_words() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<int>& boundary() const { return boundary_; }

  bool is_terminal(NodeId node) const { return nodes_.at(node).terminal; }
  // Child reached by `token`, or nullopt.
  std::optional<NodeId> child(NodeId node, int token) const;

  // Admissible next tokens from `node`, ascending. At the root and at
  // terminals this is the word starts plus the boundary tokens; inside a word
  // it is only the continuations. Throws std::out_of_range for unknown nodes.
  std::vector<int> allowed(NodeId node) const;
  // Node after emitting `token` at `node`. Word-start tokens taken at a
  // terminal begin a new word. Throws std::logic_error if `token` is not
  // allowed.
  NodeId advance(NodeId node, int token) const;

 private:
  struct Node {
    std::map<int, NodeId> children;
    bool terminal = false;
  };
  Level level_;
  std::size_t num_outputs_;
  std::vector<int> boundary_;
  std::vector<Node> nodes_;
  std::vector<std::string> words_;
};

// Splits a surface word into vocabulary token ids, or returns an empty vector
// if it cannot be spelled. The default speller looks the whole word up.
using WordSpeller = std::function<std::vector<int>(const std::string&)>;
WordSpeller whole_word_speller(const Vocabulary& vocab);

// Inserts every lemma whose level is at most `level`, plus every inflected
// form in `inflections` that resolves to such a lemma, skipping words the
// speller cannot spell. A word is only inserted when the lexicon's own
// lemmatizer agrees on an admissible level, so the trie can never admit a form
// the checker would flag. END and the vocabulary's punctuation are boundary
// tokens.
VocabTrie build_trie(const GradedLexicon& lexicon, Level level, const InflectionTable& inflections,
                     const Vocabulary& vocab, const WordSpeller& speller = {});

// Mask for `node`: 1.0 for admissible ids, 0.0 elsewhere, length num_outputs.
std::vector<double> allowed_mask(const VocabTrie& trie, VocabTrie::NodeId node);

// Zeroes `probs` outside the mask and renormalizes. Throws std::logic_error if
// nothing admissible keeps positive mass.
void apply_mask(std::span<double> probs, std::span<const double> mask);

// Ancestral sampling restricted by the trie. Recorded log-probabilities are
// the unconstrained temperature-1 policy values, as in sample_response.
ResponseSample constrained_sample(const PolicyParams& params, const Conditioning& cond,
                                  const VocabTrie& trie, std::size_t max_len, double temperature,
                                  Rng& rng);

}  // namespace ddpo

#endif  // DDPO_DECODE_H_
