#include "ddpo/decode.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ddpo {

VocabTrie::VocabTrie(Level level, std::size_t num_outputs, std::vector<int> boundary)
    : level_(level), num_outputs_(num_outputs), boundary_(std::move(boundary)), nodes_(1) {
  std::sort(boundary_.begin(), boundary_.end());
  boundary_.erase(std::unique(boundary_.begin(), boundary_.end()), boundary_.end());
  for (int b : boundary_) {
    if (b < 0 || static_cast<std::size_t>(b) >= num_outputs_) {
      throw std::out_of_range("boundary token outside the vocabulary");
    }
  }
}

bool VocabTrie::insert(const std::vector<int>& tokens, std::string word) {
  if (tokens.empty()) return false;
  NodeId node = kRoot;
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= num_outputs_) {
      throw std::out_of_range("token outside the vocabulary");
    }
    auto it = nodes_[node].children.find(t);
    if (it == nodes_[node].children.end()) {
      nodes_.emplace_back();
      it = nodes_[node].children.emplace(t, nodes_.size() - 1).first;
    }
    node = it->second;
  }
  if (!nodes_[node].terminal) {
    nodes_[node].terminal = true;
    words_.push_back(std::move(word));
  }
  return true;
}

std::optional<VocabTrie::NodeId> VocabTrie::child(NodeId node, int token) const {
  const auto& c = nodes_.at(node).children;
  auto it = c.find(token);
  if (it == c.end()) return std::nullopt;
  return it->second;
}

std::vector<int> VocabTrie::allowed(NodeId node) const {
  const Node& n = nodes_.at(node);
  std::set<int> out;
  for (const auto& [tok, _] : n.children) out.insert(tok);
  if (node == kRoot || n.terminal) {
    for (const auto& [tok, _] : nodes_[kRoot].children) out.insert(tok);
    out.insert(boundary_.begin(), boundary_.end());
  }
  return {out.begin(), out.end()};
}

VocabTrie::NodeId VocabTrie::advance(NodeId node, int token) const {
  const Node& n = nodes_.at(node);
  // Continuing the current word takes precedence over starting a new one.
  if (auto it = n.children.find(token); it != n.children.end()) return it->second;
  if (node == kRoot || n.terminal) {
    if (std::binary_search(boundary_.begin(), boundary_.end(), token)) return kRoot;
    if (auto it = nodes_[kRoot].children.find(token); it != nodes_[kRoot].children.end()) {
      return it->second;
    }
  }
  throw std::logic_error("token " + std::to_string(token) + " is not allowed here");
}

WordSpeller whole_word_speller(const Vocabulary& vocab) {
  return [&vocab](const std::string& word) -> std::vector<int> {
    if (auto id = vocab.id(word); id && !vocab.is_punctuation(*id)) return {*id};
    return {};
  };
}

VocabTrie build_trie(const GradedLexicon& lexicon, Level level, const InflectionTable& inflections,
                     const Vocabulary& vocab, const WordSpeller& speller) {
  const WordSpeller spell = speller ? speller : whole_word_speller(vocab);
  std::vector<int> boundary{vocab.end_id()};
  for (int i = 0; i < vocab.end_id(); ++i) {
    if (vocab.is_punctuation(i)) boundary.push_back(i);
  }
  VocabTrie trie(level, vocab.num_outputs(), std::move(boundary));

  auto admissible = [&](const std::string& lemma) {
    const auto lv = lexicon.level_of(lemma);
    return lv && rank(*lv) <= rank(level);
  };
  std::set<std::string> candidates;
  for (const auto& [lemma, lv] : lexicon.entries()) {
    if (rank(lv) <= rank(level)) candidates.insert(lemma);
  }
  for (const auto& [form, lemma] : inflections) {
    if (admissible(lemma)) candidates.insert(form);
  }
  for (const auto& word : candidates) {
    // The checker resolves forms through its own lemmatizer; agree with it.
    if (!admissible(lexicon.lemmatize(word))) continue;
    if (lexicon.is_filler(word)) continue;
    trie.insert(spell(word), word);
  }
  return trie;
}

std::vector<double> allowed_mask(const VocabTrie& trie, VocabTrie::NodeId node) {
  std::vector<double> mask(trie.num_outputs(), 0.0);
  for (int t : trie.allowed(node)) mask[static_cast<std::size_t>(t)] = 1.0;
  return mask;
}

void apply_mask(std::span<double> probs, std::span<const double> mask) {
  if (probs.size() != mask.size()) throw std::invalid_argument("mask size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = mask[i] > 0.0 ? probs[i] : 0.0;
    total += probs[i];
  }
  if (!(total > 0.0)) throw std::logic_error("no admissible token has probability mass");
  for (double& p : probs) p /= total;
}

ResponseSample constrained_sample(const PolicyParams& params, const Conditioning& cond,
                                  const VocabTrie& trie, std::size_t max_len, double temperature,
                                  Rng& rng) {
  if (max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  if (trie.num_outputs() != params.num_outputs()) {
    throw std::invalid_argument("trie and policy vocabularies differ");
  }
  const int end = static_cast<int>(params.layout().vocab_size);
  ResponseSample sample;
  TokenContext ctx{kBos, 0, cond};
  VocabTrie::NodeId node = VocabTrie::kRoot;
  for (std::size_t t = 0; t < max_len; ++t) {
    ctx.position = t;
    auto probs = next_token_distribution(params, ctx, temperature);
    const auto mask = allowed_mask(trie, node);
    apply_mask(probs, mask);
    const double u = rng.uniform();
    double acc = 0.0;
    int tok = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] == 0.0) continue;
      acc += probs[i];
      tok = static_cast<int>(i);
      if (u < acc) break;
    }
    if (tok < 0) throw std::logic_error("empty mask");
    const auto base = next_token_distribution(params, ctx, 1.0);
    sample.tokens.push_back(tok);
    sample.logprobs.push_back(std::log(base[static_cast<std::size_t>(tok)]));
    if (tok == end) {
      sample.terminated = true;
      break;
    }
    node = trie.advance(node, tok);
    ctx.prev = tok;
  }
  return sample;
}

}  // namespace ddpo
