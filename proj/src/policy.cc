#include "ddpo/policy.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "ddpo/errors.h"
#include "ddpo/text.h"

namespace ddpo {
namespace {

bool is_terminal_mark(std::string_view t) { return t == "." || t == "!" || t == "?"; }

bool all_punct(std::string_view t) {
  return !t.empty() && std::none_of(t.begin(), t.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '\'';
  });
}

// In-place log-softmax; returns log-sum-exp.
double log_softmax(std::span<double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (double& v : x) v -= lse;
  return lse;
}

void softmax(std::span<double> x, double temperature) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp((v - mx) / temperature);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

std::size_t draw(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the running total; take the last non-zero entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::set<std::string> capitalized)
    : tokens_(std::move(tokens)), capitalized_(std::move(capitalized)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw std::invalid_argument("empty vocabulary token");
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

std::optional<int> Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id == end_id()) return end_text_;
  return tokens_.at(static_cast<std::size_t>(id));
}

bool Vocabulary::is_punctuation(int id) const {
  return id >= 0 && id < end_id() && all_punct(tokens_[static_cast<std::size_t>(id)]);
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    for (const auto& t : tokenize(word)) {
      auto i = id(t);
      if (!i) throw std::invalid_argument("word '" + t + "' is not in the vocabulary");
      ids.push_back(*i);
    }
    word.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      continue;
    }
    const std::string single(1, c);
    if (all_punct(single)) {
      if (auto i = id(single)) {
        flush();
        ids.push_back(*i);
        continue;
      }
    }
    word.push_back(c);
  }
  flush();
  return ids;
}

std::string Vocabulary::render(std::span<const int> ids) const {
  std::string out;
  bool sentence_start = true;
  for (int id : ids) {
    if (id == end_id()) continue;
    const std::string& t = token(id);
    if (is_punctuation(id)) {
      out += t;
      if (is_terminal_mark(t)) sentence_start = true;
      continue;
    }
    std::string w = t;
    if (sentence_start || w == "i" || capitalized_.count(w) > 0) {
      w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    }
    const bool clitic = w.front() == '\'' || w == "n't";
    if (!out.empty() && !clitic) out += ' ';
    out += w;
    sentence_start = false;
  }
  return out;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::string joined;
  for (const auto& t : tokens_) {
    joined += t;
    joined += '\n';
  }
  return fnv1a64(joined);
}

// ---------------------------------------------------------------------------
// Parameters and forward pass

PolicyParams::PolicyParams(FeatureLayout layout)
    : layout_(layout), weights_(layout.num_features() * layout.num_outputs(), 0.0) {}

ActiveFeatures PolicyParams::active(const TokenContext& ctx) const {
  return {layout_.prev_feature(ctx.prev), layout_.position_feature(ctx.position),
          layout_.level_feature(ctx.cond.level), layout_.topic_feature(ctx.cond.topic)};
}

void PolicyParams::logits(const TokenContext& ctx, std::span<double> out) const {
  const std::size_t n = num_outputs();
  if (ctx.cond.topic >= layout_.topics) throw std::out_of_range("topic id out of range");
  if (ctx.prev != kBos && (ctx.prev < 0 || static_cast<std::size_t>(ctx.prev) >= layout_.vocab_size)) {
    throw std::out_of_range("previous token id out of range");
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t f : active(ctx)) {
    const double* row = weights_.data() + f * n;
    for (std::size_t v = 0; v < n; ++v) out[v] += row[v];
  }
}

std::vector<double> next_token_distribution(const PolicyParams& params, const TokenContext& ctx,
                                            double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::vector<double> p(params.num_outputs());
  params.logits(ctx, p);
  softmax(p, temperature);
  return p;
}

ResponseSample sample_response(const PolicyParams& params, const Conditioning& cond,
                               std::size_t max_len, double temperature, Rng& rng) {
  if (max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const int end = static_cast<int>(params.layout().vocab_size);
  ResponseSample sample;
  std::vector<double> logits(params.num_outputs());
  std::vector<double> probs(params.num_outputs());
  TokenContext ctx{kBos, 0, cond};
  for (std::size_t t = 0; t < max_len; ++t) {
    ctx.position = t;
    params.logits(ctx, logits);
    std::copy(logits.begin(), logits.end(), probs.begin());
    softmax(probs, temperature);
    const int tok = static_cast<int>(draw(probs, rng));
    log_softmax(logits);
    sample.tokens.push_back(tok);
    sample.logprobs.push_back(logits[static_cast<std::size_t>(tok)]);
    if (tok == end) {
      sample.terminated = true;
      break;
    }
    ctx.prev = tok;
  }
  return sample;
}

std::vector<double> log_prob(const PolicyParams& params, const Conditioning& cond,
                             std::span<const int> tokens) {
  const std::size_t n = params.num_outputs();
  std::vector<double> out;
  out.reserve(tokens.size());
  std::vector<double> logits(n);
  TokenContext ctx{kBos, 0, cond};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int tok = tokens[t];
    if (tok < 0 || static_cast<std::size_t>(tok) >= n) {
      throw std::out_of_range("token id " + std::to_string(tok) + " outside the vocabulary");
    }
    ctx.position = t;
    params.logits(ctx, logits);
    log_softmax(logits);
    out.push_back(logits[static_cast<std::size_t>(tok)]);
    ctx.prev = tok;
  }
  return out;
}

void SparseGradient::accumulate(std::span<double> grad, std::size_t num_outputs,
                                double scale) const {
  for (std::size_t f : features) {
    double* row = grad.data() + f * num_outputs;
    for (std::size_t v = 0; v < num_outputs; ++v) row[v] += scale * coeff[v];
  }
}

SparseGradient grad_log_prob(const PolicyParams& params, const TokenContext& ctx, int token) {
  const std::size_t n = params.num_outputs();
  if (token < 0 || static_cast<std::size_t>(token) >= n) {
    throw std::out_of_range("token id outside the vocabulary");
  }
  SparseGradient g;
  g.features = params.active(ctx);
  g.coeff.resize(n);
  params.logits(ctx, g.coeff);
  softmax(g.coeff, 1.0);
  for (double& c : g.coeff) c = -c;
  g.coeff[static_cast<std::size_t>(token)] += 1.0;
  return g;
}

double entropy(const PolicyParams& params, const TokenContext& ctx) {
  std::vector<double> lp(params.num_outputs());
  params.logits(ctx, lp);
  log_softmax(lp);
  double h = 0.0;
  for (double l : lp) h -= std::exp(l) * l;
  return h;
}

// ---------------------------------------------------------------------------
// Serialization

void save_params(const PolicyParams& params, std::uint64_t vocab_fingerprint, std::ostream& out) {
  const auto& l = params.layout();
  out << "# ddpo policy parameters\n";
  out << "feature_map_version," << kFeatureMapVersion << '\n';
  out << "vocab_size," << l.vocab_size << '\n';
  out << "position_buckets," << l.position_buckets << '\n';
  out << "levels," << l.levels << '\n';
  out << "topics," << l.topics << '\n';
  out << "vocab_fingerprint," << hex64(vocab_fingerprint) << '\n';
  out << "feature,token,weight\n";
  const std::size_t n = params.num_outputs();
  const auto w = params.weights();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0) out << fmt::format("{},{},{:.17g}\n", i / n, i % n, w[i]);
  }
}

LoadedParams load_params(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  FeatureLayout layout;
  std::uint64_t fingerprint = 0;
  int version = -1;
  bool in_rows = false;
  PolicyParams params;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!in_rows) {
      if (line == "feature,token,weight") {
        if (version != kFeatureMapVersion) {
          throw ParseError(source, lineno, "unsupported feature map version");
        }
        if (layout.vocab_size == 0 || layout.position_buckets == 0 || layout.topics == 0) {
          throw ParseError(source, lineno, "incomplete header");
        }
        params = PolicyParams(layout);
        in_rows = true;
        continue;
      }
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ParseError(source, lineno, "expected key,value");
      const std::string key = line.substr(0, comma);
      const std::string value = line.substr(comma + 1);
      try {
        if (key == "feature_map_version") version = std::stoi(value);
        else if (key == "vocab_size") layout.vocab_size = std::stoul(value);
        else if (key == "position_buckets") layout.position_buckets = std::stoul(value);
        else if (key == "levels") layout.levels = std::stoul(value);
        else if (key == "topics") layout.topics = std::stoul(value);
        else if (key == "vocab_fingerprint") fingerprint = std::stoull(value, nullptr, 16);
        else throw ParseError(source, lineno, "unknown header key '" + key + "'");
      } catch (const std::logic_error&) {
        throw ParseError(source, lineno, "bad value for '" + key + "'");
      }
      continue;
    }
    std::istringstream row(line);
    std::string f, v, w;
    if (!std::getline(row, f, ',') || !std::getline(row, v, ',') || !std::getline(row, w)) {
      throw ParseError(source, lineno, "expected feature,token,weight");
    }
    try {
      const std::size_t fi = std::stoul(f);
      const std::size_t vi = std::stoul(v);
      if (fi >= layout.num_features() || vi >= layout.num_outputs()) {
        throw ParseError(source, lineno, "index out of range");
      }
      const double wv = std::stod(w);
      if (!std::isfinite(wv)) throw ParseError(source, lineno, "non-finite weight");
      params.at(fi, vi) = wv;
    } catch (const std::logic_error&) {
      throw ParseError(source, lineno, "malformed row");
    }
  }
  if (!in_rows) throw ParseError(source, lineno, "missing weight table");
  return {std::move(params), fingerprint};
}

// ---------------------------------------------------------------------------
// Likelihood fit

double fit_likelihood(PolicyParams& params, std::span<const LikelihoodExample> examples,
                      std::size_t epochs, double learning_rate) {
  const std::size_t n = params.num_outputs();
  std::size_t count = 0;
  for (const auto& ex : examples) count += ex.tokens.size();
  if (count == 0) return 0.0;
  std::vector<double> grad(params.weights().size());
  std::vector<double> lp(n);
  double mean_ll = 0.0;
  for (std::size_t epoch = 0; epoch <= epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double ll = 0.0;
    for (const auto& ex : examples) {
      TokenContext ctx{kBos, 0, ex.cond};
      for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
        ctx.position = t;
        const int tok = ex.tokens[t];
        params.logits(ctx, lp);
        log_softmax(lp);
        ll += lp[static_cast<std::size_t>(tok)];
        for (std::size_t f : params.active(ctx)) {
          double* row = grad.data() + f * n;
          for (std::size_t v = 0; v < n; ++v) row[v] -= std::exp(lp[v]);
          row[static_cast<std::size_t>(tok)] += 1.0;
        }
        ctx.prev = tok;
      }
    }
    mean_ll = ll / static_cast<double>(count);
    if (epoch == epochs) break;
    auto w = params.weights();
    const double step = learning_rate / static_cast<double>(count);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += step * grad[i];
  }
  return mean_ll;
}

}  // namespace ddpo
