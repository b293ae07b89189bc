#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mmict/eval_gen.hpp"
#include "mmict/random.hpp"

namespace mmict::testing {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Next-token distribution drawn per prefix from a seeded generator.
class RandomTableModel : public NextTokenModel {
 public:
  RandomTableModel(std::size_t vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}
  std::size_t vocab() const override { return vocab_; }
  std::vector<double> log_probs(std::span<const int> generated) override {
    std::uint64_t s = seed_;
    for (int t : generated) s = derive_seed(s, static_cast<std::uint64_t>(t));
    s = derive_seed(s, generated.size());
    Rng rng(s);
    std::vector<double> logits(vocab_);
    for (double& l : logits) l = std::normal_distribution<double>(0.0, 2.0)(rng);
    visited.insert(std::vector<int>(generated.begin(), generated.end()));
    return log_softmax(logits);
  }
  std::set<std::vector<int>> visited;

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
};

// Probabilities given per prefix by hand; unlisted prefixes are uniform.
class TableModel : public NextTokenModel {
 public:
  TableModel(std::size_t vocab, std::map<std::vector<int>, std::vector<double>> probs)
      : vocab_(vocab), probs_(std::move(probs)) {}
  std::size_t vocab() const override { return vocab_; }
  std::vector<double> log_probs(std::span<const int> generated) override {
    auto it = probs_.find(std::vector<int>(generated.begin(), generated.end()));
    std::vector<double> out(vocab_, -std::log(static_cast<double>(vocab_)));
    if (it != probs_.end()) {
      for (std::size_t i = 0; i < vocab_; ++i) out[i] = it->second[i] > 0 ? std::log(it->second[i]) : kNegInf;
    }
    return out;
  }

 private:
  std::size_t vocab_;
  std::map<std::vector<int>, std::vector<double>> probs_;
};

class FixedTokenModel : public NextTokenModel {
 public:
  FixedTokenModel(std::size_t vocab, int token, std::size_t eos_after, int eos)
      : vocab_(vocab), token_(token), eos_after_(eos_after), eos_(eos) {}
  std::size_t vocab() const override { return vocab_; }
  std::vector<double> log_probs(std::span<const int> generated) override {
    std::vector<double> out(vocab_, kNegInf);
    out[static_cast<std::size_t>(generated.size() >= eos_after_ ? eos_ : token_)] = 0.0;
    return out;
  }

 private:
  std::size_t vocab_;
  int token_;
  std::size_t eos_after_;
  int eos_;
};

// Every sequence that ends in EOS or reaches max_len, best by mean
// log-probability, then smaller ids, then shorter.
Hypothesis exhaustive(NextTokenModel& model, std::size_t max_len, int eos) {
  Hypothesis best;
  double best_score = kNegInf;
  bool have = false;
  std::vector<Hypothesis> stack{Hypothesis{}};
  while (!stack.empty()) {
    Hypothesis h = stack.back();
    stack.pop_back();
    const bool done = !h.tokens.empty() && (h.tokens.back() == eos || h.tokens.size() == max_len);
    if (done) {
      const double score = h.log_prob / static_cast<double>(h.tokens.size());
      if (!have || score > best_score || (score == best_score && h.tokens < best.tokens)) {
        best = h;
        best_score = score;
        have = true;
      }
      continue;
    }
    const std::vector<double> lp = model.log_probs(h.tokens);
    for (std::size_t v = 0; v < lp.size(); ++v) {
      if (lp[v] == kNegInf) continue;
      Hypothesis c = h;
      c.tokens.push_back(static_cast<int>(v));
      c.log_prob += lp[v];
      stack.push_back(std::move(c));
    }
  }
  return best;
}

// Two-sentence corpus with hand-counted n-gram overlaps.
// Sentence 1 vs "the cat sat on a mat": 5/6, 3/5, 2/4, 1/3.
// Sentence 2 vs {"a dog runs fast", "the dog runs very fast today"}:
// 5/5, 4/4, 2/3, 1/2; lengths 5 vs {4, 6} tie, shorter reference wins.
// Pooled: 10/11, 7/9, 4/7, 2/5; c = 11 > r = 10, so no brevity penalty.
inline const std::vector<std::string> kBleuCandidates = {"the cat sat on the mat", "a dog runs fast today"};
inline const std::vector<std::vector<std::string>> kBleuReferences = {
    {"the cat sat on a mat"}, {"a dog runs fast", "the dog runs very fast today"}};
inline double bleu_fixture_expected() { return std::pow(16.0 / 99.0, 0.25); }

// Tokens: 0 = EOS, 1..3 words. Greedy takes 1 (p=.5) and then faces a flat
// distribution; 2 (p=.4) leads to a confident EOS.
inline TableModel trap_model() {
  return TableModel(4, {{{}, {0.05, 0.5, 0.4, 0.05}},
                        {{1}, {0.25, 0.25, 0.25, 0.25}},
                        {{2}, {0.95, 0.02, 0.02, 0.01}}});
}

// A full-length answer beats early stopping.
inline TableModel long_answer_model() {
  return TableModel(4, {{{}, {0.3, 0.6, 0.05, 0.05}},
                        {{1}, {0.1, 0.05, 0.8, 0.05}},
                        {{1, 2}, {0.02, 0.02, 0.02, 0.94}}});
}

}  // namespace mmict::testing
