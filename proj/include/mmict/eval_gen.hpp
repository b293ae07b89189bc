#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmict/backbones.hpp"
#include "mmict/demo_former.hpp"

namespace mmict {

enum class DecodeMode { Greedy, Beam };
std::string_view to_string(DecodeMode m);
DecodeMode parse_decode_mode(std::string_view name);

struct GenConfig {
  DecodeMode mode = DecodeMode::Beam;
  std::size_t beam_width = 5;
  std::size_t max_new_tokens = 12;
  // GNMT-style alpha. Unset: hypotheses are ranked by mean log-probability.
  std::optional<double> length_penalty;

  void validate() const;
};

// Source of next-token log-probabilities for a decoder.
class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;
  virtual std::size_t vocab() const = 0;
  // Log-probabilities of the token following `generated`.
  virtual std::vector<double> log_probs(std::span<const int> generated) = 0;
};

struct Hypothesis {
  std::vector<int> tokens;  // includes the final EOS when one was emitted
  double log_prob = 0.0;
};

double hypothesis_score(const Hypothesis& h, const GenConfig& gen);
// Strict ordering used by beam search: higher score, then smaller token
// ids, then shorter.
bool ranks_before(const Hypothesis& a, const Hypothesis& b, const GenConfig& gen);

Hypothesis greedy_decode(NextTokenModel& model, std::size_t max_new_tokens, int eos);
Hypothesis beam_decode(NextTokenModel& model, const GenConfig& gen, int eos);
Hypothesis decode(NextTokenModel& model, const GenConfig& gen, int eos);

// Incremental decoding against the frozen LM with a per-prefix KV cache.
class LmDecoder : public NextTokenModel {
 public:
  LmDecoder(const ToyCausalLM& lm, const Tensor& prefix, std::span<const int> tokens);
  std::size_t vocab() const override { return lm_.config().vocab; }
  std::vector<double> log_probs(std::span<const int> generated) override;

 private:
  struct Entry {
    LmState state;
    std::vector<double> log_probs;
  };
  const ToyCausalLM& lm_;
  std::map<std::vector<int>, Entry> cache_;
};

std::vector<double> log_softmax(std::span<const double> logits);

// Inference context. Without demonstrations this is exactly the query
// features followed by the instruction. VanillaFT has no demonstration
// format of its own; injected demonstrations use the fused-text format.
LMContext inference_context(Tape& tape, const ContextBuilder& builder, const Episode& episode, DemoVariant variant,
                            bool with_demos);

std::string generate(const ContextBuilder& builder, const Episode& episode, DemoVariant variant, bool with_demos,
                     const GenConfig& gen);

// Lowercase, collapse whitespace, strip terminal punctuation.
std::string normalize_answer(std::string_view s);
int exact_match(std::string_view prediction, std::string_view label);

// Corpus BLEU-4, no smoothing.
double bleu4(std::span<const std::string> candidates, std::span<const std::vector<std::string>> references);

struct EvalSettings {
  DemoVariant variant = DemoVariant::MMICT;
  bool with_demos = false;
  std::size_t n_e = 2;
  SamplingStrategy strategy = SamplingStrategy::Random;
  TaskKind task = TaskKind::Caption;
  std::uint64_t seed = 5;
  GenConfig gen;
};

struct EvalRecord {
  std::string id;
  std::string instruction;
  std::string prediction;
  std::string label;
  int correct = 0;
  std::size_t demonstrations = 0;
};

struct EvalReport {
  EvalSettings settings;
  std::vector<EvalRecord> records;
  double accuracy = 0.0;
  double bleu = 0.0;
};

double accuracy_of(std::span<const EvalRecord> records);
double bleu_of(std::span<const EvalRecord> records);

// Demonstrations (when requested) are drawn from demo_pool. Sample i of the
// test set uses episode seed derive_seed(settings.seed, i).
EvalReport evaluate(std::span<const Sample> test, std::span<const Sample> demo_pool, const EvalSettings& settings,
                    const ContextBuilder& builder);

}  // namespace mmict
