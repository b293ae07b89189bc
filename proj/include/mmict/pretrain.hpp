#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mmict/backbones.hpp"
#include "mmict/config.hpp"
#include "mmict/synthetic.hpp"

namespace mmict {

// One language-model training document, placed at a position offset.
struct LmDocument {
  std::vector<int> tokens;
  std::size_t offset = 0;
};

// Documents mirror the layout the LM later sees: optional demonstration
// texts each closed by <eoc>, padding plus a stand-in for the visual rows,
// the instruction, then the label and <eos>. The stand-in is the caption
// (describe), the quadrant contents (qa) or nothing (icl-map).
std::vector<LmDocument> pretrain_corpus(std::span<const Sample> pool, Task task, const Tokenizer& tokenizer,
                                        std::size_t count, std::size_t max_offset, std::size_t max_context,
                                        std::uint64_t seed);

// Mean next-token NLL over non-padding targets.
Var document_loss(Tape& tape, ToyCausalLM& lm, const LmDocument& doc);
double perplexity(ToyCausalLM& lm, std::span<const LmDocument> docs);

struct PretrainReport {
  std::size_t steps = 0;
  double initial_perplexity = 0.0;
  double final_perplexity = 0.0;
  std::vector<double> losses;
};

// Trains every LM parameter, then freezes them.
PretrainReport pretrain_lm(ToyCausalLM& lm, std::span<const LmDocument> train, std::span<const LmDocument> held_out,
                           const PretrainConfig& config, std::uint64_t seed,
                           const std::function<void(std::size_t step, double loss)>& on_step = {});

}  // namespace mmict
