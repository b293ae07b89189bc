#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mmict/autograd.hpp"
#include "mmict/backbones.hpp"
#include "mmict/mhub.hpp"

namespace mmict {

struct Sample {
  std::string id;
  std::string group_id;
  std::vector<Frame> frames;
  std::string text;   // paired text t_k
  std::string label;  // target y
  std::string question;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Episode {
  std::vector<Sample> demonstrations;
  Sample query;
  std::string instruction;
};

enum class DemoVariant {
  VanillaFT,
  VanillaICT_B_VT,
  VanillaICT_B_T,
  VanillaICT_E_T,
  InstructICT_E_VT,
  InstructICT_E_V,
  InstructICT_E_T,
  MMICT,
};
inline constexpr DemoVariant kAllVariants[] = {
    DemoVariant::VanillaFT,        DemoVariant::VanillaICT_B_VT, DemoVariant::VanillaICT_B_T,
    DemoVariant::VanillaICT_E_T,   DemoVariant::InstructICT_E_VT, DemoVariant::InstructICT_E_V,
    DemoVariant::InstructICT_E_T,  DemoVariant::MMICT,
};
std::string_view to_string(DemoVariant v);
DemoVariant parse_variant(std::string_view name);

enum class SamplingStrategy { Random, OneToMany };
std::string_view to_string(SamplingStrategy s);
SamplingStrategy parse_strategy(std::string_view name);

enum class TaskKind { Caption, Qa };

// How demonstrations are rendered into the context.
enum class DemoFormat {
  None,                   // {}
  UniVisualAndRawText,    // V^a_k, t_k
  RawText,                // t_k
  UniText,                // T^b_k
  FusedVisualAndText,     // V^d_k, T^c_k
  FusedVisual,            // V^d_k
  AttendedText,           // T^e_k
  FusedText,              // T^c_k
};
// How the query is rendered.
enum class QueryFormat {
  UniVisual,    // V^a_pred
  FusedVisual,  // V^d_pred fused with the instruction
};
DemoFormat demo_format(DemoVariant v);
QueryFormat query_format(DemoVariant v);

enum class SegmentKind {
  UniVisual,     // V^a
  UniText,       // T^b
  FusedText,     // T^c
  FusedVisual,   // V^d
  AttendedText,  // T^e
  RawText,       // t_k embedded by the LM's token table
  Eoc,
  Instruction,
  Label,
};
std::string_view to_string(SegmentKind k);

struct SoftSegment {
  SegmentKind kind;
  Var rows;  // [K x d_lm]
  // Demonstration index, or nullopt for the query.
  std::optional<std::size_t> demo;
};

struct TokenSegment {
  SegmentKind kind;
  std::vector<int> tokens;
};

using Segment = std::variant<SoftSegment, TokenSegment>;

// Assembled LM input: segments in order, soft ones realized as a prefix.
struct LMContext {
  std::vector<Segment> segments;

  std::vector<SegmentKind> kinds() const;
  std::size_t soft_rows() const;
};

struct LmInputs {
  std::optional<Var> prefix;
  std::vector<int> tokens;
  std::vector<bool> loss_mask;  // aligned with tokens; true on label tokens
};

// Trainable part of the model: the hub plus the end-of-chunk vector.
class MmictModel {
 public:
  explicit MmictModel(const MHubConfig& config);
  MmictModel(const MmictModel&) = delete;
  MmictModel& operator=(const MmictModel&) = delete;

  MHub& hub() { return hub_; }
  Parameter& eoc() { return eoc_; }
  std::vector<Parameter*> parameters();

 private:
  MHub hub_;
  Parameter eoc_;
};

// Process-wide count of sample_demos invocations (instrumentation).
std::size_t sample_demos_calls();

std::vector<Sample> sample_demos(std::span<const Sample> dataset, const Sample& query, std::size_t n_e,
                                 SamplingStrategy strategy, std::uint64_t seed);

std::string pick_instruction(TaskKind kind, const Sample& query, std::uint64_t seed);

Episode make_episode(std::span<const Sample> demo_pool, const Sample& query, std::size_t n_e,
                     SamplingStrategy strategy, TaskKind kind, std::uint64_t seed);

class ContextBuilder {
 public:
  ContextBuilder(const Tokenizer& tokenizer, const ImageEncoderStub& encoder, ToyCausalLM& lm, MmictModel& model)
      : tokenizer_(tokenizer), encoder_(encoder), lm_(lm), model_(model) {}

  LMContext build(Tape& tape, const Episode& episode, DemoVariant variant, bool include_label) const;
  LMContext build(Tape& tape, const Episode& episode, DemoFormat demos, QueryFormat query, bool include_label) const;

  // Query features alone (the inference input without demonstrations).
  Var query_features(Tape& tape, const Sample& query, std::string_view instruction, QueryFormat format) const;

  const Tokenizer& tokenizer() const { return tokenizer_; }
  ToyCausalLM& lm() const { return lm_; }
  MmictModel& model() const { return model_; }
  const ImageEncoderStub& encoder() const { return encoder_; }

 private:
  void append_demo(Tape& tape, LMContext& ctx, const Sample& demo, std::size_t index, DemoFormat format) const;

  const Tokenizer& tokenizer_;
  const ImageEncoderStub& encoder_;
  ToyCausalLM& lm_;
  MmictModel& model_;
};

// Soft segments concatenated in order, token segments appended after them.
LmInputs context_to_lm_inputs(const LMContext& ctx, std::size_t max_context);

}  // namespace mmict
