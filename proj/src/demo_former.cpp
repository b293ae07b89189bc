#include "mmict/demo_former.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>

#include "mmict/errors.hpp"
#include "mmict/lexicon.hpp"
#include "mmict/random.hpp"

namespace mmict {

namespace {

constexpr std::pair<DemoVariant, std::string_view> kVariantNames[] = {
    {DemoVariant::VanillaFT, "VanillaFT"},
    {DemoVariant::VanillaICT_B_VT, "VanillaICT-B_VT"},
    {DemoVariant::VanillaICT_B_T, "VanillaICT-B_T"},
    {DemoVariant::VanillaICT_E_T, "VanillaICT-E_T"},
    {DemoVariant::InstructICT_E_VT, "InstructICT-E_VT"},
    {DemoVariant::InstructICT_E_V, "InstructICT-E_V"},
    {DemoVariant::InstructICT_E_T, "InstructICT-E_T"},
    {DemoVariant::MMICT, "MMICT"},
};

std::atomic<std::size_t> g_sample_calls{0};

}  // namespace

std::size_t sample_demos_calls() { return g_sample_calls.load(); }

std::string_view to_string(DemoVariant v) {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) return name;
  }
  throw ContractError("unknown demonstration variant");
}

DemoVariant parse_variant(std::string_view name) {
  for (const auto& [variant, n] : kVariantNames) {
    if (n == name) return variant;
  }
  throw UsageError("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(SamplingStrategy s) { return s == SamplingStrategy::Random ? "random" : "one-to-many"; }

SamplingStrategy parse_strategy(std::string_view name) {
  if (name == "random") return SamplingStrategy::Random;
  if (name == "one-to-many") return SamplingStrategy::OneToMany;
  throw UsageError("unknown sampling strategy '" + std::string(name) + "'");
}

DemoFormat demo_format(DemoVariant v) {
  switch (v) {
    case DemoVariant::VanillaFT: return DemoFormat::None;
    case DemoVariant::VanillaICT_B_VT: return DemoFormat::UniVisualAndRawText;
    case DemoVariant::VanillaICT_B_T: return DemoFormat::RawText;
    case DemoVariant::VanillaICT_E_T: return DemoFormat::UniText;
    case DemoVariant::InstructICT_E_VT: return DemoFormat::FusedVisualAndText;
    case DemoVariant::InstructICT_E_V: return DemoFormat::FusedVisual;
    case DemoVariant::InstructICT_E_T: return DemoFormat::AttendedText;
    case DemoVariant::MMICT: return DemoFormat::FusedText;
  }
  throw ContractError("unknown demonstration variant");
}

QueryFormat query_format(DemoVariant v) {
  switch (v) {
    case DemoVariant::VanillaFT:
    case DemoVariant::VanillaICT_B_VT:
    case DemoVariant::VanillaICT_B_T:
    case DemoVariant::VanillaICT_E_T:
      return QueryFormat::UniVisual;
    case DemoVariant::InstructICT_E_VT:
    case DemoVariant::InstructICT_E_V:
    case DemoVariant::InstructICT_E_T:
    case DemoVariant::MMICT:
      return QueryFormat::FusedVisual;
  }
  throw ContractError("unknown demonstration variant");
}

std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::UniVisual: return "V^a";
    case SegmentKind::UniText: return "T^b";
    case SegmentKind::FusedText: return "T^c";
    case SegmentKind::FusedVisual: return "V^d";
    case SegmentKind::AttendedText: return "T^e";
    case SegmentKind::RawText: return "t";
    case SegmentKind::Eoc: return "EOC";
    case SegmentKind::Instruction: return "t_ins";
    case SegmentKind::Label: return "y";
  }
  return "?";
}

std::vector<SegmentKind> LMContext::kinds() const {
  std::vector<SegmentKind> out;
  out.reserve(segments.size());
  for (const Segment& s : segments) {
    out.push_back(std::visit([](const auto& seg) { return seg.kind; }, s));
  }
  return out;
}

std::size_t LMContext::soft_rows() const {
  std::size_t rows = 0;
  for (const Segment& s : segments) {
    if (const auto* soft = std::get_if<SoftSegment>(&s)) rows += soft->rows.rows();
  }
  return rows;
}

MmictModel::MmictModel(const MHubConfig& config) : hub_(config) {
  Rng rng(derive_seed(config.seed, "eoc"));
  eoc_ = Parameter{"eoc", random_normal({1, config.d_lm}, 0.02, rng), true, std::nullopt};
}

std::vector<Parameter*> MmictModel::parameters() {
  std::vector<Parameter*> out = hub_.parameters();
  out.push_back(&eoc_);
  return out;
}

std::vector<Sample> sample_demos(std::span<const Sample> dataset, const Sample& query, std::size_t n_e,
                                 SamplingStrategy strategy, std::uint64_t seed) {
  ++g_sample_calls;
  if (n_e == 0) return {};
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset[i];
    if (s.id == query.id) continue;
    if (strategy == SamplingStrategy::OneToMany && (s.group_id != query.group_id || s.text == query.text)) continue;
    candidates.push_back(i);
  }
  if (candidates.size() < n_e) {
    throw SamplingError("sample_demos: need " + std::to_string(n_e) + " demonstrations for '" + query.id +
                        "' but only " + std::to_string(candidates.size()) + " candidates qualify under " +
                        std::string(to_string(strategy)) + " sampling");
  }
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(n_e);
  for (std::size_t i = 0; i < n_e; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
    out.push_back(dataset[candidates[i]]);
  }
  return out;
}

std::string pick_instruction(TaskKind kind, const Sample& query, std::uint64_t seed) {
  if (kind == TaskKind::Qa) {
    return std::string(lexicon::kQuestionPrefix) + " " + query.question + " " + std::string(lexicon::kAnswerMarker);
  }
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, lexicon::kImageTemplates.size() - 1);
  const std::size_t i = pick(rng);
  return std::string(query.frames.size() > 1 ? lexicon::kVideoTemplates[i] : lexicon::kImageTemplates[i]);
}

Episode make_episode(std::span<const Sample> demo_pool, const Sample& query, std::size_t n_e,
                     SamplingStrategy strategy, TaskKind kind, std::uint64_t seed) {
  Episode ep;
  ep.demonstrations = sample_demos(demo_pool, query, n_e, strategy, derive_seed(seed, "demos"));
  ep.query = query;
  ep.instruction = pick_instruction(kind, query, derive_seed(seed, "instruction"));
  return ep;
}

void ContextBuilder::append_demo(Tape& tape, LMContext& ctx, const Sample& demo, std::size_t index,
                                 DemoFormat format) const {
  MHub& hub = model_.hub();
  const std::vector<int> text = tokenizer_.tokenize(demo.text);
  auto soft = [&](SegmentKind kind, const Var& rows) { ctx.segments.emplace_back(SoftSegment{kind, rows, index}); };
  switch (format) {
    case DemoFormat::None:
      return;
    case DemoFormat::UniVisualAndRawText:
      soft(SegmentKind::UniVisual, hub.project(hub.encode_visual(tape, encoder_.encode_video(demo.frames))));
      soft(SegmentKind::RawText, lm_.embed_tokens(tape, text));
      break;
    case DemoFormat::RawText:
      soft(SegmentKind::RawText, lm_.embed_tokens(tape, text));
      break;
    case DemoFormat::UniText:
      soft(SegmentKind::UniText, hub.project(hub.encode_text(tape, text)));
      break;
    case DemoFormat::FusedVisualAndText: {
      FusionOutput f = hub.fuse(tape, encoder_.encode_video(demo.frames), text);
      soft(SegmentKind::FusedVisual, hub.project(f.v_d));
      soft(SegmentKind::FusedText, hub.project(f.t_c));
      break;
    }
    case DemoFormat::FusedVisual:
      soft(SegmentKind::FusedVisual, hub.project(hub.fuse(tape, encoder_.encode_video(demo.frames), text).v_d));
      break;
    case DemoFormat::AttendedText:
      soft(SegmentKind::AttendedText,
           hub.project(hub.visual_attended_text(tape, encoder_.encode_video(demo.frames), text)));
      break;
    case DemoFormat::FusedText:
      soft(SegmentKind::FusedText, hub.project(hub.fuse(tape, encoder_.encode_video(demo.frames), text).t_c));
      break;
  }
  soft(SegmentKind::Eoc, tape.param(model_.eoc()));
}

Var ContextBuilder::query_features(Tape& tape, const Sample& query, std::string_view instruction,
                                   QueryFormat format) const {
  MHub& hub = model_.hub();
  const Tensor z = encoder_.encode_video(query.frames);
  if (format == QueryFormat::UniVisual) return hub.project(hub.encode_visual(tape, z));
  return hub.project(hub.fuse(tape, z, tokenizer_.tokenize(instruction)).v_d);
}

LMContext ContextBuilder::build(Tape& tape, const Episode& episode, DemoVariant variant, bool include_label) const {
  return build(tape, episode, demo_format(variant), query_format(variant), include_label);
}

LMContext ContextBuilder::build(Tape& tape, const Episode& episode, DemoFormat demos, QueryFormat query,
                                bool include_label) const {
  LMContext ctx;
  if (demos != DemoFormat::None) {
    for (std::size_t k = 0; k < episode.demonstrations.size(); ++k) {
      append_demo(tape, ctx, episode.demonstrations[k], k, demos);
    }
  }
  ctx.segments.emplace_back(
      SoftSegment{query == QueryFormat::UniVisual ? SegmentKind::UniVisual : SegmentKind::FusedVisual,
                  query_features(tape, episode.query, episode.instruction, query), std::nullopt});
  ctx.segments.emplace_back(TokenSegment{SegmentKind::Instruction, tokenizer_.tokenize(episode.instruction)});
  if (include_label) {
    std::vector<int> label = tokenizer_.tokenize(episode.query.label);
    if (label.empty()) throw ContractError("build_context: label of '" + episode.query.id + "' is empty");
    label.push_back(Tokenizer::kEos);
    ctx.segments.emplace_back(TokenSegment{SegmentKind::Label, std::move(label)});
  }
  return ctx;
}

LmInputs context_to_lm_inputs(const LMContext& ctx, std::size_t max_context) {
  LmInputs out;
  std::vector<Var> soft;
  for (const Segment& s : ctx.segments) {
    if (const auto* seg = std::get_if<SoftSegment>(&s)) {
      if (seg->rows.rows() > 0) soft.push_back(seg->rows);
    }
  }
  for (const Segment& s : ctx.segments) {
    if (const auto* seg = std::get_if<TokenSegment>(&s)) {
      out.tokens.insert(out.tokens.end(), seg->tokens.begin(), seg->tokens.end());
      out.loss_mask.insert(out.loss_mask.end(), seg->tokens.size(), seg->kind == SegmentKind::Label);
    }
  }
  std::size_t rows = 0;
  for (const Var& v : soft) rows += v.rows();
  if (rows + out.tokens.size() > max_context) throw ContextLengthError(rows + out.tokens.size(), max_context);
  if (!soft.empty()) out.prefix = soft.size() == 1 ? soft.front() : concat_rows(soft);
  return out;
}

}  // namespace mmict
