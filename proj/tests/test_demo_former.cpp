#include <doctest.h>

#include <map>
#include <set>

#include "gradcheck.hpp"
#include "mmict/errors.hpp"
#include "mmict/lexicon.hpp"
#include "world.hpp"

using namespace mmict;
using namespace mmict::testing;

namespace {

using K = SegmentKind;

std::vector<K> expected_kinds(DemoVariant v, std::size_t n_e) {
  static const std::map<DemoVariant, std::vector<K>> per_demo = {
      {DemoVariant::VanillaFT, {}},
      {DemoVariant::VanillaICT_B_VT, {K::UniVisual, K::RawText, K::Eoc}},
      {DemoVariant::VanillaICT_B_T, {K::RawText, K::Eoc}},
      {DemoVariant::VanillaICT_E_T, {K::UniText, K::Eoc}},
      {DemoVariant::InstructICT_E_VT, {K::FusedVisual, K::FusedText, K::Eoc}},
      {DemoVariant::InstructICT_E_V, {K::FusedVisual, K::Eoc}},
      {DemoVariant::InstructICT_E_T, {K::AttendedText, K::Eoc}},
      {DemoVariant::MMICT, {K::FusedText, K::Eoc}},
  };
  std::vector<K> out;
  for (std::size_t i = 0; i < n_e; ++i) {
    const auto& d = per_demo.at(v);
    out.insert(out.end(), d.begin(), d.end());
  }
  const bool uni = v == DemoVariant::VanillaFT || v == DemoVariant::VanillaICT_B_VT ||
                   v == DemoVariant::VanillaICT_B_T || v == DemoVariant::VanillaICT_E_T;
  out.push_back(uni ? K::UniVisual : K::FusedVisual);
  out.push_back(K::Instruction);
  out.push_back(K::Label);
  return out;
}

Episode episode_with(Rng& rng, const std::vector<std::string>& demo_texts) {
  Episode ep;
  for (std::size_t i = 0; i < demo_texts.size(); ++i) {
    ep.demonstrations.push_back(make_sample(rng, "d" + std::to_string(i), demo_texts[i], demo_texts[i]));
  }
  ep.query = make_sample(rng, "q", "a cat", "a cat");
  ep.instruction = "A short video caption:";
  return ep;
}

}  // namespace

TEST_CASE("segment sequence for every variant and n_e in 0..4") {
  World w;
  Rng rng(1);
  const std::vector<std::string> texts = {"a cat", "it is red", "a dog and a fox", "a owl", "this shows gold"};
  for (DemoVariant v : kAllVariants) {
    for (std::size_t n_e = 0; n_e <= 4; ++n_e) {
      Tape tape;
      const Episode ep = episode_with(rng, std::vector<std::string>(texts.begin(), texts.begin() + n_e));
      const LMContext ctx = w.builder.build(tape, ep, v, true);
      CAPTURE(to_string(v));
      CAPTURE(n_e);
      CHECK(ctx.kinds() == expected_kinds(v, n_e));
      for (const Segment& s : ctx.segments) {
        if (const auto* soft = std::get_if<SoftSegment>(&s)) {
          CHECK(soft->rows.cols() == 8);
        }
      }
    }
  }
}

TEST_CASE("MMICT with two demonstrations of 3 and 5 tokens") {
  World w(4);
  Rng rng(2);
  Tape tape;
  const Episode ep = episode_with(rng, {"it is red", "a dog and a fox"});
  const LMContext ctx = w.builder.build(tape, ep, DemoVariant::MMICT, true);
  CHECK(ctx.soft_rows() == 3 + 1 + 5 + 1 + 4);
  const LmInputs in = context_to_lm_inputs(ctx, 96);
  REQUIRE(in.prefix);
  CHECK(in.prefix->rows() == 14);
  const auto& d1 = std::get<SoftSegment>(ctx.segments[2]);
  CHECK(d1.demo == std::optional<std::size_t>{1});
  CHECK(d1.rows.rows() == 5);
  CHECK_FALSE(std::get<SoftSegment>(ctx.segments[4]).demo.has_value());
}

TEST_CASE("VanillaFT ignores demonstrations") {
  World w;
  Rng rng(3);
  Tape tape;
  const Episode ep = episode_with(rng, {"a cat", "a dog"});
  const LMContext ctx = w.builder.build(tape, ep, DemoVariant::VanillaFT, true);
  CHECK(ctx.kinds() == std::vector<K>{K::UniVisual, K::Instruction, K::Label});
  CHECK(ctx.soft_rows() == 3);
}

TEST_CASE("MMICT without demonstrations is exactly the fused query plus instruction") {
  World w;
  Rng rng(4);
  const Episode ep = episode_with(rng, {});
  Tape tape;
  const LmInputs in = context_to_lm_inputs(w.builder.build(tape, ep, DemoVariant::MMICT, false), 96);
  Tape direct;
  MHub& hub = w.model.hub();
  const Tensor expect =
      hub.project(hub.fuse(direct, w.encoder.encode_video(ep.query.frames), w.tokenizer.tokenize(ep.instruction)).v_d)
          .value();
  REQUIRE(in.prefix);
  CHECK(in.prefix->value() == expect);
  CHECK(in.tokens == w.tokenizer.tokenize(ep.instruction));
}

TEST_CASE("loss mask covers label tokens and EOS only") {
  World w;
  Rng rng(5);
  Episode ep = episode_with(rng, {});
  ep.instruction = "A short image caption:";
  Tape tape;
  const LmInputs in = context_to_lm_inputs(w.builder.build(tape, ep, DemoVariant::MMICT, true), 96);
  CHECK(in.loss_mask == std::vector<bool>{false, false, false, false, true, true, true});
  CHECK(in.tokens.back() == Tokenizer::kEos);
  Tape t2;
  CHECK(context_to_lm_inputs(w.builder.build(t2, ep, DemoVariant::MMICT, false), 96).loss_mask ==
        std::vector<bool>(4, false));
}

TEST_CASE("swapping demonstrations permutes the prefix blocks") {
  World w;
  Rng rng(6);
  Episode ep = episode_with(rng, {"it is red", "a dog and a fox"});
  Episode swapped = ep;
  std::swap(swapped.demonstrations[0], swapped.demonstrations[1]);
  Tape tape;
  const Tensor a = context_to_lm_inputs(w.builder.build(tape, ep, DemoVariant::MMICT, false), 96).prefix->value();
  const Tensor b =
      context_to_lm_inputs(w.builder.build(tape, swapped, DemoVariant::MMICT, false), 96).prefix->value();
  // a: [d0(3) eoc d1(5) eoc q(3)], b: [d1(5) eoc d0(3) eoc q(3)]
  CHECK(slice_rows(a, 0, 4) == slice_rows(b, 6, 10));
  CHECK(slice_rows(a, 4, 10) == slice_rows(b, 0, 6));
  CHECK(slice_rows(a, 10, 13) == slice_rows(b, 10, 13));
}

TEST_CASE("context length is enforced") {
  World w;
  Rng rng(7);
  const Episode ep = episode_with(rng, {"a dog and a fox", "a dog and a fox"});
  Tape tape;
  const LMContext ctx = w.builder.build(tape, ep, DemoVariant::MMICT, true);
  CHECK_THROWS_AS((void)context_to_lm_inputs(ctx, 20), ContextLengthError);
  CHECK_NOTHROW((void)context_to_lm_inputs(ctx, 96));
}

TEST_CASE("sample_demos: counts, exclusion, determinism, one-to-many") {
  Rng rng(8);
  std::vector<Sample> pool;
  for (int g = 0; g < 3; ++g) {
    for (int i = 0; i < 4; ++i) {
      pool.push_back(make_sample(rng, "s" + std::to_string(g * 4 + i), "it is " + std::string(lexicon::kColors[i % 3]),
                                 "x", "g" + std::to_string(g)));
    }
  }
  const Sample& q = pool[0];
  const std::size_t calls = sample_demos_calls();
  CHECK(sample_demos(pool, q, 0, SamplingStrategy::Random, 1).empty());
  CHECK(sample_demos_calls() == calls + 1);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto r = sample_demos(pool, q, 4, SamplingStrategy::Random, seed);
    REQUIRE(r.size() == 4);
    std::set<std::string> ids;
    for (const Sample& s : r) {
      CHECK(s.id != q.id);
      ids.insert(s.id);
    }
    CHECK(ids.size() == 4);
    CHECK(r == sample_demos(pool, q, 4, SamplingStrategy::Random, seed));

    const auto o = sample_demos(pool, q, 2, SamplingStrategy::OneToMany, seed);
    REQUIRE(o.size() == 2);
    for (const Sample& s : o) {
      CHECK(s.group_id == q.group_id);
      CHECK(s.text != q.text);
    }
  }
  // Group g0 has texts red, blue, green, red: two qualify for the query.
  CHECK_THROWS_AS((void)sample_demos(pool, q, 3, SamplingStrategy::OneToMany, 1), SamplingError);
  CHECK_THROWS_AS((void)sample_demos(pool, q, 12, SamplingStrategy::Random, 1), SamplingError);

  std::vector<Sample> singles;
  for (int i = 0; i < 5; ++i) singles.push_back(make_sample(rng, "c" + std::to_string(i), "a cat", "a cat"));
  CHECK_THROWS_AS((void)sample_demos(singles, singles[0], 1, SamplingStrategy::OneToMany, 1), SamplingError);
}

TEST_CASE("pick_instruction") {
  Rng rng(9);
  Sample video = make_sample(rng, "v", "a cat", "a cat", "", 4);
  Sample image = make_sample(rng, "i", "a cat", "a cat", "", 1);
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 60; ++s) {
    const std::string a = pick_instruction(TaskKind::Caption, video, s);
    CHECK(a == pick_instruction(TaskKind::Caption, video, s));
    CHECK(std::find(lexicon::kVideoTemplates.begin(), lexicon::kVideoTemplates.end(), a) !=
          lexicon::kVideoTemplates.end());
    const std::string b = pick_instruction(TaskKind::Caption, image, s);
    CHECK(std::find(lexicon::kImageTemplates.begin(), lexicon::kImageTemplates.end(), b) !=
          lexicon::kImageTemplates.end());
    seen.insert(a);
  }
  CHECK(seen.size() == lexicon::kVideoTemplates.size());
  video.question = "what is in the top left";
  CHECK(pick_instruction(TaskKind::Qa, video, 3) == "Question: what is in the top left Answer:");
}

TEST_CASE("fused query features depend on the instruction, plain ones do not") {
  World w;
  Rng rng(10);
  const Sample q = make_sample(rng, "q", "a cat", "a cat");
  Tape tape;
  CHECK_FALSE(w.builder.query_features(tape, q, "A short video caption:", QueryFormat::FusedVisual).value() ==
              w.builder.query_features(tape, q, "A video that shows", QueryFormat::FusedVisual).value());
  CHECK(w.builder.query_features(tape, q, "A short video caption:", QueryFormat::UniVisual).value() ==
        w.builder.query_features(tape, q, "A video that shows", QueryFormat::UniVisual).value());
}

TEST_CASE("variant and strategy names round trip") {
  for (DemoVariant v : kAllVariants) CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS((void)parse_variant("mmict"), UsageError);
  CHECK(parse_strategy("one-to-many") == SamplingStrategy::OneToMany);
  CHECK(parse_strategy(to_string(SamplingStrategy::Random)) == SamplingStrategy::Random);
  CHECK_THROWS_AS((void)parse_strategy("all"), UsageError);
}

TEST_CASE("labels must not be empty") {
  World w;
  Rng rng(11);
  Episode ep = episode_with(rng, {});
  ep.query.label = "";
  Tape tape;
  CHECK_THROWS_AS((void)w.builder.build(tape, ep, DemoVariant::MMICT, true), ContractError);
  CHECK_NOTHROW((void)w.builder.build(tape, ep, DemoVariant::MMICT, false));
}
