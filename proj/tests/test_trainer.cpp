#include <doctest.h>

#include <cmath>
#include <set>

#include "mmict/digest.hpp"
#include "mmict/errors.hpp"
#include "mmict/trainer.hpp"
#include "world.hpp"

using namespace mmict;
using namespace mmict::testing;

namespace {

std::vector<Sample> tiny_dataset(Rng& rng) {
  const char* captions[] = {"a cat", "a dog", "a cat and a dog", "a fox", "a owl and a pig", "a cow", "a bird", "a fish"};
  std::vector<Sample> out;
  for (int i = 0; i < 8; ++i) {
    out.push_back(make_sample(rng, "s" + std::to_string(i), captions[i], captions[i]));
  }
  return out;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_episodes = 3;
  c.base_lr = 3e-3;
  c.warmup_start_lr = 1e-5;
  c.warmup_steps = 2;
  c.min_lr = 1e-4;
  c.n_e = 1;
  return c;
}

Episode bare(const Sample& q, std::string instruction) {
  Episode ep;
  ep.query = q;
  ep.instruction = std::move(instruction);
  return ep;
}

std::vector<Parameter*> backbone(World& w) {
  std::vector<Parameter*> out = w.lm.parameters();
  for (Parameter* p : w.encoder.parameters()) out.push_back(p);
  return out;
}

}  // namespace

TEST_CASE("uniform logits give ln V for any label length") {
  World w;
  for (Parameter* p : w.lm.parameters()) p->value = Tensor(p->value.shape());
  Rng rng(1);
  const double expect = std::log(static_cast<double>(w.tokenizer.size()));
  for (const char* label : {"cat", "a cat"}) {
    Tape tape;
    const Sample q = make_sample(rng, "q", label, label);
    const double loss = episode_loss(tape, w.builder, bare(q, "A video that shows"), DemoVariant::MMICT).value().item();
    CHECK(std::abs(loss - expect) < 1e-12);
  }
}

TEST_CASE("episode loss equals a hand-computed masked NLL") {
  World w;
  Rng rng(2);
  Episode ep = bare(make_sample(rng, "q", "a cat and a dog", "a cat and a dog"), "A short video caption:");
  ep.demonstrations.push_back(make_sample(rng, "d", "a fox", "a fox"));
  Tape tape;
  const LMContext ctx = w.builder.build(tape, ep, DemoVariant::MMICT, true);
  const LmInputs in = context_to_lm_inputs(ctx, 96);
  const Tensor logits = w.lm.logits(in.prefix->value(), in.tokens);
  const std::size_t p = in.prefix->rows();
  double nll = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < in.tokens.size(); ++j) {
    if (!in.loss_mask[j]) continue;
    const std::size_t row = p + j - 1;
    double mx = -1e300;
    for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits.at(row, c));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits.at(row, c) - mx);
    nll += -(logits.at(row, static_cast<std::size_t>(in.tokens[j])) - mx - std::log(z));
    ++n;
  }
  CHECK(n == 6);
  CHECK(std::abs(context_loss(w.builder, ctx).value().item() - nll / static_cast<double>(n)) < 1e-12);
}

TEST_CASE("lr schedule: endpoints, continuity, monotone decay, contracts") {
  TrainConfig c;
  c.warmup_start_lr = 1e-8;
  c.base_lr = 1e-5;
  c.min_lr = 0.0;
  c.warmup_steps = 1000;
  const LrSchedule s(c, 5000);
  CHECK(s.at(0) == doctest::Approx(1e-8).epsilon(1e-12));
  CHECK(s.at(1000) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(std::abs(s.at(4999)) < 1e-20);
  CHECK(s.at(2999) == doctest::Approx(0.5e-5).epsilon(1e-3));
  CHECK(std::abs(s.at(999) - s.at(1000)) < 2e-8);
  CHECK(std::abs(s.at(1001) - s.at(1000)) < 1e-11);
  for (std::size_t i = 1; i < 1000; ++i) CHECK(s.at(i) > s.at(i - 1));
  for (std::size_t i = 1001; i < 5000; ++i) CHECK(s.at(i) <= s.at(i - 1));

  c.min_lr = 1e-6;
  CHECK(LrSchedule(c, 5000).at(4999) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK_THROWS_AS(LrSchedule(c, 999), ContractError);
  c.base_lr = 0.0;
  CHECK_THROWS_AS(LrSchedule(c, 5000), ContractError);
}

TEST_CASE("adamw: single steps against hand values") {
  Parameter w{"w", Tensor::matrix(1, 2, {1.0, -2.0}), true, std::nullopt};
  Parameter frozen{"f", Tensor::matrix(1, 1, {3.0}), false, std::nullopt};
  AdamW opt({&w, &frozen}, 0.9, 0.999, 1e-8, 0.0);
  CHECK(opt.parameters().size() == 1);

  w.grad = Tensor({1, 2});
  opt.step(0.1);
  CHECK(w.value.at(0, 0) == 1.0);
  CHECK(w.value.at(0, 1) == -2.0);

  Parameter u{"u", Tensor::matrix(1, 1, {1.0}), true, Tensor::matrix(1, 1, {1.0})};
  AdamW a2({&u}, 0.9, 0.999, 1e-8, 0.0);
  a2.step(0.1);
  CHECK(std::abs(u.value.item() - 0.9) < 1e-8);

  Parameter d{"d", Tensor::matrix(1, 1, {2.0}), true, Tensor::matrix(1, 1, {0.0})};
  AdamW a3({&d}, 0.9, 0.999, 1e-8, 0.1);
  a3.step(0.1);
  CHECK(d.value.item() == doctest::Approx(2.0 * 0.99).epsilon(1e-14));
  CHECK(frozen.value.item() == 3.0);

  Parameter missing{"m", Tensor::matrix(1, 1, {1.0}), true, std::nullopt};
  AdamW a4({&missing}, 0.9, 0.999, 1e-8, 0.0);
  CHECK_THROWS_AS(a4.step(0.1), ContractError);
}

TEST_CASE("gradient clipping rescales to the global norm") {
  Parameter a{"a", Tensor({2}), true, Tensor::matrix(1, 2, {3.0, 0.0})};
  Parameter b{"b", Tensor({1}), true, Tensor::matrix(1, 1, {4.0})};
  Parameter* ps[] = {&a, &b};
  CHECK(clip_gradients(ps, 10.0) == 5.0);
  CHECK(a.grad->at(0, 0) == 3.0);
  CHECK(clip_gradients(ps, 1.0) == 5.0);
  CHECK(a.grad->at(0, 0) == doctest::Approx(0.6));
  CHECK(b.grad->at(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("zero epochs leave the model untouched") {
  World w;
  Rng rng(3);
  const auto data = tiny_dataset(rng);
  TrainConfig c = quick_config();
  c.epochs = 0;
  const std::string before = parameter_digest(w.model.parameters());
  const TrainLog log = train(data, DemoVariant::MMICT, c, w.builder);
  CHECK(log.steps.empty());
  CHECK(parameter_digest(w.model.parameters()) == before);
}

TEST_CASE("training is deterministic, keeps backbones frozen and lowers the loss") {
  Rng rng(4);
  const auto data = tiny_dataset(rng);
  TrainConfig c = quick_config();
  c.epochs = 6;
  World a, b;
  const std::string frozen = parameter_digest(backbone(a));
  std::size_t epochs_seen = 0;
  TrainHooks hooks;
  hooks.on_epoch_end = [&](std::size_t) { ++epochs_seen; };
  const TrainLog la = train(data, DemoVariant::MMICT, c, a.builder, hooks);
  const TrainLog lb = train(data, DemoVariant::MMICT, c, b.builder);
  CHECK(epochs_seen == 6);
  REQUIRE(la.steps.size() == 6 * 3);
  for (std::size_t i = 0; i < la.steps.size(); ++i) {
    CHECK(la.steps[i].loss == lb.steps[i].loss);
    CHECK(la.steps[i].lr == lb.steps[i].lr);
  }
  CHECK(parameter_digest(a.model.parameters()) == parameter_digest(b.model.parameters()));
  CHECK(parameter_digest(backbone(a)) == frozen);
  CHECK(la.epochs.back().mean_loss < la.epochs.front().mean_loss);

  TrainConfig other = c;
  other.seed = 99;
  World d;
  (void)train(data, DemoVariant::MMICT, other, d.builder);
  CHECK(parameter_digest(d.model.parameters()) != parameter_digest(a.model.parameters()));
}

TEST_CASE("training episodes: resampled per epoch or fixed") {
  Rng rng(5);
  const auto data = tiny_dataset(rng);
  TrainConfig c = quick_config();
  c.n_e = 2;
  bool differs = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Episode e0 = training_episode(data, i, 0, c);
    CHECK(e0.query == data[i]);
    CHECK(e0.demonstrations == training_episode(data, i, 0, c).demonstrations);
    differs = differs || e0.demonstrations != training_episode(data, i, 1, c).demonstrations;
  }
  CHECK(differs);
  c.resample_per_epoch = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(training_episode(data, i, 0, c).demonstrations == training_episode(data, i, 3, c).demonstrations);
  }
}

TEST_CASE("demonstration count per training episode") {
  Rng rng(6);
  const auto data = tiny_dataset(rng);
  TrainConfig c = quick_config();
  c.n_e = 2;
  std::set<std::size_t> seen;
  for (std::size_t epoch = 0; epoch < 4; ++epoch) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t n = training_episode(data, i, epoch, c).demonstrations.size();
      CHECK(n <= 2);
      seen.insert(n);
    }
  }
  CHECK(seen == std::set<std::size_t>{0, 1, 2});
  c.vary_n_e = false;
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(training_episode(data, i, 0, c).demonstrations.size() == 2);
}

TEST_CASE("non-finite loss and unfrozen backbones are reported") {
  Rng rng(6);
  const auto data = tiny_dataset(rng);
  {
    World w;
    w.model.eoc().value.at(0, 0) = std::nan("");
    CHECK_THROWS_AS((void)train(data, DemoVariant::MMICT, quick_config(), w.builder), NumericError);
  }
  {
    World w;
    w.lm.set_trainable(true);
    CHECK_THROWS_AS((void)train(data, DemoVariant::MMICT, quick_config(), w.builder), ContractError);
  }
  World w;
  CHECK_THROWS_AS((void)train({}, DemoVariant::MMICT, quick_config(), w.builder), ContractError);
  CHECK(steps_per_epoch(10, 3) == 4);
  CHECK_THROWS_AS((void)steps_per_epoch(10, 0), ContractError);
}
