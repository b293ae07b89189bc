#pragma once

#include <random>

#include "mmict/backbones.hpp"
#include "mmict/demo_former.hpp"
#include "mmict/random.hpp"

namespace mmict::testing {

// Small frozen backbones plus a trainable model, wired into a builder.
struct World {
  explicit World(std::size_t queries = 3, std::uint64_t seed = 11)
      : tokenizer(Tokenizer::synthetic()),
        encoder(9, 4, 6, 5),
        lm(lm_config(tokenizer.size())),
        model(hub_config(tokenizer.size(), queries, seed)),
        builder(tokenizer, encoder, lm, model) {}

  static LmConfig lm_config(std::size_t vocab) {
    LmConfig c;
    c.vocab = vocab;
    c.d_model = 8;
    c.layers = 1;
    c.heads = 2;
    c.max_context = 96;
    c.ffn_mult = 2;
    return c;
  }

  static MHubConfig hub_config(std::size_t vocab, std::size_t queries, std::uint64_t seed) {
    MHubConfig c;
    c.blocks = 1;
    c.queries = queries;
    c.hidden = 8;
    c.heads = 2;
    c.d_enc = 6;
    c.d_lm = 8;
    c.vocab = vocab;
    c.max_text = 24;
    c.ffn_mult = 2;
    c.seed = seed;
    return c;
  }

  Tokenizer tokenizer;
  ImageEncoderStub encoder;
  ToyCausalLM lm;
  MmictModel model;
  ContextBuilder builder;
};

inline std::vector<Frame> random_frames(Rng& rng, std::size_t n, std::size_t grid = 4) {
  std::vector<Frame> out;
  for (std::size_t i = 0; i < n; ++i) {
    Frame f{grid, std::vector<int>(grid * grid)};
    for (int& c : f.cells) c = std::uniform_int_distribution<int>(0, 8)(rng);
    out.push_back(std::move(f));
  }
  return out;
}

inline Sample make_sample(Rng& rng, std::string id, std::string text, std::string label, std::string group = "",
                          std::size_t frames = 2) {
  Sample s;
  s.id = id;
  s.group_id = group.empty() ? id : group;
  s.frames = random_frames(rng, frames);
  s.text = std::move(text);
  s.label = std::move(label);
  return s;
}

}  // namespace mmict::testing
