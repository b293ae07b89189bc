#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmict/backbones.hpp"
#include "mmict/eval_gen.hpp"
#include "mmict/mhub.hpp"
#include "mmict/synthetic.hpp"
#include "mmict/trainer.hpp"

namespace mmict {

struct PretrainConfig {
  std::size_t steps = 1500;
  std::size_t batch = 8;
  double lr = 3e-3;
  std::size_t warmup = 100;
  double weight_decay = 0.01;
  std::size_t max_offset = 64;  // documents start at a random position in [0, max_offset]
  std::size_t held_out = 200;   // documents kept aside for perplexity
};

struct RunConfig {
  Task task = Task::Describe;
  DemoVariant variant = DemoVariant::MMICT;
  std::size_t n_f = 16;
  std::size_t n_e = 2;
  SamplingStrategy strategy = SamplingStrategy::Random;
  bool demo_resample = true;
  bool with_demos = false;
  std::string eval_split = "test";
  std::size_t inspect_index = 0;

  std::size_t n_train = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 500;
  std::size_t grid = 4;

  std::uint64_t data_seed = 1;
  std::uint64_t lm_seed = 7;
  std::uint64_t model_seed = 11;
  std::uint64_t train_seed = 3;
  std::uint64_t eval_seed = 5;

  MHubConfig mhub;  // vocab and d_lm are filled from the LM
  LmConfig lm;      // vocab is filled from the tokenizer
  std::size_t d_enc = 32;
  PretrainConfig pretrain;
  TrainConfig train;
  GenConfig gen;

  std::string data_dir = "data";
  std::string lm_path = "lm.ckpt";
  std::string out_dir = "runs";

  std::vector<std::string> sweep_variants;
  std::vector<std::size_t> sweep_n_e;
  std::vector<std::string> sweep_strategies;

  void set(std::string_view key, std::string_view value);
  // Every key with its current value, in documented order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
  void validate() const;

  // Train config with the task, strategy, n_e, resampling and seed copied in.
  TrainConfig train_config() const;
  MHubConfig mhub_config(std::size_t vocab) const;
  LmConfig lm_config(std::size_t vocab) const;
  EvalSettings eval_settings() const;
  SyntheticSpec synthetic_spec() const;
};

std::vector<std::string> config_keys();
// Lines of "key = value"; '#' starts a comment; blank lines ignored.
void apply_config_text(RunConfig& c, std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
// "k=v" override.
void apply_override(RunConfig& c, std::string_view assignment);

}  // namespace mmict
