#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmict/autograd.hpp"
#include "mmict/demo_former.hpp"

namespace mmict {

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_episodes = 8;
  double base_lr = 1e-5;
  double warmup_start_lr = 1e-8;
  std::size_t warmup_steps = 1000;
  double min_lr = 0.0;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  // Draw each episode's demonstration count uniformly from 0..n_e.
  bool vary_n_e = true;
  std::uint64_t seed = 3;

  std::size_t n_e = 2;
  SamplingStrategy strategy = SamplingStrategy::Random;
  bool resample_per_epoch = true;
  TaskKind task = TaskKind::Caption;
};

// Linear warmup from warmup_start_lr to base_lr over [0, warmup_steps],
// then cosine decay to min_lr at the final step.
class LrSchedule {
 public:
  LrSchedule(const TrainConfig& config, std::size_t total_steps);
  double at(std::size_t step) const;
  std::size_t total_steps() const { return total_steps_; }

 private:
  double start_;
  double base_;
  double min_;
  std::size_t warmup_;
  std::size_t total_steps_;
};

struct OptimState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

// Adam with bias correction and decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, double beta1, double beta2, double eps, double weight_decay);

  // Requires a populated gradient on every trainable parameter.
  void step(double lr);
  const OptimState& state() const { return state_; }
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  double beta1_, beta2_, eps_, weight_decay_;
  OptimState state_;
};

// Sets every trainable gradient to zeros (so untouched parameters still
// carry a populated gradient).
void zero_gradients(std::span<Parameter* const> params);
// Rescales gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_gradients(std::span<Parameter* const> params, double max_norm);

// Teacher-forced next-token NLL over the label tokens of one episode.
Var episode_loss(Tape& tape, const ContextBuilder& builder, const Episode& episode, DemoVariant variant);
// Same, for a context assembled by the caller.
Var context_loss(const ContextBuilder& builder, const LMContext& ctx);

struct StepRecord {
  std::size_t step;
  std::size_t epoch;
  double lr;
  double loss;
};

struct EpochRecord {
  std::size_t epoch;
  double mean_loss;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::size_t epoch)> on_epoch_end;
};

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch);

// Episode of one training sample at one epoch; deterministic in
// (config.seed, epoch, index).
Episode training_episode(std::span<const Sample> dataset, std::size_t index, std::size_t epoch,
                         const TrainConfig& config);

// Trains the hub, projection and end-of-chunk vector; every backbone
// parameter must stay bit-identical.
TrainLog train(std::span<const Sample> dataset, DemoVariant variant, const TrainConfig& config,
               const ContextBuilder& builder, const TrainHooks& hooks = {});

}  // namespace mmict
