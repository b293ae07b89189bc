#include "mmict/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mmict/digest.hpp"
#include "mmict/errors.hpp"
#include "mmict/random.hpp"

namespace mmict {

LrSchedule::LrSchedule(const TrainConfig& config, std::size_t total_steps)
    : start_(config.warmup_start_lr),
      base_(config.base_lr),
      min_(config.min_lr),
      warmup_(config.warmup_steps),
      total_steps_(total_steps) {
  if (warmup_ > total_steps_) {
    throw ContractError("lr schedule: warmup of " + std::to_string(warmup_) + " steps exceeds the " +
                        std::to_string(total_steps_) + " total steps");
  }
  if (!(base_ > 0.0) || !(start_ > 0.0) || min_ < 0.0) {
    throw ContractError("lr schedule: rates must be positive (min_lr non-negative)");
  }
}

double LrSchedule::at(std::size_t step) const {
  if (step < warmup_) {
    const double f = static_cast<double>(step) / static_cast<double>(warmup_);
    return start_ * (1.0 - f) + base_ * f;
  }
  const std::size_t final_step = total_steps_ == 0 ? 0 : total_steps_ - 1;
  double progress = 1.0;
  if (final_step > warmup_) {
    progress = std::min(1.0, static_cast<double>(step - warmup_) / static_cast<double>(final_step - warmup_));
  }
  return min_ + (base_ - min_) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<Parameter*> params, double beta1, double beta2, double eps, double weight_decay)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  std::erase_if(params_, [](const Parameter* p) { return !p->trainable; });
  for (const Parameter* p : params_) {
    state_.m.emplace_back(p->value.shape());
    state_.v.emplace_back(p->value.shape());
  }
}

void AdamW::step(double lr) {
  for (const Parameter* p : params_) {
    if (!p->grad) throw ContractError("adamw: trainable parameter '" + p->name + "' has no gradient");
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  const double decay = 1.0 - lr * weight_decay_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    double* w = p.value.data();
    const double* g = p.grad->data();
    double* m = state_.m[i].data();
    double* v = state_.v[i].data();
    for (std::size_t j = 0, n = p.value.size(); j < n; ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] = w[j] * decay - lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void zero_gradients(std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    if (p->trainable) p->grad.emplace(p->value.shape());
  }
}

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (!p->grad) continue;
    for (double g : p->grad->values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      if (!p->grad) continue;
      for (double& g : p->grad->values()) g *= s;
    }
  }
  return norm;
}

Var context_loss(const ContextBuilder& builder, const LMContext& ctx) {
  ToyCausalLM& lm = builder.lm();
  LmInputs in = context_to_lm_inputs(ctx, lm.config().max_context);
  if (!in.prefix) throw ContractError("context_loss: context has no soft prefix");
  Tape& tape = in.prefix->tape();
  const std::size_t prefix_rows = in.prefix->rows();
  const std::size_t total = prefix_rows + in.tokens.size();
  std::vector<int> targets(total, 0);
  std::vector<bool> mask(total, false);
  for (std::size_t i = 0; i + 1 < total; ++i) {
    if (i + 1 < prefix_rows) continue;
    const std::size_t j = i + 1 - prefix_rows;
    targets[i] = in.tokens[j];
    mask[i] = in.loss_mask[j];
  }
  Var logits = lm.forward(tape, in.prefix, in.tokens);
  return cross_entropy(logits, targets, mask);
}

Var episode_loss(Tape& tape, const ContextBuilder& builder, const Episode& episode, DemoVariant variant) {
  return context_loss(builder, builder.build(tape, episode, variant, true));
}

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch) {
  if (batch == 0) throw ContractError("train: batch size must be positive");
  return (dataset_size + batch - 1) / batch;
}

Episode training_episode(std::span<const Sample> dataset, std::size_t index, std::size_t epoch,
                         const TrainConfig& config) {
  const std::uint64_t epoch_tag = config.resample_per_epoch ? epoch : 0;
  const std::uint64_t seed = derive_seed(derive_seed(derive_seed(config.seed, "episode"), epoch_tag), index);
  std::size_t n_e = config.n_e;
  if (config.vary_n_e && n_e > 0) {
    Rng rng(derive_seed(seed, "count"));
    n_e = std::uniform_int_distribution<std::size_t>(0, n_e)(rng);
  }
  return make_episode(dataset, dataset[index], n_e, config.strategy, config.task, seed);
}

TrainLog train(std::span<const Sample> dataset, DemoVariant variant, const TrainConfig& config,
               const ContextBuilder& builder, const TrainHooks& hooks) {
  if (dataset.empty()) throw ContractError("train: dataset is empty");
  std::vector<Parameter*> params = builder.model().parameters();
  std::vector<Parameter*> frozen = builder.lm().parameters();
  for (Parameter* p : const_cast<ImageEncoderStub&>(builder.encoder()).parameters()) frozen.push_back(p);
  for (const Parameter* p : frozen) {
    if (p->trainable) throw ContractError("train: backbone parameter '" + p->name + "' is not frozen");
  }
  const std::string frozen_digest = parameter_digest(frozen);
  if (config.epochs == 0) return {};

  const std::size_t per_epoch = steps_per_epoch(dataset.size(), config.batch_episodes);
  const LrSchedule schedule(config, per_epoch * config.epochs);
  AdamW opt(params, config.beta1, config.beta2, config.adam_eps, config.weight_decay);

  TrainLog log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(derive_seed(config.seed, "shuffle"), epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_episodes) {
      const std::size_t end = std::min(order.size(), begin + config.batch_episodes);
      const double weight = 1.0 / static_cast<double>(end - begin);
      zero_gradients(params);
      double batch_loss = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        Tape tape;
        const Episode ep = training_episode(dataset, order[b], epoch, config);
        Var loss = episode_loss(tape, builder, ep, variant);
        const double value = loss.value().item();
        if (!std::isfinite(value)) {
          throw NumericError("train: non-finite loss at step " + std::to_string(step) + " (episode '" +
                             ep.query.id + "', epoch " + std::to_string(epoch) + ")");
        }
        batch_loss += weight * value;
        accumulate_gradients(tape.gradients(loss), weight);
      }
      clip_gradients(params, config.clip_norm);
      const double lr = schedule.at(step);
      opt.step(lr);
      StepRecord rec{step, epoch, lr, batch_loss};
      log.steps.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      epoch_loss += batch_loss;
      ++step;
    }
    if (parameter_digest(frozen) != frozen_digest) {
      throw ContractError("train: a frozen backbone parameter changed during epoch " + std::to_string(epoch));
    }
    log.epochs.push_back({epoch, epoch_loss / static_cast<double>(per_epoch)});
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch);
  }
  return log;
}

}  // namespace mmict
