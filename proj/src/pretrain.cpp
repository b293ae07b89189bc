#include "mmict/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmict/errors.hpp"
#include "mmict/lexicon.hpp"
#include "mmict/random.hpp"

namespace mmict {

namespace {

constexpr std::size_t kMaxFiller = 24;

std::vector<int> quadrant_stand_in(const Sample& s, const Tokenizer& tok) {
  std::vector<int> out(4, Tokenizer::kPad);
  const Frame& f = s.frames.front();
  const std::size_t half = f.grid / 2;
  for (std::size_t r = 0; r < f.grid; ++r) {
    for (std::size_t c = 0; c < f.grid; ++c) {
      const int sym = f.cells[r * f.grid + c];
      if (sym > 0) out[(r / half) * 2 + c / half] = tok.id(lexicon::kObjects[static_cast<std::size_t>(sym - 1)]);
    }
  }
  return out;
}

// One slot per object kind, in lexicon order: the word when present, PAD
// otherwise.
std::vector<int> presence_stand_in(const Sample& s, const Tokenizer& tok) {
  std::vector<int> out(lexicon::kObjects.size(), Tokenizer::kPad);
  for (int sym : s.frames.front().cells) {
    if (sym > 0) out[static_cast<std::size_t>(sym - 1)] = tok.id(lexicon::kObjects[static_cast<std::size_t>(sym - 1)]);
  }
  return out;
}

}  // namespace

std::vector<LmDocument> pretrain_corpus(std::span<const Sample> pool, Task task, const Tokenizer& tokenizer,
                                        std::size_t count, std::size_t max_offset, std::size_t max_context,
                                        std::uint64_t seed) {
  if (pool.empty()) throw ContractError("pretrain_corpus: empty sample pool");
  std::unordered_map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pool.size(); ++i) groups[pool[i].group_id].push_back(i);

  std::vector<LmDocument> docs;
  docs.reserve(count);
  for (std::size_t d = 0; d < count; ++d) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(d)));
    const std::size_t qi = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    const Sample& q = pool[qi];
    LmDocument doc;

    std::vector<std::size_t> demos;
    if (task == Task::IclMap) {
      for (std::size_t j : groups[q.group_id]) {
        if (j != qi) demos.push_back(j);
      }
      std::shuffle(demos.begin(), demos.end(), rng);
      demos.resize(std::uniform_int_distribution<std::size_t>(0, std::min<std::size_t>(4, demos.size()))(rng));
    } else {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
      for (std::size_t k = 0; k < n; ++k) {
        demos.push_back(std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng));
      }
    }
    for (std::size_t j : demos) {
      const std::vector<int> t = tokenizer.tokenize(pool[j].text);
      doc.tokens.insert(doc.tokens.end(), t.begin(), t.end());
      doc.tokens.push_back(Tokenizer::kEoc);
    }

    std::vector<int> stand_in;
    if (task == Task::Describe) stand_in = presence_stand_in(q, tokenizer);
    if (task == Task::Qa) stand_in = quadrant_stand_in(q, tokenizer);
    std::uniform_int_distribution<std::size_t> filler(0, kMaxFiller);
    doc.tokens.insert(doc.tokens.end(), filler(rng), Tokenizer::kPad);
    doc.tokens.insert(doc.tokens.end(), stand_in.begin(), stand_in.end());
    doc.tokens.insert(doc.tokens.end(), filler(rng), Tokenizer::kPad);

    const std::vector<int> ins = tokenizer.tokenize(pick_instruction(task_kind(task), q, rng()));
    doc.tokens.insert(doc.tokens.end(), ins.begin(), ins.end());
    const std::vector<int> label = tokenizer.tokenize(q.label);
    doc.tokens.insert(doc.tokens.end(), label.begin(), label.end());
    doc.tokens.push_back(Tokenizer::kEos);

    if (doc.tokens.size() > max_context) {
      throw ContextLengthError(doc.tokens.size(), max_context);
    }
    const std::size_t room = max_context - doc.tokens.size();
    doc.offset = std::uniform_int_distribution<std::size_t>(0, std::min(max_offset, room))(rng);
    docs.push_back(std::move(doc));
  }
  return docs;
}

Var document_loss(Tape& tape, ToyCausalLM& lm, const LmDocument& doc) {
  const std::size_t n = doc.tokens.size();
  if (n < 2) throw ContractError("document_loss: document needs at least two tokens");
  std::vector<int> targets(n, 0);
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    targets[i] = doc.tokens[i + 1];
    mask[i] = doc.tokens[i + 1] != Tokenizer::kPad;
  }
  return cross_entropy(lm.forward(tape, std::nullopt, doc.tokens, doc.offset), targets, mask);
}

double perplexity(ToyCausalLM& lm, std::span<const LmDocument> docs) {
  if (docs.empty()) throw ContractError("perplexity: no documents");
  double nll = 0.0;
  std::size_t count = 0;
  for (const LmDocument& doc : docs) {
    Tape tape(false);
    std::size_t targets = 0;
    for (std::size_t i = 1; i < doc.tokens.size(); ++i) targets += doc.tokens[i] != Tokenizer::kPad;
    nll += document_loss(tape, lm, doc).value().item() * static_cast<double>(targets);
    count += targets;
  }
  return std::exp(nll / static_cast<double>(count));
}

PretrainReport pretrain_lm(ToyCausalLM& lm, std::span<const LmDocument> train, std::span<const LmDocument> held_out,
                           const PretrainConfig& config, std::uint64_t seed,
                           const std::function<void(std::size_t, double)>& on_step) {
  if (train.empty()) throw ContractError("pretrain_lm: empty corpus");
  PretrainReport report;
  if (!held_out.empty()) report.initial_perplexity = perplexity(lm, held_out);
  if (config.steps > 0) {
    lm.set_trainable(true);
    std::vector<Parameter*> params = lm.parameters();
    TrainConfig sched;
    sched.base_lr = config.lr;
    sched.warmup_start_lr = config.lr * 1e-3;
    sched.warmup_steps = std::min(config.warmup, config.steps);
    sched.min_lr = 0.0;
    const LrSchedule schedule(sched, config.steps);
    AdamW opt(params, 0.9, 0.999, 1e-8, config.weight_decay);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "pretrain-order"));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    for (std::size_t step = 0; step < config.steps; ++step) {
      zero_gradients(params);
      double loss_sum = 0.0;
      const double weight = 1.0 / static_cast<double>(config.batch);
      for (std::size_t b = 0; b < config.batch; ++b) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        Tape tape;
        Var loss = document_loss(tape, lm, train[order[cursor++]]);
        loss_sum += weight * loss.value().item();
        accumulate_gradients(tape.gradients(loss), weight);
      }
      if (!std::isfinite(loss_sum)) {
        lm.set_trainable(false);
        throw NumericError("pretrain_lm: non-finite loss at step " + std::to_string(step));
      }
      clip_gradients(params, 1.0);
      opt.step(schedule.at(step));
      report.losses.push_back(loss_sum);
      if (on_step) on_step(step, loss_sum);
    }
    for (Parameter* p : params) p->zero_grad();
    lm.set_trainable(false);
  }
  report.steps = config.steps;
  report.final_perplexity = held_out.empty() ? 0.0 : perplexity(lm, held_out);
  return report;
}

}  // namespace mmict
