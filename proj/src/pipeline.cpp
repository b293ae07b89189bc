#include "mmict/pipeline.hpp"

#include <cstdio>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "mmict/errors.hpp"
#include "mmict/lexicon.hpp"
#include "mmict/random.hpp"

namespace mmict {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kNumSymbols = lexicon::kObjects.size() + 1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

Session::Session(const RunConfig& config)
    : config_(config),
      tokenizer(Tokenizer::synthetic()),
      encoder(kNumSymbols, config.grid, config.d_enc, derive_seed(config.lm_seed, "encoder")),
      lm(config.lm_config(tokenizer.size())),
      model(config.mhub_config(tokenizer.size())),
      builder(tokenizer, encoder, lm, model) {}

std::vector<Parameter*> Session::backbone_parameters() {
  std::vector<Parameter*> out = lm.parameters();
  for (Parameter* p : encoder.parameters()) out.push_back(p);
  return out;
}

fs::path split_path(const RunConfig& c, Task task, std::string_view split) {
  return fs::path(c.data_dir) / (std::string(to_string(task)) + "." + std::string(split) + ".jsonl");
}

std::vector<Sample> load_split(const RunConfig& c, std::string_view split) {
  const fs::path p = split_path(c, c.task, split);
  if (!fs::exists(p)) throw UsageError("dataset '" + p.string() + "' does not exist (run gen-data first)");
  return read_dataset(p);
}

Splits run_gen_data(const RunConfig& c, std::ostream& log) {
  Splits s = gen_synthetic(c.synthetic_spec());
  write_dataset(split_path(c, c.task, "train"), s.train);
  write_dataset(split_path(c, c.task, "val"), s.val);
  write_dataset(split_path(c, c.task, "test"), s.test);
  log << "gen-data " << to_string(c.task) << ": train=" << s.train.size() << " val=" << s.val.size()
      << " test=" << s.test.size() << " -> " << c.data_dir << "\n";
  return s;
}

std::vector<LmDocument> lm_corpus(const RunConfig& c, const Tokenizer& tok,
                                  std::span<const std::pair<Task, std::vector<Sample>>> pools, std::size_t count,
                                  std::uint64_t seed) {
  std::vector<LmDocument> docs;
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const std::size_t share = count / pools.size() + (i < count % pools.size() ? 1 : 0);
    auto part = pretrain_corpus(pools[i].second, pools[i].first, tok, share, c.pretrain.max_offset,
                                c.lm.max_context, derive_seed(seed, to_string(pools[i].first)));
    docs.insert(docs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return docs;
}

PretrainReport run_pretrain(const RunConfig& c, std::ostream& log) {
  std::vector<std::pair<Task, std::vector<Sample>>> train_pools;
  std::vector<std::pair<Task, std::vector<Sample>>> val_pools;
  for (Task t : {Task::Describe, Task::IclMap, Task::Qa}) {
    if (fs::exists(split_path(c, t, "train"))) train_pools.emplace_back(t, read_dataset(split_path(c, t, "train")));
    if (fs::exists(split_path(c, t, "val"))) val_pools.emplace_back(t, read_dataset(split_path(c, t, "val")));
  }
  if (train_pools.empty()) throw UsageError("pretrain-lm: no train split found in '" + c.data_dir + "'");
  Session s(c);
  const auto train_docs =
      lm_corpus(c, s.tokenizer, train_pools, c.pretrain.steps * c.pretrain.batch, derive_seed(c.lm_seed, "corpus"));
  const auto held_out = val_pools.empty() ? std::vector<LmDocument>{}
                                          : lm_corpus(c, s.tokenizer, val_pools, c.pretrain.held_out,
                                                      derive_seed(c.lm_seed, "held-out"));
  const std::size_t every = std::max<std::size_t>(1, c.pretrain.steps / 10);
  PretrainReport r = pretrain_lm(s.lm, train_docs.empty() ? held_out : train_docs, held_out, c.pretrain,
                                 c.lm_seed, [&](std::size_t step, double loss) {
                                   if (step % every == 0) log << "pretrain step " << step << " loss " << loss << "\n";
                                 });
  save_checkpoint(c.lm_path, capture(s.backbone_parameters(), c.entries()));
  log << "pretrain-lm: " << r.steps << " steps, held-out perplexity " << fixed(r.initial_perplexity, 3) << " -> "
      << fixed(r.final_perplexity, 3) << ", saved " << c.lm_path << "\n";
  return r;
}

void load_lm(Session& s, const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("language model '" + path.string() + "' does not exist (run pretrain-lm)");
  restore(load_checkpoint(path), s.backbone_parameters());
}

std::string train_log_jsonl(const TrainLog& log) {
  std::string out;
  for (const StepRecord& r : log.steps) {
    out += "{\"step\":" + std::to_string(r.step) + ",\"epoch\":" + std::to_string(r.epoch) + ",\"lr\":" + fmt(r.lr) +
           ",\"loss\":" + fmt(r.loss) + "}\n";
  }
  for (const EpochRecord& e : log.epochs) {
    out += "{\"epoch_end\":" + std::to_string(e.epoch) + ",\"mean_loss\":" + fmt(e.mean_loss) + "}\n";
  }
  return out;
}

std::string report_jsonl(const EvalReport& r) {
  std::string out;
  for (const EvalRecord& rec : r.records) {
    json j = {{"id", rec.id},          {"instruction", rec.instruction}, {"prediction", rec.prediction},
              {"label", rec.label},    {"correct", rec.correct},         {"demonstrations", rec.demonstrations}};
    out += j.dump() + "\n";
  }
  json summary = {{"summary", true},
                  {"variant", std::string(to_string(r.settings.variant))},
                  {"with_demos", r.settings.with_demos},
                  {"n_e", r.settings.n_e},
                  {"strategy", std::string(to_string(r.settings.strategy))},
                  {"decode", std::string(to_string(r.settings.gen.mode))},
                  {"beam_width", r.settings.gen.beam_width},
                  {"samples", r.records.size()},
                  {"accuracy", fmt(r.accuracy)},
                  {"bleu4", fmt(r.bleu)}};
  return out + summary.dump() + "\n";
}

std::string report_summary(const EvalReport& r) {
  std::ostringstream os;
  os << "variant            with_demos  n_e  strategy     samples  accuracy  BLEU@4\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %-10s %4zu  %-11s %8zu  %8.4f  %6.4f\n",
                std::string(to_string(r.settings.variant)).c_str(), r.settings.with_demos ? "true" : "false",
                r.settings.n_e, std::string(to_string(r.settings.strategy)).c_str(), r.records.size(), r.accuracy,
                r.bleu);
  os << line;
  return os.str();
}

TrainLog run_train(Session& s, std::span<const Sample> train, const fs::path& out_dir, std::ostream* log) {
  const TrainConfig tc = s.config_.train_config();
  const DemoVariant variant = s.config_.variant;
  const auto params = s.model.parameters();
  const std::size_t per_epoch = steps_per_epoch(train.size(), tc.batch_episodes);
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) {
    if (log && (r.step % std::max<std::size_t>(1, per_epoch / 4) == 0)) {
      *log << "epoch " << r.epoch << " step " << r.step << " lr " << r.lr << " loss " << r.loss << "\n";
    }
  };
  hooks.on_epoch_end = [&](std::size_t epoch) {
    if (!out_dir.empty()) {
      save_checkpoint(out_dir / ("checkpoint-epoch" + std::to_string(epoch) + ".ckpt"),
                      capture(params, s.config_echo()));
    }
  };
  TrainLog tl = mmict::train(train, variant, tc, s.builder, hooks);
  if (!out_dir.empty()) {
    save_checkpoint(out_dir / "model.ckpt", capture(params, s.config_echo()));
    atomic_write(out_dir / "train_log.jsonl", train_log_jsonl(tl));
  }
  if (log) {
    for (const EpochRecord& e : tl.epochs) *log << "epoch " << e.epoch << " mean loss " << e.mean_loss << "\n";
  }
  return tl;
}

EvalReport run_eval(Session& s, std::span<const Sample> test, std::span<const Sample> demo_pool,
                    const fs::path& out_dir) {
  EvalReport r = evaluate(test, demo_pool, s.config_.eval_settings(), s.builder);
  if (!out_dir.empty()) atomic_write(out_dir / "report.jsonl", report_jsonl(r));
  return r;
}

std::vector<AblationRow> run_ablate(const RunConfig& c, std::ostream& log) {
  std::vector<std::string> variants = c.sweep_variants;
  if (variants.empty()) variants.emplace_back(to_string(c.variant));
  std::vector<std::size_t> n_es = c.sweep_n_e;
  if (n_es.empty()) n_es.push_back(c.n_e);
  std::vector<std::string> strategies = c.sweep_strategies;
  if (strategies.empty()) strategies.emplace_back(to_string(c.strategy));

  const std::vector<Sample> train = load_split(c, "train");
  const std::vector<Sample> test = load_split(c, c.eval_split);
  std::vector<AblationRow> rows;
  for (const std::string& v : variants) {
    for (std::size_t n_e : n_es) {
      for (const std::string& st : strategies) {
        RunConfig cell = c;
        cell.set("variant", v);
        cell.n_e = n_e;
        cell.set("strategy", st);
        const fs::path dir = fs::path(c.out_dir) / "ablate" / (v + "-ne" + std::to_string(n_e) + "-" + st);
        Session s(cell);
        load_lm(s, cell.lm_path);
        log << "ablate cell " << v << " n_e=" << n_e << " " << st << "\n";
        const TrainLog tl = run_train(s, train, dir);
        const EvalReport r = run_eval(s, test, train, dir);
        rows.push_back({v, n_e, st, r.accuracy, r.bleu, tl.epochs.empty() ? 0.0 : tl.epochs.back().mean_loss});
      }
    }
  }
  std::string out;
  for (const AblationRow& r : rows) {
    json j = {{"variant", r.variant}, {"n_e", r.n_e},         {"strategy", r.strategy},
              {"accuracy", fmt(r.accuracy)}, {"bleu4", fmt(r.bleu)}, {"final_loss", fmt(r.final_loss)}};
    out += j.dump() + "\n";
  }
  atomic_write(fs::path(c.out_dir) / "ablate" / "table.jsonl", out);
  return rows;
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "variant            n_e  strategy     accuracy  BLEU@4  final_loss\n";
  for (const AblationRow& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-18s %3zu  %-11s  %8.4f  %6.4f  %10.4f\n", r.variant.c_str(), r.n_e,
                  r.strategy.c_str(), r.accuracy, r.bleu, r.final_loss);
    os << line;
  }
  return os.str();
}

std::string describe_context(const LMContext& ctx) {
  std::ostringstream os;
  std::size_t soft = 0;
  for (const Segment& seg : ctx.segments) {
    if (const auto* s = std::get_if<SoftSegment>(&seg)) {
      ++soft;
      os << "soft  " << to_string(s->kind) << " rows=" << s->rows.rows();
      if (s->demo) {
        os << " demo=" << *s->demo;
      } else if (s->kind != SegmentKind::Eoc) {
        os << " query";
      }
      os << "\n";
    } else {
      const auto& t = std::get<TokenSegment>(seg);
      os << "token " << to_string(t.kind) << " tokens=" << t.tokens.size() << "\n";
    }
  }
  os << "soft segments: " << soft << ", soft rows: " << ctx.soft_rows() << "\n";
  return os.str();
}

std::string run_inspect(const RunConfig& c) {
  const std::vector<Sample> pool = load_split(c, "train");
  const std::vector<Sample> test = load_split(c, c.eval_split);
  if (c.inspect_index >= test.size()) {
    throw UsageError("inspect.index " + std::to_string(c.inspect_index) + " out of range (" +
                     std::to_string(test.size()) + " samples)");
  }
  Session s(c);
  if (fs::exists(c.lm_path)) load_lm(s, c.lm_path);
  const Sample& q = test[c.inspect_index];
  const Episode ep = make_episode(pool, q, c.n_e, c.strategy, task_kind(c.task),
                                  derive_seed(c.eval_seed, static_cast<std::uint64_t>(c.inspect_index)));
  Tape tape(false);
  const LMContext ctx = s.builder.build(tape, ep, c.variant, false);
  std::ostringstream os;
  os << "sample " << q.id << " variant " << to_string(c.variant) << " n_e=" << c.n_e << "\n";
  os << "instruction: " << ep.instruction << "\n";
  os << describe_context(ctx);
  return os.str();
}

}  // namespace mmict
