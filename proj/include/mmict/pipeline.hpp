#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmict/config.hpp"
#include "mmict/eval_gen.hpp"
#include "mmict/io.hpp"
#include "mmict/pretrain.hpp"
#include "mmict/trainer.hpp"

namespace mmict {

// Frozen backbones plus the trainable model, wired to a context builder.
class Session {
 public:
  explicit Session(const RunConfig& config);
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  std::vector<Parameter*> backbone_parameters();
  std::vector<std::pair<std::string, std::string>> config_echo() const { return config_.entries(); }

  RunConfig config_;
  Tokenizer tokenizer;
  ImageEncoderStub encoder;
  ToyCausalLM lm;
  MmictModel model;
  ContextBuilder builder;
};

std::filesystem::path split_path(const RunConfig& c, Task task, std::string_view split);
std::vector<Sample> load_split(const RunConfig& c, std::string_view split);

// gen-data: writes <data_dir>/<task>.{train,val,test}.jsonl.
Splits run_gen_data(const RunConfig& c, std::ostream& log);

// pretrain-lm: corpus from every task whose train split exists in data_dir;
// held-out documents come from the val splits. Writes the LM to path.lm.
PretrainReport run_pretrain(const RunConfig& c, std::ostream& log);
// Builds the pretraining corpora for the given splits.
std::vector<LmDocument> lm_corpus(const RunConfig& c, const Tokenizer& tok,
                                  std::span<const std::pair<Task, std::vector<Sample>>> pools, std::size_t count,
                                  std::uint64_t seed);
void load_lm(Session& s, const std::filesystem::path& path);

std::string train_log_jsonl(const TrainLog& log);
std::string report_jsonl(const EvalReport& r);
std::string report_summary(const EvalReport& r);

// train: per-epoch checkpoints, final model.ckpt and train_log.jsonl under
// out_dir (nothing written when out_dir is empty).
TrainLog run_train(Session& s, std::span<const Sample> train, const std::filesystem::path& out_dir,
                   std::ostream* log = nullptr);
// eval: report.jsonl under out_dir (nothing written when out_dir is empty).
EvalReport run_eval(Session& s, std::span<const Sample> test, std::span<const Sample> demo_pool,
                    const std::filesystem::path& out_dir);

struct AblationRow {
  std::string variant;
  std::size_t n_e = 0;
  std::string strategy;
  double accuracy = 0.0;
  double bleu = 0.0;
  double final_loss = 0.0;
};
// ablate: one fresh train+eval per (variant, n_e, strategy) cell.
std::vector<AblationRow> run_ablate(const RunConfig& c, std::ostream& log);
std::string ablation_table(std::span<const AblationRow> rows);

// inspect: segment layout of the context for one sample.
std::string run_inspect(const RunConfig& c);
std::string describe_context(const LMContext& ctx);

}  // namespace mmict
