#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "mmict/errors.hpp"
#include "mmict/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mmict;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  for (const std::string& o : c.overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "run configuration file (key = value lines)")->check(CLI::ExistingFile);
  sub->add_option("--set", c.overrides, "override a configuration key: --set key=value")->take_all();
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-modal in-context tuning on synthetic tasks"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "generate train/val/test splits for config task");
  auto* pre = app.add_subcommand("pretrain-lm", "pre-train and freeze the toy language model");
  auto* tr = app.add_subcommand("train", "train the hub, projection and end-of-chunk vector");
  auto* ev = app.add_subcommand("eval", "generate for the eval split and score it");
  auto* ab = app.add_subcommand("ablate", "train+eval every (variant, n_e, strategy) cell of the sweep");
  auto* in = app.add_subcommand("inspect", "print the context segment layout for one sample");
  auto* keys = app.add_subcommand("keys", "list configuration keys with their defaults");
  std::string checkpoint;
  ev->add_option("--checkpoint", checkpoint, "model checkpoint (default <out_dir>/model.ckpt)");
  for (CLI::App* sub : {gen, pre, tr, ev, ab, in, keys}) add_common(sub, common);

  CLI11_PARSE(app, argc, argv);
  const RunConfig cfg = resolve(common);

  if (*keys) {
    std::cout << cfg.to_text();
  } else if (*gen) {
    run_gen_data(cfg, std::cout);
  } else if (*pre) {
    run_pretrain(cfg, std::cout);
  } else if (*tr) {
    const std::vector<Sample> train = load_split(cfg, "train");
    Session s(cfg);
    load_lm(s, cfg.lm_path);
    const TrainLog log = run_train(s, train, cfg.out_dir, &std::cout);
    std::cout << "train: " << log.steps.size() << " steps, checkpoint " << (fs::path(cfg.out_dir) / "model.ckpt").string()
              << "\n";
  } else if (*ev) {
    const std::vector<Sample> pool = load_split(cfg, "train");
    const std::vector<Sample> test = load_split(cfg, cfg.eval_split);
    Session s(cfg);
    load_lm(s, cfg.lm_path);
    const fs::path ckpt = checkpoint.empty() ? fs::path(cfg.out_dir) / "model.ckpt" : fs::path(checkpoint);
    if (!fs::exists(ckpt)) throw UsageError("checkpoint '" + ckpt.string() + "' does not exist (run train)");
    restore(load_checkpoint(ckpt), s.model.parameters());
    const EvalReport r = run_eval(s, test, pool, cfg.out_dir);
    std::cout << report_summary(r);
  } else if (*ab) {
    const auto rows = run_ablate(cfg, std::cerr);
    std::cout << ablation_table(rows);
  } else if (*in) {
    std::cout << run_inspect(cfg);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
