#include "mmict/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "mmict/errors.hpp"
#include "mmict/io.hpp"

namespace mmict {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw UsageError("config: '" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') {
    throw UsageError("config: '" + std::string(key) + "' expects a number, got '" + s + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config: '" + std::string(key) + "' expects true/false, got '" + std::string(v) + "'");
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is{std::string(v)};
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      out += xs[i];
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MMICT_SIZE(name, member)                                                                       \
  Field{name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_u64(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define MMICT_DOUBLE(name, member)                                                                        \
  Field{name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_double(k, v); }, \
        [](const RunConfig& c) { return fmt_double(c.member); }}
#define MMICT_BOOL(name, member)                                                                        \
  Field{name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_bool(k, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define MMICT_STRING(name, member)                                                                     \
  Field{name, [](RunConfig& c, std::string_view, std::string_view v) { c.member = std::string(v); }, \
        [](const RunConfig& c) { return c.member; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"task", [](RunConfig& c, std::string_view, std::string_view v) { c.task = parse_task(v); },
            [](const RunConfig& c) { return std::string(to_string(c.task)); }},
      Field{"variant", [](RunConfig& c, std::string_view, std::string_view v) { c.variant = parse_variant(v); },
            [](const RunConfig& c) { return std::string(to_string(c.variant)); }},
      MMICT_SIZE("n_f", n_f),
      MMICT_SIZE("n_e", n_e),
      MMICT_SIZE("n_q", mhub.queries),
      Field{"strategy", [](RunConfig& c, std::string_view, std::string_view v) { c.strategy = parse_strategy(v); },
            [](const RunConfig& c) { return std::string(to_string(c.strategy)); }},
      Field{"demo_resample",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              if (v == "per_epoch") {
                c.demo_resample = true;
              } else if (v == "fixed") {
                c.demo_resample = false;
              } else {
                try {
                  c.demo_resample = to_bool(k, v);
                } catch (const UsageError&) {
                  throw UsageError("config: 'demo_resample' expects per_epoch or fixed, got '" + std::string(v) + "'");
                }
              }
            },
            [](const RunConfig& c) { return std::string(c.demo_resample ? "per_epoch" : "fixed"); }},
      MMICT_BOOL("with_demos", with_demos),
      MMICT_STRING("eval.split", eval_split),
      MMICT_SIZE("inspect.index", inspect_index),

      MMICT_SIZE("data.n_train", n_train),
      MMICT_SIZE("data.n_val", n_val),
      MMICT_SIZE("data.n_test", n_test),
      MMICT_SIZE("data.grid", grid),

      MMICT_SIZE("seed.data", data_seed),
      MMICT_SIZE("seed.lm", lm_seed),
      MMICT_SIZE("seed.model", model_seed),
      MMICT_SIZE("seed.train", train_seed),
      MMICT_SIZE("seed.eval", eval_seed),

      MMICT_SIZE("mhub.blocks", mhub.blocks),
      MMICT_SIZE("mhub.hidden", mhub.hidden),
      MMICT_SIZE("mhub.heads", mhub.heads),
      MMICT_SIZE("mhub.ffn_mult", mhub.ffn_mult),
      MMICT_SIZE("mhub.max_text", mhub.max_text),
      MMICT_SIZE("encoder.d_enc", d_enc),

      MMICT_SIZE("lm.d_model", lm.d_model),
      MMICT_SIZE("lm.layers", lm.layers),
      MMICT_SIZE("lm.heads", lm.heads),
      MMICT_SIZE("lm.max_context", lm.max_context),
      MMICT_SIZE("lm.ffn_mult", lm.ffn_mult),
      MMICT_SIZE("pretrain.steps", pretrain.steps),
      MMICT_SIZE("pretrain.batch", pretrain.batch),
      MMICT_DOUBLE("pretrain.lr", pretrain.lr),
      MMICT_SIZE("pretrain.warmup", pretrain.warmup),
      MMICT_DOUBLE("pretrain.weight_decay", pretrain.weight_decay),
      MMICT_SIZE("pretrain.max_offset", pretrain.max_offset),
      MMICT_SIZE("pretrain.held_out", pretrain.held_out),

      MMICT_SIZE("train.epochs", train.epochs),
      MMICT_SIZE("train.batch", train.batch_episodes),
      MMICT_DOUBLE("train.base_lr", train.base_lr),
      MMICT_DOUBLE("train.warmup_start_lr", train.warmup_start_lr),
      MMICT_SIZE("train.warmup_steps", train.warmup_steps),
      MMICT_DOUBLE("train.min_lr", train.min_lr),
      MMICT_DOUBLE("train.weight_decay", train.weight_decay),
      MMICT_DOUBLE("train.beta1", train.beta1),
      MMICT_DOUBLE("train.beta2", train.beta2),
      MMICT_DOUBLE("train.eps", train.adam_eps),
      MMICT_DOUBLE("train.clip_norm", train.clip_norm),
      MMICT_BOOL("train.vary_n_e", train.vary_n_e),

      Field{"gen.mode", [](RunConfig& c, std::string_view, std::string_view v) { c.gen.mode = parse_decode_mode(v); },
            [](const RunConfig& c) { return std::string(to_string(c.gen.mode)); }},
      MMICT_SIZE("gen.beam_width", gen.beam_width),
      MMICT_SIZE("gen.max_new_tokens", gen.max_new_tokens),
      Field{"gen.length_penalty",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              if (v == "none") {
                c.gen.length_penalty.reset();
              } else {
                c.gen.length_penalty = to_double(k, v);
              }
            },
            [](const RunConfig& c) {
              return c.gen.length_penalty ? fmt_double(*c.gen.length_penalty) : std::string("none");
            }},

      MMICT_STRING("path.data_dir", data_dir),
      MMICT_STRING("path.lm", lm_path),
      MMICT_STRING("path.out_dir", out_dir),

      Field{"sweep.variants",
            [](RunConfig& c, std::string_view, std::string_view v) {
              c.sweep_variants = split_list(v);
              for (const auto& s : c.sweep_variants) parse_variant(s);
            },
            [](const RunConfig& c) { return join(c.sweep_variants); }},
      Field{"sweep.n_e",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.sweep_n_e.clear();
              for (const auto& s : split_list(v)) c.sweep_n_e.push_back(to_u64(k, s));
            },
            [](const RunConfig& c) { return join(c.sweep_n_e); }},
      Field{"sweep.strategy",
            [](RunConfig& c, std::string_view, std::string_view v) {
              c.sweep_strategies = split_list(v);
              for (const auto& s : c.sweep_strategies) parse_strategy(s);
            },
            [](const RunConfig& c) { return join(c.sweep_strategies); }},
  };
  return table;
}

#undef MMICT_SIZE
#undef MMICT_DOUBLE
#undef MMICT_BOOL
#undef MMICT_STRING

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string k = trim(key);
  const std::string v = trim(value);
  for (const Field& f : fields()) {
    if (f.key == k) {
      f.set(*this, k, v);
      return;
    }
  }
  throw UsageError("config: unknown key '" + k + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

void RunConfig::validate() const {
  if (n_f < 1) throw UsageError("config: n_f must be >= 1");
  if (eval_split != "val" && eval_split != "test") throw UsageError("config: eval.split must be val or test");
  if (train.batch_episodes < 1) throw UsageError("config: train.batch must be >= 1");
  gen.validate();
  mhub_config(lm.vocab == 0 ? 1 : lm.vocab).validate();
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.n_e = n_e;
  t.strategy = strategy;
  t.resample_per_epoch = demo_resample;
  t.task = task_kind(task);
  t.seed = train_seed;
  return t;
}

MHubConfig RunConfig::mhub_config(std::size_t vocab) const {
  MHubConfig m = mhub;
  m.vocab = vocab;
  m.d_enc = d_enc;
  m.d_lm = lm.d_model;
  m.seed = model_seed;
  return m;
}

LmConfig RunConfig::lm_config(std::size_t vocab) const {
  LmConfig l = lm;
  l.vocab = vocab;
  l.seed = lm_seed;
  return l;
}

EvalSettings RunConfig::eval_settings() const {
  EvalSettings e;
  e.variant = variant;
  e.with_demos = with_demos;
  e.n_e = n_e;
  e.strategy = strategy;
  e.task = task_kind(task);
  e.seed = eval_seed;
  e.gen = gen;
  return e;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  return SyntheticSpec{task, n_train, n_val, n_test, n_f, grid, data_seed};
}

void apply_config_text(RunConfig& c, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(no) + ": expected 'key = value', got '" + trim(line) + "'");
    }
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file '" + path.string() + "' does not exist");
  RunConfig c;
  apply_config_text(c, read_file(path));
  return c;
}

void apply_override(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw UsageError("--set expects key=value, got '" + std::string(assignment) + "'");
  }
  c.set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

}  // namespace mmict
