#include "mmict/eval_gen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "mmict/errors.hpp"
#include "mmict/random.hpp"

namespace mmict {

std::string_view to_string(DecodeMode m) { return m == DecodeMode::Greedy ? "greedy" : "beam"; }

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "greedy") return DecodeMode::Greedy;
  if (name == "beam") return DecodeMode::Beam;
  throw UsageError("unknown decode mode '" + std::string(name) + "'");
}

void GenConfig::validate() const {
  if (beam_width < 1) throw ContractError("gen: beam_width must be >= 1");
  if (max_new_tokens < 1) throw ContractError("gen: max_new_tokens must be >= 1");
}

double hypothesis_score(const Hypothesis& h, const GenConfig& gen) {
  const double len = static_cast<double>(std::max<std::size_t>(1, h.tokens.size()));
  if (gen.length_penalty) return h.log_prob / std::pow((5.0 + len) / 6.0, *gen.length_penalty);
  return h.log_prob / len;
}

bool ranks_before(const Hypothesis& a, const Hypothesis& b, const GenConfig& gen) {
  const double sa = hypothesis_score(a, gen);
  const double sb = hypothesis_score(b, gen);
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;  // lexicographic: smaller ids first, a prefix sorts first
}

namespace {

void check_log_probs(const std::vector<double>& lp, std::size_t vocab) {
  if (lp.size() != vocab || vocab == 0) {
    throw ContractError("decode: model returned " + std::to_string(lp.size()) + " log-probabilities for vocab " +
                        std::to_string(vocab));
  }
}

}  // namespace

Hypothesis greedy_decode(NextTokenModel& model, std::size_t max_new_tokens, int eos) {
  if (max_new_tokens < 1) throw ContractError("gen: max_new_tokens must be >= 1");
  Hypothesis h;
  while (h.tokens.size() < max_new_tokens) {
    const std::vector<double> lp = model.log_probs(h.tokens);
    check_log_probs(lp, model.vocab());
    const auto best = std::max_element(lp.begin(), lp.end());  // first maximum: smallest id
    const int tok = static_cast<int>(best - lp.begin());
    h.tokens.push_back(tok);
    h.log_prob += *best;
    if (tok == eos) break;
  }
  return h;
}

Hypothesis beam_decode(NextTokenModel& model, const GenConfig& gen, int eos) {
  gen.validate();
  const auto before = [&gen](const Hypothesis& a, const Hypothesis& b) { return ranks_before(a, b, gen); };
  std::vector<Hypothesis> alive(1);
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < gen.max_new_tokens && !alive.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& h : alive) {
      const std::vector<double> lp = model.log_probs(h.tokens);
      check_log_probs(lp, model.vocab());
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (lp[v] == -std::numeric_limits<double>::infinity()) continue;
        Hypothesis c{h.tokens, h.log_prob + lp[v]};
        c.tokens.push_back(static_cast<int>(v));
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(gen.beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      before);
    alive.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis& c = candidates[i];
      if (c.tokens.back() == eos || c.tokens.size() == gen.max_new_tokens) {
        finished.push_back(std::move(c));
      } else {
        alive.push_back(std::move(c));
      }
    }
  }
  if (finished.empty()) throw NumericError("beam search: every continuation has zero probability");
  return *std::min_element(finished.begin(), finished.end(), before);
}

Hypothesis decode(NextTokenModel& model, const GenConfig& gen, int eos) {
  gen.validate();
  if (gen.mode == DecodeMode::Greedy) return greedy_decode(model, gen.max_new_tokens, eos);
  return beam_decode(model, gen, eos);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - m);
  const double lz = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

LmDecoder::LmDecoder(const ToyCausalLM& lm, const Tensor& prefix, std::span<const int> tokens) : lm_(lm) {
  Entry root;
  const Tensor logits = lm_.begin(root.state, prefix, tokens);
  root.log_probs = log_softmax(logits.values());
  cache_.emplace(std::vector<int>{}, std::move(root));
}

std::vector<double> LmDecoder::log_probs(std::span<const int> generated) {
  std::vector<int> key(generated.begin(), generated.end());
  if (auto it = cache_.find(key); it != cache_.end()) return it->second.log_probs;
  const std::vector<int> parent_key(key.begin(), key.end() - 1);
  auto parent = cache_.find(parent_key);
  if (parent == cache_.end()) {
    log_probs(std::span<const int>(parent_key));
    parent = cache_.find(parent_key);
  }
  Entry e{parent->second.state, {}};
  e.log_probs = log_softmax(lm_.step(e.state, key.back()).values());
  return cache_.emplace(std::move(key), std::move(e)).first->second.log_probs;
}

LMContext inference_context(Tape& tape, const ContextBuilder& builder, const Episode& episode, DemoVariant variant,
                            bool with_demos) {
  if (!with_demos) {
    Episode bare{{}, episode.query, episode.instruction};
    return builder.build(tape, bare, DemoFormat::None, query_format(variant), false);
  }
  const DemoFormat format = variant == DemoVariant::VanillaFT ? DemoFormat::FusedText : demo_format(variant);
  return builder.build(tape, episode, format, query_format(variant), false);
}

std::string generate(const ContextBuilder& builder, const Episode& episode, DemoVariant variant, bool with_demos,
                     const GenConfig& gen) {
  Tape tape(false);
  const LMContext ctx = inference_context(tape, builder, episode, variant, with_demos);
  const LmInputs in = context_to_lm_inputs(ctx, builder.lm().config().max_context);
  const Tensor prefix = in.prefix ? in.prefix->value() : Tensor({0, builder.lm().config().d_model});
  LmDecoder decoder(builder.lm(), prefix, in.tokens);
  const Hypothesis h = decode(decoder, gen, Tokenizer::kEos);
  return builder.tokenizer().detokenize(h.tokens);
}

std::string normalize_answer(std::string_view s) {
  std::string out;
  bool space = false;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  while (!out.empty() && std::string_view(".,!?;:").find(out.back()) != std::string_view::npos) out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

int exact_match(std::string_view prediction, std::string_view label) {
  return normalize_answer(prediction) == normalize_answer(label) ? 1 : 0;
}

namespace {

std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& w, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) {
    ++out[std::vector<std::string>(w.begin() + static_cast<std::ptrdiff_t>(i),
                                   w.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

double bleu4(std::span<const std::string> candidates, std::span<const std::vector<std::string>> references) {
  if (candidates.empty()) throw ContractError("bleu4: empty candidate corpus");
  if (candidates.size() != references.size()) {
    throw ContractError("bleu4: " + std::to_string(candidates.size()) + " candidates but " +
                        std::to_string(references.size()) + " reference sets");
  }
  std::size_t matched[4] = {0, 0, 0, 0};
  std::size_t total[4] = {0, 0, 0, 0};
  std::size_t c_len = 0;
  std::size_t r_len = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    if (references[s].empty()) throw ContractError("bleu4: empty reference set for candidate " + std::to_string(s));
    const std::vector<std::string> cand = words_of(candidates[s]);
    std::vector<std::vector<std::string>> refs;
    for (const std::string& r : references[s]) refs.push_back(words_of(r));

    c_len += cand.size();
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    r_len += best;

    for (std::size_t n = 1; n <= 4; ++n) {
      const NgramCounts cc = ngrams(cand, n);
      NgramCounts max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, k] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
      }
      for (const auto& [g, k] : cc) {
        total[n - 1] += k;
        if (auto it = max_ref.find(g); it != max_ref.end()) matched[n - 1] += std::min(k, it->second);
      }
    }
  }
  double log_p = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matched[n] == 0) return 0.0;
    log_p += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp =
      c_len < r_len ? std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len)) : 1.0;
  return bp * std::exp(log_p / 4.0);
}

double accuracy_of(std::span<const EvalRecord> records) {
  if (records.empty()) throw ContractError("accuracy: no records");
  std::size_t hits = 0;
  for (const EvalRecord& r : records) hits += static_cast<std::size_t>(r.correct);
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double bleu_of(std::span<const EvalRecord> records) {
  std::vector<std::string> cands;
  std::vector<std::vector<std::string>> refs;
  for (const EvalRecord& r : records) {
    cands.push_back(r.prediction);
    refs.push_back({r.label});
  }
  return bleu4(cands, refs);
}

EvalReport evaluate(std::span<const Sample> test, std::span<const Sample> demo_pool, const EvalSettings& settings,
                    const ContextBuilder& builder) {
  if (test.empty()) throw ContractError("evaluate: empty test set");
  settings.gen.validate();
  EvalReport report;
  report.settings = settings;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Sample& q = test[i];
    const std::uint64_t seed = derive_seed(settings.seed, static_cast<std::uint64_t>(i));
    Episode ep;
    if (settings.with_demos) {
      ep = make_episode(demo_pool, q, settings.n_e, settings.strategy, settings.task, seed);
    } else {
      ep.query = q;
      ep.instruction = pick_instruction(settings.task, q, derive_seed(seed, "instruction"));
    }
    EvalRecord rec;
    rec.id = q.id;
    rec.instruction = ep.instruction;
    rec.prediction = generate(builder, ep, settings.variant, settings.with_demos, settings.gen);
    rec.label = q.label;
    rec.correct = exact_match(rec.prediction, rec.label);
    rec.demonstrations = ep.demonstrations.size();
    report.records.push_back(std::move(rec));
  }
  report.accuracy = accuracy_of(report.records);
  report.bleu = bleu_of(report.records);
  return report;
}

}  // namespace mmict
