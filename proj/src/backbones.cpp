#include "mmict/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mmict/errors.hpp"
#include "mmict/lexicon.hpp"
#include "mmict/random.hpp"

namespace mmict {

namespace lexicon {

std::vector<std::string> vocabulary() {
  std::vector<std::string> words;
  auto add_text = [&words](std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string w;
    while (is >> w) {
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
  };
  for (auto t : kImageTemplates) add_text(t);
  for (auto t : kVideoTemplates) add_text(t);
  add_text("a and");
  for (auto w : kObjects) add_text(w);
  for (auto p : kMapPhrasings) add_text(p);
  for (auto w : kColors) add_text(w);
  add_text(kQuestionPrefix);
  add_text(kAnswerMarker);
  add_text("what is in the");
  for (auto w : kRowWords) add_text(w);
  for (auto w : kColWords) add_text(w);
  return words;
}

}  // namespace lexicon

Tokenizer::Tokenizer(const std::vector<std::string>& words) {
  words_ = {"<pad>", "<bos>", "<eos>", "<eoc>"};
  for (const std::string& w : words) {
    if (w.empty() || w.find_first_of(" \t\n") != std::string::npos) {
      throw ContractError("tokenizer: invalid vocabulary word '" + w + "'");
    }
    if (std::find(words_.begin(), words_.end(), w) != words_.end()) {
      throw ContractError("tokenizer: duplicate vocabulary word '" + w + "'");
    }
    words_.push_back(w);
  }
  for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], static_cast<int>(i));
}

Tokenizer Tokenizer::synthetic() { return Tokenizer(lexicon::vocabulary()); }

std::vector<int> Tokenizer::tokenize(std::string_view text) const {
  std::vector<int> out;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) out.push_back(id(w));
  return out;
}

int Tokenizer::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it == ids_.end() || is_special(it->second)) throw LexicalError(std::string(word));
  return it->second;
}

std::string Tokenizer::detokenize(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (is_special(id)) continue;
    if (!out.empty()) out += ' ';
    out += word(id);
  }
  return out;
}

ImageEncoderStub::ImageEncoderStub(std::size_t num_symbols, std::size_t grid, std::size_t d_enc, std::uint64_t seed)
    : num_symbols_(num_symbols), grid_(grid), d_enc_(d_enc) {
  Rng rng(derive_seed(seed, "image-encoder"));
  symbols_ = Parameter{"encoder.symbols", random_normal({num_symbols, d_enc}, 1.0, rng), false, std::nullopt};
  positions_ = Parameter{"encoder.positions", random_normal({grid * grid, d_enc}, 0.5, rng), false, std::nullopt};
}

Tensor ImageEncoderStub::encode_frame(const Frame& frame) const {
  if (frame.grid != grid_ || frame.cells.size() != grid_ * grid_) {
    throw ShapeError("encode_frame: expected a " + std::to_string(grid_) + "x" + std::to_string(grid_) + " frame");
  }
  Tensor out({grid_ * grid_, d_enc_});
  for (std::size_t i = 0; i < frame.cells.size(); ++i) {
    const int s = frame.cells[i];
    if (s < 0 || static_cast<std::size_t>(s) >= num_symbols_) {
      throw ContractError("encode_frame: symbol " + std::to_string(s) + " outside alphabet of " +
                          std::to_string(num_symbols_));
    }
    for (std::size_t c = 0; c < d_enc_; ++c) {
      out.at(i, c) = symbols_.value.at(static_cast<std::size_t>(s), c) + positions_.value.at(i, c);
    }
  }
  return out;
}

Tensor ImageEncoderStub::encode_video(std::span<const Frame> frames) const {
  if (frames.empty()) throw ContractError("encode_video: a video needs at least one frame");
  std::vector<Tensor> parts;
  parts.reserve(frames.size());
  for (const Frame& f : frames) parts.push_back(encode_frame(f));
  return concat_rows(parts);
}

ToyCausalLM::ToyCausalLM(const LmConfig& config) : config_(config) {
  if (config_.vocab == 0) throw ContractError("lm: vocabulary size must be positive");
  if (config_.d_model % config_.heads != 0) throw ContractError("lm: d_model must be divisible by heads");
  Rng rng(derive_seed(config_.seed, "toy-lm"));
  const std::size_t d = config_.d_model;
  const std::size_t f = d * config_.ffn_mult;
  const double w_std = 0.02;
  const double out_std = 0.02 / std::sqrt(2.0 * static_cast<double>(config_.layers));
  auto make = [](std::string name, Tensor t) { return Parameter{std::move(name), std::move(t), false, std::nullopt}; };
  tok_emb_ = make("lm.tok_emb", random_normal({config_.vocab, d}, w_std, rng));
  pos_emb_ = make("lm.pos_emb", random_normal({config_.max_context, d}, w_std, rng));
  blocks_.resize(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "lm.block" + std::to_string(l) + ".";
    Block& b = blocks_[l];
    b.ln1_g = make(p + "ln1.gamma", Tensor({d}, 1.0));
    b.ln1_b = make(p + "ln1.beta", Tensor({d}));
    b.wq = make(p + "attn.wq", random_normal({d, d}, w_std, rng));
    b.bq = make(p + "attn.bq", Tensor({d}));
    b.wk = make(p + "attn.wk", random_normal({d, d}, w_std, rng));
    b.bk = make(p + "attn.bk", Tensor({d}));
    b.wv = make(p + "attn.wv", random_normal({d, d}, w_std, rng));
    b.bv = make(p + "attn.bv", Tensor({d}));
    b.wo = make(p + "attn.wo", random_normal({d, d}, out_std, rng));
    b.bo = make(p + "attn.bo", Tensor({d}));
    b.ln2_g = make(p + "ln2.gamma", Tensor({d}, 1.0));
    b.ln2_b = make(p + "ln2.beta", Tensor({d}));
    b.w1 = make(p + "ffn.w1", random_normal({d, f}, w_std, rng));
    b.b1 = make(p + "ffn.b1", Tensor({f}));
    b.w2 = make(p + "ffn.w2", random_normal({f, d}, out_std, rng));
    b.b2 = make(p + "ffn.b2", Tensor({d}));
  }
  lnf_g_ = make("lm.lnf.gamma", Tensor({d}, 1.0));
  lnf_b_ = make("lm.lnf.beta", Tensor({d}));
  head_w_ = make("lm.head.w", random_normal({d, config_.vocab}, w_std, rng));
  head_b_ = make("lm.head.b", Tensor({config_.vocab}));
}

std::vector<Parameter*> ToyCausalLM::parameters() {
  std::vector<Parameter*> out = {&tok_emb_, &pos_emb_};
  for (Block& b : blocks_) {
    for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo, &b.ln2_g,
                         &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2}) {
      out.push_back(p);
    }
  }
  for (Parameter* p : {&lnf_g_, &lnf_b_, &head_w_, &head_b_}) out.push_back(p);
  return out;
}

void ToyCausalLM::set_trainable(bool trainable) {
  for (Parameter* p : parameters()) {
    p->trainable = trainable;
    if (!trainable) p->grad.reset();
  }
}

void ToyCausalLM::check_length(std::size_t length) const {
  if (length > config_.max_context) throw ContextLengthError(length, config_.max_context);
}

Var ToyCausalLM::embed_tokens(Tape& tape, std::span<const int> tokens) {
  return embedding(tape.param(tok_emb_), tokens);
}

Tensor ToyCausalLM::embed_tokens(std::span<const int> tokens) const {
  const std::size_t d = config_.d_model;
  Tensor out({tokens.size(), d});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= config_.vocab) {
      throw ContractError("lm: token id " + std::to_string(tokens[i]) + " out of range");
    }
    std::copy_n(tok_emb_.value.data() + static_cast<std::size_t>(tokens[i]) * d, d, out.data() + i * d);
  }
  return out;
}

Var ToyCausalLM::forward(Tape& tape, const std::optional<Var>& prefix, std::span<const int> tokens,
                         std::size_t position_offset) {
  const std::size_t d = config_.d_model;
  const std::size_t prefix_rows = prefix ? prefix->rows() : 0;
  if (prefix && prefix->cols() != d) {
    throw ShapeError("lm: prefix width " + std::to_string(prefix->cols()) + " does not match d_model " +
                     std::to_string(d));
  }
  const std::size_t total = prefix_rows + tokens.size();
  check_length(position_offset + total);
  if (total == 0) throw ContractError("lm: empty input");

  std::vector<Var> parts;
  if (prefix && prefix_rows > 0) parts.push_back(*prefix);
  if (!tokens.empty()) parts.push_back(embedding(tape.param(tok_emb_), tokens));
  Var x = parts.size() == 1 ? parts.front() : concat_rows(parts);
  std::vector<int> positions(total);
  for (std::size_t i = 0; i < total; ++i) positions[i] = static_cast<int>(position_offset + i);
  x = add(x, embedding(tape.param(pos_emb_), positions));

  for (Block& b : blocks_) {
    Var h = layer_norm(x, tape.param(b.ln1_g), tape.param(b.ln1_b));
    Var q = linear(h, tape.param(b.wq), tape.param(b.bq));
    Var k = linear(h, tape.param(b.wk), tape.param(b.bk));
    Var v = linear(h, tape.param(b.wv), tape.param(b.bv));
    Var a = attention(q, k, v, config_.heads, true);
    x = add(x, linear(a, tape.param(b.wo), tape.param(b.bo)));
    h = layer_norm(x, tape.param(b.ln2_g), tape.param(b.ln2_b));
    h = gelu(linear(h, tape.param(b.w1), tape.param(b.b1)));
    x = add(x, linear(h, tape.param(b.w2), tape.param(b.b2)));
  }
  x = layer_norm(x, tape.param(lnf_g_), tape.param(lnf_b_));
  return linear(x, tape.param(head_w_), tape.param(head_b_));
}

Tensor ToyCausalLM::run_rows(LmState& state, Tensor x) const {
  const std::size_t rows = x.rows();
  const std::size_t d = config_.d_model;
  check_length(state.length + rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < d; ++c) x.at(i, c) += pos_emb_.value.at(state.length + i, c);
  }
  if (state.keys.empty()) {
    state.keys.assign(blocks_.size(), Tensor({0, d}));
    state.values.assign(blocks_.size(), Tensor({0, d}));
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    Tensor h = layer_norm(x, b.ln1_g.value, b.ln1_b.value);
    Tensor q = add_row(matmul(h, b.wq.value), b.bq.value);
    Tensor k = add_row(matmul(h, b.wk.value), b.bk.value);
    Tensor v = add_row(matmul(h, b.wv.value), b.bv.value);
    const Tensor kparts[] = {state.keys[l], k};
    const Tensor vparts[] = {state.values[l], v};
    state.keys[l] = concat_rows(kparts);
    state.values[l] = concat_rows(vparts);
    Tensor a = attention_forward(q, state.keys[l], state.values[l], config_.heads, true);
    x = add(x, add_row(matmul(a, b.wo.value), b.bo.value));
    h = layer_norm(x, b.ln2_g.value, b.ln2_b.value);
    h = gelu(add_row(matmul(h, b.w1.value), b.b1.value));
    x = add(x, add_row(matmul(h, b.w2.value), b.b2.value));
  }
  state.length += rows;
  x = layer_norm(x, lnf_g_.value, lnf_b_.value);
  return add_row(matmul(x, head_w_.value), head_b_.value);
}

namespace {

Tensor last_row(const Tensor& x) {
  const std::size_t n = x.cols();
  return Tensor({n}, std::vector<double>(x.data() + (x.rows() - 1) * n, x.data() + x.rows() * n));
}

}  // namespace

Tensor ToyCausalLM::logits(const Tensor& prefix, std::span<const int> tokens) const {
  LmState state;
  return run_rows(state, [&] {
    if (prefix.size() > 0 && prefix.cols() != config_.d_model) {
      throw ShapeError("lm: prefix width " + std::to_string(prefix.cols()) + " does not match d_model");
    }
    std::vector<Tensor> parts;
    if (prefix.size() > 0) parts.push_back(prefix);
    if (!tokens.empty()) parts.push_back(embed_tokens(tokens));
    if (parts.empty()) throw ContractError("lm: empty input");
    return concat_rows(parts);
  }());
}

Tensor ToyCausalLM::begin(LmState& state, const Tensor& prefix, std::span<const int> tokens) const {
  state = LmState{};
  if (prefix.size() > 0 && prefix.cols() != config_.d_model) {
    throw ShapeError("lm: prefix width " + std::to_string(prefix.cols()) + " does not match d_model");
  }
  std::vector<Tensor> parts;
  if (prefix.size() > 0) parts.push_back(prefix);
  if (!tokens.empty()) parts.push_back(embed_tokens(tokens));
  if (parts.empty()) throw ContractError("lm: empty input");
  return last_row(run_rows(state, concat_rows(parts)));
}

Tensor ToyCausalLM::step(LmState& state, int token) const {
  const int ids[] = {token};
  return last_row(run_rows(state, embed_tokens(ids)));
}

}  // namespace mmict
