#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmict/autograd.hpp"
#include "mmict/tensor.hpp"

namespace mmict {

// One synthetic "image": a grid x grid array of symbol ids, row-major.
struct Frame {
  std::size_t grid = 4;
  std::vector<int> cells;

  friend bool operator==(const Frame&, const Frame&) = default;
};

class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kEoc = 3;

  // Special tokens occupy ids 0..3; words follow in the given order.
  explicit Tokenizer(const std::vector<std::string>& words);
  // Vocabulary of the synthetic tasks.
  static Tokenizer synthetic();

  std::vector<int> tokenize(std::string_view text) const;
  // Joins word tokens with single spaces; stops at EOS and skips other specials.
  std::string detokenize(std::span<const int> ids) const;
  int id(std::string_view word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  static bool is_special(int id) { return id >= 0 && id <= kEoc; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

// Frozen stand-in for a pre-trained image encoder: every cell becomes the
// embedding of its symbol plus a fixed offset for its grid position.
class ImageEncoderStub {
 public:
  ImageEncoderStub(std::size_t num_symbols, std::size_t grid, std::size_t d_enc, std::uint64_t seed);

  Tensor encode_frame(const Frame& frame) const;
  // Per-frame encodings stacked in frame order: [(n_f * grid^2) x d_enc].
  Tensor encode_video(std::span<const Frame> frames) const;

  std::size_t num_symbols() const { return num_symbols_; }
  std::size_t grid() const { return grid_; }
  std::size_t width() const { return d_enc_; }
  std::size_t patches() const { return grid_ * grid_; }
  std::vector<Parameter*> parameters() { return {&symbols_, &positions_}; }

 private:
  std::size_t num_symbols_;
  std::size_t grid_;
  std::size_t d_enc_;
  Parameter symbols_;
  Parameter positions_;
};

struct LmConfig {
  std::size_t vocab = 0;
  std::size_t d_model = 64;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t max_context = 512;
  std::size_t ffn_mult = 4;
  std::uint64_t seed = 7;
};

// Key/value cache for incremental decoding.
struct LmState {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::size_t length = 0;
};

// Small decoder-only transformer that accepts soft-embedding rows as a
// prefix. Pre-layer-norm blocks, learned absolute positions.
class ToyCausalLM {
 public:
  explicit ToyCausalLM(const LmConfig& config);

  const LmConfig& config() const { return config_; }

  // Logits for every position of [prefix rows, token embeddings].
  // Prefix rows bypass the token table but still receive positions.
  Var forward(Tape& tape, const std::optional<Var>& prefix, std::span<const int> tokens,
              std::size_t position_offset = 0);
  // Token-table rows without positions (used to place raw text inside a
  // soft prefix).
  Var embed_tokens(Tape& tape, std::span<const int> tokens);
  Tensor embed_tokens(std::span<const int> tokens) const;

  // Tape-free inference. `begin` consumes the whole context and returns the
  // logits of its last position; `step` appends one token.
  Tensor begin(LmState& state, const Tensor& prefix, std::span<const int> tokens) const;
  Tensor step(LmState& state, int token) const;
  // Logits for every position, tape-free.
  Tensor logits(const Tensor& prefix, std::span<const int> tokens) const;

  std::vector<Parameter*> parameters();
  void set_trainable(bool trainable);

 private:
  struct Block {
    Parameter ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln2_g, ln2_b, w1, b1, w2, b2;
  };

  void check_length(std::size_t length) const;
  Tensor run_rows(LmState& state, Tensor x) const;

  LmConfig config_;
  Parameter tok_emb_;
  Parameter pos_emb_;
  std::vector<Block> blocks_;
  Parameter lnf_g_, lnf_b_, head_w_, head_b_;
};

}  // namespace mmict
