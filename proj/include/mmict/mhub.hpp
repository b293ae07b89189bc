#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmict/autograd.hpp"
#include "mmict/backbones.hpp"
#include "mmict/tensor.hpp"

namespace mmict {

struct MHubConfig {
  std::size_t blocks = 4;    // H
  std::size_t queries = 32;  // n_q
  std::size_t hidden = 64;   // d_h
  std::size_t heads = 4;
  std::size_t d_enc = 32;
  std::size_t d_lm = 64;
  std::size_t vocab = 0;
  std::size_t max_text = 128;
  std::size_t ffn_mult = 4;
  std::uint64_t seed = 11;

  void validate() const;
};

// Textual-guided visual features (query partition) and visual-guided
// textual features (text partition) after the last block.
struct FusionOutput {
  Var v_d;
  Var t_c;
};

// Observes the rows routed inside block_forward; used to verify the
// query/text partition.
struct PartitionTrace {
  std::size_t joint_rows = 0;
  std::size_t cross_attention_rows = 0;
  std::size_t text_ffn_rows = 0;
  std::size_t visual_ffn_rows = 0;
};

// The fusion hub: learned query tokens, H blocks of shared self-attention
// over [queries, text], cross-attention from queries to visual features
// and modality-specific feed-forward layers, plus one shared projection
// into the language model's embedding space.
class MHub {
 public:
  struct Attention {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FeedForward {
    Parameter ln_g, ln_b, w1, b1, w2, b2;
  };
  struct Block {
    Parameter ln_sa_g, ln_sa_b;
    Attention self_attn;
    Parameter ln_ca_g, ln_ca_b;
    Attention cross_attn;  // wk/wv map d_enc -> d_h
    FeedForward ffn_v;
    FeedForward ffn_t;
  };

  explicit MHub(const MHubConfig& config);
  MHub(const MHub&) = delete;
  MHub& operator=(const MHub&) = delete;

  const MHubConfig& config() const { return config_; }

  // One block of joint self-attention / partition / cross-attention / FFN.
  std::pair<Var, Var> block_forward(std::size_t block, const Var& v_prev, const Var& t_prev, const Var& z_v,
                                    PartitionTrace* trace = nullptr);

  // Mode (c)/(d): queries and text fused through all blocks.
  FusionOutput fuse(Tape& tape, const Tensor& z_v, std::span<const int> text);
  // Mode (a): uni-modal visual features V^a (fuse with empty text).
  Var encode_visual(Tape& tape, const Tensor& z_v);
  // Mode (b): uni-modal textual features T^b (text rows only, no queries,
  // no cross-attention).
  Var encode_text(Tape& tape, std::span<const int> text);
  // Mode (e): text rows take the query role and attend the visual features.
  Var visual_attended_text(Tape& tape, const Tensor& z_v, std::span<const int> text);
  // Shared affine map into LM space.
  Var project(const Var& features);
  // Frame-level alternative to video-level extraction: encode_visual per
  // frame, concatenated ([n_f * n_q] rows).
  Var extract_frame_level(Tape& tape, const ImageEncoderStub& encoder, std::span<const Frame> frames);

  Var embed_text(Tape& tape, std::span<const int> text);
  Var queries(Tape& tape) { return tape.param(queries_); }

  std::vector<Parameter*> parameters();
  Block& block(std::size_t i) { return blocks_.at(i); }
  Parameter& out_weight() { return out_w_; }
  Parameter& out_bias() { return out_b_; }

 private:
  Var self_attention(Tape& tape, Block& b, const Var& x);
  Var cross_attention(Tape& tape, Block& b, const Var& x, const Var& z_v);
  Var feed_forward(Tape& tape, FeedForward& f, const Var& x);

  MHubConfig config_;
  Parameter queries_;
  Parameter text_emb_;
  Parameter text_pos_;
  std::vector<Block> blocks_;
  Parameter out_w_;
  Parameter out_b_;
};

}  // namespace mmict
