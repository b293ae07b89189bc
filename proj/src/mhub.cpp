#include "mmict/mhub.hpp"

#include <cmath>

#include "mmict/errors.hpp"
#include "mmict/random.hpp"

namespace mmict {

void MHubConfig::validate() const {
  if (blocks == 0) throw ContractError("mhub: at least one block is required");
  if (queries == 0) throw ContractError("mhub: at least one query token is required");
  if (heads == 0 || hidden % heads != 0) {
    throw ContractError("mhub: hidden width " + std::to_string(hidden) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
  if (vocab == 0) throw ContractError("mhub: vocabulary size must be positive");
}

namespace {

Parameter make_param(std::string name, Tensor value) {
  return Parameter{std::move(name), std::move(value), true, std::nullopt};
}

MHub::Attention make_attention(const std::string& prefix, std::size_t d_in_kv, std::size_t d, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  const double s_kv = 1.0 / std::sqrt(static_cast<double>(d_in_kv));
  return MHub::Attention{
      make_param(prefix + "wq", random_normal({d, d}, s, rng)),
      make_param(prefix + "bq", Tensor({d})),
      make_param(prefix + "wk", random_normal({d_in_kv, d}, s_kv, rng)),
      make_param(prefix + "bk", Tensor({d})),
      make_param(prefix + "wv", random_normal({d_in_kv, d}, s_kv, rng)),
      make_param(prefix + "bv", Tensor({d})),
      make_param(prefix + "wo", random_normal({d, d}, 0.5 * s, rng)),
      make_param(prefix + "bo", Tensor({d})),
  };
}

MHub::FeedForward make_ffn(const std::string& prefix, std::size_t d, std::size_t f, Rng& rng) {
  return MHub::FeedForward{
      make_param(prefix + "ln.gamma", Tensor({d}, 1.0)),
      make_param(prefix + "ln.beta", Tensor({d})),
      make_param(prefix + "w1", random_normal({d, f}, 1.0 / std::sqrt(static_cast<double>(d)), rng)),
      make_param(prefix + "b1", Tensor({f})),
      make_param(prefix + "w2", random_normal({f, d}, 0.5 / std::sqrt(static_cast<double>(f)), rng)),
      make_param(prefix + "b2", Tensor({d})),
  };
}

}  // namespace

MHub::MHub(const MHubConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, "mhub"));
  const std::size_t d = config_.hidden;
  queries_ = make_param("mhub.queries", random_normal({config_.queries, d}, 1.0, rng));
  text_emb_ = make_param("mhub.text_emb", random_normal({config_.vocab, d}, 1.0, rng));
  text_pos_ = make_param("mhub.text_pos", random_normal({config_.max_text, d}, 0.1, rng));
  blocks_.resize(config_.blocks);
  for (std::size_t i = 0; i < config_.blocks; ++i) {
    const std::string p = "mhub.block" + std::to_string(i) + ".";
    Block& b = blocks_[i];
    b.ln_sa_g = make_param(p + "ln_sa.gamma", Tensor({d}, 1.0));
    b.ln_sa_b = make_param(p + "ln_sa.beta", Tensor({d}));
    b.self_attn = make_attention(p + "self_attn.", d, d, rng);
    b.ln_ca_g = make_param(p + "ln_ca.gamma", Tensor({d}, 1.0));
    b.ln_ca_b = make_param(p + "ln_ca.beta", Tensor({d}));
    b.cross_attn = make_attention(p + "cross_attn.", config_.d_enc, d, rng);
    b.ffn_v = make_ffn(p + "ffn_v.", d, d * config_.ffn_mult, rng);
    b.ffn_t = make_ffn(p + "ffn_t.", d, d * config_.ffn_mult, rng);
  }
  out_w_ = make_param("mhub.out_proj.w", random_normal({d, config_.d_lm}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  out_b_ = make_param("mhub.out_proj.b", Tensor({config_.d_lm}));
}

std::vector<Parameter*> MHub::parameters() {
  std::vector<Parameter*> out = {&queries_, &text_emb_, &text_pos_};
  auto attn = [&out](Attention& a) {
    for (Parameter* p : {&a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo, &a.bo}) out.push_back(p);
  };
  auto ffn = [&out](FeedForward& f) {
    for (Parameter* p : {&f.ln_g, &f.ln_b, &f.w1, &f.b1, &f.w2, &f.b2}) out.push_back(p);
  };
  for (Block& b : blocks_) {
    out.push_back(&b.ln_sa_g);
    out.push_back(&b.ln_sa_b);
    attn(b.self_attn);
    out.push_back(&b.ln_ca_g);
    out.push_back(&b.ln_ca_b);
    attn(b.cross_attn);
    ffn(b.ffn_v);
    ffn(b.ffn_t);
  }
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

Var MHub::self_attention(Tape& tape, Block& b, const Var& x) {
  Attention& a = b.self_attn;
  Var h = layer_norm(x, tape.param(b.ln_sa_g), tape.param(b.ln_sa_b));
  Var q = linear(h, tape.param(a.wq), tape.param(a.bq));
  Var k = linear(h, tape.param(a.wk), tape.param(a.bk));
  Var v = linear(h, tape.param(a.wv), tape.param(a.bv));
  Var o = attention(q, k, v, config_.heads, false);
  return add(x, linear(o, tape.param(a.wo), tape.param(a.bo)));
}

Var MHub::cross_attention(Tape& tape, Block& b, const Var& x, const Var& z_v) {
  Attention& a = b.cross_attn;
  Var h = layer_norm(x, tape.param(b.ln_ca_g), tape.param(b.ln_ca_b));
  Var q = linear(h, tape.param(a.wq), tape.param(a.bq));
  Var k = linear(z_v, tape.param(a.wk), tape.param(a.bk));
  Var v = linear(z_v, tape.param(a.wv), tape.param(a.bv));
  Var o = attention(q, k, v, config_.heads, false);
  return add(x, linear(o, tape.param(a.wo), tape.param(a.bo)));
}

Var MHub::feed_forward(Tape& tape, FeedForward& f, const Var& x) {
  Var h = layer_norm(x, tape.param(f.ln_g), tape.param(f.ln_b));
  h = gelu(linear(h, tape.param(f.w1), tape.param(f.b1)));
  return add(x, linear(h, tape.param(f.w2), tape.param(f.b2)));
}

std::pair<Var, Var> MHub::block_forward(std::size_t index, const Var& v_prev, const Var& t_prev, const Var& z_v,
                                        PartitionTrace* trace) {
  const std::size_t d = config_.hidden;
  if (v_prev.cols() != d || t_prev.cols() != d) {
    throw ShapeError("block_forward: expected width " + std::to_string(d) + ", got queries " +
                     shape_to_string(v_prev.shape()) + " and text " + shape_to_string(t_prev.shape()));
  }
  if (z_v.cols() != config_.d_enc) {
    throw ShapeError("block_forward: visual features " + shape_to_string(z_v.shape()) + " do not have width " +
                     std::to_string(config_.d_enc));
  }
  Tape& tape = v_prev.tape();
  Block& b = blocks_.at(index);
  const std::size_t nq = v_prev.rows();
  const std::size_t nt = t_prev.rows();

  const Var parts[] = {v_prev, t_prev};
  Var joint = nt > 0 ? concat_rows(parts) : v_prev;
  joint = self_attention(tape, b, joint);
  Var p = nt > 0 ? slice_rows(joint, 0, nq) : joint;
  Var r = slice_rows(joint, nq, nq + nt);
  Var o = cross_attention(tape, b, p, z_v);
  Var v_next = feed_forward(tape, b.ffn_v, o);
  Var t_next = nt > 0 ? feed_forward(tape, b.ffn_t, r) : r;
  if (trace) {
    trace->joint_rows = joint.rows();
    trace->cross_attention_rows = p.rows();
    trace->visual_ffn_rows = o.rows();
    trace->text_ffn_rows = r.rows();
  }
  return {v_next, t_next};
}

Var MHub::embed_text(Tape& tape, std::span<const int> text) {
  if (text.size() > config_.max_text) throw ContextLengthError(text.size(), config_.max_text);
  if (text.empty()) return tape.constant(Tensor({0, config_.hidden}));
  std::vector<int> positions(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) positions[i] = static_cast<int>(i);
  return add(embedding(tape.param(text_emb_), text), embedding(tape.param(text_pos_), positions));
}

FusionOutput MHub::fuse(Tape& tape, const Tensor& z_v, std::span<const int> text) {
  Var z = tape.constant(z_v);
  Var v = tape.param(queries_);
  Var t = embed_text(tape, text);
  for (std::size_t i = 0; i < blocks_.size(); ++i) std::tie(v, t) = block_forward(i, v, t, z);
  return {v, t};
}

Var MHub::encode_visual(Tape& tape, const Tensor& z_v) { return fuse(tape, z_v, {}).v_d; }

Var MHub::encode_text(Tape& tape, std::span<const int> text) {
  if (text.empty()) throw ContractError("encode_text: text must contain at least one token");
  Var t = embed_text(tape, text);
  for (Block& b : blocks_) {
    t = self_attention(tape, b, t);
    t = feed_forward(tape, b.ffn_t, t);
  }
  return t;
}

Var MHub::visual_attended_text(Tape& tape, const Tensor& z_v, std::span<const int> text) {
  if (text.empty()) throw ContractError("visual_attended_text: text must contain at least one token");
  if (z_v.cols() != config_.d_enc) {
    throw ShapeError("visual_attended_text: visual features " + shape_to_string(z_v.shape()) +
                     " do not have width " + std::to_string(config_.d_enc));
  }
  Var z = tape.constant(z_v);
  Var t = embed_text(tape, text);
  for (Block& b : blocks_) {
    t = self_attention(tape, b, t);
    t = cross_attention(tape, b, t, z);
    t = feed_forward(tape, b.ffn_v, t);
  }
  return t;
}

Var MHub::project(const Var& features) {
  if (features.cols() != config_.hidden) {
    throw ShapeError("project: features " + shape_to_string(features.shape()) + " do not have width " +
                     std::to_string(config_.hidden));
  }
  Tape& tape = features.tape();
  return linear(features, tape.param(out_w_), tape.param(out_b_));
}

Var MHub::extract_frame_level(Tape& tape, const ImageEncoderStub& encoder, std::span<const Frame> frames) {
  if (frames.empty()) throw ContractError("extract_frame_level: a video needs at least one frame");
  std::vector<Var> parts;
  parts.reserve(frames.size());
  for (const Frame& f : frames) parts.push_back(encode_visual(tape, encoder.encode_frame(f)));
  return parts.size() == 1 ? parts.front() : concat_rows(parts);
}

}  // namespace mmict
