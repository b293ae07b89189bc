#include "mmict/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "mmict/errors.hpp"

namespace mmict {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = leaves_.find(&p); it != leaves_.end()) return Var(this, it->second);
  const bool tracked = p.trainable && track_;
  nodes_.push_back(Node{p.value, std::nullopt, tracked, &p, {}});
  const std::size_t id = nodes_.size() - 1;
  leaves_.emplace(&p, id);
  if (tracked) param_order_.push_back(id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError("operation mixes values from different tapes");
    needs = needs || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), std::nullopt, needs, nullptr, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(const Var& v) {
  Node& n = nodes_[v.id_];
  if (!n.grad) n.grad.emplace(n.value.shape());
  return *n.grad;
}

GradList Tape::gradients(const Var& loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to another tape");
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(value(loss).shape()));
  }
  for (Node& n : nodes_) n.grad.reset();
  GradList out;
  if (!nodes_[loss.id_].requires_grad) return out;
  grad(loss)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad || !n.backward) continue;
    n.backward(*this, *n.grad);
  }
  for (std::size_t id : param_order_) {
    Node& n = nodes_[id];
    out.emplace_back(n.param, n.grad ? std::move(*n.grad) : Tensor(n.value.shape()));
  }
  return out;
}

void accumulate_gradients(const GradList& grads, double weight) {
  for (const auto& [p, g] : grads) {
    if (!p->trainable) continue;
    if (!p->grad) p->grad.emplace(p->value.shape());
    double* dst = p->grad->data();
    const double* src = g.data();
    for (std::size_t i = 0, n = g.size(); i < n; ++i) dst[i] += weight * src[i];
  }
}

void backward(const Var& loss) { accumulate_gradients(loss.tape().gradients(loss)); }

namespace {

void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operation mixes values from different tapes");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  Tape& t = a.tape();
  return t.record(mmict::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (a.requires_grad()) matmul_nt_accumulate(tp.grad(a), g, b.value());
    if (b.requires_grad()) matmul_tn_accumulate(tp.grad(b), a.value(), g);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  same_tape(x, weight);
  same_tape(x, bias);
  Tape& t = x.tape();
  Tensor out = mmict::matmul(x.value(), weight.value());
  if (bias.value().size() != out.cols()) {
    throw ShapeError("linear: bias " + shape_to_string(bias.shape()) + " does not match output width " +
                     std::to_string(out.cols()));
  }
  out = mmict::add_row(out, bias.value());
  return t.record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape& tp, const Tensor& g) {
    if (x.requires_grad()) matmul_nt_accumulate(tp.grad(x), g, weight.value());
    if (weight.requires_grad()) matmul_tn_accumulate(tp.grad(weight), x.value(), g);
    if (bias.requires_grad()) {
      Tensor& gb = tp.grad(bias);
      const std::size_t n = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    }
  });
}

Var add(const Var& a, const Var& b) {
  same_tape(a, b);
  return a.tape().record(mmict::add(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (a.requires_grad()) accumulate(tp.grad(a), g);
    if (b.requires_grad()) accumulate(tp.grad(b), g);
  });
}

Var add_row(const Var& a, const Var& bias) {
  same_tape(a, bias);
  return a.tape().record(mmict::add_row(a.value(), bias.value()), {a, bias}, [a, bias](Tape& tp, const Tensor& g) {
    if (a.requires_grad()) accumulate(tp.grad(a), g);
    if (bias.requires_grad()) {
      Tensor& gb = tp.grad(bias);
      const std::size_t n = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    }
  });
}

Var scale(const Var& a, double s) {
  return a.tape().record(mmict::scale(a.value(), s), {a}, [a, s](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return a.tape().record(Tensor::scalar(total), {a}, [a](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    for (double& v : ga.values()) v += g[0];
  });
}

Var softmax(const Var& x, std::size_t axis) {
  Tensor y = mmict::softmax(x.value(), axis);
  Tensor yv = x.requires_grad() ? y : Tensor();
  return x.tape().record(std::move(y), {x}, [x, axis, yv = std::move(yv)](Tape& tp, const Tensor& g) {
    const Shape& s = yv.shape();
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    Tensor& gx = tp.grad(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * yv[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t idx = base + k * inner;
          gx[idx] += yv[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  const std::size_t rows = xv.rows();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw ShapeError("layer_norm: gamma/beta width " + std::to_string(gamma.value().size()) +
                     " does not match input " + shape_to_string(xv.shape()));
  }
  Tensor xhat(xv.shape());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    auto o = xhat.row(r);
    for (std::size_t c = 0; c < d; ++c) o[c] = (in[c] - mean) * rstd[r];
  }
  Tensor out(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = xhat[r * d + c] * gv[c] + bv[c];

  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), d, rows](Tape& tp, const Tensor& g) {
        const Tensor& gv = gamma.value();
        if (gamma.requires_grad()) {
          Tensor& gg = tp.grad(gamma);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gg[c] += g[r * d + c] * xhat[r * d + c];
        }
        if (beta.requires_grad()) {
          Tensor& gb = tp.grad(beta);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
        }
        if (x.requires_grad()) {
          Tensor& gx = tp.grad(x);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dy = 0.0;
            double mean_dy_xhat = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double dy = g[r * d + c] * gv[c];
              mean_dy += dy;
              mean_dy_xhat += dy * xhat[r * d + c];
            }
            mean_dy *= inv_d;
            mean_dy_xhat *= inv_d;
            for (std::size_t c = 0; c < d; ++c) {
              const double dy = g[r * d + c] * gv[c];
              gx[r * d + c] += rstd[r] * (dy - mean_dy - xhat[r * d + c] * mean_dy_xhat);
            }
          }
        }
      });
}

Var gelu(const Var& x) {
  return x.tape().record(mmict::gelu(x.value()), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_derivative(xv[i]);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    values.push_back(p.value());
  }
  Tensor out = mmict::concat_rows(values);
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [inputs](Tape& tp, const Tensor& g) {
    std::size_t offset = 0;
    const std::size_t cols = g.cols();
    for (const Var& p : inputs) {
      const std::size_t n = p.value().size();
      if (p.requires_grad()) {
        Tensor& gp = tp.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
    (void)cols;
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  Tensor out = mmict::slice_rows(x.value(), begin, end);
  return x.tape().record(std::move(out), {x}, [x, begin](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(x);
    const std::size_t off = begin * gx.cols();
    for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
  });
}

Var embedding(const Var& table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  const std::size_t d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " out of range for table " +
                          shape_to_string(tv.shape()));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [table, idv = std::move(idv), d](Tape& tp, const Tensor& g) {
    Tensor& gt = tp.grad(table);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      double* dst = gt.data() + static_cast<std::size_t>(idv[i]) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += g[i * d + c];
    }
  });
}

namespace {

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t dk) {
  Tensor out({x.rows(), dk});
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy_n(x.data() + r * d + head * dk, dk, out.data() + r * dk);
  return out;
}

void head_scatter_add(Tensor& dst, const Tensor& src, std::size_t head, std::size_t dk) {
  const std::size_t d = dst.cols();
  for (std::size_t r = 0; r < src.rows(); ++r) {
    double* o = dst.data() + r * d + head * dk;
    const double* s = src.data() + r * dk;
    for (std::size_t c = 0; c < dk; ++c) o[c] += s[c];
  }
}

void check_attention_shapes(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() || k.shape() != v.shape()) {
    throw ShapeError("attention: incompatible shapes q=" + shape_to_string(q.shape()) + " k=" +
                     shape_to_string(k.shape()) + " v=" + shape_to_string(v.shape()));
  }
  if (heads == 0 || q.cols() % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(q.cols()) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
}

}  // namespace

Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal,
                         std::vector<Tensor>* probs) {
  check_attention_shapes(q, k, v, heads);
  const std::size_t n = q.rows();
  const std::size_t m = k.rows();
  const std::size_t d = q.cols();
  const std::size_t dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor out({n, d});
  if (probs) probs->clear();
  if (causal && m < n) throw ShapeError("attention: causal attention needs at least as many keys as queries");
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = head_slice(q, h, dk);
    Tensor kh = head_slice(k, h, dk);
    Tensor vh = head_slice(v, h, dk);
    Tensor p = mmict::matmul_nt(qh, kh);
    for (std::size_t i = 0; i < n; ++i) {
      double* row = p.data() + i * m;
      const std::size_t visible = causal ? i + (m - n) + 1 : m;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < visible; ++j) {
        row[j] *= inv_sqrt;
        mx = std::max(mx, row[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        row[j] = std::exp(row[j] - mx);
        total += row[j];
      }
      for (std::size_t j = 0; j < visible; ++j) row[j] /= total;
      for (std::size_t j = visible; j < m; ++j) row[j] = 0.0;
    }
    Tensor oh = mmict::matmul(p, vh);
    head_scatter_add(out, oh, h, dk);
    if (probs) probs->push_back(std::move(p));
  }
  return out;
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, bool causal) {
  same_tape(q, k);
  same_tape(q, v);
  std::vector<Tensor> probs;
  Tensor out = attention_forward(q.value(), k.value(), v.value(), heads, causal, &probs);
  return q.tape().record(std::move(out), {q, k, v}, [q, k, v, heads, probs = std::move(probs)](Tape& tp, const Tensor& g) {
    const std::size_t d = q.cols();
    const std::size_t dk = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor& p = probs[h];
      Tensor gh = head_slice(g, h, dk);
      Tensor vh = head_slice(v.value(), h, dk);
      if (v.requires_grad()) head_scatter_add(tp.grad(v), mmict::matmul_tn(p, gh), h, dk);
      if (!q.requires_grad() && !k.requires_grad()) continue;
      Tensor dp = mmict::matmul_nt(gh, vh);
      const std::size_t n = p.rows();
      const std::size_t m = p.cols();
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < m; ++j) dot += dp[i * m + j] * p[i * m + j];
        for (std::size_t j = 0; j < m; ++j) dp[i * m + j] = p[i * m + j] * (dp[i * m + j] - dot) * inv_sqrt;
      }
      if (q.requires_grad()) head_scatter_add(tp.grad(q), mmict::matmul(dp, head_slice(k.value(), h, dk)), h, dk);
      if (k.requires_grad()) head_scatter_add(tp.grad(k), mmict::matmul_tn(dp, head_slice(q.value(), h, dk)), h, dk);
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets, const std::vector<bool>& mask) {
  const Tensor& lv = logits.value();
  const std::size_t t_len = lv.rows();
  const std::size_t vocab = lv.cols();
  if (targets.size() != t_len || mask.size() != t_len) {
    throw ShapeError("cross_entropy: logits " + shape_to_string(lv.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets and " + std::to_string(mask.size()) + " mask entries");
  }
  const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (count == 0) throw ContractError("cross_entropy: every position is masked; the mean is undefined");
  Tensor probs({t_len, vocab});
  double loss = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (!mask[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab) {
      throw ContractError("cross_entropy: target " + std::to_string(targets[t]) + " out of range for vocabulary " +
                          std::to_string(vocab));
    }
    auto row = lv.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) total += std::exp(row[c] - mx);
    const double log_z = mx + std::log(total);
    loss -= row[static_cast<std::size_t>(targets[t])] - log_z;
    for (std::size_t c = 0; c < vocab; ++c) probs[t * vocab + c] = std::exp(row[c] - log_z);
  }
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape().record(
      Tensor::scalar(loss * inv), {logits},
      [logits, tg = std::move(tg), mask, probs = std::move(probs), inv, vocab](Tape& tp, const Tensor& g) {
        Tensor& gl = tp.grad(logits);
        const double s = g[0] * inv;
        for (std::size_t t = 0; t < tg.size(); ++t) {
          if (!mask[t]) continue;
          for (std::size_t c = 0; c < vocab; ++c) gl[t * vocab + c] += s * probs[t * vocab + c];
          gl[t * vocab + static_cast<std::size_t>(tg[t])] -= s;
        }
      });
}

}  // namespace mmict
