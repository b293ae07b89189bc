#pragma once

#include <functional>
#include <string>

#include "gradcheck.hpp"

namespace mmict::testing {

// Central-difference checks of every differentiable operation on
// `instances` random shapes; `report` sees each check.
inline void run_op_suite(int instances, std::uint64_t seed,
                         const std::function<void(const std::string& op, const GradCheck&)>& report) {
  Rng rng(seed);
  std::string op;
  auto run = [&](std::vector<Parameter*> ps, const std::function<Var(Tape&)>& f) { report(op, check_gradients(ps, f)); };
  // Random weights turn any tensor-valued op into a generic scalar.
  auto project = [](Tape& t, const Var& v, const Tensor& w) { return sum(mul(v, t.constant(w))); };

  for (int i = 0; i < instances; ++i) {
    const std::size_t m = 1 + i % 4, k = 2 + i % 3, n = 1 + (i * 7) % 5;
    Parameter a = make_param("a", random_tensor({m, k}, rng));
    Parameter b = make_param("b", random_tensor({k, n}, rng));
    Parameter bias = make_param("bias", random_tensor({n}, rng));
    Parameter c = make_param("c", random_tensor({m, n}, rng));
    const Tensor wmn = random_tensor({m, n}, rng);
    const Tensor wmk = random_tensor({m, k}, rng);

    op = "matmul";
    run({&a, &b}, [&](Tape& t) { return project(t, matmul(t.param(a), t.param(b)), wmn); });
    op = "linear";
    run({&a, &b, &bias}, [&](Tape& t) { return project(t, linear(t.param(a), t.param(b), t.param(bias)), wmn); });
    op = "add";
    run({&c}, [&](Tape& t) { return project(t, add(t.param(c), t.param(c)), wmn); });
    op = "add_row";
    run({&c, &bias}, [&](Tape& t) { return project(t, add_row(t.param(c), t.param(bias)), wmn); });
    op = "scale";
    run({&c}, [&](Tape& t) { return project(t, scale(t.param(c), -1.7), wmn); });
    op = "mul";
    run({&a}, [&](Tape& t) { return project(t, mul(t.param(a), t.param(a)), wmk); });
    op = "sum";
    run({&a}, [&](Tape& t) { return sum(t.param(a)); });
    op = "softmax(axis=1)";
    run({&a}, [&](Tape& t) { return project(t, softmax(t.param(a), 1), wmk); });
    op = "softmax(axis=0)";
    run({&a}, [&](Tape& t) { return project(t, softmax(t.param(a), 0), wmk); });
    Parameter g = make_param("g", random_tensor({k}, rng));
    Parameter be = make_param("be", random_tensor({k}, rng));
    op = "layer_norm";
    run({&a, &g, &be}, [&](Tape& t) { return project(t, layer_norm(t.param(a), t.param(g), t.param(be)), wmk); });
    op = "gelu";
    run({&a}, [&](Tape& t) { return project(t, gelu(t.param(a)), wmk); });

    Parameter top = make_param("top", random_tensor({2, k}, rng));
    const Tensor wcat = random_tensor({m + 2, k}, rng);
    op = "concat_rows";
    run({&a, &top}, [&](Tape& t) {
      const Var parts[] = {t.param(a), t.param(top)};
      return project(t, concat_rows(parts), wcat);
    });
    op = "slice_rows";
    run({&a}, [&](Tape& t) { return project(t, slice_rows(t.param(a), m > 1 ? 1 : 0, m), slice_rows(wmk, m > 1 ? 1 : 0, m)); });

    Parameter table = make_param("table", random_tensor({6, k}, rng));
    const std::vector<int> ids = {2, 0, 2, 5};
    const Tensor wemb = random_tensor({4, k}, rng);
    op = "embedding";
    run({&table}, [&](Tape& t) { return project(t, embedding(t.param(table), ids), wemb); });

    const std::size_t heads = 1 + i % 2;
    const std::size_t d = 4;
    const std::size_t nq = 1 + i % 3, nk = nq + i % 2;
    Parameter q = make_param("q", random_tensor({nq, d}, rng));
    Parameter kk = make_param("k", random_tensor({nk, d}, rng));
    Parameter v = make_param("v", random_tensor({nk, d}, rng));
    const Tensor watt = random_tensor({nq, d}, rng);
    for (bool causal : {false, true}) {
      op = "attention";
      run({&q, &kk, &v}, [&](Tape& t) {
        return project(t, attention(t.param(q), t.param(kk), t.param(v), heads, causal), watt);
      });
    }

    Parameter logits = make_param("logits", random_tensor({3, 5}, rng, 2.0));
    const std::vector<int> targets = {4, 0, 2};
    const std::vector<bool> mask = {true, i % 2 == 0, true};
    op = "cross_entropy";
    run({&logits}, [&](Tape& t) { return cross_entropy(t.param(logits), targets, mask); });
  }
}

}  // namespace mmict::testing
