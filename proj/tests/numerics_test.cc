#include <cmath>
#include <random>
#include <sstream>

#include "gtest/gtest.h"
#include "ipa/numerics/checkpoint.h"
#include "ipa/numerics/grad_check.h"
#include "ipa/numerics/lstm.h"
#include "ipa/numerics/tape.h"

namespace ipa::numerics {
namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.values()) v = d(rng);
  return t;
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Tape t;
  Var s = softmax(t.constant(Tensor::row({0.0, 0.0})));
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.value()[1], 0.5);
}

TEST(Ops, LogsumexpOfSingleElement) {
  Tape t;
  for (double a : {-3.5, 0.0, 7.25}) {
    EXPECT_DOUBLE_EQ(logsumexp(t.constant(Tensor::row({a})), 1).scalar(), a);
  }
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 3));
  Var b = t.constant(Tensor::matrix(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
    EXPECT_NE(msg.find("vs [2, 3]"), std::string::npos);
  }
}

TEST(Ops, SoftmaxRowsAreDistributions) {
  std::mt19937_64 rng(3);
  for (int seed = 0; seed < 50; ++seed) {
    Tape t;
    Var s = softmax(t.constant(random_tensor({4, 7}, rng, -30, 30)));
    for (int r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (int c = 0; c < 7; ++c) {
        EXPECT_GE(s.value().at(r, c), 0.0);
        sum += s.value().at(r, c);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Ops, MatmulGradientMatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  ParamStore store;
  Parameter& a = store.add("a", random_tensor({2, 3}, rng));
  Parameter& b = store.add("b", random_tensor({3, 1}, rng));
  auto loss = [&](Tape& t) { return sum_all(tanh(matmul(t.param(a), t.param(b)))); };
  GradCheckResult r = grad_check(loss, store.all(), 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_param;
}

TEST(GradCheck, SumOfSquares) {
  ParamStore store;
  Parameter& x = store.add("x", Tensor::row({1.0, 2.0}));
  auto loss = [&](Tape& t) {
    Var v = t.param(x);
    return sum_all(v * v);
  };
  GradCheckResult r = grad_check(loss, store.all(), 1e-5);
  EXPECT_DOUBLE_EQ(x.grad[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad[1], 4.0);
  EXPECT_LT(r.max_rel_error, 1e-7);
}

TEST(GradCheck, FourPointStencilOnCubic) {
  ParamStore store;
  Parameter& x = store.add("x", Tensor::row({0.5, -1.5, 2.0}));
  auto loss = [&](Tape& t) {
    Var v = t.param(x);
    return sum_all(v * v * v);
  };
  // Central differences of a cubic carry an eps^2 term the four-point
  // stencil cancels.
  GradCheckResult two = grad_check(loss, store.all(), 1e-3);
  GradCheckResult four = grad_check(loss, store.all(), 1e-3, Stencil::kFourPoint);
  EXPECT_GT(two.max_rel_error, 1e-8);
  EXPECT_LT(four.max_rel_error, 1e-10);
}

TEST(GradCheck, DetectsWrongBackward) {
  ParamStore store;
  Parameter& x = store.add("x", Tensor::row({0.3, -1.2, 2.0}));
  // Cube with a backward rule that forgets the factor 3.
  auto bad_cube = [](Var a) {
    Tensor y = a.value();
    for (double& v : y.values()) v = v * v * v;
    int ia = a.id;
    return a.tape->record(std::move(y), [ia](Tape& tp, int self) {
      const Tensor& g = tp.grad(self);
      const Tensor& x = tp.value(ia);
      Tensor& gx = tp.grad_of(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * x[i] * x[i];
    });
  };
  auto loss = [&](Tape& t) { return sum_all(bad_cube(t.param(x))); };
  EXPECT_GT(grad_check(loss, store.all(), 1e-5).max_rel_error, 1e-2);
}

TEST(GradCheck, RejectsNonFiniteLossAndBadEps) {
  ParamStore store;
  Parameter& x = store.add("x", Tensor::row({1.0}));
  auto nan_loss = [&](Tape& t) { return scale(t.param(x), std::nan("")); };
  EXPECT_THROW(grad_check(nan_loss, store.all(), 1e-5), NonFiniteLoss);
  auto ok = [&](Tape& t) { return sum_all(t.param(x)); };
  EXPECT_THROW(grad_check(ok, store.all(), 1e-2), std::invalid_argument);
}

// Every differentiable op, on random small shapes, over 100 seeds.
TEST(OpsProperty, EveryOpPassesGradCheck) {
  using Builder = std::function<Var(Tape&, Var, Var)>;
  struct Case {
    const char* name;
    Builder build;
  };
  const std::vector<Case> cases = {
      {"matmul", [](Tape&, Var a, Var b) { return matmul(a, transpose(b)); }},
      {"matmul_nt", [](Tape&, Var a, Var b) { return matmul_nt(a, b); }},
      {"add_sub_mul", [](Tape&, Var a, Var b) { return (a + b) * (a - b) * b; }},
      {"broadcast",
       [](Tape&, Var a, Var b) {
         Var row = slice_rows(b, 0, 1);
         Var col = slice_cols(a, 0, 1);
         return mul_col(mul_row(add_row(a, row), row), col);
       }},
      {"concat_slice",
       [](Tape&, Var a, Var b) {
         Var c = concat_cols({a, b});
         Var r = concat_rows({c, c});
         Var tail = slice_cols(slice_rows(r, 1, r.rows() - 1), 1, c.cols() - 1);
         Var head = slice_cols(slice_rows(r, 0, r.rows() - 1), 0, c.cols() - 1);
         return tail * head;
       }},
      {"gather_pick",
       [](Tape&, Var a, Var b) {
         Var g = gather_rows(a, {0, 0, a.rows() - 1});
         Var h = embedding_lookup(b, {b.rows() - 1, 0, 1});
         Var s = pick(b, 0, 1);
         return mul_col(g * h, concat_rows({s, s, s})) + scale(g, 2.0);
       }},
      {"sigmoid_tanh_gelu",
       [](Tape&, Var a, Var b) { return sigmoid(a) * tanh(b) + gelu(a * b); }},
      {"exp_log", [](Tape&, Var a, Var b) { return log(exp(a) + exp(b)); }},
      {"reductions",
       [](Tape&, Var a, Var b) {
         return concat_rows({reduce_sum(a, 0), reduce_mean(b, 0), reduce_max(a, 0),
                             logsumexp(b, 0), transpose(logsumexp(a, 1)),
                             transpose(reduce_max(b, 1)), transpose(reduce_mean(a, 1))});
       }},
      {"softmax_axes",
       [](Tape&, Var a, Var b) {
         return softmax(a, 1) * b + log_softmax(b, 0) * a + softmax(b, 0);
       }},
      {"layer_norm",
       [](Tape&, Var a, Var b) {
         Var g = add_scalar(reduce_mean(b, 0), 1.0);
         Var bias = reduce_sum(a, 0);
         return layer_norm(a * b, g, bias);
       }},
      {"masked_fill",
       [](Tape&, Var a, Var b) {
         Tensor mask(a.value().shape());
         for (std::size_t i = 0; i < mask.size(); i += 2) mask[i] = 1.0;
         return softmax(masked_fill(a * b, mask, -1e9), 1);
       }},
      {"scatter_safe_divide",
       [](Tape&, Var a, Var b) {
         const int n = a.rows();
         std::vector<int> src, dst;
         for (int i = 0; i < n; ++i) {
           src.push_back(i * a.cols());
           dst.push_back(i * n + (i + 1) % n);
           src.push_back(i * a.cols() + 1);
           dst.push_back(i * n + i);
         }
         Var m = scatter_add(sigmoid(a), src, dst, n, n);
         Var den = reduce_sum(m, 0);
         Var num = matmul(transpose(m), b);
         return safe_row_divide(num, den, b, 1e-12);
       }},
      {"pool_spans",
       [](Tape&, Var a, Var b) {
         Var x = a * b;
         const int n = x.rows();
         std::vector<std::pair<int, int>> spans = {{0, 1}, {1, n}, {0, n}};
         return concat_rows({pool_spans(x, spans, Pooling::kFirst),
                             pool_spans(x, spans, Pooling::kSum),
                             pool_spans(x, spans, Pooling::kMean),
                             pool_spans(x, spans, Pooling::kMax)});
       }},
  };

  for (const Case& c : cases) {
    for (int seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      std::uniform_int_distribution<int> dim(2, 4);
      const int m = dim(rng), n = m;  // square so row and column reductions stack
      ParamStore store;
      Parameter& a = store.add("a", random_tensor({m, n}, rng));
      Parameter& b = store.add("b", random_tensor({m, n}, rng));
      Tensor w = random_tensor({m, n}, rng);
      auto loss = [&](Tape& t) {
        Var out = c.build(t, t.param(a), t.param(b));
        Tensor weights(out.value().shape());
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = w[i % w.size()];
        return sum_all(mul_const(out, weights));
      };
      GradCheckResult r = grad_check(loss, store.all(), 1e-5);
      ASSERT_LT(r.max_rel_error, 1e-4)
          << c.name << " seed " << seed << " worst " << r.worst_param << "[" << r.worst_index
          << "] analytic " << r.analytic << " numeric " << r.numeric;
    }
  }
}

TEST(Ops, NoNaNOnLargeFiniteInputs) {
  Tape t;
  Var x = t.constant(Tensor::row({-800.0, 0.0, 800.0}));
  for (Var y : {softmax(x), log_softmax(x), sigmoid(x), tanh(x), logsumexp(x, 1), gelu(x)}) {
    EXPECT_TRUE(y.value().all_finite());
  }
}

TEST(Lstm, ZeroWeightsAndStateGiveZeroOutput) {
  std::mt19937_64 rng(0);
  ParamStore store;
  StackedLstm lstm(store, "rnn", 3, 4, 2, rng);
  for (auto* p : store.all()) p->value.fill(0.0);
  Tape t;
  auto w = lstm.bind(t);
  Var state = t.constant(Tensor::matrix(2, lstm.state_dim()));
  Var input = t.constant(Tensor::matrix(2, 3, 0.0));
  Var out = lstm.output(lstm.step(w, state, input));
  for (double v : out.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, DeterministicForIdenticalInputs) {
  std::mt19937_64 rng(5);
  ParamStore store;
  StackedLstm lstm(store, "rnn", 3, 4, 2, rng);
  Tensor in = random_tensor({1, 3}, rng);
  Tensor st = random_tensor({1, lstm.state_dim()}, rng);
  Tape t;
  auto w = lstm.bind(t);
  Var a = lstm.step(w, t.constant(st), t.constant(in));
  Var b = lstm.step(w, t.constant(st), t.constant(in));
  EXPECT_EQ(a.value(), b.value());
}

TEST(Lstm, TwoStepUnrollGradientCheck) {
  std::mt19937_64 rng(9);
  ParamStore store;
  StackedLstm lstm(store, "rnn", 3, 4, 2, rng);
  Parameter& x0 = store.add("x0", random_tensor({2, 3}, rng));
  Parameter& x1 = store.add("x1", random_tensor({2, 3}, rng));
  auto loss = [&](Tape& t) {
    auto w = lstm.bind(t);
    Var s = t.constant(Tensor::matrix(2, lstm.state_dim()));
    s = lstm.step(w, s, t.param(x0));
    s = lstm.step(w, s, t.param(x1));
    return sum_all(lstm.output(s) * lstm.output(s));
  };
  EXPECT_LT(grad_check(loss, store.all(), 1e-5).max_rel_error, 1e-4);
}

TEST(Lstm, RejectsShapeMismatch) {
  std::mt19937_64 rng(0);
  ParamStore store;
  StackedLstm lstm(store, "rnn", 3, 4, 2, rng);
  Tape t;
  auto w = lstm.bind(t);
  EXPECT_THROW(lstm.step(w, t.constant(Tensor::matrix(1, 7)), t.constant(Tensor::matrix(1, 3))),
               ShapeError);
}

TEST(Checkpoint, ExactRoundTrip) {
  std::mt19937_64 rng(21);
  ParamStore store;
  store.add("w", random_tensor({3, 5}, rng, -1e3, 1e3));
  store.add("tiny", Tensor::row({1e-300, -0.0, 0.1, 1.0 / 3.0}));
  std::ostringstream os;
  write_checkpoint(os, store, {{"model", "exception_ipagnn"}});
  std::istringstream is(os.str());
  Checkpoint ck = read_checkpoint(is);
  EXPECT_EQ(ck.meta.at("model"), "exception_ipagnn");
  ParamStore other;
  other.add("w", Tensor::matrix(3, 5));
  other.add("tiny", Tensor::matrix(1, 4));
  restore_params(ck, other);
  EXPECT_EQ(other.get("w").value, store.get("w").value);
  EXPECT_EQ(other.get("tiny").value, store.get("tiny").value);

  std::ostringstream again;
  write_checkpoint(again, other, {{"model", "exception_ipagnn"}});
  EXPECT_EQ(os.str(), again.str());
}

TEST(Checkpoint, RejectsShapeMismatch) {
  ParamStore store;
  store.add("w", Tensor::matrix(2, 2));
  std::ostringstream os;
  write_checkpoint(os, store, {});
  std::istringstream is(os.str());
  Checkpoint ck = read_checkpoint(is);
  ParamStore other;
  other.add("w", Tensor::matrix(2, 3));
  EXPECT_THROW(restore_params(ck, other), CheckpointError);
}

}  // namespace
}  // namespace ipa::numerics
