#include <gtest/gtest.h>

#include "ipa/interp.h"

namespace ml = ipa::minilang;
namespace in = ipa::interp;

namespace {

const char* kSample =
    "x = input_int()\n"
    "if x > 0:\n"
    "  y = 4 / 3 * x\n"
    "else:\n"
    "  y = abs(x)\n"
    "z = y + sqrt(x)\n";

struct Traced {
  ml::Program program;
  ml::ControlFlowGraph cfg;
  in::DiscreteTrace a;
  in::DiscreteTrace b;
};

Traced run(const std::string& src, std::vector<in::Value> input, int budget = 500) {
  Traced r{ml::parse(src), {}, {}, {}};
  r.cfg = ml::build_cfg(r.program);
  r.a = in::run_interpreter_a(r.cfg, r.program, input, budget);
  r.b = in::run_interpreter_b(r.cfg, r.program, input, budget);
  return r;
}

std::vector<int> nodes(const in::DiscreteTrace& t) {
  std::vector<int> out;
  for (const in::Step& s : t.steps) out.push_back(s.node);
  return out;
}

std::optional<in::Raised> eval(const std::string& stmt, in::Environment& env) {
  ml::Program p = ml::parse(stmt);
  return in::evaluate_statement(p.statements[0], env);
}

TEST(Interp, SampleA) {
  Traced r = run(kSample, {in::Value(-3)});
  EXPECT_EQ(nodes(r.a), (std::vector<int>{0, 1, 4, 5, 6}));
  EXPECT_EQ(r.a.outcome, in::Outcome::kError);
  EXPECT_EQ(r.a.kind, in::ErrorKind::kValueError);
  EXPECT_EQ(r.a.line, 6);
  EXPECT_EQ(r.a.steps.back().t, 4);
  EXPECT_EQ(r.a.steps[0].env.describe(), "{}");
  EXPECT_EQ(r.a.steps[1].env.describe(), "{x: -3}");
  EXPECT_EQ(r.a.steps[2].env.describe(), "{x: -3}");
  EXPECT_EQ(r.a.steps[3].env.describe(), "{x: -3, y: 3}");
}

TEST(Interp, SampleB) {
  Traced r = run(kSample, {in::Value(-3)});
  EXPECT_EQ(nodes(r.b), (std::vector<int>{0, 1, 4, 5, 7}));
  EXPECT_EQ(r.b.steps.back().node, r.cfg.error);
  EXPECT_EQ(r.b.kind, in::ErrorKind::kValueError);
  EXPECT_EQ(r.b.line, 6);
  EXPECT_EQ(r.b.target_class(), 1 + static_cast<int>(in::ErrorKind::kValueError));
  EXPECT_EQ(r.b.dump(r.cfg), "0,0,1\n1,1,2\n2,4,5\n3,5,6\n4,7,0\nerror,ValueError,6\n");
}

TEST(Interp, SamplePositiveInput) {
  Traced r = run(kSample, {in::Value("4")});
  EXPECT_EQ(nodes(r.b), (std::vector<int>{0, 1, 2, 5, 6}));
  EXPECT_EQ(r.b.outcome, in::Outcome::kNoError);
  EXPECT_EQ(in::to_str(r.b.steps.back().env.bindings.at("z")), "7.333333333333333");
}

TEST(Interp, HandlerCatches) {
  const char* src =
      "x = input_int()\n"
      "if x > 0:\n"
      "  y = 4 / 3 * x\n"
      "else:\n"
      "  y = abs(x)\n"
      "try:\n"
      "  z = y + sqrt(x)\n"
      "except:\n"
      "  z = y\n";
  Traced r = run(src, {in::Value(-3)});
  // Hand trace: the sqrt node raises and lands on the except header.
  EXPECT_EQ(nodes(r.b), (std::vector<int>{0, 1, 4, 5, 6, 7, 8, 9}));
  EXPECT_EQ(r.cfg.exit, 9);
  EXPECT_EQ(r.b.outcome, in::Outcome::kNoError);
  EXPECT_EQ(r.b.steps.back().env.bindings.at("z"), in::Value(3));
  EXPECT_EQ(r.a.outcome, in::Outcome::kError);
  EXPECT_EQ(r.a.line, 7);
}

TEST(Interp, RaiseInsideHandler) {
  const char* src =
      "try:\n"
      "  x = 1 // 0\n"
      "except:\n"
      "  y = [1, 2][5]\n";
  Traced r = run(src, {});
  EXPECT_EQ(r.b.kind, in::ErrorKind::kIndexError);
  EXPECT_EQ(r.b.line, 4);
  EXPECT_EQ(r.a.kind, in::ErrorKind::kZeroDivisionError);
  EXPECT_EQ(r.a.line, 2);
}

TEST(Interp, SingleStatement) {
  Traced r = run("x = 1", {});
  EXPECT_EQ(nodes(r.a), (std::vector<int>{0, r.cfg.exit}));
  EXPECT_EQ(r.a.outcome, in::Outcome::kNoError);
  EXPECT_EQ(r.a.target_class(), 0);
}

TEST(Interp, Budget) {
  Traced r = run("while 1 > 0:\n  pass\n", {}, 50);
  EXPECT_EQ(r.a.outcome, in::Outcome::kStepBudgetExceeded);
  EXPECT_EQ(r.b.outcome, in::Outcome::kStepBudgetExceeded);
  EXPECT_EQ(r.b.target_class(), 1 + static_cast<int>(in::ErrorKind::kTimeout));
  EXPECT_EQ(r.b.steps.size(), 51u);
}

TEST(Interp, EmptyStdin) {
  Traced r = run("x = input_int()", {});
  EXPECT_EQ(r.b.kind, in::ErrorKind::kEOFError);
  EXPECT_EQ(r.b.line, 1);
  EXPECT_EQ(r.b.steps.back().node, r.cfg.error);
}

TEST(Interp, EvaluateStatement) {
  in::Environment env;
  env.bindings["x"] = in::Value(-3);
  EXPECT_FALSE(eval("y = abs(x)", env));
  EXPECT_EQ(env.describe(), "{x: -3, y: 3}");

  in::Environment empty;
  auto r = eval("z = y", empty);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->kind, in::ErrorKind::kNameError);

  in::Environment lists;
  lists.bindings["a"] = in::Value(in::Value::List{1, 2});
  r = eval("b = a[5]", lists);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->kind, in::ErrorKind::kIndexError);
}

TEST(Interp, ErrorKinds) {
  struct Case {
    const char* stmt;
    in::ErrorKind kind;
  } cases[] = {
      {"x = 1 // 0", in::ErrorKind::kZeroDivisionError},
      {"x = 1 / 0", in::ErrorKind::kZeroDivisionError},
      {"x = 5 % 0", in::ErrorKind::kZeroDivisionError},
      {"x = int(\"abc\")", in::ErrorKind::kValueError},
      {"x = sqrt(-1)", in::ErrorKind::kValueError},
      {"x = \"a\" + 1", in::ErrorKind::kTypeError},
      {"x = [1] < 2", in::ErrorKind::kTypeError},
      {"x = len(3)", in::ErrorKind::kTypeError},
      {"x = -\"a\"", in::ErrorKind::kTypeError},
      {"x = [[[1]]]", in::ErrorKind::kTypeError},
      {"x = input_str()", in::ErrorKind::kEOFError},
      {"raise_value_error()", in::ErrorKind::kValueError},
      {"frobnicate()", in::ErrorKind::kNameError},
      {"x = 2147483647 * 2147483647 * 2147483647", in::ErrorKind::kValueError},
  };
  for (const Case& c : cases) {
    in::Environment env;
    auto r = eval(c.stmt, env);
    ASSERT_TRUE(r) << c.stmt;
    EXPECT_EQ(r->kind, c.kind) << c.stmt;
    EXPECT_EQ(r->line, 1);
  }
}

TEST(Interp, Arithmetic) {
  in::Environment env;
  EXPECT_FALSE(eval("a = -7 // 2", env));
  EXPECT_FALSE(eval("b = -7 % 3", env));
  EXPECT_FALSE(eval("c = \"ab\" * 2 + str(3)", env));
  EXPECT_FALSE(eval("d = [1, 2] + [3]", env));
  EXPECT_FALSE(eval("e = 0 or 5", env));
  EXPECT_FALSE(eval("f = 7 / 2", env));
  EXPECT_FALSE(eval("g = [4, 5, 6][-1]", env));
  EXPECT_EQ(env.describe(), "{a: -4, b: 2, c: 'abab3', d: [1, 2, 3], e: 5, f: 3.5, g: 6}");
}

TEST(Interp, Loops) {
  const char* src =
      "n = input_int()\n"
      "s = 0\n"
      "for i in range(n):\n"
      "  if i == 3:\n"
      "    continue\n"
      "  if i == 5:\n"
      "    break\n"
      "  s = s + i\n"
      "k = 0\n"
      "while k < 3:\n"
      "  k = k + 1\n"
      "print(s, k)\n";
  Traced r = run(src, {in::Value("10")});
  EXPECT_EQ(r.b.outcome, in::Outcome::kNoError);
  EXPECT_EQ(r.b.steps.back().env.stdout_text, "7 3\n");
  EXPECT_EQ(nodes(r.a), nodes(r.b));
  for (std::size_t i = 1; i < r.b.steps.size(); ++i) {
    const ml::CfgNode& prev = r.cfg.nodes[r.b.steps[i - 1].node];
    const int n = r.b.steps[i].node;
    EXPECT_TRUE(n == prev.n1 || n == prev.n2 || n == prev.r);
  }
}

TEST(Interp, InputList) {
  Traced r = run("a = input_list()\nb = a[2]\n", in::stdin_from_text("4 5 6\n"));
  EXPECT_EQ(r.b.steps.back().env.bindings.at("b"), in::Value(6));
  Traced bad = run("a = input_list()\n", in::stdin_from_text("4 x\n"));
  EXPECT_EQ(bad.b.kind, in::ErrorKind::kValueError);
}

TEST(Interp, Deterministic) {
  Traced r1 = run(kSample, {in::Value(-3)});
  Traced r2 = run(kSample, {in::Value(-3)});
  EXPECT_EQ(r1.b.dump(r1.cfg), r2.b.dump(r2.cfg));
}

TEST(Interp, ErrorKindNames) {
  for (int k = 0; k < in::kNumErrorKinds; ++k) {
    auto kind = static_cast<in::ErrorKind>(k);
    EXPECT_EQ(in::parse_error_kind(in::error_kind_name(kind)), kind);
  }
  EXPECT_EQ(in::class_name(0), "no-error");
}

}  // namespace
