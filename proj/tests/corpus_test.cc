#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ipa/corpus.h"
#include "ipa/minilang.h"

namespace ml = ipa::minilang;
namespace in = ipa::interp;
namespace co = ipa::corpus;

namespace {

co::Manifest corpus(std::uint64_t seed, int size) {
  co::CorpusOptions o;
  o.seed = seed;
  o.size = size;
  return co::generate_corpus(o);
}

std::vector<in::Value> input_of(const co::Example& e) {
  std::string text;
  for (const auto& l : e.stdin_lines) text += l + "\n";
  return in::stdin_from_text(text);
}

std::vector<int> nodes(const in::DiscreteTrace& t) {
  std::vector<int> out;
  for (const auto& s : t.steps) out.push_back(s.node);
  return out;
}

}  // namespace

TEST(Corpus, DeterministicPerSeed) {
  const std::string a = co::to_jsonl(corpus(7, 1000));
  const std::string b = co::to_jsonl(corpus(7, 1000));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, co::to_jsonl(corpus(8, 1000)));
}

TEST(Corpus, LabelsMatchInterpreter) {
  const co::Manifest m = corpus(3, 2000);
  for (const co::Example& e : m.examples) {
    co::Example copy = e;
    co::label(copy);
    ASSERT_EQ(copy.target, e.target) << e.source;
    ASSERT_EQ(copy.error_line, e.error_line) << e.source;
  }
}

TEST(Corpus, EofInstance) {
  co::ProblemSpec spec;
  spec.family = co::Family::kInputCount;
  spec.hazard = true;
  spec.param = 1;
  co::Rng rng(11);
  const co::Instance inst = co::make_instance(spec, {}, rng);
  EXPECT_EQ(inst.description, "One integer per line , 1 line .");
  ASSERT_EQ(inst.stdin_lines.size(), 1u);
  const ml::Program p = ml::parse(inst.source);
  std::vector<int> reads;
  for (const auto& s : p.statements) {
    if (ml::expr_to_string(*s.expr).find("input_int()") != std::string::npos) reads.push_back(s.line);
  }
  ASSERT_EQ(reads.size(), 2u);
  co::Example e;
  e.source = inst.source;
  e.stdin_lines = inst.stdin_lines;
  co::label(e);
  EXPECT_EQ(in::class_name(e.target), "EOFError");
  EXPECT_EQ(e.error_line, reads[1]);
}

TEST(Corpus, PipelineFaultsAtDescribedSlot) {
  const std::pair<co::Family, std::vector<std::string>> families[] = {
      {co::Family::kArithmetic, {"sqrt("}},
      {co::Family::kParse, {"= int("}},
      {co::Family::kDivision, {" // ", " % ", " / "}},
      {co::Family::kIndexing, {"["}},
  };
  co::CorpusOptions options;
  options.trigger_rate = 1.0;
  options.careful_rate = 0.0;
  for (const auto& [family, markers] : families) {
    std::set<std::string> descriptions;
    for (int slot = 0; slot < 2; ++slot) {
      co::ProblemSpec spec;
      spec.family = family;
      spec.hazard = true;
      spec.param = family == co::Family::kArithmetic ? 2 : 3;
      spec.pipeline = true;
      spec.slot = slot;
      descriptions.insert(co::describe(spec));
      co::Rng rng(slot);
      for (int i = 0; i < 20; ++i) {
        const co::Instance inst = co::make_instance(spec, options, rng);
        std::vector<int> risky;
        std::istringstream lines(inst.source);
        std::string text;
        for (int line = 1; std::getline(lines, text); ++line) {
          if (text.find("input") != std::string::npos) continue;
          for (const std::string& m : markers) {
            if (text.find(m) != std::string::npos) {
              risky.push_back(line);
              break;
            }
          }
        }
        ASSERT_EQ(risky.size(), 2u) << inst.source;
        co::Example e;
        e.source = inst.source;
        e.stdin_lines = inst.stdin_lines;
        co::label(e);
        EXPECT_NE(e.target, 0) << inst.source;
        EXPECT_EQ(e.error_line, risky[slot]) << inst.source;
      }
    }
    EXPECT_EQ(descriptions.size(), 2u) << co::family_name(family);
  }
}

TEST(Corpus, SplitHygieneAndRatio) {
  const co::Manifest m = corpus(5, 4000);
  std::map<int, co::Split> seen;
  std::array<std::set<int>, 3> problems;
  for (const co::Example& e : m.examples) {
    auto [it, fresh] = seen.emplace(e.problem_id, e.split);
    EXPECT_EQ(it->second, e.split);
    problems[static_cast<int>(e.split)].insert(e.problem_id);
  }
  const double total = problems[0].size() + problems[1].size() + problems[2].size();
  EXPECT_NEAR(problems[0].size() / total, 0.8, 0.02);
  EXPECT_NEAR(problems[1].size() / total, 0.1, 0.02);
}

TEST(Corpus, TestSplitBalanced) {
  const co::Manifest m = corpus(5, 4000);
  int clean = 0, all = 0;
  for (const co::Example* e : m.split(co::Split::kTest)) {
    ++all;
    clean += e->target == 0;
  }
  ASSERT_GT(all, 0);
  EXPECT_NEAR(static_cast<double>(clean) / all, 0.5, 0.01);
}

TEST(Corpus, EveryKindInTrain) {
  const auto counts = corpus(1, 2000).class_counts();
  for (int c = 1; c < in::kNumClasses; ++c) EXPECT_GE(counts[0][c], 20) << in::class_name(c);
}

TEST(Corpus, FiveKindMix) {
  co::CorpusOptions o;
  o.seed = 2;
  o.size = 2000;
  o.mix = co::five_kind_mix();
  const auto counts = co::generate_corpus(o).class_counts();
  int kinds = 0;
  for (int c = 1; c < in::kNumClasses; ++c) kinds += counts[0][c] > 0;
  EXPECT_EQ(kinds, 5);
}

TEST(Corpus, Preconditions) {
  co::CorpusOptions o;
  o.size = 99;
  EXPECT_THROW(co::generate_corpus(o), std::invalid_argument);
  o.size = 200;
  o.min_per_kind = 1000;
  o.max_attempts = 2;
  EXPECT_THROW(co::generate_corpus(o), co::GenerationExhausted);
}

TEST(Corpus, UninformativeFraction) {
  const co::Manifest m = corpus(9, 4000);
  std::map<int, bool> uninformative;
  for (const co::Example& e : m.examples) {
    uninformative[e.problem_id] = e.description == "The input format is not specified .";
  }
  int n = 0;
  for (const auto& [id, u] : uninformative) n += u;
  EXPECT_NEAR(static_cast<double>(n) / uninformative.size(), 0.2, 0.05);
}

TEST(Corpus, JsonlRoundTrip) {
  const co::Manifest m = corpus(4, 300);
  const std::string text = co::to_jsonl(m);
  EXPECT_EQ(co::to_jsonl(co::from_jsonl(text)), text);
  const std::string first = text.substr(0, text.find('\n'));
  const char* keys[] = {"\"id\"", "\"problem-id\"", "\"split\"", "\"source\"", "\"stdin\"",
                        "\"description\"", "\"target\"", "\"error-line\""};
  std::size_t pos = 0;
  for (const char* k : keys) {
    const std::size_t next = first.find(k);
    ASSERT_NE(next, std::string::npos) << k;
    EXPECT_GE(next, pos) << k;
    pos = next;
  }
}

TEST(Corpus, MixParsing) {
  const co::TemplateMix m = co::parse_mix("division:2,unbound");
  EXPECT_EQ(m[static_cast<int>(co::Family::kDivision)], 2.0);
  EXPECT_EQ(m[static_cast<int>(co::Family::kUnbound)], 1.0);
  EXPECT_EQ(m[static_cast<int>(co::Family::kParse)], 0.0);
  EXPECT_EQ(co::parse_mix(co::mix_to_string(co::five_kind_mix())), co::five_kind_mix());
  EXPECT_THROW(co::parse_mix("bogus"), std::invalid_argument);
}

// Structural checks on the CFG of every generated program.
TEST(CorpusFuzz, CfgWellFormed) {
  const co::Manifest m = corpus(21, 11000);
  ASSERT_GE(m.examples.size(), 10000u);
  for (const co::Example& e : m.examples) {
    const ml::Program p = ml::parse(e.source);
    const ml::ControlFlowGraph g = ml::build_cfg(p);
    ASSERT_EQ(g.exit, g.size() - 2);
    ASSERT_EQ(g.error, g.size() - 1);
    for (int n = 0; n < g.size(); ++n) {
      const ml::CfgNode& c = g.nodes[n];
      for (int s : {c.n1, c.n2, c.r}) ASSERT_TRUE(s >= 0 && s < g.size()) << e.source;
      if (g.is_terminal(n)) {
        ASSERT_TRUE(c.n1 == n && c.n2 == n && c.r == n);
        continue;
      }
      if (!g.is_inert(n)) {
        ASSERT_NE(c.n1, g.error);
        ASSERT_NE(c.n2, g.error);
        ASSERT_TRUE(c.r == g.error || g.nodes[c.r].role == ml::NodeRole::kStatement) << e.source;
        ASSERT_EQ(c.n1 != c.n2, g.is_branch(n)) << e.source;
      }
    }
    const std::vector<bool> reach = ml::reachable_nodes(g);
    ASSERT_TRUE(reach[g.exit]) << e.source;
  }
}

TEST(CorpusFuzz, InterpretersAgreeWithoutErrors) {
  const co::Manifest m = corpus(22, 3000);
  int checked = 0;
  for (const co::Example& e : m.examples) {
    if (e.target != 0) continue;
    const ml::Program p = ml::parse(e.source);
    const ml::ControlFlowGraph g = ml::build_cfg(p);
    const auto a = in::run_interpreter_a(g, p, input_of(e));
    const auto b = in::run_interpreter_b(g, p, input_of(e));
    if (a.outcome != in::Outcome::kNoError) continue;  // caught exceptions diverge by design
    ASSERT_EQ(nodes(a), nodes(b)) << e.source;
    ++checked;
  }
  EXPECT_GT(checked, 1000);
}

TEST(BalancedSampler, HalfNoError) {
  const co::Manifest m = corpus(6, 2000);
  co::BalancedSampler s(m, co::Split::kTrain, 1);
  int clean = 0, total = 0;
  for (int b = 0; b < 313; ++b) {
    for (const co::Example* e : s.next_batch(32)) {
      clean += e->target == 0;
      ++total;
    }
  }
  EXPECT_GE(total, 10000);
  EXPECT_NEAR(static_cast<double>(clean) / total, 0.5, 0.02);
}

TEST(BalancedSampler, DeterministicAndWithReplacement) {
  co::Manifest m;
  co::Example a, b, c;
  a.target = 0;
  b.target = 2;
  b.id = 1;
  c.target = 2;
  c.id = 2;
  m.examples = {a, b, c};
  co::BalancedSampler s1(m, co::Split::kTrain, 5), s2(m, co::Split::kTrain, 5);
  int clean = 0;
  for (int i = 0; i < 20; ++i) {
    const auto x = s1.next_batch(8);
    const auto y = s2.next_batch(8);
    ASSERT_EQ(x, y);
    for (const co::Example* e : x) clean += e == &m.examples[0];
  }
  EXPECT_GT(clean, 20);
}

TEST(BalancedSampler, EmptyStratum) {
  co::Manifest m;
  m.examples.resize(3);
  EXPECT_THROW(co::BalancedSampler(m, co::Split::kTrain, 0), co::EmptyStratum);
}
