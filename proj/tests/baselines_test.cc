#include <gtest/gtest.h>

#include <cmath>

#include "ipa/baselines.h"
#include "ipa/interp.h"
#include "ipa/numerics/grad_check.h"

namespace ml = ipa::minilang;
namespace nx = ipa::numerics;
namespace en = ipa::encoder;
namespace ig = ipa::ipagnn;
namespace bl = ipa::baselines;
namespace in = ipa::interp;

namespace {

const char* kProgram = "a = input_int()\nb = a * 2\nprint(b - 1)\n";
const char* kSwapped = "a = input_int()\nprint(b - 1)\nb = a * 2\n";

en::Vocabulary vocab() {
  return en::Vocabulary::build({en::program_token_texts(ml::parse(kProgram))});
}

en::EncoderConfig small() {
  en::EncoderConfig c;
  c.embed_dim = 8;
  c.heads = 2;
  c.mlp_dim = 8;
  c.max_len = 64;
  return c;
}

ig::ModelInput input(const std::string& src) {
  return ig::prepare_input(ml::parse(src), std::nullopt, vocab(), ig::Modulation::kNone);
}

std::vector<double> probs(const bl::Classifier& m, const ig::ModelInput& x) {
  nx::Tape tape;
  const nx::Var lp = m.forward(tape, x).log_probs;
  std::vector<double> out;
  for (int k = 0; k < lp.cols(); ++k) out.push_back(std::exp(lp.value()[k]));
  return out;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void zero(nx::ParamStore& store, const std::string& prefix) {
  for (nx::Parameter* p : store.all()) {
    if (p->name.rfind(prefix, 0) == 0) p->value.fill(0.0);
  }
}

nx::Var constant(nx::Tape& tape, int rows, int cols, std::vector<double> v) {
  return tape.constant(nx::Tensor({rows, cols}, std::move(v)));
}

std::vector<double> row(nx::Var v) {
  return {v.value().data(), v.value().data() + v.value().size()};
}

}  // namespace

TEST(Transformer, ZeroHeadIsUniform) {
  nx::ParamStore store;
  std::mt19937_64 rng(1);
  bl::TransformerClassifier m(store, small(), vocab().size(), in::kNumClasses, rng);
  zero(store, "transformer/head");
  for (double p : probs(m, input(kProgram))) EXPECT_NEAR(p, 1.0 / in::kNumClasses, 1e-12);
}

TEST(Transformer, OrderSensitive) {
  nx::ParamStore store;
  std::mt19937_64 rng(2);
  bl::TransformerClassifier m(store, small(), vocab().size(), in::kNumClasses, rng);
  EXPECT_GT(max_diff(probs(m, input(kProgram)), probs(m, input(kSwapped))), 1e-9);
}

TEST(Lstm, OrderSensitive) {
  nx::ParamStore store;
  std::mt19937_64 rng(3);
  bl::LstmClassifier m(store, small(), 8, 2, vocab().size(), in::kNumClasses, rng);
  EXPECT_GT(max_diff(probs(m, input(kProgram)), probs(m, input(kSwapped))), 1e-9);
}

TEST(Lstm, SingleNodeDependsOnlyOnThatEmbedding) {
  nx::ParamStore store;
  std::mt19937_64 rng(4);
  bl::LstmClassifier m(store, small(), 8, 2, vocab().size(), in::kNumClasses, rng);
  nx::Tape t1, t2;
  const std::vector<double> e{0.1, -0.2, 0.3, 0.0, 0.5, -0.7, 0.2, 0.9};
  const nx::Var a = m.classify(t1, constant(t1, 1, 8, e));
  const nx::Var b = m.classify(t2, constant(t2, 1, 8, e));
  EXPECT_EQ(row(a), row(b));
  nx::Tape t3;
  std::vector<double> e2 = e;
  e2[0] += 1.0;
  EXPECT_GT(max_diff(row(a), row(m.classify(t3, constant(t3, 1, 8, e2)))), 1e-9);
}

TEST(Mil, HandComputedTwoLinePhi) {
  // 2 lines x 3 classes.
  const std::vector<double> phi{0.5, -1.0, 2.0, 1.5, 0.25, -0.5};
  auto at = [&](int l, int k) { return phi[l * 3 + k]; };
  auto lse = [](double a, double b) { return std::log(std::exp(a) + std::exp(b)); };

  {
    nx::Tape tape;
    const bl::MilOutput o = bl::mil_aggregate(constant(tape, 2, 3, phi), bl::Aggregation::kLogSumExp);
    double z = 0.0;
    for (int k = 0; k < 3; ++k) z += std::exp(lse(at(0, k), at(1, k)));
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(o.class_log_probs.value()[k], lse(at(0, k), at(1, k)) - std::log(z), 1e-12);
    }
    const double s0 = std::exp(at(0, 1)) + std::exp(at(0, 2));
    const double s1 = std::exp(at(1, 1)) + std::exp(at(1, 2));
    EXPECT_NEAR(o.line_log_probs.value()[0], std::log(s0 / (s0 + s1)), 1e-12);
    EXPECT_NEAR(o.line_log_probs.value()[1], std::log(s1 / (s0 + s1)), 1e-12);
  }

  double p[2][3];
  for (int l = 0; l < 2; ++l) {
    double z = 0.0;
    for (int k = 0; k < 3; ++k) z += std::exp(at(l, k));
    for (int k = 0; k < 3; ++k) p[l][k] = std::exp(at(l, k)) / z;
  }
  for (bl::Aggregation a : {bl::Aggregation::kMax, bl::Aggregation::kMean}) {
    nx::Tape tape;
    const bl::MilOutput o = bl::mil_aggregate(constant(tape, 2, 3, phi), a);
    double q[3], z = 0.0;
    for (int k = 0; k < 3; ++k) {
      q[k] = a == bl::Aggregation::kMax ? std::max(p[0][k], p[1][k]) : (p[0][k] + p[1][k]) / 2;
      z += q[k];
    }
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(o.class_log_probs.value()[k], std::log(q[k] / z), 1e-12);
    const double e0 = 1 - p[0][0], e1 = 1 - p[1][0];
    EXPECT_NEAR(o.line_log_probs.value()[0], std::log(e0 / (e0 + e1)), 1e-12);
  }
}

TEST(Mil, LogSumExpShiftInvariant) {
  const std::vector<double> phi{0.3, -0.4, 1.1, 0.8, 0.0, -2.0};
  std::vector<double> shifted = phi;
  for (double& v : shifted) v += 3.7;
  nx::Tape tape;
  const auto a = bl::mil_aggregate(constant(tape, 2, 3, phi), bl::Aggregation::kLogSumExp);
  const auto b = bl::mil_aggregate(constant(tape, 2, 3, shifted), bl::Aggregation::kLogSumExp);
  EXPECT_LT(max_diff(row(a.class_log_probs), row(b.class_log_probs)), 1e-12);
  EXPECT_LT(max_diff(row(a.line_log_probs), row(b.line_log_probs)), 1e-12);
}

TEST(Mil, LogSumExpMonotone) {
  const std::vector<double> phi{0.3, -0.4, 1.1, 0.8, 0.0, -2.0};
  for (int k = 0; k < 3; ++k) {
    std::vector<double> up = phi;
    up[3 + k] += 0.5;
    nx::Tape tape;
    const auto a = bl::mil_aggregate(constant(tape, 2, 3, phi), bl::Aggregation::kLogSumExp);
    const auto b = bl::mil_aggregate(constant(tape, 2, 3, up), bl::Aggregation::kLogSumExp);
    EXPECT_GT(b.class_log_probs.value()[k], a.class_log_probs.value()[k]);
  }
}

TEST(Mil, SingleLineMaxIsPerLineSoftmax) {
  const std::vector<double> phi{0.2, 1.0, -0.3};
  nx::Tape tape;
  const nx::Var x = constant(tape, 1, 3, phi);
  const auto o = bl::mil_aggregate(x, bl::Aggregation::kMax);
  EXPECT_LT(max_diff(row(o.class_log_probs), row(nx::log_softmax(x))), 1e-12);
  EXPECT_NEAR(o.line_log_probs.value()[0], 0.0, 1e-12);
}

TEST(Mil, LinesCoverStatements) {
  nx::ParamStore store;
  std::mt19937_64 rng(5);
  bl::MilClassifier m(store, small(), {}, vocab().size(), in::kNumClasses, rng);
  nx::Tape tape;
  const bl::Output out = m.forward(tape, input(kProgram));
  ASSERT_EQ(out.lines.size(), 3u);
  double total = 0.0;
  for (std::size_t i = 0; i < out.lines.size(); ++i) {
    EXPECT_EQ(out.lines[i].first, static_cast<int>(i) + 1);
    total += out.lines[i].second;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Mil, LocalityMatters) {
  nx::ParamStore store;
  std::mt19937_64 rng(6);
  bl::MilConfig local{en::Locality::kLocal, bl::Aggregation::kMean};
  bl::MilClassifier a(store, small(), local, vocab().size(), in::kNumClasses, rng);
  nx::ParamStore store2;
  std::mt19937_64 rng2(6);
  bl::MilConfig global{en::Locality::kGlobal, bl::Aggregation::kMean};
  bl::MilClassifier b(store2, small(), global, vocab().size(), in::kNumClasses, rng2);
  EXPECT_GT(max_diff(probs(a, input(kProgram)), probs(b, input(kProgram))), 1e-9);
}

TEST(Aggregation, NamesRoundTrip) {
  for (bl::Aggregation a : {bl::Aggregation::kLogSumExp, bl::Aggregation::kMax, bl::Aggregation::kMean}) {
    EXPECT_EQ(bl::parse_aggregation(bl::aggregation_name(a)), a);
  }
  EXPECT_FALSE(bl::parse_aggregation("sum").has_value());
}

enum class Kind { kTransformer, kLstm, kMilLse, kMilMax, kMilMean };

class BaselineGradient : public ::testing::TestWithParam<Kind> {};

TEST_P(BaselineGradient, MatchesFiniteDifferences) {
  nx::ParamStore store;
  std::mt19937_64 rng(7);
  std::unique_ptr<bl::Classifier> m;
  const int v = vocab().size();
  switch (GetParam()) {
    case Kind::kTransformer: m = std::make_unique<bl::TransformerClassifier>(store, small(), v, in::kNumClasses, rng); break;
    case Kind::kLstm: m = std::make_unique<bl::LstmClassifier>(store, small(), 8, 2, v, in::kNumClasses, rng); break;
    case Kind::kMilLse: m = std::make_unique<bl::MilClassifier>(store, small(), bl::MilConfig{en::Locality::kLocal, bl::Aggregation::kLogSumExp}, v, in::kNumClasses, rng); break;
    case Kind::kMilMax: m = std::make_unique<bl::MilClassifier>(store, small(), bl::MilConfig{en::Locality::kGlobal, bl::Aggregation::kMax}, v, in::kNumClasses, rng); break;
    case Kind::kMilMean: m = std::make_unique<bl::MilClassifier>(store, small(), bl::MilConfig{en::Locality::kLocal, bl::Aggregation::kMean}, v, in::kNumClasses, rng); break;
  }
  const ig::ModelInput x = input(kProgram);
  auto loss = [&](nx::Tape& tape) { return nx::scale(nx::pick(m->forward(tape, x).log_probs, 0, 3), -1.0); };
  const nx::GradCheckResult r = nx::grad_check(loss, store.all(), 1e-3, nx::Stencil::kFourPoint);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(All, BaselineGradient,
                         ::testing::Values(Kind::kTransformer, Kind::kLstm, Kind::kMilLse,
                                           Kind::kMilMax, Kind::kMilMean));

TEST(IpagnnAdapter, ExceptionVariantLocalizes) {
  nx::ParamStore store;
  std::mt19937_64 rng(8);
  ig::ModelConfig cfg;
  cfg.encoder = small();
  cfg.hidden = 8;
  bl::IpagnnClassifier m(store, cfg, vocab().size(), in::kNumClasses, rng);
  nx::Tape tape;
  const bl::Output out = m.forward(tape, input(kProgram));
  EXPECT_EQ(out.log_probs.cols(), in::kNumClasses);
  EXPECT_EQ(out.lines.size(), 3u);
}
