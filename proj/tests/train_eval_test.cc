#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ipa/train_eval.h"

namespace te = ipa::train_eval;
namespace co = ipa::corpus;
namespace in = ipa::interp;

namespace {

te::TrainConfig tiny(te::ModelKind kind = te::ModelKind::kExceptionIpagnn) {
  te::TrainConfig c;
  c.model_kind = kind;
  c.encoder.embed_dim = 8;
  c.encoder.mlp_dim = 16;
  c.hidden_size = 8;
  c.batch_size = 4;
  c.max_steps = 5;
  c.validate_every = 2;
  c.validation_limit = 10;
  return c;
}

co::Manifest small_corpus() {
  co::CorpusOptions o;
  o.seed = 3;
  o.size = 200;
  return co::generate_corpus(o);
}

te::Prediction pred(int target, int predicted) {
  te::Prediction p;
  p.target = target;
  p.predicted = predicted;
  return p;
}

std::string read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, TextRoundTrip) {
  te::TrainConfig c = tiny(te::ModelKind::kMil);
  c.learning_rate = 0.03;
  c.mil.aggregation = ipa::baselines::Aggregation::kMax;
  c.seed = 42;
  const te::TrainConfig back = te::TrainConfig::from_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.learning_rate, 0.03);
  EXPECT_EQ(back.seed, 42u);
}

TEST(Config, ParsesCommentsAndRejectsJunk) {
  const auto c = te::TrainConfig::from_text("# comment\nlearning-rate = 0.3\n\nmodulation = film # inline\n");
  EXPECT_EQ(c.learning_rate, 0.3);
  EXPECT_EQ(c.modulation.method, ipa::ipagnn::Modulation::kFilm);
  EXPECT_THROW(te::TrainConfig::from_text("learning_rate = 0.1\n"), te::ConfigError);
  EXPECT_THROW(te::TrainConfig::from_text("max-steps = ten\n"), te::ConfigError);
  EXPECT_THROW(te::TrainConfig::from_text("seed = 1\nseed = 2\n"), te::ConfigError);
  EXPECT_THROW(te::TrainConfig::from_text("model-kind = transformer\nmodulation = film\n"), te::ConfigError);
}

TEST(Config, GridMode) {
  EXPECT_NO_THROW(te::TrainConfig::from_text("grid = true\nhidden-size = 64\nlearning-rate = 0.01\nclip-norm = 0.5\n"));
  EXPECT_THROW(te::TrainConfig::from_text("grid = true\nhidden-size = 64\nlearning-rate = 0.02\n"), te::ConfigError);
  EXPECT_THROW(te::TrainConfig::from_text("grid = true\nhidden-size = 16\n"), te::ConfigError);
}

TEST(Metrics, OraclePredictor) {
  std::vector<te::Prediction> p;
  for (int k = 0; k < in::kNumClasses; ++k) {
    for (int r = 0; r <= k; ++r) {
      te::Prediction x = pred(k, k);
      if (k) x.error_line = x.predicted_line = r + 1;
      p.push_back(x);
    }
  }
  const te::MetricsReport r = te::compute_metrics(p);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.weighted_f1, 1.0);
  EXPECT_DOUBLE_EQ(r.weighted_error_f1, 1.0);
  EXPECT_DOUBLE_EQ(r.balanced_accuracy, 1.0);
  ASSERT_TRUE(r.localization_accuracy.has_value());
  EXPECT_EQ(*r.localization_accuracy, 1.0);
}

TEST(Metrics, ConstantNoErrorPredictor) {
  std::vector<te::Prediction> p;
  for (int i = 0; i < 50; ++i) p.push_back(pred(0, 0));
  for (int i = 0; i < 50; ++i) p.push_back(pred(1 + i % 3, 0));
  const te::MetricsReport r = te::compute_metrics(p);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.weighted_error_f1, 0.0);
  EXPECT_FALSE(r.localization_accuracy.has_value());
}

TEST(Metrics, HandComputedWeightedF1) {
  // targets 0,1,1 ; predictions 0,1,0.
  // class 0: P=1/2 R=1 F1=2/3 ; class 1: P=1 R=1/2 F1=2/3.
  const te::MetricsReport r = te::compute_metrics({pred(0, 0), pred(1, 1), pred(1, 0)});
  EXPECT_NEAR(r.weighted_f1, 1.0 / 3 * 2.0 / 3 + 2.0 / 3 * 2.0 / 3, 1e-15);
  // Error examples only: class 1 has P=1 R=1/2.
  EXPECT_NEAR(r.weighted_error_f1, 2.0 / 3, 1e-15);
  EXPECT_NEAR(r.accuracy, 2.0 / 3, 1e-15);
  EXPECT_NEAR(r.balanced_accuracy, 0.75, 1e-15);
  EXPECT_EQ(r.confusion[1][0], 1);
}

TEST(Metrics, ConfusionRowsAndPermutationInvariance) {
  std::vector<te::Prediction> p{pred(0, 2), pred(2, 2), pred(3, 0), pred(3, 3), pred(5, 1), pred(0, 0)};
  const te::MetricsReport a = te::compute_metrics(p);
  std::reverse(p.begin(), p.end());
  const te::MetricsReport b = te::compute_metrics(p);
  EXPECT_EQ(a.csv(), b.csv());
  for (int k = 0; k < in::kNumClasses; ++k) {
    int sum = 0;
    for (int v : a.confusion[k]) sum += v;
    EXPECT_EQ(sum, a.per_class[k].support);
  }
}

TEST(Metrics, ErrorOnlySplit) {
  const te::MetricsReport r = te::compute_metrics({pred(1, 1), pred(2, 1), pred(3, 3), pred(2, 2)});
  EXPECT_DOUBLE_EQ(r.weighted_f1, r.weighted_error_f1);
  EXPECT_LE(r.weighted_error_f1, 1.0);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const co::Manifest m = small_corpus();
  te::TrainConfig c = tiny();
  c.learning_rate = 0.0;
  const te::TrainResult r = te::train(c, m);
  const te::Model fresh = te::build_model(c, te::build_vocabulary(m, c.vocab_cap));
  ASSERT_EQ(fresh.store->size(), r.model.store->size());
  for (std::size_t i = 0; i < fresh.store->size(); ++i) {
    const auto& a = (*fresh.store)[i].value;
    const auto& b = (*r.model.store)[i].value;
    ASSERT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double))) << (*fresh.store)[i].name;
  }
}

TEST(Train, ClippingBound) {
  const co::Manifest m = small_corpus();
  te::TrainConfig c = tiny(te::ModelKind::kTransformer);
  c.clip_norm = 0.5;
  c.learning_rate = 0.3;
  c.max_steps = 20;
  int clipped = 0;
  te::TrainHooks hooks;
  hooks.on_step = [&](const te::StepInfo& s) {
    EXPECT_LE(s.clipped_norm, 0.5 + 1e-9);
    clipped += s.grad_norm > 0.5;
  };
  te::train(c, m, hooks);
  EXPECT_GT(clipped, 0);
}

TEST(Train, OverfitsSingleExample) {
  co::Manifest m = small_corpus();
  co::Example only;
  for (const co::Example& e : m.examples) {
    if (e.target != 0 && e.split == co::Split::kTrain) {
      only = e;
      break;
    }
  }
  m.examples = {only};
  te::TrainConfig c = tiny();
  c.sampling = te::Sampling::kUniform;
  c.batch_size = 1;
  c.learning_rate = 0.3;
  c.max_steps = 2000;
  c.validate_every = 100;
  double last = 1e9;
  int stop = 0;
  te::TrainHooks hooks;
  hooks.on_step = [&](const te::StepInfo& s) {
    last = s.loss;
    if (!stop && s.loss < 0.01) stop = s.step;
  };
  te::train(c, m, hooks);
  EXPECT_GT(stop, 0);
  EXPECT_LT(last, 0.01);
}

TEST(Train, HistoryAndBestCheckpoint) {
  const co::Manifest m = small_corpus();
  te::TrainConfig c = tiny();
  c.max_steps = 6;
  c.validate_every = 3;
  const te::TrainResult r = te::train(c, m);
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.history[0].step, 0);
  EXPECT_EQ(r.history[2].step, 6);
  double best = -1;
  int best_step = 0;
  for (const auto& row : r.history) {
    if (row.val_weighted_f1 > best) {
      best = row.val_weighted_f1;
      best_step = row.step;
    }
  }
  EXPECT_EQ(r.best_step, best_step);
  const std::string csv = te::history_csv(r.history);
  EXPECT_EQ(csv.rfind("step,loss,val_accuracy,val_weighted_f1\n", 0), 0u);
}

TEST(Train, ReproducibleAndCheckpointRoundTrip) {
  const co::Manifest m = small_corpus();
  te::TrainConfig c = tiny();
  c.modulation.method = ipa::ipagnn::Modulation::kCrossAttention;
  const te::TrainResult a = te::train(c, m);
  const te::TrainResult b = te::train(c, m);
  const std::string pa = testing::TempDir() + "a.ckpt", pb = testing::TempDir() + "b.ckpt";
  te::save_model(a.model, pa);
  te::save_model(b.model, pb);
  EXPECT_EQ(read(pa), read(pb));
  EXPECT_EQ(te::history_csv(a.history), te::history_csv(b.history));

  const te::Model loaded = te::load_model(pa);
  EXPECT_EQ(loaded.config.to_text(), c.to_text());
  for (const co::Example* e : m.split(co::Split::kTest)) {
    const te::Prediction x = te::predict(a.model, *e), y = te::predict(loaded, *e);
    EXPECT_EQ(x.predicted, y.predicted);
    EXPECT_EQ(x.predicted_line, y.predicted_line);
  }
}

TEST(Train, EveryModelKindRuns) {
  const co::Manifest m = small_corpus();
  for (te::ModelKind k : {te::ModelKind::kIpagnn, te::ModelKind::kExceptionIpagnn, te::ModelKind::kTransformer,
                          te::ModelKind::kLstm, te::ModelKind::kMil}) {
    te::TrainConfig c = tiny(k);
    c.max_steps = 2;
    const te::TrainResult r = te::train(c, m);
    const te::MetricsReport rep = te::evaluate(r.model, m, co::Split::kTest);
    EXPECT_EQ(rep.examples, static_cast<int>(m.split(co::Split::kTest).size()));
    const bool localizes = k == te::ModelKind::kExceptionIpagnn || k == te::ModelKind::kMil;
    EXPECT_EQ(rep.localization_accuracy.has_value(), localizes) << te::model_kind_name(k);
  }
}
