#include <cstdio>

#include "ipa/train_eval.h"

namespace ipa::train_eval {

namespace {

// Per-class F1 weighted by support over the given examples.
double weighted_f1(const std::vector<Prediction>& preds, int num_classes,
                   std::vector<ClassStats>* stats_out) {
  std::vector<ClassStats> stats(num_classes);
  std::vector<int> hits(num_classes, 0);
  for (const Prediction& p : preds) {
    ++stats[p.target].support;
    ++stats[p.predicted].predicted;
    if (p.target == p.predicted) ++hits[p.target];
  }
  double out = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    ClassStats& s = stats[k];
    s.precision = s.predicted ? static_cast<double>(hits[k]) / s.predicted : 0.0;
    s.recall = s.support ? static_cast<double>(hits[k]) / s.support : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    if (!preds.empty()) out += static_cast<double>(s.support) / preds.size() * s.f1;
  }
  if (stats_out) *stats_out = std::move(stats);
  return out;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<Prediction>& predictions, int num_classes) {
  MetricsReport r;
  r.examples = static_cast<int>(predictions.size());
  r.confusion.assign(num_classes, std::vector<int>(num_classes, 0));
  int correct = 0;
  for (const Prediction& p : predictions) {
    ++r.confusion[p.target][p.predicted];
    correct += p.target == p.predicted;
  }
  r.accuracy = predictions.empty() ? 0.0 : static_cast<double>(correct) / predictions.size();
  r.weighted_f1 = weighted_f1(predictions, num_classes, &r.per_class);

  std::vector<Prediction> errors;
  for (const Prediction& p : predictions) {
    if (p.target != 0) errors.push_back(p);
  }
  r.weighted_error_f1 = weighted_f1(errors, num_classes, nullptr);

  int present = 0;
  double recall = 0.0;
  for (const ClassStats& s : r.per_class) {
    if (s.support == 0) continue;
    ++present;
    recall += s.recall;
  }
  r.balanced_accuracy = present ? recall / present : 0.0;

  int located = 0, hits = 0;
  bool localizes = false;
  for (const Prediction& p : predictions) {
    if (p.predicted_line) localizes = true;
    if (p.target == 0 || !p.error_line) continue;
    ++located;
    hits += p.predicted_line && *p.predicted_line == *p.error_line;
  }
  r.localization_examples = located;
  if (localizes && located > 0) r.localization_accuracy = static_cast<double>(hits) / located;
  return r;
}

Prediction predict(const Model& model, const co::Example& example) {
  nx::Tape tape;
  const bl::Output out = model.forward(tape, model.prepare(example.source, example.description));
  Prediction p;
  p.target = example.target;
  p.error_line = example.error_line;
  const nx::Tensor& lp = out.log_probs.value();
  for (int k = 1; k < out.log_probs.cols(); ++k) {
    if (lp[k] > lp[p.predicted]) p.predicted = k;
  }
  const int line = ig::predicted_line(out.lines);
  if (line >= 0) p.predicted_line = line;
  return p;
}

std::vector<Prediction> predict_all(const Model& model,
                                    const std::vector<const co::Example*>& examples) {
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const co::Example* e : examples) out.push_back(predict(model, *e));
  return out;
}

MetricsReport evaluate(const Model& model, const co::Manifest& manifest, co::Split split) {
  const auto examples = manifest.split(split);
  if (examples.empty()) throw std::invalid_argument(std::string("split ") + co::split_name(split) + " is empty");
  return compute_metrics(predict_all(model, examples));
}

std::string MetricsReport::table() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-18s %8s %10s %8s %8s\n", "class", "support", "precision", "recall", "f1");
  out += buf;
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    const ClassStats& s = per_class[k];
    std::snprintf(buf, sizeof buf, "%-18s %8d %10.4f %8.4f %8.4f\n", interp::class_name(static_cast<int>(k)).c_str(),
                  s.support, s.precision, s.recall, s.f1);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "\nexamples           %d\naccuracy           %.4f\nweighted f1        %.4f\n"
                "weighted error f1  %.4f\nbalanced accuracy  %.4f\n",
                examples, accuracy, weighted_f1, weighted_error_f1, balanced_accuracy);
  out += buf;
  if (localization_accuracy) {
    std::snprintf(buf, sizeof buf, "localization       %.4f (%d examples)\n", *localization_accuracy,
                  localization_examples);
  } else {
    std::snprintf(buf, sizeof buf, "localization       n/a\n");
  }
  out += buf;
  out += "\nconfusion (rows: target, columns: predicted)\n";
  for (const auto& row : confusion) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? " " : "") + std::to_string(row[c]);
    out += "\n";
  }
  return out;
}

std::string MetricsReport::csv() const {
  std::string out = "metric,value\n";
  char buf[128];
  auto row = [&](const std::string& name, double v) {
    std::snprintf(buf, sizeof buf, "%s,%.9g\n", name.c_str(), v);
    out += buf;
  };
  row("examples", examples);
  row("accuracy", accuracy);
  row("weighted_f1", weighted_f1);
  row("weighted_error_f1", weighted_error_f1);
  row("balanced_accuracy", balanced_accuracy);
  if (localization_accuracy) row("localization_accuracy", *localization_accuracy);
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    const std::string name = interp::class_name(static_cast<int>(k));
    row("support/" + name, per_class[k].support);
    row("precision/" + name, per_class[k].precision);
    row("recall/" + name, per_class[k].recall);
    row("f1/" + name, per_class[k].f1);
  }
  return out;
}

}  // namespace ipa::train_eval
