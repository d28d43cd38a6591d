#ifndef IPA_TRAIN_EVAL_H_
#define IPA_TRAIN_EVAL_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipa/baselines.h"
#include "ipa/corpus.h"
#include "ipa/encoder.h"
#include "ipa/ipagnn.h"
#include "ipa/numerics/tape.h"

namespace ipa::train_eval {

namespace nx = ipa::numerics;
namespace en = ipa::encoder;
namespace ig = ipa::ipagnn;
namespace bl = ipa::baselines;
namespace co = ipa::corpus;

enum class ModelKind { kIpagnn, kExceptionIpagnn, kTransformer, kLstm, kMil };
const char* model_kind_name(ModelKind k);
std::optional<ModelKind> parse_model_kind(const std::string& name);

enum class Sampling { kBalanced, kUniform };

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(int example_id, const std::string& what)
      : std::runtime_error(what), example_id(example_id) {}
  int example_id;
};

struct TrainConfig {
  double learning_rate = 0.1;
  double clip_norm = 1.0;
  int max_steps = 20000;
  int batch_size = 32;
  std::uint64_t seed = 0;
  ModelKind model_kind = ModelKind::kExceptionIpagnn;
  ig::ModulationConfig modulation;
  en::EncoderConfig encoder;
  int hidden_size = 16;
  int rnn_layers = 2;
  bl::MilConfig mil;
  int loop_budget = 2;
  int vocab_cap = 512;
  int validate_every = 500;
  // Validation examples used during training; 0 means the whole split.
  int validation_limit = 0;
  Sampling sampling = Sampling::kBalanced;
  // Restricts values to the published hyperparameter grids.
  bool grid = false;

  void validate() const;
  // Flat `key = value` lines.
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig load(const std::string& path);
  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

struct Model {
  TrainConfig config;
  en::Vocabulary vocab;
  std::unique_ptr<nx::ParamStore> store;
  std::unique_ptr<bl::Classifier> classifier;

  bool uses_description() const;
  ig::Modulation input_modulation() const;
  ig::ModelInput prepare(const std::string& source, const std::string& description) const;
  bl::Output forward(nx::Tape& tape, const ig::ModelInput& input) const;
};

// Fresh model with parameters drawn from config.seed.
Model build_model(const TrainConfig& config, en::Vocabulary vocab);
en::Vocabulary build_vocabulary(const co::Manifest& manifest, int cap);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

struct HistoryRow {
  int step = 0;
  double loss = 0.0;
  double val_accuracy = 0.0;
  double val_weighted_f1 = 0.0;
};
std::string history_csv(const std::vector<HistoryRow>& rows);

struct StepInfo {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;       // before clipping
  double clipped_norm = 0.0;    // after clipping
};

struct TrainResult {
  Model model;  // best parameters by validation weighted F1
  std::vector<HistoryRow> history;
  int best_step = 0;
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(const HistoryRow&)> on_validation;
};

TrainResult train(const TrainConfig& config, const co::Manifest& manifest,
                  const TrainHooks& hooks = {});

// Scales gradients in place so their global L2 norm is at most max_norm
// (no-op when max_norm <= 0); returns the norm before clipping.
double clip_gradients(nx::ParamStore& store, double max_norm);
double gradient_norm(const nx::ParamStore& store);

struct ClassStats {
  int support = 0;
  int predicted = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  int examples = 0;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double weighted_error_f1 = 0.0;
  double balanced_accuracy = 0.0;
  // Only for models that localize; over error examples with a known line.
  std::optional<double> localization_accuracy;
  int localization_examples = 0;
  std::vector<ClassStats> per_class;
  std::vector<std::vector<int>> confusion;  // [target][predicted]

  std::string table() const;
  std::string csv() const;
};

struct Prediction {
  int target = 0;
  int predicted = 0;
  std::optional<int> error_line;
  std::optional<int> predicted_line;
};

MetricsReport compute_metrics(const std::vector<Prediction>& predictions,
                              int num_classes = interp::kNumClasses);

Prediction predict(const Model& model, const co::Example& example);
std::vector<Prediction> predict_all(const Model& model,
                                    const std::vector<const co::Example*>& examples);
MetricsReport evaluate(const Model& model, const co::Manifest& manifest, co::Split split);

}  // namespace ipa::train_eval

#endif  // IPA_TRAIN_EVAL_H_
