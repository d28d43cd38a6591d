#ifndef IPA_BASELINES_H_
#define IPA_BASELINES_H_

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ipa/encoder.h"
#include "ipa/ipagnn.h"
#include "ipa/numerics/lstm.h"
#include "ipa/numerics/tape.h"

namespace ipa::baselines {

namespace nx = ipa::numerics;
namespace en = ipa::encoder;
namespace ig = ipa::ipagnn;

// What every classifier returns for one example.
struct Output {
  nx::Var log_probs;  // [1 x classes]
  // Per-line localization scores (line, probability), sorted by line; empty
  // for models that do not localize.
  std::vector<std::pair<int, double>> lines;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Output forward(nx::Tape& tape, const ig::ModelInput& input) const = 0;
};

// Mean-pooled Transformer over all program tokens.
class TransformerClassifier : public Classifier {
 public:
  TransformerClassifier(nx::ParamStore& store, const en::EncoderConfig& config, int vocab_size,
                        int num_classes, std::mt19937_64& rng);
  Output forward(nx::Tape& tape, const ig::ModelInput& input) const override;

 private:
  en::TransformerEncoder encoder_;
  nx::Parameter* w_;
  nx::Parameter* b_;
};

// Two-layer LSTM over the statement-node embeddings in node order.
class LstmClassifier : public Classifier {
 public:
  LstmClassifier(nx::ParamStore& store, const en::EncoderConfig& config, int hidden, int layers,
                 int vocab_size, int num_classes, std::mt19937_64& rng);
  Output forward(nx::Tape& tape, const ig::ModelInput& input) const override;
  // Classifies a given [rows x D] node embedding sequence.
  nx::Var classify(nx::Tape& tape, nx::Var nodes) const;

 private:
  en::NodeEmbedder embedder_;
  nx::StackedLstm rnn_;
  nx::Parameter* w_;
  nx::Parameter* b_;
};

enum class Aggregation { kLogSumExp, kMax, kMean };
const char* aggregation_name(Aggregation a);
std::optional<Aggregation> parse_aggregation(const std::string& name);

struct MilConfig {
  en::Locality locality = en::Locality::kLocal;
  Aggregation aggregation = Aggregation::kLogSumExp;
};

struct MilOutput {
  nx::Var class_log_probs;  // [1 x C]
  nx::Var line_log_probs;   // [1 x L]
};
// phi: [L x C] per-line class scores, column 0 being "no error".
MilOutput mil_aggregate(nx::Var phi, Aggregation aggregation);

// Multiple-instance Transformer: one instance per source statement.
class MilClassifier : public Classifier {
 public:
  MilClassifier(nx::ParamStore& store, const en::EncoderConfig& config, const MilConfig& mil,
                int vocab_size, int num_classes, std::mt19937_64& rng);
  Output forward(nx::Tape& tape, const ig::ModelInput& input) const override;

 private:
  en::TransformerEncoder encoder_;
  MilConfig mil_;
  nx::Parameter* w_;
  nx::Parameter* b_;
};

// Exception-aware or plain IPA-GNN behind the common interface; the former
// localizes through exception provenance.
class IpagnnClassifier : public Classifier {
 public:
  IpagnnClassifier(nx::ParamStore& store, const ig::ModelConfig& config, int vocab_size,
                   int num_classes, std::mt19937_64& rng);
  Output forward(nx::Tape& tape, const ig::ModelInput& input) const override;
  const ig::IpagnnModel& model() const { return model_; }

 private:
  ig::IpagnnModel model_;
};

}  // namespace ipa::baselines

#endif  // IPA_BASELINES_H_
