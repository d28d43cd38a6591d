#ifndef IPA_IPAGNN_H_
#define IPA_IPAGNN_H_

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ipa/encoder.h"
#include "ipa/minilang.h"
#include "ipa/numerics/lstm.h"
#include "ipa/numerics/tape.h"

// Instruction Pointer Attention GNN and its exception-aware variant: a soft
// instruction pointer is propagated over the statement-level CFG for T(x)
// steps, with an RNN proposing per-node hidden states.
namespace ipa::ipagnn {

namespace nx = ipa::numerics;
namespace ml = ipa::minilang;
namespace en = ipa::encoder;

inline constexpr int kMaxSteps = 174;

struct StepLimit {
  int steps = 1;
  // Per-node trip weight (0 for nodes that never execute).
  std::vector<int> weights;
};

// T(x) = min(cap, 1 + sum of per-node weights), where a node's weight is the
// product of `loop_budget` over the loops enclosing it.
StepLimit step_limit(const ml::ControlFlowGraph& cfg, const ml::Program& program,
                     int loop_budget = 2, int cap = kMaxSteps);

enum class Modulation { kNone, kDocstring, kFilm, kCrossAttention };
const char* modulation_name(Modulation m);
std::optional<Modulation> parse_modulation(const std::string& name);

struct ModulationConfig {
  Modulation method = Modulation::kNone;
  int heads = 1;
};

class MissingDescription : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MassLeak : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything a model needs about one example.
struct ModelInput {
  ml::Program program;  // docstring-augmented under Modulation::kDocstring
  ml::ControlFlowGraph cfg;
  en::TokenizedProgram tokens;
  std::vector<int> description;  // empty when no description is used
  int steps = 1;
};

ModelInput prepare_input(const ml::Program& program, const std::optional<std::string>& description,
                         const en::Vocabulary& vocab, Modulation method, int loop_budget = 2,
                         int max_len = 512);

struct ModelConfig {
  bool exceptions = true;
  en::EncoderConfig encoder;
  int hidden = 16;
  int rnn_layers = 2;
  ModulationConfig modulation;
};

// Soft decision at one node: probability of raising, and how the remaining
// mass splits between the true and false successors.
struct Decision {
  double raise = 0.0;
  double take_true = 1.0;
};
using DecisionOracle = std::function<Decision(int t, int node)>;

struct SoftExecution {
  // p[t]: [1 x N]; h[t]: [N x state]; t = 0..T.
  std::vector<nx::Var> p;
  std::vector<nx::Var> h;
  // decisions[t - 1]: [N x 3] transition probabilities to (r(n), n1, n2)
  // used to go from step t - 1 to t. When n1 == n2 the whole successor mass
  // sits in the n1 column. Inert nodes put 1 on n1 (their self loop).
  std::vector<nx::Tensor> decisions;
  // [1 x classes]; class 0 is "no error".
  nx::Var log_probs;
};

class IpagnnModel {
 public:
  IpagnnModel(nx::ParamStore& store, const ModelConfig& config, int vocab_size, int num_classes,
              std::mt19937_64& rng);

  SoftExecution run(nx::Tape& tape, const ModelInput& input,
                    const DecisionOracle* oracle = nullptr) const;

  const ModelConfig& config() const { return config_; }
  int state_dim() const { return rnn_.state_dim(); }

 private:
  nx::Var modulate(nx::Tape& tape, nx::Var embed, nx::Var top, nx::Var desc_vec,
                   nx::Var desc_tokens) const;

  ModelConfig config_;
  int num_classes_;
  en::NodeEmbedder embedder_;
  nx::StackedLstm rnn_;
  nx::Parameter* raise_w_ = nullptr;
  nx::Parameter* raise_b_ = nullptr;
  nx::Parameter* branch_w_;
  nx::Parameter* branch_b_;
  nx::Parameter* class_w_;
  nx::Parameter* class_b_;
  nx::Parameter* film_w_ = nullptr;
  nx::Parameter* film_b_ = nullptr;
  en::AttentionWeights cross_{};
};

// Probability of reaching each of the two terminal nodes is normalized over
// the pair; the error class distribution comes from the state at n_error.
// exit_mass/error_mass: [1 x 1]; class_logits: [1 x K].
nx::Var exception_log_probs(nx::Var exit_mass, nx::Var error_mass, nx::Var class_logits);

// Provenance recursion over absolute masses. Returns, per
// node, the mass at n_error at step T attributed to an exception first
// raised at that node.
std::vector<double> exception_provenance(const SoftExecution& exec,
                                         const ml::ControlFlowGraph& cfg);

// Provenance merged per source line (for-header node pairs share a line),
// sorted by line; the docstring line 0 and terminals are excluded.
std::vector<std::pair<int, double>> provenance_by_line(const std::vector<double>& provenance,
                                                       const ml::ControlFlowGraph& cfg);
int predicted_line(const std::vector<std::pair<int, double>>& by_line);

// One-hot decisions that follow a discrete node sequence.
DecisionOracle oracle_from_path(const ml::ControlFlowGraph& cfg, std::vector<int> nodes);

// Rows: nodes 0..N-1 (n_exit and n_error last); columns t = 0..T.
std::string heatmap_csv(const SoftExecution& exec);
// `line,probability` rows.
std::string provenance_csv(const std::vector<std::pair<int, double>>& by_line);
// Inverses of the two writers; values round-trip exactly.
std::vector<std::vector<double>> parse_heatmap_csv(const std::string& csv);
std::vector<std::pair<int, double>> parse_provenance_csv(const std::string& csv);

}  // namespace ipa::ipagnn

#endif  // IPA_IPAGNN_H_
