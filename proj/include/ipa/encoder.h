#ifndef IPA_ENCODER_H_
#define IPA_ENCODER_H_

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ipa/minilang.h"
#include "ipa/numerics/tape.h"

namespace ipa::encoder {

namespace nx = ipa::numerics;

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBosDocstring = 2;

  Vocabulary();

  // Most frequent tokens first (ties broken lexicographically), up to `cap`
  // entries including the specials.
  static Vocabulary build(const std::vector<std::vector<std::string>>& streams, int cap = 512);

  int add(const std::string& token);
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }

  // One token per line; line number is the id.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  std::string serialize() const;
  static Vocabulary deserialize(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

class SequenceTooLong : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TokenizedProgram {
  std::vector<int> ids;
  // Per statement of the (possibly docstring-augmented) program.
  std::vector<std::pair<int, int>> spans;
  // Statement index of each token.
  std::vector<int> segment;
  int unknown = 0;
};

// With `docstring` set, the description becomes a leading docstring
// statement; `program` must then already be the augmented program returned
// by minilang::inject_docstring.
TokenizedProgram tokenize(const minilang::Program& program, const Vocabulary& vocab,
                          int max_len = 512);

// Description words prefixed with the docstring marker id.
std::vector<int> tokenize_description(const std::string& description, const Vocabulary& vocab,
                                      int max_len = 512);

// Token streams used to build a vocabulary.
std::vector<std::string> program_token_texts(const minilang::Program& program);

enum class Locality { kLocal, kGlobal };

struct EncoderConfig {
  Locality mode = Locality::kLocal;
  nx::Pooling pooling = nx::Pooling::kMean;
  int layers = 1;
  int heads = 2;
  int embed_dim = 32;
  int mlp_dim = 64;
  double dropout = 0.0;
  double attention_dropout = 0.0;
  int max_len = 512;

  void validate() const;
};

const char* locality_name(Locality mode);
std::optional<Locality> parse_locality(const std::string& name);
const char* pooling_name(nx::Pooling pooling);
std::optional<nx::Pooling> parse_pooling(const std::string& name);

// Pre-norm Transformer encoder with learned absolute positions.
class TransformerEncoder {
 public:
  TransformerEncoder(nx::ParamStore& store, const std::string& prefix, const EncoderConfig& config,
                     int vocab_size, std::mt19937_64& rng);

  // [S x D] token encodings. In local mode a token attends only to tokens
  // with the same segment id.
  nx::Var encode(nx::Tape& tape, const std::vector<int>& ids, const std::vector<int>& segment,
                 Locality mode) const;
  nx::Var encode(nx::Tape& tape, const std::vector<int>& ids, const std::vector<int>& segment) const {
    return encode(tape, ids, segment, config_.mode);
  }

  const EncoderConfig& config() const { return config_; }

 private:
  struct Layer {
    nx::Parameter* ln1_gain;
    nx::Parameter* ln1_bias;
    nx::Parameter* wq;
    nx::Parameter* wk;
    nx::Parameter* wv;
    nx::Parameter* wo;
    nx::Parameter* ln2_gain;
    nx::Parameter* ln2_bias;
    nx::Parameter* w1;
    nx::Parameter* b1;
    nx::Parameter* w2;
    nx::Parameter* b2;
  };

  EncoderConfig config_;
  nx::Parameter* token_embed_;
  nx::Parameter* pos_embed_;
  nx::Parameter* final_gain_;
  nx::Parameter* final_bias_;
  std::vector<Layer> layers_;
};

// Multi-head attention of `query` rows over `memory` rows. mask, if given,
// is [Sq x Sk] with nonzero entries blocked.
struct AttentionWeights {
  nx::Parameter* wq;
  nx::Parameter* wk;
  nx::Parameter* wv;
  nx::Parameter* wo;
};
AttentionWeights add_attention(nx::ParamStore& store, const std::string& prefix, int query_dim,
                               int memory_dim, int model_dim, std::mt19937_64& rng);
nx::Var attend(nx::Tape& tape, const AttentionWeights& w, nx::Var query, nx::Var memory, int heads,
               const nx::Tensor* mask = nullptr, double attention_dropout = 0.0,
               std::vector<nx::Tensor>* weights_out = nullptr);

// Per CFG node embeddings: pooled spans for statement nodes (markers pool
// an empty span to zeros) and learned rows for n_exit / n_error.
class NodeEmbedder {
 public:
  NodeEmbedder(nx::ParamStore& store, const std::string& prefix, const EncoderConfig& config,
               int vocab_size, std::mt19937_64& rng);

  nx::Var embed(nx::Tape& tape, const TokenizedProgram& tokens,
                const minilang::ControlFlowGraph& cfg) const;
  const TransformerEncoder& encoder() const { return encoder_; }

 private:
  TransformerEncoder encoder_;
  nx::Parameter* terminal_;
};

}  // namespace ipa::encoder

#endif  // IPA_ENCODER_H_
