#include "ipa/encoder.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ipa::encoder {

namespace ml = ipa::minilang;

// ---- vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<bos-docstring>");
}

int Vocabulary::add(const std::string& token) {
  if (token.empty() || token.find('\n') != std::string::npos) {
    throw std::invalid_argument("vocabulary tokens must be non-empty single-line strings");
  }
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& streams, int cap) {
  std::map<std::string, long> counts;
  for (const auto& s : streams)
    for (const std::string& t : s) ++counts[t];
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= cap) break;
    v.add(tok);
  }
  return v;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const std::string& t : tokens_) out += t + "\n";
  return out;
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
  Vocabulary v;
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    if (n < 3) {
      if (line != v.token(n)) throw std::runtime_error("vocabulary file lacks special tokens");
    } else {
      if (v.contains(line)) throw std::runtime_error("duplicate vocabulary entry: " + line);
      v.add(line);
    }
    ++n;
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << serialize();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

// ---- tokenization -----------------------------------------------------------

std::vector<std::string> program_token_texts(const ml::Program& program) {
  std::vector<std::string> out;
  for (const ml::Token& t : ml::flat_tokens(program)) out.push_back(t.text);
  return out;
}

TokenizedProgram tokenize(const ml::Program& program, const Vocabulary& vocab, int max_len) {
  TokenizedProgram out;
  out.spans = ml::statement_spans(program);
  for (std::size_t s = 0; s < program.statements.size(); ++s) {
    for (const ml::Token& t : program.statements[s].tokens) {
      const int id = vocab.id(t.text);
      if (id == Vocabulary::kUnk) ++out.unknown;
      out.ids.push_back(id);
      out.segment.push_back(static_cast<int>(s));
    }
  }
  if (static_cast<int>(out.ids.size()) > max_len) {
    throw SequenceTooLong("program has " + std::to_string(out.ids.size()) + " tokens, limit " +
                          std::to_string(max_len));
  }
  return out;
}

std::vector<int> tokenize_description(const std::string& description, const Vocabulary& vocab,
                                      int max_len) {
  std::vector<int> ids{Vocabulary::kBosDocstring};
  for (const std::string& w : ml::description_words(description)) ids.push_back(vocab.id(w));
  if (static_cast<int>(ids.size()) > max_len) {
    throw SequenceTooLong("description has " + std::to_string(ids.size()) + " tokens");
  }
  return ids;
}

// ---- config -----------------------------------------------------------------

void EncoderConfig::validate() const {
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
    throw std::invalid_argument("embed_dim must be a positive multiple of heads");
  }
  if (layers < 0 || mlp_dim <= 0 || max_len <= 0) throw std::invalid_argument("bad encoder sizes");
  if (dropout < 0 || dropout >= 1 || attention_dropout < 0 || attention_dropout >= 1) {
    throw std::invalid_argument("dropout must lie in [0, 1)");
  }
}

const char* locality_name(Locality mode) { return mode == Locality::kLocal ? "local" : "global"; }

std::optional<Locality> parse_locality(const std::string& name) {
  if (name == "local") return Locality::kLocal;
  if (name == "global") return Locality::kGlobal;
  return std::nullopt;
}

const char* pooling_name(nx::Pooling pooling) {
  switch (pooling) {
    case nx::Pooling::kFirst: return "first";
    case nx::Pooling::kSum: return "sum";
    case nx::Pooling::kMean: return "mean";
    case nx::Pooling::kMax: return "max";
  }
  return "?";
}

std::optional<nx::Pooling> parse_pooling(const std::string& name) {
  for (nx::Pooling p : {nx::Pooling::kFirst, nx::Pooling::kSum, nx::Pooling::kMean, nx::Pooling::kMax}) {
    if (name == pooling_name(p)) return p;
  }
  return std::nullopt;
}

// ---- attention --------------------------------------------------------------

AttentionWeights add_attention(nx::ParamStore& store, const std::string& prefix, int query_dim,
                               int memory_dim, int model_dim, std::mt19937_64& rng) {
  return AttentionWeights{&store.add_uniform(prefix + "/wq", query_dim, model_dim, rng),
                          &store.add_uniform(prefix + "/wk", memory_dim, model_dim, rng),
                          &store.add_uniform(prefix + "/wv", memory_dim, model_dim, rng),
                          &store.add_uniform(prefix + "/wo", model_dim, model_dim, rng)};
}

nx::Var attend(nx::Tape& tape, const AttentionWeights& w, nx::Var query, nx::Var memory, int heads,
               const nx::Tensor* mask, double attention_dropout,
               std::vector<nx::Tensor>* weights_out) {
  const nx::Var q = nx::matmul(query, tape.param(*w.wq));
  const nx::Var k = nx::matmul(memory, tape.param(*w.wk));
  const nx::Var v = nx::matmul(memory, tape.param(*w.wv));
  const int model = q.cols();
  if (model % heads != 0) throw std::invalid_argument("attention width not divisible by heads");
  const int dh = model / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<nx::Var> outs;
  for (int h = 0; h < heads; ++h) {
    const nx::Var qh = nx::slice_cols(q, h * dh, dh);
    const nx::Var kh = nx::slice_cols(k, h * dh, dh);
    const nx::Var vh = nx::slice_cols(v, h * dh, dh);
    nx::Var scores = nx::scale(nx::matmul_nt(qh, kh), inv);
    if (mask) scores = nx::masked_fill(scores, *mask, -1e30);
    nx::Var att = nx::softmax(scores, 1);
    if (weights_out) weights_out->push_back(att.value());
    att = nx::dropout(att, attention_dropout);
    outs.push_back(nx::matmul(att, vh));
  }
  const nx::Var joined = heads == 1 ? outs[0] : nx::concat_cols(outs);
  return nx::matmul(joined, tape.param(*w.wo));
}

// ---- transformer ------------------------------------------------------------

TransformerEncoder::TransformerEncoder(nx::ParamStore& store, const std::string& prefix,
                                       const EncoderConfig& config, int vocab_size,
                                       std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const int d = config.embed_dim;
  token_embed_ = &store.add_uniform_shape(prefix + "/token_embed", {vocab_size, d}, 1.0, rng);
  pos_embed_ = &store.add_uniform_shape(prefix + "/pos_embed", {config.max_len, d}, 0.1, rng);
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = prefix + "/layer" + std::to_string(l);
    Layer layer;
    layer.ln1_gain = &store.add(p + "/ln1_gain", nx::Tensor::matrix(1, d, 1.0));
    layer.ln1_bias = &store.add(p + "/ln1_bias", nx::Tensor::matrix(1, d));
    layer.wq = &store.add_uniform(p + "/wq", d, d, rng);
    layer.wk = &store.add_uniform(p + "/wk", d, d, rng);
    layer.wv = &store.add_uniform(p + "/wv", d, d, rng);
    layer.wo = &store.add_uniform(p + "/wo", d, d, rng);
    layer.ln2_gain = &store.add(p + "/ln2_gain", nx::Tensor::matrix(1, d, 1.0));
    layer.ln2_bias = &store.add(p + "/ln2_bias", nx::Tensor::matrix(1, d));
    layer.w1 = &store.add_uniform(p + "/w1", d, config.mlp_dim, rng);
    layer.b1 = &store.add(p + "/b1", nx::Tensor::matrix(1, config.mlp_dim));
    layer.w2 = &store.add_uniform(p + "/w2", config.mlp_dim, d, rng);
    layer.b2 = &store.add(p + "/b2", nx::Tensor::matrix(1, d));
    layers_.push_back(layer);
  }
  final_gain_ = &store.add(prefix + "/final_gain", nx::Tensor::matrix(1, d, 1.0));
  final_bias_ = &store.add(prefix + "/final_bias", nx::Tensor::matrix(1, d));
}

nx::Var TransformerEncoder::encode(nx::Tape& tape, const std::vector<int>& ids,
                                   const std::vector<int>& segment, Locality mode) const {
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw std::invalid_argument("cannot encode an empty sequence");
  if (n > config_.max_len) throw SequenceTooLong("sequence of " + std::to_string(n) + " tokens");
  if (segment.size() != ids.size()) {
    throw nx::ShapeError("segment ids: " + std::to_string(segment.size()) + " vs " +
                         std::to_string(n) + " tokens");
  }
  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;
  nx::Var x = nx::embedding_lookup(tape.param(*token_embed_), ids) +
              nx::embedding_lookup(tape.param(*pos_embed_), positions);
  x = nx::dropout(x, config_.dropout);

  nx::Tensor mask;
  const bool masked = mode == Locality::kLocal;
  if (masked) {
    mask = nx::Tensor::matrix(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) mask.at(i, j) = segment[i] == segment[j] ? 0.0 : 1.0;
  }
  for (const Layer& l : layers_) {
    const nx::Var y = nx::layer_norm(x, tape.param(*l.ln1_gain), tape.param(*l.ln1_bias));
    const AttentionWeights w{l.wq, l.wk, l.wv, l.wo};
    const nx::Var a = attend(tape, w, y, y, config_.heads, masked ? &mask : nullptr,
                             config_.attention_dropout);
    x = x + nx::dropout(a, config_.dropout);
    const nx::Var z = nx::layer_norm(x, tape.param(*l.ln2_gain), tape.param(*l.ln2_bias));
    nx::Var m = nx::gelu(nx::add_row(nx::matmul(z, tape.param(*l.w1)), tape.param(*l.b1)));
    m = nx::add_row(nx::matmul(m, tape.param(*l.w2)), tape.param(*l.b2));
    x = x + nx::dropout(m, config_.dropout);
  }
  return nx::layer_norm(x, tape.param(*final_gain_), tape.param(*final_bias_));
}

// ---- node embeddings --------------------------------------------------------

NodeEmbedder::NodeEmbedder(nx::ParamStore& store, const std::string& prefix,
                           const EncoderConfig& config, int vocab_size, std::mt19937_64& rng)
    : encoder_(store, prefix + "/encoder", config, vocab_size, rng) {
  terminal_ = &store.add_uniform_shape(prefix + "/terminal", {2, config.embed_dim}, 1.0, rng);
}

nx::Var NodeEmbedder::embed(nx::Tape& tape, const TokenizedProgram& tokens,
                            const ml::ControlFlowGraph& cfg) const {
  const nx::Var x = encoder_.encode(tape, tokens.ids, tokens.segment);
  std::vector<std::pair<int, int>> spans;
  for (int n = 0; n < cfg.size(); ++n) {
    if (!cfg.is_terminal(n)) spans.push_back(cfg.nodes[n].span);
  }
  const nx::Var pooled = nx::pool_spans(x, spans, encoder_.config().pooling);
  return nx::concat_rows({pooled, tape.param(*terminal_)});
}

}  // namespace ipa::encoder
