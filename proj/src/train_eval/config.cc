#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ipa/train_eval.h"

namespace ipa::train_eval {

namespace {

std::string fmt(double v) {
  char buf[40];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(d)) throw ConfigError(key + ": not a number: " + v);
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw ConfigError(key + ": not an integer: " + v);
  return i;
}

bool in_grid(double v, std::initializer_list<double> grid) {
  for (double g : grid) {
    if (v == g) return true;
  }
  return false;
}

}  // namespace

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kIpagnn: return "ipagnn";
    case ModelKind::kExceptionIpagnn: return "exception-ipagnn";
    case ModelKind::kTransformer: return "transformer";
    case ModelKind::kLstm: return "lstm";
    case ModelKind::kMil: return "mil";
  }
  return "?";
}

std::optional<ModelKind> parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::kIpagnn, ModelKind::kExceptionIpagnn, ModelKind::kTransformer,
                      ModelKind::kLstm, ModelKind::kMil}) {
    if (name == model_kind_name(k)) return k;
  }
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0)) throw ConfigError("learning-rate must be >= 0");
  if (!(clip_norm >= 0)) throw ConfigError("clip-norm must be >= 0");
  if (max_steps < 0) throw ConfigError("max-steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch-size must be >= 1");
  if (hidden_size < 1) throw ConfigError("hidden-size must be >= 1");
  if (rnn_layers < 1) throw ConfigError("rnn-layers must be >= 1");
  if (loop_budget < 1) throw ConfigError("loop-budget must be >= 1");
  if (validate_every < 1) throw ConfigError("validate-every must be >= 1");
  if (validation_limit < 0) throw ConfigError("validation-limit must be >= 0");
  if (vocab_cap < 4) throw ConfigError("vocab-cap must be >= 4");
  if (modulation.heads < 1) throw ConfigError("modulation-heads must be >= 1");
  try {
    encoder.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (model_kind != ModelKind::kIpagnn && model_kind != ModelKind::kExceptionIpagnn &&
      modulation.method != ig::Modulation::kNone) {
    throw ConfigError(std::string("modulation applies only to IPA-GNN models, not ") +
                      model_kind_name(model_kind));
  }
  if (grid) {
    if (!in_grid(learning_rate, {0.01, 0.03, 0.1, 0.3})) throw ConfigError("learning-rate outside grid");
    if (!in_grid(clip_norm, {0, 0.5, 1, 2})) throw ConfigError("clip-norm outside grid");
    if (!in_grid(hidden_size, {64, 128, 256})) throw ConfigError("hidden-size outside grid");
    if (batch_size != 32) throw ConfigError("batch-size outside grid");
    if (rnn_layers != 2) throw ConfigError("rnn-layers outside grid");
    if (!in_grid(modulation.heads, {1, 2})) throw ConfigError("modulation-heads outside grid");
    if (!in_grid(encoder.dropout, {0, 0.1})) throw ConfigError("dropout outside grid");
    if (!in_grid(encoder.attention_dropout, {0, 0.1})) throw ConfigError("attention-dropout outside grid");
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"learning-rate", fmt(learning_rate)},
      {"clip-norm", fmt(clip_norm)},
      {"max-steps", std::to_string(max_steps)},
      {"batch-size", std::to_string(batch_size)},
      {"seed", std::to_string(seed)},
      {"model-kind", model_kind_name(model_kind)},
      {"modulation", ig::modulation_name(modulation.method)},
      {"modulation-heads", std::to_string(modulation.heads)},
      {"encoder-mode", en::locality_name(encoder.mode)},
      {"encoder-pooling", en::pooling_name(encoder.pooling)},
      {"encoder-layers", std::to_string(encoder.layers)},
      {"encoder-heads", std::to_string(encoder.heads)},
      {"embed-dim", std::to_string(encoder.embed_dim)},
      {"mlp-dim", std::to_string(encoder.mlp_dim)},
      {"dropout", fmt(encoder.dropout)},
      {"attention-dropout", fmt(encoder.attention_dropout)},
      {"max-len", std::to_string(encoder.max_len)},
      {"hidden-size", std::to_string(hidden_size)},
      {"rnn-layers", std::to_string(rnn_layers)},
      {"mil-locality", en::locality_name(mil.locality)},
      {"mil-aggregation", bl::aggregation_name(mil.aggregation)},
      {"loop-budget", std::to_string(loop_budget)},
      {"vocab-cap", std::to_string(vocab_cap)},
      {"validate-every", std::to_string(validate_every)},
      {"validation-limit", std::to_string(validation_limit)},
      {"sampling", sampling == Sampling::kBalanced ? "balanced" : "uniform"},
      {"grid", grid ? "true" : "false"},
  };
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  for (const auto& [key, v] : kv) {
    if (key == "learning-rate") {
      c.learning_rate = to_double(key, v);
    } else if (key == "clip-norm") {
      c.clip_norm = to_double(key, v);
    } else if (key == "max-steps") {
      c.max_steps = static_cast<int>(to_int(key, v));
    } else if (key == "batch-size") {
      c.batch_size = static_cast<int>(to_int(key, v));
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(to_int(key, v));
    } else if (key == "model-kind") {
      const auto k = parse_model_kind(v);
      if (!k) throw ConfigError("unknown model-kind: " + v);
      c.model_kind = *k;
    } else if (key == "modulation") {
      const auto m = ig::parse_modulation(v);
      if (!m) throw ConfigError("unknown modulation: " + v);
      c.modulation.method = *m;
    } else if (key == "modulation-heads") {
      c.modulation.heads = static_cast<int>(to_int(key, v));
    } else if (key == "encoder-mode") {
      const auto m = en::parse_locality(v);
      if (!m) throw ConfigError("unknown encoder-mode: " + v);
      c.encoder.mode = *m;
    } else if (key == "encoder-pooling") {
      const auto p = en::parse_pooling(v);
      if (!p) throw ConfigError("unknown encoder-pooling: " + v);
      c.encoder.pooling = *p;
    } else if (key == "encoder-layers") {
      c.encoder.layers = static_cast<int>(to_int(key, v));
    } else if (key == "encoder-heads") {
      c.encoder.heads = static_cast<int>(to_int(key, v));
    } else if (key == "embed-dim") {
      c.encoder.embed_dim = static_cast<int>(to_int(key, v));
    } else if (key == "mlp-dim") {
      c.encoder.mlp_dim = static_cast<int>(to_int(key, v));
    } else if (key == "dropout") {
      c.encoder.dropout = to_double(key, v);
    } else if (key == "attention-dropout") {
      c.encoder.attention_dropout = to_double(key, v);
    } else if (key == "max-len") {
      c.encoder.max_len = static_cast<int>(to_int(key, v));
    } else if (key == "hidden-size") {
      c.hidden_size = static_cast<int>(to_int(key, v));
    } else if (key == "rnn-layers") {
      c.rnn_layers = static_cast<int>(to_int(key, v));
    } else if (key == "mil-locality") {
      const auto m = en::parse_locality(v);
      if (!m) throw ConfigError("unknown mil-locality: " + v);
      c.mil.locality = *m;
    } else if (key == "mil-aggregation") {
      const auto a = bl::parse_aggregation(v);
      if (!a) throw ConfigError("unknown mil-aggregation: " + v);
      c.mil.aggregation = *a;
    } else if (key == "loop-budget") {
      c.loop_budget = static_cast<int>(to_int(key, v));
    } else if (key == "vocab-cap") {
      c.vocab_cap = static_cast<int>(to_int(key, v));
    } else if (key == "validate-every") {
      c.validate_every = static_cast<int>(to_int(key, v));
    } else if (key == "validation-limit") {
      c.validation_limit = static_cast<int>(to_int(key, v));
    } else if (key == "sampling") {
      if (v != "balanced" && v != "uniform") throw ConfigError("unknown sampling: " + v);
      c.sampling = v == "balanced" ? Sampling::kBalanced : Sampling::kUniform;
    } else if (key == "grid") {
      if (v != "true" && v != "false") throw ConfigError("grid must be true or false");
      c.grid = v == "true";
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  c.validate();
  return c;
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (kv.count(key)) throw ConfigError("duplicate key: " + key);
    kv[key] = trim(line.substr(eq + 1));
  }
  return from_map(kv);
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

}  // namespace ipa::train_eval
