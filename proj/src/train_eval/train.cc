#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "ipa/minilang.h"
#include "ipa/numerics/checkpoint.h"
#include "ipa/train_eval.h"
#include "json.hpp"

namespace ipa::train_eval {

namespace ml = ipa::minilang;

namespace {

constexpr const char* kVocabKey = "vocab";
constexpr const char* kConfigPrefix = "config.";

bool is_ipagnn(ModelKind k) { return k == ModelKind::kIpagnn || k == ModelKind::kExceptionIpagnn; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint64_t out[1];
  seq.generate(reinterpret_cast<std::uint32_t*>(out), reinterpret_cast<std::uint32_t*>(out + 1));
  return out[0];
}

// Snapshot of every parameter value.
std::vector<nx::Tensor> snapshot(const nx::ParamStore& store) {
  std::vector<nx::Tensor> out;
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(store[i].value);
  return out;
}

void restore(nx::ParamStore& store, const std::vector<nx::Tensor>& values) {
  for (std::size_t i = 0; i < store.size(); ++i) store[i].value = values[i];
}

}  // namespace

bool Model::uses_description() const {
  return is_ipagnn(config.model_kind) && config.modulation.method != ig::Modulation::kNone;
}

ig::Modulation Model::input_modulation() const {
  return uses_description() ? config.modulation.method : ig::Modulation::kNone;
}

ig::ModelInput Model::prepare(const std::string& source, const std::string& description) const {
  const std::optional<std::string> desc =
      uses_description() ? std::optional<std::string>(description) : std::nullopt;
  return ig::prepare_input(ml::parse(source), desc, vocab, input_modulation(), config.loop_budget,
                           config.encoder.max_len);
}

bl::Output Model::forward(nx::Tape& tape, const ig::ModelInput& input) const {
  return classifier->forward(tape, input);
}

Model build_model(const TrainConfig& config, en::Vocabulary vocab) {
  config.validate();
  Model m;
  m.config = config;
  m.vocab = std::move(vocab);
  m.store = std::make_unique<nx::ParamStore>();
  std::mt19937_64 rng(config.seed);
  const int v = m.vocab.size();
  const int classes = interp::kNumClasses;
  switch (config.model_kind) {
    case ModelKind::kIpagnn:
    case ModelKind::kExceptionIpagnn: {
      ig::ModelConfig mc;
      mc.exceptions = config.model_kind == ModelKind::kExceptionIpagnn;
      mc.encoder = config.encoder;
      mc.hidden = config.hidden_size;
      mc.rnn_layers = config.rnn_layers;
      mc.modulation = config.modulation;
      m.classifier = std::make_unique<bl::IpagnnClassifier>(*m.store, mc, v, classes, rng);
      break;
    }
    case ModelKind::kTransformer:
      m.classifier = std::make_unique<bl::TransformerClassifier>(*m.store, config.encoder, v, classes, rng);
      break;
    case ModelKind::kLstm:
      m.classifier = std::make_unique<bl::LstmClassifier>(*m.store, config.encoder, config.hidden_size,
                                                          config.rnn_layers, v, classes, rng);
      break;
    case ModelKind::kMil:
      m.classifier = std::make_unique<bl::MilClassifier>(*m.store, config.encoder, config.mil, v, classes, rng);
      break;
  }
  return m;
}

en::Vocabulary build_vocabulary(const co::Manifest& manifest, int cap) {
  std::vector<std::vector<std::string>> streams;
  for (const co::Example* e : manifest.split(co::Split::kTrain)) {
    streams.push_back(en::program_token_texts(ml::parse(e->source)));
    streams.push_back(ml::description_words(e->description));
  }
  return en::Vocabulary::build(streams, cap);
}

void save_model(const Model& model, const std::string& path) {
  std::map<std::string, std::string> meta;
  for (const auto& [k, v] : model.config.to_map()) meta[kConfigPrefix + k] = v;
  std::vector<std::string> tokens;
  for (int i = 0; i < model.vocab.size(); ++i) tokens.push_back(model.vocab.token(i));
  meta[kVocabKey] = nlohmann::json(tokens).dump();
  nx::save_checkpoint(path, *model.store, meta);
}

Model load_model(const std::string& path) {
  const nx::Checkpoint ckpt = nx::load_checkpoint(path);
  std::map<std::string, std::string> kv;
  const std::string prefix = kConfigPrefix;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.rfind(prefix, 0) == 0) kv[k.substr(prefix.size())] = v;
  }
  const auto it = ckpt.meta.find(kVocabKey);
  if (it == ckpt.meta.end()) throw nx::CheckpointError("checkpoint has no vocabulary");
  std::string text;
  for (const std::string& t : nlohmann::json::parse(it->second).get<std::vector<std::string>>()) {
    text += t + "\n";
  }
  Model m = build_model(TrainConfig::from_map(kv), en::Vocabulary::deserialize(text));
  nx::restore_params(ckpt, *m.store);
  return m;
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "step,loss,val_accuracy,val_weighted_f1\n";
  char buf[128];
  for (const HistoryRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9f,%.6f,%.6f\n", r.step, r.loss, r.val_accuracy, r.val_weighted_f1);
    out += buf;
  }
  return out;
}

double gradient_norm(const nx::ParamStore& store) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const nx::Tensor& g = store[i].grad;
    for (std::size_t j = 0; j < g.size(); ++j) sq += g[j] * g[j];
  }
  return std::sqrt(sq);
}

double clip_gradients(nx::ParamStore& store, double max_norm) {
  const double norm = gradient_norm(store);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (nx::Parameter* p : store.all()) {
      for (std::size_t j = 0; j < p->grad.size(); ++j) p->grad[j] *= s;
    }
  }
  return norm;
}

TrainResult train(const TrainConfig& config, const co::Manifest& manifest, const TrainHooks& hooks) {
  config.validate();
  const auto train_split = manifest.split(co::Split::kTrain);
  if (train_split.empty()) throw std::invalid_argument("train split is empty");
  auto valid = manifest.split(co::Split::kValid);
  if (config.validation_limit > 0 && static_cast<int>(valid.size()) > config.validation_limit) {
    valid.resize(config.validation_limit);
  }

  TrainResult result{build_model(config, build_vocabulary(manifest, config.vocab_cap)), {}, 0};
  Model& model = result.model;
  nx::ParamStore& store = *model.store;

  std::map<const co::Example*, ig::ModelInput> inputs;
  for (const co::Example* e : train_split) inputs.emplace(e, model.prepare(e->source, e->description));

  std::optional<co::BalancedSampler> balanced;
  if (config.sampling == Sampling::kBalanced) balanced.emplace(manifest, co::Split::kTrain, config.seed);
  std::mt19937_64 uniform_rng(config.seed);

  auto next_batch = [&]() {
    if (balanced) return balanced->next_batch(config.batch_size);
    std::vector<const co::Example*> out;
    std::uniform_int_distribution<std::size_t> pick(0, train_split.size() - 1);
    for (int i = 0; i < config.batch_size; ++i) out.push_back(train_split[pick(uniform_rng)]);
    return out;
  };

  std::vector<nx::Tensor> best = snapshot(store);
  double best_f1 = -1.0;
  double loss_sum = 0.0;
  int loss_count = 0;

  auto validate = [&](int step) {
    HistoryRow row;
    row.step = step;
    row.loss = loss_count ? loss_sum / loss_count : 0.0;
    if (!valid.empty()) {
      const MetricsReport r = compute_metrics(predict_all(model, valid));
      row.val_accuracy = r.accuracy;
      row.val_weighted_f1 = r.weighted_f1;
    }
    if (row.val_weighted_f1 > best_f1) {
      best_f1 = row.val_weighted_f1;
      best = snapshot(store);
      result.best_step = step;
    }
    loss_sum = 0.0;
    loss_count = 0;
    result.history.push_back(row);
    if (hooks.on_validation) hooks.on_validation(row);
  };

  validate(0);
  for (int step = 1; step <= config.max_steps; ++step) {
    store.zero_grad();
    const auto batch = next_batch();
    double batch_loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const co::Example* e = batch[i];
      nx::Tape tape;
      tape.training = true;
      tape.rng.seed(mix_seed(config.seed, static_cast<std::uint64_t>(step) * 100003 + i));
      const bl::Output out = model.forward(tape, inputs.at(e));
      const nx::Var loss = nx::scale(nx::pick(out.log_probs, 0, e->target), -1.0 / batch.size());
      if (!std::isfinite(loss.scalar())) {
        throw NonFiniteLoss(e->id, "non-finite loss on example " + std::to_string(e->id));
      }
      batch_loss += loss.scalar();
      tape.backward(loss);
    }
    StepInfo info;
    info.step = step;
    info.loss = batch_loss;
    info.grad_norm = clip_gradients(store, config.clip_norm);
    info.clipped_norm = gradient_norm(store);
    if (config.learning_rate != 0.0) {
      for (nx::Parameter* p : store.all()) {
        for (std::size_t j = 0; j < p->value.size(); ++j) p->value[j] -= config.learning_rate * p->grad[j];
      }
    }
    loss_sum += batch_loss;
    ++loss_count;
    if (hooks.on_step) hooks.on_step(info);
    if (step % config.validate_every == 0 || step == config.max_steps) validate(step);
  }
  restore(store, best);
  store.zero_grad();
  return result;
}

}  // namespace ipa::train_eval
