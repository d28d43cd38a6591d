#include "ipa/baselines.h"

#include <algorithm>
#include <cmath>

namespace ipa::baselines {

namespace {

nx::Var dense(nx::Tape& tape, nx::Var x, nx::Parameter* w, nx::Parameter* b) {
  return nx::add_row(nx::matmul(x, tape.param(*w)), tape.param(*b));
}

// log(x / sum(x)) for a positive [1 x n] row.
nx::Var normalize_log(nx::Var x) {
  nx::Tape& tape = *x.tape;
  const nx::Var ones = tape.constant(nx::Tensor::matrix(1, x.cols(), 1.0));
  return nx::log(x) - nx::matmul(nx::log(nx::sum_all(x)), ones);
}

std::vector<std::pair<int, double>> line_table(nx::Var line_log_probs,
                                               const std::vector<int>& lines) {
  std::vector<std::pair<int, double>> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const double p = std::exp(line_log_probs.value()[i]);
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == lines[i]; });
    if (it == out.end()) {
      out.emplace_back(lines[i], p);
    } else {
      it->second += p;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TransformerClassifier::TransformerClassifier(nx::ParamStore& store, const en::EncoderConfig& config,
                                             int vocab_size, int num_classes, std::mt19937_64& rng)
    : encoder_(store, "transformer", config, vocab_size, rng),
      w_(&store.add_uniform("transformer/head/w", config.embed_dim, num_classes, rng)),
      b_(&store.add("transformer/head/b", nx::Tensor::matrix(1, num_classes))) {}

Output TransformerClassifier::forward(nx::Tape& tape, const ig::ModelInput& input) const {
  const nx::Var enc = encoder_.encode(tape, input.tokens.ids, input.tokens.segment, en::Locality::kGlobal);
  return {nx::log_softmax(dense(tape, nx::reduce_mean(enc, 0), w_, b_)), {}};
}

LstmClassifier::LstmClassifier(nx::ParamStore& store, const en::EncoderConfig& config, int hidden,
                               int layers, int vocab_size, int num_classes, std::mt19937_64& rng)
    : embedder_(store, "lstm/embed", config, vocab_size, rng),
      rnn_(store, "lstm/rnn", config.embed_dim, hidden, layers, rng),
      w_(&store.add_uniform("lstm/head/w", hidden, num_classes, rng)),
      b_(&store.add("lstm/head/b", nx::Tensor::matrix(1, num_classes))) {}

nx::Var LstmClassifier::classify(nx::Tape& tape, nx::Var nodes) const {
  const auto bound = rnn_.bind(tape);
  nx::Var state = tape.constant(nx::Tensor::matrix(1, rnn_.state_dim()));
  for (int i = 0; i < nodes.rows(); ++i) {
    state = rnn_.step(bound, state, nx::slice_rows(nodes, i, 1));
  }
  return nx::log_softmax(dense(tape, rnn_.output(state), w_, b_));
}

Output LstmClassifier::forward(nx::Tape& tape, const ig::ModelInput& input) const {
  const nx::Var all = embedder_.embed(tape, input.tokens, input.cfg);
  std::vector<int> rows;
  for (int n = 0; n < input.cfg.size(); ++n) {
    if (!input.cfg.is_inert(n)) rows.push_back(n);
  }
  return {classify(tape, nx::gather_rows(all, rows)), {}};
}

const char* aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::kLogSumExp: return "logsumexp";
    case Aggregation::kMax: return "max";
    case Aggregation::kMean: return "mean";
  }
  return "?";
}

std::optional<Aggregation> parse_aggregation(const std::string& name) {
  for (Aggregation a : {Aggregation::kLogSumExp, Aggregation::kMax, Aggregation::kMean}) {
    if (name == aggregation_name(a)) return a;
  }
  return std::nullopt;
}

MilOutput mil_aggregate(nx::Var phi, Aggregation aggregation) {
  const int classes = phi.cols();
  MilOutput out;
  if (aggregation == Aggregation::kLogSumExp) {
    out.class_log_probs = nx::log_softmax(nx::logsumexp(phi, 0));
    const nx::Var errors = nx::logsumexp(nx::slice_cols(phi, 1, classes - 1), 1);
    out.line_log_probs = nx::log_softmax(nx::transpose(errors));
    return out;
  }
  const nx::Var per_line = nx::softmax(phi, 1);
  const nx::Var pooled =
      aggregation == Aggregation::kMax ? nx::reduce_max(per_line, 0) : nx::reduce_mean(per_line, 0);
  out.class_log_probs = normalize_log(pooled);
  out.line_log_probs = normalize_log(nx::transpose(nx::one_minus(nx::slice_cols(per_line, 0, 1))));
  return out;
}

MilClassifier::MilClassifier(nx::ParamStore& store, const en::EncoderConfig& config,
                             const MilConfig& mil, int vocab_size, int num_classes,
                             std::mt19937_64& rng)
    : encoder_(store, "mil", config, vocab_size, rng),
      mil_(mil),
      w_(&store.add_uniform("mil/head/w", config.embed_dim, num_classes, rng)),
      b_(&store.add("mil/head/b", nx::Tensor::matrix(1, num_classes))) {}

Output MilClassifier::forward(nx::Tape& tape, const ig::ModelInput& input) const {
  const nx::Var enc = encoder_.encode(tape, input.tokens.ids, input.tokens.segment, mil_.locality);
  std::vector<std::pair<int, int>> spans;
  std::vector<int> lines;
  for (std::size_t i = 0; i < input.program.statements.size(); ++i) {
    const auto& span = input.tokens.spans[i];
    if (input.program.statements[i].line <= 0 || span.first == span.second) continue;
    spans.push_back(span);
    lines.push_back(input.program.statements[i].line);
  }
  const nx::Var pooled = nx::pool_spans(enc, spans, encoder_.config().pooling);
  const MilOutput agg = mil_aggregate(dense(tape, pooled, w_, b_), mil_.aggregation);
  return {agg.class_log_probs, line_table(agg.line_log_probs, lines)};
}

IpagnnClassifier::IpagnnClassifier(nx::ParamStore& store, const ig::ModelConfig& config,
                                   int vocab_size, int num_classes, std::mt19937_64& rng)
    : model_(store, config, vocab_size, num_classes, rng) {}

Output IpagnnClassifier::forward(nx::Tape& tape, const ig::ModelInput& input) const {
  ig::SoftExecution exec = model_.run(tape, input);
  Output out{exec.log_probs, {}};
  if (model_.config().exceptions) {
    out.lines = ig::provenance_by_line(ig::exception_provenance(exec, input.cfg), input.cfg);
  }
  return out;
}

}  // namespace ipa::baselines
