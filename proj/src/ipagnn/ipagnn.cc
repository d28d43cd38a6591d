#include "ipa/ipagnn.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace ipa::ipagnn {

namespace {

constexpr double kCarryEps = 1e-12;
constexpr double kTiny = 1e-30;

bool opens_loop(ml::StatementKind k) {
  return k == ml::StatementKind::kWhileHeader || k == ml::StatementKind::kForHeader;
}

bool opens_block(ml::StatementKind k) {
  switch (k) {
    case ml::StatementKind::kIfHeader:
    case ml::StatementKind::kElseMarker:
    case ml::StatementKind::kWhileHeader:
    case ml::StatementKind::kForHeader:
    case ml::StatementKind::kTryMarker:
    case ml::StatementKind::kExceptHeader:
      return true;
    default:
      return false;
  }
}

}  // namespace

StepLimit step_limit(const ml::ControlFlowGraph& cfg, const ml::Program& program, int loop_budget,
                     int cap) {
  if (loop_budget < 1) throw std::invalid_argument("loop budget must be at least 1");
  // Weight of each statement: product of budgets of the loops around it.
  std::vector<long long> stmt_weight(program.statements.size(), 1);
  struct Open {
    int indent;
    bool loop;
  };
  std::vector<Open> stack;
  for (std::size_t i = 0; i < program.statements.size(); ++i) {
    const ml::Statement& s = program.statements[i];
    while (!stack.empty() && stack.back().indent >= s.indent) stack.pop_back();
    long long w = 1;
    for (const Open& o : stack) {
      if (o.loop) w = std::min<long long>(w * loop_budget, 1LL << 40);
    }
    stmt_weight[i] = w;
    if (opens_block(s.kind)) stack.push_back(Open{s.indent, opens_loop(s.kind)});
  }
  StepLimit out;
  out.weights.assign(cfg.size(), 0);
  long long total = 1;  // entering n_exit
  for (int n = 0; n < cfg.size(); ++n) {
    if (cfg.is_inert(n)) continue;
    const long long w = stmt_weight[cfg.nodes[n].statement];
    out.weights[n] = static_cast<int>(std::min<long long>(w, cap));
    total = std::min<long long>(total + w, 1LL << 40);
  }
  out.steps = static_cast<int>(std::min<long long>(total, cap));
  return out;
}

const char* modulation_name(Modulation m) {
  switch (m) {
    case Modulation::kNone: return "none";
    case Modulation::kDocstring: return "docstring";
    case Modulation::kFilm: return "film";
    case Modulation::kCrossAttention: return "cross-attention";
  }
  return "?";
}

std::optional<Modulation> parse_modulation(const std::string& name) {
  for (Modulation m : {Modulation::kNone, Modulation::kDocstring, Modulation::kFilm,
                       Modulation::kCrossAttention}) {
    if (name == modulation_name(m)) return m;
  }
  return std::nullopt;
}

ModelInput prepare_input(const ml::Program& program, const std::optional<std::string>& description,
                         const en::Vocabulary& vocab, Modulation method, int loop_budget,
                         int max_len) {
  ModelInput in;
  if (method != Modulation::kNone && !description) {
    throw MissingDescription(std::string("modulation '") + modulation_name(method) +
                             "' needs a resource description");
  }
  in.program = method == Modulation::kDocstring ? ml::inject_docstring(program, *description) : program;
  in.cfg = ml::build_cfg(in.program);
  in.tokens = en::tokenize(in.program, vocab, max_len);
  if (method == Modulation::kFilm || method == Modulation::kCrossAttention) {
    in.description = en::tokenize_description(*description, vocab, max_len);
  }
  in.steps = step_limit(in.cfg, in.program, loop_budget).steps;
  return in;
}

// ---- model ------------------------------------------------------------------

IpagnnModel::IpagnnModel(nx::ParamStore& store, const ModelConfig& config, int vocab_size,
                         int num_classes, std::mt19937_64& rng)
    : config_(config),
      num_classes_(num_classes),
      embedder_(store, "embed", config.encoder, vocab_size, rng) {
  const int d = config.encoder.embed_dim;
  const int h = config.hidden;
  const Modulation m = config.modulation.method;
  const bool widened = m == Modulation::kFilm || m == Modulation::kCrossAttention;
  rnn_ = nx::StackedLstm(store, "rnn", widened ? 2 * d : d, h, config.rnn_layers, rng);
  if (config.exceptions) {
    raise_w_ = &store.add_uniform("raise/w", h, 2, rng);
    raise_b_ = &store.add("raise/b", nx::Tensor::matrix(1, 2));
  }
  branch_w_ = &store.add_uniform("branch/w", h, 2, rng);
  branch_b_ = &store.add("branch/b", nx::Tensor::matrix(1, 2));
  const int head_out = config.exceptions ? num_classes - 1 : num_classes;
  class_w_ = &store.add_uniform("head/w", rnn_.state_dim(), head_out, rng);
  class_b_ = &store.add("head/b", nx::Tensor::matrix(1, head_out));
  if (m == Modulation::kFilm) {
    film_w_ = &store.add_uniform("film/w", d + h, 2 * d, rng);
    film_b_ = &store.add("film/b", nx::Tensor::matrix(1, 2 * d));
  } else if (m == Modulation::kCrossAttention) {
    if (config.modulation.heads < 1 || d % config.modulation.heads != 0) {
      throw std::invalid_argument("cross-attention heads must divide the embedding size");
    }
    cross_ = en::add_attention(store, "cross", d + h, d, d, rng);
  }
}

nx::Var IpagnnModel::modulate(nx::Tape& tape, nx::Var embed, nx::Var top, nx::Var desc_vec,
                              nx::Var desc_tokens) const {
  const int d = config_.encoder.embed_dim;
  switch (config_.modulation.method) {
    case Modulation::kFilm: {
      const nx::Var z = nx::sigmoid(nx::add_row(
          nx::matmul(nx::concat_cols({embed, top}), tape.param(*film_w_)), tape.param(*film_b_)));
      const nx::Var beta = nx::slice_cols(z, 0, d);
      const nx::Var gamma = nx::slice_cols(z, d, d);
      return nx::concat_cols({nx::mul_row(beta, desc_vec) + gamma, embed});
    }
    case Modulation::kCrossAttention: {
      const nx::Var att = en::attend(tape, cross_, nx::concat_cols({embed, top}), desc_tokens,
                                     config_.modulation.heads);
      return nx::concat_cols({att, embed});
    }
    default:
      return embed;
  }
}

nx::Var exception_log_probs(nx::Var exit_mass, nx::Var error_mass, nx::Var class_logits) {
  nx::Tape& tape = *exit_mass.tape;
  const nx::Var pair = nx::add_scalar(nx::concat_cols({exit_mass, error_mass}), kTiny);
  const nx::Var log_pair = nx::log(pair) - nx::matmul(nx::log(nx::sum_all(pair)),
                                                      tape.constant(nx::Tensor::matrix(1, 2, 1.0)));
  const int k = class_logits.cols();
  const nx::Var spread = nx::matmul(nx::slice_cols(log_pair, 1, 1),
                                    tape.constant(nx::Tensor::matrix(1, k, 1.0)));
  return nx::concat_cols({nx::slice_cols(log_pair, 0, 1), spread + nx::log_softmax(class_logits)});
}

SoftExecution IpagnnModel::run(nx::Tape& tape, const ModelInput& input,
                               const DecisionOracle* oracle) const {
  const ml::ControlFlowGraph& cfg = input.cfg;
  const int n_nodes = cfg.size();
  const int state = rnn_.state_dim();
  const Modulation method = config_.modulation.method;

  const nx::Var embed = embedder_.embed(tape, input.tokens, cfg);
  nx::Var desc_vec, desc_tokens;
  if (method == Modulation::kFilm || method == Modulation::kCrossAttention) {
    if (input.description.empty()) throw MissingDescription("input carries no description tokens");
    const std::vector<int> seg(input.description.size(), 0);
    desc_tokens = embedder_.encoder().encode(tape, input.description, seg, en::Locality::kGlobal);
    desc_vec = nx::reduce_mean(desc_tokens, 0);
  }

  // Active nodes execute statements; inert nodes keep their mass.
  std::vector<int> active;
  nx::Tensor inert_mask = nx::Tensor::matrix(1, n_nodes);
  for (int n = 0; n < n_nodes; ++n) {
    if (cfg.is_inert(n)) {
      inert_mask.at(0, n) = 1.0;
    } else {
      active.push_back(n);
    }
  }
  const int na = static_cast<int>(active.size());
  const bool any_inert = na < n_nodes;

  // Flat scatter from the [na x 3] decision-mass matrix into [N x na].
  std::vector<int> src_index, dst_index;
  nx::Tensor branch_mask = nx::Tensor::matrix(na, 2);
  nx::Tensor single_fill = nx::Tensor::matrix(na, 2);
  for (int i = 0; i < na; ++i) {
    const ml::CfgNode& c = cfg.nodes[active[i]];
    if (config_.exceptions) {
      src_index.push_back(i * 3);
      dst_index.push_back(c.r * na + i);
    }
    src_index.push_back(i * 3 + 1);
    dst_index.push_back(c.n1 * na + i);
    if (c.n1 != c.n2) {
      src_index.push_back(i * 3 + 2);
      dst_index.push_back(c.n2 * na + i);
      branch_mask.at(i, 0) = branch_mask.at(i, 1) = 1.0;
    } else {
      single_fill.at(i, 0) = 1.0;
    }
  }

  SoftExecution exec;
  nx::Tensor p0 = nx::Tensor::matrix(1, n_nodes);
  p0.at(0, 0) = 1.0;
  exec.p.push_back(tape.constant(p0));
  exec.h.push_back(tape.constant(nx::Tensor::matrix(n_nodes, state)));

  const nx::StackedLstm::Bound bound = rnn_.bind(tape);
  const nx::Var embed_a = nx::gather_rows(embed, active);
  const nx::Var branch_w = tape.param(*branch_w_);
  const nx::Var branch_b = tape.param(*branch_b_);
  nx::Var raise_w, raise_b;
  if (config_.exceptions) {
    raise_w = tape.param(*raise_w_);
    raise_b = tape.param(*raise_b_);
  }

  for (int t = 1; t <= input.steps; ++t) {
    const nx::Var p_prev = exec.p.back();
    const nx::Var h_prev = exec.h.back();
    const nx::Var h_a = nx::gather_rows(h_prev, active);
    const nx::Var x = modulate(tape, embed_a, rnn_.output(h_a), desc_vec, desc_tokens);
    const nx::Var a1 = rnn_.step(bound, h_a, x);
    const nx::Var top = rnn_.output(a1);

    nx::Var dm;
    if (oracle) {
      nx::Tensor fixed = nx::Tensor::matrix(na, 3);
      for (int i = 0; i < na; ++i) {
        const Decision dec = (*oracle)(t, active[i]);
        const double raise = config_.exceptions ? dec.raise : 0.0;
        const bool branch = branch_mask.at(i, 0) > 0;
        fixed.at(i, 0) = raise;
        fixed.at(i, 1) = (1.0 - raise) * (branch ? dec.take_true : 1.0);
        fixed.at(i, 2) = branch ? (1.0 - raise) * (1.0 - dec.take_true) : 0.0;
      }
      dm = tape.constant(fixed);
    } else {
      const nx::Var split = nx::add_const(
          nx::mul_const(nx::softmax(nx::add_row(nx::matmul(top, branch_w), branch_b)), branch_mask),
          single_fill);
      if (config_.exceptions) {
        const nx::Var raise =
            nx::slice_cols(nx::softmax(nx::add_row(nx::matmul(top, raise_w), raise_b)), 0, 1);
        dm = nx::concat_cols({raise, nx::mul_col(split, nx::one_minus(raise))});
      } else {
        dm = nx::concat_cols({tape.constant(nx::Tensor::matrix(na, 1)), split});
      }
    }
    exec.decisions.push_back(nx::Tensor::matrix(n_nodes, 3));
    nx::Tensor& full = exec.decisions.back();
    for (int n = 0; n < n_nodes; ++n) {
      if (cfg.is_inert(n)) full.at(n, 1) = 1.0;
    }
    for (int i = 0; i < na; ++i)
      for (int c = 0; c < 3; ++c) full.at(active[i], c) = dm.value().at(i, c);

    const nx::Var p_a = nx::gather_rows(nx::transpose(p_prev), active);
    const nx::Var flow = nx::mul_col(dm, p_a);
    const nx::Var w = nx::scatter_add(flow, src_index, dst_index, n_nodes, na);
    nx::Var p_next = nx::transpose(nx::reduce_sum(w, 1));
    nx::Var num = nx::matmul(w, a1);
    if (any_inert) {
      const nx::Var keep = nx::mul_const(p_prev, inert_mask);
      p_next = p_next + keep;
      num = num + nx::mul_col(h_prev, nx::transpose(keep));
    }
    const nx::Var h_next = nx::safe_row_divide(num, p_next, h_prev, kCarryEps);

    double total = 0.0;
    for (double v : p_next.value().values()) total += v;
    if (std::fabs(total - 1.0) > 1e-6) {
      throw MassLeak("instruction pointer mass " + std::to_string(total) + " at step " +
                     std::to_string(t));
    }
    exec.p.push_back(p_next);
    exec.h.push_back(h_next);
  }

  const nx::Var p_final = exec.p.back();
  const nx::Var h_final = exec.h.back();
  if (config_.exceptions) {
    const nx::Var logits = nx::add_row(
        nx::matmul(nx::slice_rows(h_final, cfg.error, 1), tape.param(*class_w_)), tape.param(*class_b_));
    exec.log_probs = exception_log_probs(nx::slice_cols(p_final, cfg.exit, 1),
                                         nx::slice_cols(p_final, cfg.error, 1), logits);
  } else {
    const nx::Var logits = nx::add_row(
        nx::matmul(nx::slice_rows(h_final, cfg.exit, 1), tape.param(*class_w_)), tape.param(*class_b_));
    exec.log_probs = nx::log_softmax(logits);
  }
  return exec;
}

// ---- provenance -------------------------------------------------------------

std::vector<double> exception_provenance(const SoftExecution& exec, const ml::ControlFlowGraph& cfg) {
  const int n = cfg.size();
  // v[j * n + k]: mass at node k attributed to an exception first raised at j.
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> next(v.size());
  for (std::size_t t = 1; t < exec.p.size(); ++t) {
    const nx::Tensor& p = exec.p[t - 1].value();
    const nx::Tensor& d = exec.decisions[t - 1];
    std::fill(next.begin(), next.end(), 0.0);
    for (int k = 0; k < n; ++k) {
      const ml::CfgNode& c = cfg.nodes[k];
      double dirty = 0.0;
      for (int j = 0; j < n; ++j) dirty += v[j * n + k];
      const int targets[3] = {c.r, c.n1, c.n2};
      for (int col = 0; col < 3; ++col) {
        const double q = d.at(k, col);
        if (q == 0.0) continue;
        for (int j = 0; j < n; ++j) next[j * n + targets[col]] += v[j * n + k] * q;
      }
      if (!cfg.is_inert(k)) {
        const double clean = std::max(0.0, p.at(0, k) - dirty);
        next[k * n + c.r] += clean * d.at(k, 0);
      }
    }
    v.swap(next);
  }
  std::vector<double> out(n);
  for (int j = 0; j < n; ++j) out[j] = v[j * n + cfg.error];
  return out;
}

std::vector<std::pair<int, double>> provenance_by_line(const std::vector<double>& provenance,
                                                       const ml::ControlFlowGraph& cfg) {
  std::map<int, double> lines;
  for (int n = 0; n < cfg.size(); ++n) {
    if (cfg.is_inert(n) || cfg.nodes[n].line <= 0) continue;
    lines[cfg.nodes[n].line] += provenance[n];
  }
  return {lines.begin(), lines.end()};
}

int predicted_line(const std::vector<std::pair<int, double>>& by_line) {
  int best = -1;
  double best_p = -1.0;
  for (const auto& [line, prob] : by_line) {
    if (prob > best_p) {
      best = line;
      best_p = prob;
    }
  }
  return best;
}

DecisionOracle oracle_from_path(const ml::ControlFlowGraph& cfg, std::vector<int> nodes) {
  return [&cfg, nodes = std::move(nodes)](int t, int node) {
    Decision d;
    const std::size_t at = static_cast<std::size_t>(t - 1);
    if (at + 1 < nodes.size() && nodes[at] == node) {
      const ml::CfgNode& c = cfg.nodes[node];
      const int next = nodes[at + 1];
      if (next != c.n1 && next != c.n2 && next == c.r) {
        d.raise = 1.0;
      } else {
        d.take_true = next == c.n1 ? 1.0 : 0.0;
      }
    }
    return d;
  };
}

std::string heatmap_csv(const SoftExecution& exec) {
  std::ostringstream os;
  const int steps = static_cast<int>(exec.p.size());
  const int n = exec.p.front().cols();
  os << "node";
  for (int t = 0; t < steps; ++t) os << ",t" << t;
  os << '\n';
  char buf[32];
  for (int k = 0; k < n; ++k) {
    os << k;
    for (int t = 0; t < steps; ++t) {
      std::snprintf(buf, sizeof buf, ",%.17g", exec.p[t].value().at(0, k));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::string provenance_csv(const std::vector<std::pair<int, double>>& by_line) {
  std::ostringstream os;
  os << "line,probability\n";
  char buf[64];
  for (const auto& [line, prob] : by_line) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", line, prob);
    os << buf;
  }
  return os.str();
}

std::vector<std::vector<double>> parse_heatmap_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line.rfind("node", 0) != 0) throw std::invalid_argument("not a heatmap CSV");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    if (std::stoi(cell) != static_cast<int>(rows.size())) throw std::invalid_argument("heatmap rows out of order");
    rows.emplace_back();
    while (std::getline(cells, cell, ',')) rows.back().push_back(std::strtod(cell.c_str(), nullptr));
  }
  return rows;
}

std::vector<std::pair<int, double>> parse_provenance_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != "line,probability") throw std::invalid_argument("not a provenance CSV");
  std::vector<std::pair<int, double>> out;
  while (std::getline(is, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("malformed provenance row: " + line);
    out.emplace_back(std::stoi(line.substr(0, comma)), std::strtod(line.c_str() + comma + 1, nullptr));
  }
  return out;
}

}  // namespace ipa::ipagnn
