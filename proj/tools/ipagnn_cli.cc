// Command-line front end: corpus generation, training, evaluation and
// inspection of single programs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ipa/corpus.h"
#include "ipa/interp.h"
#include "ipa/minilang.h"
#include "ipa/numerics/grad_check.h"
#include "ipa/train_eval.h"

namespace ml = ipa::minilang;
namespace in = ipa::interp;
namespace co = ipa::corpus;
namespace te = ipa::train_eval;
namespace ig = ipa::ipagnn;
namespace nx = ipa::numerics;
namespace en = ipa::encoder;
namespace fs = std::filesystem;

namespace {

const char* kDefaultProgram =
    "x = input_int()\n"
    "if x > 0:\n"
    "  y = 4 / 3 * x\n"
    "else:\n"
    "  y = abs(x)\n"
    "z = y + sqrt(x)\n";
const char* kDefaultDescription = "A single integer -10..10";

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

struct Options {
  // gen-corpus
  std::uint64_t seed = 0;
  int size = 2000;
  std::string mix = "default";
  // shared
  std::string out;
  std::string config;
  std::string corpus;
  std::string checkpoint;
  std::string split = "test";
  std::string program;
  std::string description;
  std::string stdin_path;
  std::string stdin_text;
  std::string interpreter = "b";
  std::string csv_out;
  bool one_based = false;
  bool progress = false;
};

int gen_corpus(const Options& o) {
  co::CorpusOptions c;
  c.seed = o.seed;
  c.size = o.size;
  c.mix = co::parse_mix(o.mix);
  const co::Manifest m = co::generate_corpus(c);
  co::save_manifest(m, o.out);
  const auto counts = m.class_counts();
  std::printf("%-18s %8s %8s %8s\n", "class", "train", "valid", "test");
  for (int k = 0; k < in::kNumClasses; ++k) {
    std::printf("%-18s %8d %8d %8d\n", in::class_name(k).c_str(), counts[0][k], counts[1][k], counts[2][k]);
  }
  return 0;
}

int train(const Options& o) {
  const te::TrainConfig config = te::TrainConfig::load(o.config);
  const co::Manifest m = co::load_manifest(o.corpus);
  te::TrainHooks hooks;
  if (o.progress) {
    hooks.on_validation = [](const te::HistoryRow& r) {
      std::fprintf(stderr, "step %d loss %.4f val_accuracy %.4f val_weighted_f1 %.4f\n", r.step, r.loss,
                   r.val_accuracy, r.val_weighted_f1);
    };
  }
  const te::TrainResult r = te::train(config, m, hooks);
  fs::create_directories(o.out);
  te::save_model(r.model, (fs::path(o.out) / "checkpoint.txt").string());
  write_file((fs::path(o.out) / "history.csv").string(), te::history_csv(r.history));
  std::printf("best step %d\n", r.best_step);
  return 0;
}

int eval(const Options& o) {
  const auto split = co::parse_split(o.split);
  if (!split) throw CLI::ValidationError("--split", "must be train, valid or test");
  const te::Model model = te::load_model(o.checkpoint);
  const te::MetricsReport r = te::evaluate(model, co::load_manifest(o.corpus), *split);
  std::cout << r.table();
  if (o.csv_out.empty()) {
    std::cout << "\n" << r.csv();
  } else {
    write_file(o.csv_out, r.csv());
  }
  return 0;
}

ig::ModelInput model_input(const te::Model& model, const Options& o) {
  if (model.uses_description() && o.description.empty()) {
    throw ig::MissingDescription("this model needs --stdin-desc");
  }
  return model.prepare(read_file(o.program), o.description);
}

int predict(const Options& o) {
  const te::Model model = te::load_model(o.checkpoint);
  const ig::ModelInput input = model_input(model, o);
  nx::Tape tape;
  const auto out = model.forward(tape, input);
  const nx::Tensor& lp = out.log_probs.value();
  int best = 0;
  std::printf("{\"classes\": {");
  for (int k = 0; k < out.log_probs.cols(); ++k) {
    if (lp[k] > lp[best]) best = k;
    std::printf("%s\"%s\": %.6f", k ? ", " : "", in::class_name(k).c_str(), std::exp(lp[k]));
  }
  std::printf("}, \"predicted\": \"%s\"", in::class_name(best).c_str());
  const int line = ig::predicted_line(out.lines);
  if (line >= 0) std::printf(", \"line\": %d", line);
  std::printf("}\n");
  return 0;
}

int trace(const Options& o) {
  if (o.interpreter != "a" && o.interpreter != "b") throw CLI::ValidationError("--interpreter", "must be a or b");
  const ml::Program p = ml::parse(read_file(o.program));
  const ml::ControlFlowGraph g = ml::build_cfg(p);
  std::string text = o.stdin_path.empty() ? o.stdin_text : read_file(o.stdin_path);
  if (!text.empty() && text.back() != '\n') text += '\n';
  const auto input = in::stdin_from_text(text);
  const in::DiscreteTrace t =
      o.interpreter == "a" ? in::run_interpreter_a(g, p, input) : in::run_interpreter_b(g, p, input);
  if (!o.one_based) {
    std::cout << t.dump(g);
    return 0;
  }
  for (const in::Step& s : t.steps) std::printf("%d,%d,%d\n", s.t, s.node + 1, g.nodes[s.node].line);
  const std::string dump = t.dump(g);
  const std::size_t last = dump.rfind('\n', dump.size() - 2);
  std::cout << dump.substr(last + 1);
  return 0;
}

const ig::IpagnnModel& ipagnn_of(const te::Model& model) {
  const auto* c = dynamic_cast<const ipa::baselines::IpagnnClassifier*>(model.classifier.get());
  if (!c) throw std::runtime_error("checkpoint is not an IPA-GNN model");
  return c->model();
}

int heatmap(const Options& o) {
  const te::Model model = te::load_model(o.checkpoint);
  const ig::ModelInput input = model_input(model, o);
  nx::Tape tape;
  const ig::SoftExecution exec = ipagnn_of(model).run(tape, input);
  write_file(o.out, ig::heatmap_csv(exec));
  return 0;
}

int localize(const Options& o) {
  const te::Model model = te::load_model(o.checkpoint);
  const ig::ModelInput input = model_input(model, o);
  nx::Tape tape;
  const auto out = model.forward(tape, input);
  if (out.lines.empty()) throw std::runtime_error("model kind does not localize errors");
  const std::string csv = ig::provenance_csv(out.lines);
  const int line = ig::predicted_line(out.lines);
  if (o.out.empty()) {
    std::cout << csv;
    std::fprintf(stderr, "predicted line %d\n", line);
  } else {
    write_file(o.out, csv);
    std::printf("predicted line %d\n", line);
  }
  return 0;
}

int grad_check(const Options& o) {
  te::TrainConfig config = te::TrainConfig::load(o.config);
  const std::string source = o.program.empty() ? kDefaultProgram : read_file(o.program);
  const std::string desc = o.description.empty() ? kDefaultDescription : o.description;
  const ml::Program program = ml::parse(source);
  const en::Vocabulary vocab =
      en::Vocabulary::build({en::program_token_texts(program), ml::description_words(desc)});
  const te::Model model = te::build_model(config, vocab);
  const ig::ModelInput input = model.prepare(source, desc);
  const auto loss = [&](nx::Tape& tape) {
    return nx::scale(nx::pick(model.forward(tape, input).log_probs, 0, 2), -1.0);
  };
  const nx::GradCheckResult r = nx::grad_check(loss, model.store->all(), 1e-3, nx::Stencil::kFourPoint);
  std::printf("max relative error %.3e at %s[%zu] over %zu coordinates\n", r.max_rel_error,
              r.worst_param.c_str(), r.worst_index, r.coordinates);
  return r.max_rel_error > 1e-4 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable interpreter laboratory"};
  app.require_subcommand(1);
  Options o;
  int (*run)(const Options&) = nullptr;

  auto* gen = app.add_subcommand("gen-corpus", "Generate a labeled synthetic corpus manifest");
  gen->add_option("--seed", o.seed, "Generator seed")->required();
  gen->add_option("--size", o.size, "Number of examples")->required();
  gen->add_option("--out", o.out, "Manifest path (JSONL)")->required();
  gen->add_option("--mix", o.mix, "Template mix: default, five-kind or family:weight,...")->capture_default_str();
  gen->callback([&] { run = gen_corpus; });

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", o.config, "Config file (key = value)")->required();
  tr->add_option("--corpus", o.corpus, "Manifest path")->required();
  tr->add_option("--out", o.out, "Output directory for checkpoint.txt and history.csv")->required();
  tr->add_flag("--progress", o.progress, "Report validation rows on stderr");
  tr->callback([&] { run = train; });

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  ev->add_option("--corpus", o.corpus, "Manifest path")->required();
  ev->add_option("--split", o.split, "train, valid or test")->capture_default_str();
  ev->add_option("--csv-out", o.csv_out, "Write the CSV report here instead of stdout");
  ev->callback([&] { run = eval; });

  auto* pr = app.add_subcommand("predict", "Class distribution for one program");
  pr->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  pr->add_option("--program", o.program, "Program source file")->required();
  pr->add_option("--stdin-desc", o.description, "Resource description text");
  pr->callback([&] { run = predict; });

  auto* tc = app.add_subcommand("trace", "Discrete interpreter trace");
  tc->add_option("--program", o.program, "Program source file")->required();
  auto* sp = tc->add_option("--stdin", o.stdin_path, "File with the program's standard input");
  tc->add_option("--stdin-text", o.stdin_text, "Standard input given inline")->excludes(sp);
  tc->add_option("--interpreter", o.interpreter, "a or b")->capture_default_str();
  tc->add_flag("--one-based", o.one_based, "Number nodes from 1");
  tc->callback([&] { run = trace; });

  auto* hm = app.add_subcommand("heatmap", "Instruction-pointer heatmap CSV");
  hm->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  hm->add_option("--program", o.program, "Program source file")->required();
  hm->add_option("--stdin-desc", o.description, "Resource description text");
  hm->add_option("--out", o.out, "CSV path")->required();
  hm->callback([&] { run = heatmap; });

  auto* lc = app.add_subcommand("localize", "Per-line error provenance and predicted line");
  lc->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  lc->add_option("--program", o.program, "Program source file")->required();
  lc->add_option("--stdin-desc", o.description, "Resource description text");
  lc->add_option("--out", o.out, "CSV path (default: stdout)");
  lc->callback([&] { run = localize; });

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of model gradients");
  gc->add_option("--config", o.config, "Config file (key = value)")->required();
  gc->add_option("--program", o.program, "Program source file (default: built-in sample)");
  gc->add_option("--stdin-desc", o.description, "Resource description text");
  gc->callback([&] { run = grad_check; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    return run(o);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
