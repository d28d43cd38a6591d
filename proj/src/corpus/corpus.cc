#include "ipa/corpus.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ipa/minilang.h"
#include "json.hpp"

namespace ipa::corpus {

namespace ml = ipa::minilang;
namespace in = ipa::interp;

namespace {

constexpr const char* kFamilyNames[kNumFamilies] = {
    "arithmetic", "parse",   "division", "indexing",    "guarded-loop",
    "input-count", "type-mix", "unbound", "loop-parity", "try-wrapper"};

int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[uniform(rng, 0, static_cast<int>(v.size()) - 1)];
}

// Builds a program line by line, drawing fresh names and sprinkling
// harmless statements over the integer variables seen so far.
class Writer {
 public:
  explicit Writer(Rng& rng) : rng_(rng) {
    names_ = {"a", "b", "c", "d", "k", "m", "n", "p", "q", "r", "s", "t",
              "u", "v", "w", "x", "y", "z", "val", "num", "res", "tmp", "acc", "cnt"};
    std::shuffle(names_.begin(), names_.end(), rng_);
  }

  std::string fresh() {
    std::string n = names_.back();
    names_.pop_back();
    return n;
  }

  void emit(const std::string& line) { lines_.push_back(line); }
  void add_int(const std::string& name) { ints_.push_back(name); }

  void filler(const std::string& indent = "") {
    if (ints_.empty() || fillers_ >= 2 || !coin(rng_, 0.35)) return;
    ++fillers_;
    const std::string& a = pick(rng_, ints_);
    const int k = uniform(rng_, 1, 5);
    switch (uniform(rng_, 0, 3)) {
      case 0: {
        const std::string v = fresh();
        emit(indent + v + " = " + a + " + " + std::to_string(k));
        ints_.push_back(v);
        break;
      }
      case 1: {
        const std::string v = fresh();
        emit(indent + v + " = " + a + " * " + std::to_string(k));
        ints_.push_back(v);
        break;
      }
      case 2: {
        const std::string v = fresh();
        emit(indent + v + " = abs(" + a + ")");
        ints_.push_back(v);
        break;
      }
      default:
        emit(indent + "print(" + a + ")");
        break;
    }
  }

  std::string source() const {
    std::string out;
    for (const std::string& l : lines_) out += l + "\n";
    return out;
  }

 private:
  Rng& rng_;
  std::vector<std::string> names_;
  std::vector<std::string> lines_;
  std::vector<std::string> ints_;
  int fillers_ = 0;
};

std::string range_text(const std::string& var, int lo, int hi) {
  return std::to_string(lo) + " <= " + var + " <= " + std::to_string(hi);
}

std::string words_of(Rng& rng) {
  static const std::vector<std::string> words{"abc", "hello", "xyz", "no", "yes", "data"};
  return pick(rng, words);
}

std::string int_list(Rng& rng, int count) {
  std::string out;
  for (int i = 0; i < count; ++i) {
    if (i) out += " ";
    out += std::to_string(uniform(rng, 0, 9));
  }
  return out;
}

void arithmetic(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string x = w.fresh(), y = w.fresh();
  w.emit(x + " = input_int()");
  w.add_int(x);
  w.filler();
  const int c = spec.param;
  switch (uniform(rng, 0, 2)) {
    case 0: w.emit(y + " = " + x + " + " + std::to_string(c)); break;
    case 1: w.emit(y + " = " + std::to_string(c) + " + " + x); break;
    default: w.emit(y + " = " + x + " * 2 + " + std::to_string(c)); break;
  }
  w.filler();
  const std::string root = careful ? "sqrt(abs(" + y + "))" : "sqrt(" + y + ")";
  if (coin(rng, 0.5)) {
    w.emit("print(" + root + ")");
  } else {
    const std::string r = w.fresh();
    w.emit(r + " = " + root);
    w.emit("print(" + r + ")");
  }
  const int v = trigger ? uniform(rng, -9, -3) : spec.hazard ? uniform(rng, 0, 9) : uniform(rng, 1, 9);
  out.stdin_lines = {std::to_string(v)};
}

void parse_single(const ProblemSpec&, bool trigger, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string s = w.fresh(), n = w.fresh();
  w.emit(s + " = input_str()");
  w.emit(careful ? n + " = len(" + s + ")" : n + " = int(" + s + ")");
  w.add_int(n);
  w.filler();
  w.emit("print(" + n + " + " + std::to_string(uniform(rng, 1, 5)) + ")");
  out.stdin_lines = {trigger ? words_of(rng) : std::to_string(uniform(rng, 0, 99))};
}

void division(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string a = w.fresh(), b = w.fresh(), q = w.fresh();
  w.emit(a + " = input_int()");
  w.add_int(a);
  w.filler();
  w.emit(b + " = input_int()");
  w.filler();
  const char* op = pick(rng, std::vector<const char*>{" // ", " % ", " / "});
  if (careful && coin(rng, 0.5)) {
    w.emit("if " + b + " != 0:");
    w.emit("  " + q + " = " + a + op + b);
    w.emit("  print(" + q + ")");
  } else {
    w.emit(q + " = " + a + op + (careful ? "(" + b + " + 1)" : b));
    w.emit("print(" + q + ")");
  }
  const int bv = trigger ? 0 : spec.hazard ? uniform(rng, 0, 9) : uniform(rng, 1, 9);
  out.stdin_lines = {std::to_string(uniform(rng, 0, 9)), std::to_string(bv)};
}

void indexing(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string xs = w.fresh(), i = w.fresh();
  w.emit(xs + " = input_list()");
  w.emit(i + " = input_int()");
  w.add_int(i);
  w.filler();
  std::string index = xs + "[" + i + "]";
  if (careful) {
    if (coin(rng, 0.5)) {
      w.emit("if " + i + " < len(" + xs + "):");
      w.emit("  print(" + index + ")");
      index.clear();
    } else {
      index = xs + "[" + i + " % len(" + xs + ")]";
    }
  }
  if (!index.empty()) {
    if (coin(rng, 0.5)) {
      w.emit("print(" + index + ")");
    } else {
      const std::string v = w.fresh();
      w.emit(v + " = " + index);
      w.emit("print(" + v + ")");
    }
  }
  const int len = spec.param;
  const int iv = trigger ? uniform(rng, len, len + 2)
                         : uniform(rng, 0, spec.hazard ? len + 2 : len - 1);
  out.stdin_lines = {int_list(rng, len), std::to_string(iv)};
}

// Pipelines: the same risky operation on two inputs, where only `slot` may fault.
int pipeline_value(const ProblemSpec& spec, int slot, bool trigger, int bad_lo, int bad_hi, int lo, Rng& rng) {
  if (slot != spec.slot || !spec.hazard) return uniform(rng, lo, 9);
  return trigger ? uniform(rng, bad_lo, bad_hi) : uniform(rng, std::max(lo - 1, 0), 9);
}

void arithmetic_pipeline(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out,
                         Rng& rng) {
  const std::string a = w.fresh(), b = w.fresh(), u = w.fresh(), v = w.fresh();
  w.emit(a + " = input_int()");
  w.add_int(a);
  w.emit(b + " = input_int()");
  w.add_int(b);
  w.filler();
  const std::string c = std::to_string(spec.param);
  auto root = [&](const std::string& x, int slot) {
    const std::string arg = x + " + " + c;
    return careful && slot == spec.slot ? "sqrt(abs(" + arg + "))" : "sqrt(" + arg + ")";
  };
  w.emit(u + " = " + root(a, 0));
  w.filler();
  w.emit(v + " = " + root(b, 1));
  w.emit("print(" + u + " + " + v + ")");
  for (int slot = 0; slot < 2; ++slot)
    out.stdin_lines.push_back(std::to_string(pipeline_value(spec, slot, trigger, -9, -3, 1, rng)));
}

void parse_pipeline(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string s = w.fresh(), t = w.fresh(), n = w.fresh(), m = w.fresh();
  w.emit(s + " = input_str()");
  w.emit(t + " = input_str()");
  const std::string names[2] = {s, t};
  const std::string ints[2] = {n, m};
  for (int slot = 0; slot < 2; ++slot) {
    const bool safe = careful && slot == spec.slot;
    w.emit(ints[slot] + (safe ? " = len(" : " = int(") + names[slot] + ")");
    w.add_int(ints[slot]);
  }
  w.filler();
  w.emit("print(" + n + " + " + m + ")");
  for (int slot = 0; slot < 2; ++slot) {
    const bool word = trigger && slot == spec.slot;
    out.stdin_lines.push_back(word ? words_of(rng) : std::to_string(uniform(rng, 0, 99)));
  }
}

void division_pipeline(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out,
                       Rng& rng) {
  const std::string a = w.fresh(), b = w.fresh(), d = w.fresh(), q = w.fresh(), r = w.fresh();
  w.emit(a + " = input_int()");
  w.add_int(a);
  w.emit(b + " = input_int()");
  w.emit(d + " = input_int()");
  w.filler();
  const char* op = pick(rng, std::vector<const char*>{" // ", " % ", " / "});
  const std::string divisors[2] = {b, d};
  const std::string results[2] = {q, r};
  for (int slot = 0; slot < 2; ++slot) {
    const bool safe = careful && slot == spec.slot;
    w.emit(results[slot] + " = " + a + op + (safe ? "(" + divisors[slot] + " + 1)" : divisors[slot]));
  }
  w.emit("print(" + q + " + " + r + ")");
  out.stdin_lines.push_back(std::to_string(uniform(rng, 0, 9)));
  for (int slot = 0; slot < 2; ++slot)
    out.stdin_lines.push_back(std::to_string(pipeline_value(spec, slot, trigger, 0, 0, 1, rng)));
}

void indexing_pipeline(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out,
                       Rng& rng) {
  const std::string xs = w.fresh(), i = w.fresh(), j = w.fresh();
  w.emit(xs + " = input_list()");
  w.emit(i + " = input_int()");
  w.add_int(i);
  w.emit(j + " = input_int()");
  w.add_int(j);
  w.filler();
  const std::string idx[2] = {i, j};
  for (int slot = 0; slot < 2; ++slot) {
    const bool safe = careful && slot == spec.slot;
    w.emit("print(" + xs + "[" + idx[slot] + (safe ? " % len(" + xs + ")]" : "]") + ")");
  }
  const int len = spec.param;
  out.stdin_lines.push_back(int_list(rng, len));
  for (int slot = 0; slot < 2; ++slot) {
    int v = uniform(rng, 0, len - 1);
    if (slot == spec.slot && spec.hazard) v = trigger ? uniform(rng, len, len + 2) : uniform(rng, 0, len + 2);
    out.stdin_lines.push_back(std::to_string(v));
  }
}

void guarded_loop(const ProblemSpec&, bool trigger, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string n = w.fresh(), xs = w.fresh(), total = w.fresh(), i = w.fresh();
  w.emit(n + " = input_int()");
  w.emit(xs + " = input_list()");
  w.emit(total + " = 0");
  const bool use_for = coin(rng, 0.5);
  if (use_for) {
    w.emit("for " + i + " in range(" + n + "):");
  } else {
    w.emit(i + " = 0");
    w.emit("while " + i + " < " + n + ":");
  }
  const std::string body = total + " = " + total + " + " + xs + "[" + i + "]";
  if (careful) {
    w.emit("  if " + i + " < len(" + xs + "):");
    w.emit("    " + body);
  } else {
    w.emit("  " + body);
  }
  if (!use_for) w.emit("  " + i + " = " + i + " + 1");
  w.emit("print(" + total + ")");
  const int nv = uniform(rng, 1, 4);
  const int len = trigger ? uniform(rng, 0, nv - 1) : nv;
  out.stdin_lines = {std::to_string(nv), int_list(rng, len)};
}

void input_count(const ProblemSpec& spec, bool, bool careful, Writer& w, Instance& out, Rng& rng) {
  const int lines = spec.param;
  const int reads = spec.hazard && !careful ? lines + 1 : lines;
  std::vector<std::string> vars;
  for (int r = 0; r < reads; ++r) {
    vars.push_back(w.fresh());
    w.emit(vars.back() + " = input_int()");
    w.add_int(vars.back());
    w.filler();
  }
  std::string sum = vars[0];
  for (std::size_t k = 1; k < vars.size(); ++k) sum += " + " + vars[k];
  w.emit("print(" + sum + ")");
  for (int l = 0; l < lines; ++l) out.stdin_lines.push_back(std::to_string(uniform(rng, 0, 9)));
}

void type_mix(const ProblemSpec& spec, bool, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string a = w.fresh(), s = w.fresh();
  w.emit(a + " = input_int()");
  w.add_int(a);
  w.emit(s + " = input_str()");
  w.filler();
  if (spec.hazard && !careful) {
    w.emit(coin(rng, 0.5) ? "print(" + a + " + " + s + ")" : "print(" + s + " + " + a + ")");
  } else {
    w.emit(coin(rng, 0.5) ? "print(" + a + " + len(" + s + "))" : "print(" + s + " * " + a + ")");
  }
  out.stdin_lines = {std::to_string(uniform(rng, 1, 3)), words_of(rng)};
}

void unbound(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string x = w.fresh(), y = w.fresh();
  w.emit(x + " = input_int()");
  w.add_int(x);
  w.filler();
  w.emit("if " + x + (coin(rng, 0.5) ? " > 0:" : " >= 1:"));
  w.emit("  " + y + " = " + x + " * " + std::to_string(uniform(rng, 2, 4)));
  if (careful) {
    w.emit("  print(" + y + ")");
  } else {
    w.filler();
    w.emit("print(" + y + ")");
  }
  const int v = trigger ? uniform(rng, -9, 0) : spec.hazard ? uniform(rng, -9, 9) : uniform(rng, 1, 9);
  out.stdin_lines = {std::to_string(v)};
}

void loop_parity(const ProblemSpec& spec, bool trigger, bool careful, Writer& w, Instance& out, Rng& rng) {
  const std::string n = w.fresh();
  w.emit(n + " = input_int()");
  w.add_int(n);
  w.filler();
  w.emit("while " + n + (careful ? " > 0:" : " != 0:"));
  w.emit("  " + n + " = " + n + " - 2");
  w.emit("print(" + n + ")");
  int v = 2 * uniform(rng, 0, 4);
  if (trigger) v = 2 * uniform(rng, 0, 3) + 1;
  else if (spec.hazard) v = uniform(rng, 0, 8);
  out.stdin_lines = {std::to_string(v)};
}

void try_wrapper(const ProblemSpec& spec, bool trigger, bool, Writer& w, Instance& out, Rng& rng) {
  const std::string x = w.fresh(), y = w.fresh();
  w.emit(x + " = input_int()");
  w.add_int(x);
  w.filler();
  w.emit("try:");
  const bool divide = coin(rng, 0.5);
  w.emit(divide ? "  " + y + " = 10 // " + x : "  " + y + " = sqrt(" + x + ")");
  w.emit("except:");
  w.emit(spec.param == 1 ? "  raise_value_error()" : "  " + y + " = 0");
  w.emit("print(" + y + ")");
  int v = uniform(rng, 1, 9);
  if (trigger) v = divide ? 0 : uniform(rng, -9, -1);
  else if (spec.hazard) v = uniform(rng, 0, 9);
  out.stdin_lines = {std::to_string(v)};
}

std::vector<int> reachable_kinds(const TemplateMix& mix) {
  static const in::ErrorKind kinds[kNumFamilies] = {
      in::ErrorKind::kValueError, in::ErrorKind::kValueError, in::ErrorKind::kZeroDivisionError,
      in::ErrorKind::kIndexError, in::ErrorKind::kIndexError, in::ErrorKind::kEOFError,
      in::ErrorKind::kTypeError,  in::ErrorKind::kNameError,  in::ErrorKind::kTimeout,
      in::ErrorKind::kValueError};
  std::set<int> out;
  for (int f = 0; f < kNumFamilies; ++f) {
    if (mix[f] > 0) out.insert(1 + static_cast<int>(kinds[f]));
  }
  return {out.begin(), out.end()};
}

bool is_error(const Example& e) { return e.target != 0; }

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(const std::string& name) {
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    if (name == split_name(s)) return s;
  }
  return std::nullopt;
}

const char* family_name(Family f) { return kFamilyNames[static_cast<int>(f)]; }

std::optional<Family> parse_family(const std::string& name) {
  for (int f = 0; f < kNumFamilies; ++f) {
    if (name == kFamilyNames[f]) return static_cast<Family>(f);
  }
  return std::nullopt;
}

TemplateMix default_mix() {
  TemplateMix m;
  m.fill(1.0);
  return m;
}

TemplateMix five_kind_mix() {
  TemplateMix m{};
  for (Family f : {Family::kArithmetic, Family::kParse, Family::kDivision, Family::kIndexing,
                   Family::kGuardedLoop, Family::kInputCount, Family::kUnbound}) {
    m[static_cast<int>(f)] = 1.0;
  }
  return m;
}

std::string mix_to_string(const TemplateMix& mix) {
  std::ostringstream os;
  bool first = true;
  for (int f = 0; f < kNumFamilies; ++f) {
    if (mix[f] <= 0) continue;
    if (!first) os << ",";
    first = false;
    os << kFamilyNames[f] << ":" << mix[f];
  }
  return os.str();
}

TemplateMix parse_mix(const std::string& text) {
  if (text == "default") return default_mix();
  if (text == "five-kind") return five_kind_mix();
  TemplateMix m{};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    const auto f = parse_family(item.substr(0, colon));
    if (!f) throw std::invalid_argument("unknown family: " + item);
    m[static_cast<int>(*f)] = colon == std::string::npos ? 1.0 : std::stod(item.substr(colon + 1));
  }
  return m;
}

std::array<std::array<int, in::kNumClasses>, 3> Manifest::class_counts() const {
  std::array<std::array<int, in::kNumClasses>, 3> out{};
  for (const Example& e : examples) ++out[static_cast<int>(e.split)][e.target];
  return out;
}

std::vector<const Example*> Manifest::split(Split s) const {
  std::vector<const Example*> out;
  for (const Example& e : examples) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

ProblemSpec draw_problem(Family family, const CorpusOptions& options, Rng& rng) {
  ProblemSpec spec;
  spec.family = family;
  spec.hazard = family == Family::kTryWrapper ? coin(rng, 0.7) : coin(rng, options.hazard_fraction);
  spec.informative = !coin(rng, options.uninformative_fraction);
  switch (family) {
    case Family::kArithmetic: spec.param = uniform(rng, 0, 2); break;
    case Family::kIndexing: spec.param = uniform(rng, 2, 4); break;
    case Family::kInputCount: spec.param = uniform(rng, 1, 3); break;
    case Family::kTryWrapper: spec.param = coin(rng, 0.5) ? 1 : 0; break;
    default: break;
  }
  if (family == Family::kArithmetic || family == Family::kParse || family == Family::kDivision ||
      family == Family::kIndexing) {
    spec.pipeline = coin(rng, 0.5);
    spec.slot = uniform(rng, 0, 1);
  }
  return spec;
}

namespace {

std::string describe_pipeline(const ProblemSpec& spec) {
  auto risky = [&](int slot) { return spec.hazard && slot == spec.slot; };
  switch (spec.family) {
    case Family::kArithmetic:
      return "The input is two integers A and B on separate lines with " +
             range_text("A", risky(0) ? -9 : 1, 9) + " and " + range_text("B", risky(1) ? -9 : 1, 9) + " .";
    case Family::kParse: {
      auto kind = [&](int slot) {
        return risky(slot) ? std::string("one word of lowercase letters") : std::string("one integer in digits");
      };
      return "The input is two lines : " + kind(0) + " , then " + kind(1) + " .";
    }
    case Family::kDivision:
      return "The input is three lines : an integer A with " + range_text("A", 0, 9) + " , an integer B with " +
             range_text("B", risky(0) ? 0 : 1, 9) + " , then an integer C with " +
             range_text("C", risky(1) ? 0 : 1, 9) + " .";
    case Family::kIndexing: {
      auto hi = [&](int slot) { return risky(slot) ? spec.param + 2 : spec.param - 1; };
      return "The first line has " + std::to_string(spec.param) + " integers . The second line has an index I with " +
             range_text("I", 0, hi(0)) + " . The third line has an index J with " + range_text("J", 0, hi(1)) +
             " .";
    }
    default:
      return "";
  }
}

}  // namespace

std::string describe(const ProblemSpec& spec) {
  if (!spec.informative) return "The input format is not specified .";
  const bool h = spec.hazard;
  if (spec.pipeline) return describe_pipeline(spec);
  switch (spec.family) {
    case Family::kArithmetic:
    case Family::kUnbound:
      return "The input is one integer N with " + range_text("N", h ? -9 : 1, 9) + " .";
    case Family::kParse:
      return h ? "The input is one word S of lowercase letters ."
               : "The input is one integer N written in digits .";
    case Family::kDivision:
      return "The input is two lines : an integer A with " + range_text("A", 0, 9) +
             " , then an integer B with " + range_text("B", h ? 0 : 1, 9) + " .";
    case Family::kIndexing:
      return "The first line has " + std::to_string(spec.param) +
             " integers . The second line has an index I with " +
             range_text("I", 0, h ? spec.param + 2 : spec.param - 1) + " .";
    case Family::kGuardedLoop:
      return std::string("The first line has an integer N with ") + range_text("N", 1, 4) +
             " . The second line has " + (h ? "fewer than N" : "exactly N") + " integers .";
    case Family::kInputCount:
      return "One integer per line , " + std::to_string(spec.param) +
             (spec.param == 1 ? " line ." : " lines .");
    case Family::kTypeMix:
      return "The input is an integer A and a word S on separate lines .";
    case Family::kLoopParity:
      return std::string("The input is one ") + (h ? "" : "even ") + "integer N with " +
             range_text("N", 0, 8) + " .";
    case Family::kTryWrapper:
      return "The input is one integer N with " + range_text("N", h ? -9 : 1, 9) + " .";
  }
  return "";
}

Instance make_instance(const ProblemSpec& spec, const CorpusOptions& options, Rng& rng) {
  Instance out;
  out.description = describe(spec);
  const bool trigger = spec.hazard && coin(rng, options.trigger_rate);
  const bool careful = spec.hazard && coin(rng, options.careful_rate);
  Writer w(rng);
  switch (spec.family) {
    case Family::kArithmetic:
      (spec.pipeline ? arithmetic_pipeline : arithmetic)(spec, trigger, careful, w, out, rng);
      break;
    case Family::kParse:
      (spec.pipeline ? parse_pipeline : parse_single)(spec, trigger, careful, w, out, rng);
      break;
    case Family::kDivision:
      (spec.pipeline ? division_pipeline : division)(spec, trigger, careful, w, out, rng);
      break;
    case Family::kIndexing:
      (spec.pipeline ? indexing_pipeline : indexing)(spec, trigger, careful, w, out, rng);
      break;
    case Family::kGuardedLoop: guarded_loop(spec, trigger, careful, w, out, rng); break;
    case Family::kInputCount: input_count(spec, trigger, careful, w, out, rng); break;
    case Family::kTypeMix: type_mix(spec, trigger, careful, w, out, rng); break;
    case Family::kUnbound: unbound(spec, trigger, careful, w, out, rng); break;
    case Family::kLoopParity: loop_parity(spec, trigger, careful, w, out, rng); break;
    case Family::kTryWrapper: try_wrapper(spec, trigger, careful, w, out, rng); break;
  }
  out.source = w.source();
  return out;
}

void label(Example& example) {
  const ml::Program program = ml::parse(example.source);
  const ml::ControlFlowGraph cfg = ml::build_cfg(program);
  std::string text;
  for (const std::string& l : example.stdin_lines) text += l + "\n";
  const in::DiscreteTrace trace = in::run_interpreter_b(cfg, program, in::stdin_from_text(text));
  example.target = trace.target_class();
  example.error_line.reset();
  if (trace.outcome == in::Outcome::kError) example.error_line = trace.line;
}

Manifest generate_corpus(const CorpusOptions& options) {
  if (options.size < 100) throw std::invalid_argument("corpus size must be at least 100");
  const double total_weight = std::accumulate(options.mix.begin(), options.mix.end(), 0.0);
  if (total_weight <= 0) throw std::invalid_argument("template mix has no positive weight");
  const int quota = options.min_per_kind >= 0 ? options.min_per_kind : std::min(20, options.size / 100);
  const std::vector<int> kinds = reachable_kinds(options.mix);

  Rng rng(options.seed);
  std::discrete_distribution<int> family_dist(options.mix.begin(), options.mix.end());
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    const int subs = options.submissions_per_problem;
    const int problems = (options.size + subs - 1) / subs;
    std::vector<int> order(problems);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Split> split_of(problems, Split::kTest);
    const int n_train = problems * 8 / 10, n_valid = problems / 10;
    for (int k = 0; k < problems; ++k) {
      split_of[order[k]] = k < n_train ? Split::kTrain : k < n_train + n_valid ? Split::kValid : Split::kTest;
    }

    Manifest m;
    m.seed = options.seed;
    for (int p = 0; p < problems && static_cast<int>(m.examples.size()) < options.size; ++p) {
      const ProblemSpec spec = draw_problem(static_cast<Family>(family_dist(rng)), options, rng);
      for (int s = 0; s < subs && static_cast<int>(m.examples.size()) < options.size; ++s) {
        Instance inst = make_instance(spec, options, rng);
        Example e;
        e.problem_id = p;
        e.split = split_of[p];
        e.source = std::move(inst.source);
        e.stdin_lines = std::move(inst.stdin_lines);
        e.description = std::move(inst.description);
        label(e);
        m.examples.push_back(std::move(e));
      }
    }

    // Trim the larger stratum of the test split to an even no-error / error mix.
    std::vector<int> clean, faulty;
    for (int i = 0; i < static_cast<int>(m.examples.size()); ++i) {
      if (m.examples[i].split != Split::kTest) continue;
      (is_error(m.examples[i]) ? faulty : clean).push_back(i);
    }
    std::vector<int>& larger = clean.size() > faulty.size() ? clean : faulty;
    const std::size_t keep = std::min(clean.size(), faulty.size());
    std::shuffle(larger.begin(), larger.end(), rng);
    std::set<int> drop(larger.begin() + keep, larger.end());
    std::vector<Example> kept;
    for (int i = 0; i < static_cast<int>(m.examples.size()); ++i) {
      if (!drop.count(i)) kept.push_back(std::move(m.examples[i]));
    }
    m.examples = std::move(kept);
    for (std::size_t i = 0; i < m.examples.size(); ++i) m.examples[i].id = static_cast<int>(i);

    const auto counts = m.class_counts();
    const bool ok = std::all_of(kinds.begin(), kinds.end(), [&](int c) {
      return counts[static_cast<int>(Split::kTrain)][c] >= quota;
    });
    if (ok) return m;
  }
  throw GenerationExhausted("class quota of " + std::to_string(quota) + " per kind not met after " +
                            std::to_string(options.max_attempts) + " attempts");
}

std::string to_jsonl(const Manifest& manifest) {
  std::string out;
  for (const Example& e : manifest.examples) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["problem-id"] = e.problem_id;
    j["split"] = split_name(e.split);
    j["source"] = e.source;
    j["stdin"] = e.stdin_lines;
    j["description"] = e.description;
    j["target"] = in::class_name(e.target);
    j["error-line"] = e.error_line ? nlohmann::ordered_json(*e.error_line) : nlohmann::ordered_json();
    out += j.dump() + "\n";
  }
  return out;
}

Manifest from_jsonl(const std::string& text) {
  Manifest m;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Example e;
    e.id = j.at("id").get<int>();
    e.problem_id = j.at("problem-id").get<int>();
    const auto split = parse_split(j.at("split").get<std::string>());
    if (!split) throw std::invalid_argument("bad split in manifest record " + std::to_string(e.id));
    e.split = *split;
    e.source = j.at("source").get<std::string>();
    e.stdin_lines = j.at("stdin").get<std::vector<std::string>>();
    e.description = j.at("description").get<std::string>();
    const std::string target = j.at("target").get<std::string>();
    if (target == "no-error") {
      e.target = 0;
    } else {
      const auto kind = in::parse_error_kind(target);
      if (!kind) throw std::invalid_argument("bad target in manifest record " + std::to_string(e.id));
      e.target = 1 + static_cast<int>(*kind);
    }
    if (!j.at("error-line").is_null()) e.error_line = j.at("error-line").get<int>();
    m.examples.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << to_jsonl(manifest);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_jsonl(ss.str());
}

BalancedSampler::BalancedSampler(const Manifest& manifest, Split split, std::uint64_t seed)
    : rng_(seed) {
  for (const Example* e : manifest.split(split)) (is_error(*e) ? faulty_ : clean_).push_back(e);
  if (clean_.empty() || faulty_.empty()) {
    throw EmptyStratum(std::string("split ") + split_name(split) + " lacks " +
                       (clean_.empty() ? "no-error" : "error") + " examples");
  }
}

std::vector<const Example*> BalancedSampler::next_batch(int batch_size) {
  std::vector<const Example*> out;
  out.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const auto& stratum = coin(rng_, 0.5) ? clean_ : faulty_;
    out.push_back(pick(rng_, stratum));
  }
  return out;
}

}  // namespace ipa::corpus
