#include "ipa/interp.h"

#include <charconv>
#include <cmath>
#include <sstream>

namespace ipa::interp {

namespace ml = ipa::minilang;

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEOFError: return "EOFError";
    case ErrorKind::kValueError: return "ValueError";
    case ErrorKind::kZeroDivisionError: return "ZeroDivisionError";
    case ErrorKind::kTypeError: return "TypeError";
    case ErrorKind::kIndexError: return "IndexError";
    case ErrorKind::kNameError: return "NameError";
    case ErrorKind::kTimeout: return "Timeout";
  }
  return "?";
}

std::optional<ErrorKind> parse_error_kind(const std::string& name) {
  for (int k = 0; k < kNumErrorKinds; ++k) {
    if (name == error_kind_name(static_cast<ErrorKind>(k))) return static_cast<ErrorKind>(k);
  }
  return std::nullopt;
}

std::string class_name(int target_class) {
  if (target_class == 0) return "no-error";
  return error_kind_name(static_cast<ErrorKind>(target_class - 1));
}

namespace {

constexpr std::int64_t kIntLimit = std::int64_t{1} << 62;
constexpr std::size_t kMaxSequence = 10000;

struct Throw {
  ErrorKind kind;
  std::string message;
};

[[noreturn]] void raise(ErrorKind kind, std::string message) { throw Throw{kind, std::move(message)}; }

std::string format_float(double d) {
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  if (std::isnan(d)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, end);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

const char* type_name(const Value& v) {
  switch (v.data.index()) {
    case 0: return "NoneType";
    case 1: return "bool";
    case 2: return "int";
    case 3: return "float";
    case 4: return "str";
    default: return "list";
  }
}

int list_depth(const Value& v) {
  if (!v.is_list()) return 0;
  int d = 0;
  for (const Value& x : std::get<Value::List>(v.data)) d = std::max(d, list_depth(x));
  return d + 1;
}

bool truthy(const Value& v) {
  switch (v.data.index()) {
    case 0: return false;
    case 1: return std::get<bool>(v.data);
    case 2: return std::get<std::int64_t>(v.data) != 0;
    case 3: return std::get<double>(v.data) != 0.0;
    case 4: return !std::get<std::string>(v.data).empty();
    default: return !std::get<Value::List>(v.data).empty();
  }
}

bool is_intlike(const Value& v) { return v.is_int() || v.is_bool(); }
bool is_number(const Value& v) { return is_intlike(v) || v.is_float(); }

std::int64_t as_int(const Value& v) {
  if (v.is_bool()) return std::get<bool>(v.data) ? 1 : 0;
  return std::get<std::int64_t>(v.data);
}
double as_float(const Value& v) {
  if (v.is_float()) return std::get<double>(v.data);
  return static_cast<double>(as_int(v));
}

Value checked(__int128 r) {
  if (r >= kIntLimit || r <= -kIntLimit) raise(ErrorKind::kValueError, "integer overflow");
  return Value(static_cast<std::int64_t>(r));
}

Value checked_float(double d) {
  if (!std::isfinite(d)) raise(ErrorKind::kValueError, "float overflow");
  return Value(d);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  std::int64_t m = a % b;
  if (m != 0 && ((m < 0) != (b < 0))) m += b;
  return m;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  if (v >= kIntLimit || v <= -kIntLimit) return std::nullopt;
  return v;
}

Value repeat(const Value& seq, std::int64_t n) {
  if (n < 0) n = 0;
  if (seq.is_string()) {
    const std::string& s = std::get<std::string>(seq.data);
    if (s.size() * static_cast<std::size_t>(n) > kMaxSequence) raise(ErrorKind::kValueError, "sequence too long");
    std::string out;
    for (std::int64_t i = 0; i < n; ++i) out += s;
    return Value(out);
  }
  const Value::List& l = std::get<Value::List>(seq.data);
  if (l.size() * static_cast<std::size_t>(n) > kMaxSequence) raise(ErrorKind::kValueError, "sequence too long");
  Value::List out;
  for (std::int64_t i = 0; i < n; ++i) out.insert(out.end(), l.begin(), l.end());
  return Value(out);
}

int compare(const Value& a, const Value& b, const std::string& op) {
  if (is_number(a) && is_number(b)) {
    if (is_intlike(a) && is_intlike(b)) {
      const auto x = as_int(a), y = as_int(b);
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    const double x = as_float(a), y = as_float(b);
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (a.is_string() && b.is_string()) {
    const int c = std::get<std::string>(a.data).compare(std::get<std::string>(b.data));
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  if (a.is_list() && b.is_list()) {
    const auto& x = std::get<Value::List>(a.data);
    const auto& y = std::get<Value::List>(b.data);
    for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
      const int c = compare(x[i], y[i], op);
      if (c != 0) return c;
    }
    return x.size() < y.size() ? -1 : (x.size() > y.size() ? 1 : 0);
  }
  raise(ErrorKind::kTypeError, std::string("'") + op + "' not supported between " + type_name(a) +
                                   " and " + type_name(b));
}

bool equal(const Value& a, const Value& b) {
  if (is_number(a) && is_number(b)) return compare(a, b, "==") == 0;
  if (a.data.index() != b.data.index()) return false;
  if (a.is_list()) {
    const auto& x = std::get<Value::List>(a.data);
    const auto& y = std::get<Value::List>(b.data);
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!equal(x[i], y[i])) return false;
    return true;
  }
  return a == b;
}

Value binary(const std::string& op, const Value& a, const Value& b) {
  if (op == "==") return Value(equal(a, b));
  if (op == "!=") return Value(!equal(a, b));
  if (op == "<") return Value(compare(a, b, op) < 0);
  if (op == "<=") return Value(compare(a, b, op) <= 0);
  if (op == ">") return Value(compare(a, b, op) > 0);
  if (op == ">=") return Value(compare(a, b, op) >= 0);

  const auto mismatch = [&]() -> Value {
    raise(ErrorKind::kTypeError, "unsupported operand type(s) for " + op + ": " + type_name(a) +
                                     " and " + type_name(b));
  };
  if (op == "+") {
    if (a.is_string() && b.is_string()) {
      std::string s = std::get<std::string>(a.data) + std::get<std::string>(b.data);
      if (s.size() > kMaxSequence) raise(ErrorKind::kValueError, "sequence too long");
      return Value(s);
    }
    if (a.is_list() && b.is_list()) {
      Value::List l = std::get<Value::List>(a.data);
      const auto& r = std::get<Value::List>(b.data);
      l.insert(l.end(), r.begin(), r.end());
      if (l.size() > kMaxSequence) raise(ErrorKind::kValueError, "sequence too long");
      return Value(l);
    }
  }
  if (op == "*") {
    if ((a.is_string() || a.is_list()) && is_intlike(b)) return repeat(a, as_int(b));
    if ((b.is_string() || b.is_list()) && is_intlike(a)) return repeat(b, as_int(a));
  }
  if (!is_number(a) || !is_number(b)) return mismatch();

  if (op == "/") {
    if (as_float(b) == 0.0) raise(ErrorKind::kZeroDivisionError, "division by zero");
    return checked_float(as_float(a) / as_float(b));
  }
  if (is_intlike(a) && is_intlike(b)) {
    const __int128 x = as_int(a), y = as_int(b);
    if (op == "+") return checked(x + y);
    if (op == "-") return checked(x - y);
    if (op == "*") return checked(x * y);
    if (y == 0) raise(ErrorKind::kZeroDivisionError, "integer division or modulo by zero");
    if (op == "//") return checked(floor_div(as_int(a), as_int(b)));
    if (op == "%") return checked(floor_mod(as_int(a), as_int(b)));
    return mismatch();
  }
  const double x = as_float(a), y = as_float(b);
  if (op == "+") return checked_float(x + y);
  if (op == "-") return checked_float(x - y);
  if (op == "*") return checked_float(x * y);
  if (y == 0.0) raise(ErrorKind::kZeroDivisionError, "float division by zero");
  if (op == "//") return checked_float(std::floor(x / y));
  if (op == "%") return checked_float(x - y * std::floor(x / y));
  return mismatch();
}

Value read_stdin(Environment& env) {
  if (!env.stdin || env.stdin_cursor >= static_cast<int>(env.stdin->size())) {
    raise(ErrorKind::kEOFError, "EOF when reading a line");
  }
  return (*env.stdin)[env.stdin_cursor++];
}

void expect_args(const ml::Expr& call, std::size_t lo, std::size_t hi) {
  if (call.args.size() < lo || call.args.size() > hi) {
    raise(ErrorKind::kTypeError, call.text + "() takes " + std::to_string(lo) + " to " +
                                     std::to_string(hi) + " arguments");
  }
}

Value eval(const ml::Expr& e, Environment& env);

Value call_builtin(const ml::Expr& e, Environment& env) {
  const std::string& f = e.text;
  std::vector<Value> args;
  for (const ml::ExprPtr& a : e.args) args.push_back(eval(*a, env));
  if (f == "input_int") {
    expect_args(e, 0, 0);
    const Value v = read_stdin(env);
    if (is_intlike(v)) return Value(as_int(v));
    const std::string s = to_str(v);
    if (auto i = parse_int(s)) return Value(*i);
    raise(ErrorKind::kValueError, "invalid literal for int(): '" + s + "'");
  }
  if (f == "input_str") {
    expect_args(e, 0, 0);
    return Value(to_str(read_stdin(env)));
  }
  if (f == "input_list") {
    expect_args(e, 0, 0);
    const Value v = read_stdin(env);
    if (v.is_list()) return v;
    std::istringstream words(to_str(v));
    Value::List out;
    std::string w;
    while (words >> w) {
      auto i = parse_int(w);
      if (!i) raise(ErrorKind::kValueError, "invalid literal for int(): '" + w + "'");
      out.emplace_back(*i);
    }
    return Value(out);
  }
  if (f == "len") {
    expect_args(e, 1, 1);
    if (args[0].is_string()) return Value(static_cast<std::int64_t>(std::get<std::string>(args[0].data).size()));
    if (args[0].is_list()) return Value(static_cast<std::int64_t>(std::get<Value::List>(args[0].data).size()));
    raise(ErrorKind::kTypeError, std::string("object of type '") + type_name(args[0]) + "' has no len()");
  }
  if (f == "abs") {
    expect_args(e, 1, 1);
    if (is_intlike(args[0])) return Value(std::abs(as_int(args[0])));
    if (args[0].is_float()) return Value(std::fabs(as_float(args[0])));
    raise(ErrorKind::kTypeError, std::string("bad operand type for abs(): '") + type_name(args[0]) + "'");
  }
  if (f == "sqrt") {
    expect_args(e, 1, 1);
    if (!is_number(args[0])) raise(ErrorKind::kTypeError, "must be real number");
    if (as_float(args[0]) < 0) raise(ErrorKind::kValueError, "math domain error");
    return Value(std::sqrt(as_float(args[0])));
  }
  if (f == "int") {
    expect_args(e, 1, 1);
    if (is_intlike(args[0])) return Value(as_int(args[0]));
    if (args[0].is_float()) {
      const double d = std::trunc(as_float(args[0]));
      if (std::fabs(d) >= static_cast<double>(kIntLimit)) raise(ErrorKind::kValueError, "integer overflow");
      return Value(static_cast<std::int64_t>(d));
    }
    if (args[0].is_string()) {
      const std::string& s = std::get<std::string>(args[0].data);
      if (auto i = parse_int(s)) return Value(*i);
      raise(ErrorKind::kValueError, "invalid literal for int(): '" + s + "'");
    }
    raise(ErrorKind::kTypeError, std::string("int() argument must be a string or a number, not '") +
                                     type_name(args[0]) + "'");
  }
  if (f == "str") {
    expect_args(e, 1, 1);
    return Value(to_str(args[0]));
  }
  if (f == "range") {
    expect_args(e, 1, 3);
    for (const Value& a : args) {
      if (!is_intlike(a)) raise(ErrorKind::kTypeError, std::string("'") + type_name(a) + "' object cannot be interpreted as an integer");
    }
    std::int64_t start = 0, stop = 0, step = 1;
    if (args.size() == 1) {
      stop = as_int(args[0]);
    } else {
      start = as_int(args[0]);
      stop = as_int(args[1]);
      if (args.size() == 3) step = as_int(args[2]);
    }
    if (step == 0) raise(ErrorKind::kValueError, "range() arg 3 must not be zero");
    Value::List out;
    for (std::int64_t i = start; step > 0 ? i < stop : i > stop; i += step) {
      if (out.size() >= kMaxSequence) raise(ErrorKind::kValueError, "sequence too long");
      out.emplace_back(i);
    }
    return Value(out);
  }
  if (f == "print") {
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (i) env.stdout_text += ' ';
      env.stdout_text += to_str(args[i]);
    }
    env.stdout_text += '\n';
    return Value();
  }
  if (f == "raise_value_error") {
    expect_args(e, 0, 0);
    raise(ErrorKind::kValueError, "raised");
  }
  raise(ErrorKind::kNameError, "name '" + f + "' is not defined");
}

Value eval(const ml::Expr& e, Environment& env) {
  switch (e.kind) {
    case ml::Expr::Kind::kInt:
      return Value(e.int_value);
    case ml::Expr::Kind::kString:
      return Value(e.text);
    case ml::Expr::Kind::kName: {
      if (e.text == "True") return Value(true);
      if (e.text == "False") return Value(false);
      if (e.text == "None") return Value();
      auto it = env.bindings.find(e.text);
      if (it == env.bindings.end()) raise(ErrorKind::kNameError, "name '" + e.text + "' is not defined");
      return it->second;
    }
    case ml::Expr::Kind::kList: {
      Value::List items;
      for (const ml::ExprPtr& a : e.args) items.push_back(eval(*a, env));
      Value v(std::move(items));
      if (list_depth(v) > 2) raise(ErrorKind::kTypeError, "list nesting deeper than 2");
      return v;
    }
    case ml::Expr::Kind::kUnary: {
      const Value v = eval(*e.args[0], env);
      if (e.text == "not") return Value(!truthy(v));
      if (is_intlike(v)) return checked(-static_cast<__int128>(as_int(v)));
      if (v.is_float()) return Value(-as_float(v));
      raise(ErrorKind::kTypeError, std::string("bad operand type for unary -: '") + type_name(v) + "'");
    }
    case ml::Expr::Kind::kBinary: {
      if (e.text == "and" || e.text == "or") {
        Value l = eval(*e.args[0], env);
        if (truthy(l) == (e.text == "or")) return l;
        return eval(*e.args[1], env);
      }
      const Value l = eval(*e.args[0], env);
      const Value r = eval(*e.args[1], env);
      return binary(e.text, l, r);
    }
    case ml::Expr::Kind::kIndex: {
      const Value base = eval(*e.args[0], env);
      const Value idx = eval(*e.args[1], env);
      if (!base.is_list() && !base.is_string()) {
        raise(ErrorKind::kTypeError, std::string("'") + type_name(base) + "' object is not subscriptable");
      }
      if (!is_intlike(idx)) raise(ErrorKind::kTypeError, "indices must be integers");
      const std::int64_t n = base.is_list()
                                 ? static_cast<std::int64_t>(std::get<Value::List>(base.data).size())
                                 : static_cast<std::int64_t>(std::get<std::string>(base.data).size());
      std::int64_t i = as_int(idx);
      if (i < 0) i += n;
      if (i < 0 || i >= n) raise(ErrorKind::kIndexError, "index out of range");
      if (base.is_list()) return std::get<Value::List>(base.data)[i];
      return Value(std::string(1, std::get<std::string>(base.data)[i]));
    }
    case ml::Expr::Kind::kCall:
      return call_builtin(e, env);
  }
  return Value();
}

// Runs one statement; for conditional headers returns the condition.
bool run_statement(const ml::Statement& s, Environment& env) {
  switch (s.kind) {
    case ml::StatementKind::kAssign:
      env.bindings[s.target] = eval(*s.expr, env);
      return true;
    case ml::StatementKind::kExprCall:
    case ml::StatementKind::kPrint:
      eval(*s.expr, env);
      return true;
    case ml::StatementKind::kIfHeader:
    case ml::StatementKind::kWhileHeader:
      return truthy(eval(*s.expr, env));
    case ml::StatementKind::kForHeader:
      eval(*s.expr, env);
      return true;
    default:
      return true;
  }
}

}  // namespace

std::string to_str(const Value& v) {
  switch (v.data.index()) {
    case 0: return "None";
    case 1: return std::get<bool>(v.data) ? "True" : "False";
    case 2: return std::to_string(std::get<std::int64_t>(v.data));
    case 3: return format_float(std::get<double>(v.data));
    case 4: return std::get<std::string>(v.data);
    default: {
      std::string out = "[";
      const auto& l = std::get<Value::List>(v.data);
      for (std::size_t i = 0; i < l.size(); ++i) {
        if (i) out += ", ";
        out += to_repr(l[i]);
      }
      return out + "]";
    }
  }
}

std::string to_repr(const Value& v) {
  if (v.is_string()) return "'" + std::get<std::string>(v.data) + "'";
  return to_str(v);
}

std::vector<Value> stdin_from_text(const std::string& text) {
  std::vector<Value> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.emplace_back(line);
  }
  return out;
}

Environment::Environment(std::vector<Value> input)
    : stdin(std::make_shared<const std::vector<Value>>(std::move(input))) {}

std::string Environment::describe() const {
  std::string out = "{";
  bool first = true;
  for (const auto& [k, v] : bindings) {
    if (!first) out += ", ";
    first = false;
    out += k + ": " + to_repr(v);
  }
  return out + "}";
}

std::optional<Raised> evaluate_statement(const ml::Statement& statement, Environment& env) {
  try {
    run_statement(statement, env);
  } catch (const Throw& t) {
    return Raised{t.kind, statement.line, t.message};
  }
  return std::nullopt;
}

NodeOutcome execute_node(const ml::ControlFlowGraph& cfg, const ml::Program& program, int node,
                         Environment& env) {
  const ml::CfgNode& c = cfg.nodes[node];
  NodeOutcome out;
  if (cfg.is_inert(node)) return out;
  const ml::Statement& s = program.statements[c.statement];
  try {
    switch (c.role) {
      case ml::NodeRole::kForIter: {
        std::vector<std::int64_t> a;
        for (const ml::ExprPtr& e : s.expr->args) {
          const Value v = eval(*e, env);
          if (!is_intlike(v)) {
            raise(ErrorKind::kTypeError, std::string("'") + type_name(v) +
                                             "' object cannot be interpreted as an integer");
          }
          a.push_back(as_int(v));
        }
        std::int64_t start = 0, stop = 0, step = 1;
        if (a.size() == 1) {
          stop = a[0];
        } else {
          start = a[0];
          stop = a[1];
          if (a.size() == 3) step = a[2];
        }
        if (step == 0) raise(ErrorKind::kValueError, "range() arg 3 must not be zero");
        env.loops[node] = RangeState{start, stop, step};
        break;
      }
      case ml::NodeRole::kForNext: {
        auto it = env.loops.find(node - 1);
        RangeState& st = it->second;
        const bool more = st.step > 0 ? st.next < st.stop : st.next > st.stop;
        if (more) {
          env.bindings[s.target] = Value(st.next);
          st.next += st.step;
        } else {
          env.loops.erase(it);
        }
        out.take_n1 = more;
        break;
      }
      default:
        out.take_n1 = run_statement(s, env);
        break;
    }
  } catch (const Throw& t) {
    out.raised = Raised{t.kind, s.line, t.message};
  }
  return out;
}

namespace {

DiscreteTrace run(const ml::ControlFlowGraph& cfg, const ml::Program& program,
                  const std::vector<Value>& input, int step_budget, bool follow_raise) {
  DiscreteTrace trace;
  Environment env(input);
  int p = 0;
  int t = 0;
  trace.steps.push_back(Step{0, p, env});
  std::optional<Raised> pending;
  while (!cfg.is_terminal(p) && t < step_budget) {
    const NodeOutcome o = execute_node(cfg, program, p, env);
    const ml::CfgNode& c = cfg.nodes[p];
    if (o.raised) {
      pending = o.raised;
      p = follow_raise ? c.r : cfg.exit;
    } else {
      p = o.take_n1 ? c.n1 : c.n2;
    }
    ++t;
    trace.steps.push_back(Step{t, p, env});
    if (o.raised && !follow_raise) break;
  }
  if (!cfg.is_terminal(p)) {
    trace.outcome = Outcome::kStepBudgetExceeded;
    trace.kind = ErrorKind::kTimeout;
    trace.line = 0;
    trace.message = "step budget exhausted";
  } else if (pending && (!follow_raise || p == cfg.error)) {
    trace.outcome = Outcome::kError;
    trace.kind = pending->kind;
    trace.line = pending->line;
    trace.message = pending->message;
  } else {
    trace.outcome = Outcome::kNoError;
  }
  return trace;
}

}  // namespace

int DiscreteTrace::target_class() const {
  if (outcome == Outcome::kNoError) return 0;
  return 1 + static_cast<int>(kind);
}

std::string DiscreteTrace::dump(const ml::ControlFlowGraph& cfg) const {
  std::ostringstream os;
  for (const Step& s : steps) os << s.t << ',' << s.node << ',' << cfg.nodes[s.node].line << '\n';
  switch (outcome) {
    case Outcome::kNoError: os << "no-error,none,0\n"; break;
    case Outcome::kError: os << "error," << error_kind_name(kind) << ',' << line << '\n'; break;
    case Outcome::kStepBudgetExceeded: os << "step-budget-exceeded,Timeout,0\n"; break;
  }
  return os.str();
}

DiscreteTrace run_interpreter_a(const ml::ControlFlowGraph& cfg, const ml::Program& program,
                                const std::vector<Value>& input, int step_budget) {
  return run(cfg, program, input, step_budget, false);
}

DiscreteTrace run_interpreter_b(const ml::ControlFlowGraph& cfg, const ml::Program& program,
                                const std::vector<Value>& input, int step_budget) {
  return run(cfg, program, input, step_budget, true);
}

}  // namespace ipa::interp
