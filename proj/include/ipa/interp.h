#ifndef IPA_INTERP_H_
#define IPA_INTERP_H_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ipa/minilang.h"

// Discrete reference interpreters. Interpreter A stops at the first raised
// exception; Interpreter B follows raise edges to except handlers or to the
// global error node.
namespace ipa::interp {

enum class ErrorKind {
  kEOFError,
  kValueError,
  kZeroDivisionError,
  kTypeError,
  kIndexError,
  kNameError,
  kTimeout,
};
inline constexpr int kNumErrorKinds = 7;
// Classes are "no error" followed by one class per ErrorKind.
inline constexpr int kNumClasses = 1 + kNumErrorKinds;

const char* error_kind_name(ErrorKind kind);
std::optional<ErrorKind> parse_error_kind(const std::string& name);
// "no-error" for class 0.
std::string class_name(int target_class);

struct Value {
  using List = std::vector<Value>;
  std::variant<std::monostate, bool, std::int64_t, double, std::string, List> data;

  Value() = default;
  Value(bool b) : data(b) {}
  Value(std::int64_t i) : data(i) {}
  Value(int i) : data(static_cast<std::int64_t>(i)) {}
  Value(double d) : data(d) {}
  Value(std::string s) : data(std::move(s)) {}
  Value(const char* s) : data(std::string(s)) {}
  Value(List l) : data(std::move(l)) {}

  bool is_none() const { return std::holds_alternative<std::monostate>(data); }
  bool is_bool() const { return std::holds_alternative<bool>(data); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
  bool is_float() const { return std::holds_alternative<double>(data); }
  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_list() const { return std::holds_alternative<List>(data); }

  friend bool operator==(const Value&, const Value&) = default;
};

// Python-style str() and repr().
std::string to_str(const Value& v);
std::string to_repr(const Value& v);

// Lines of stdin text as string values.
std::vector<Value> stdin_from_text(const std::string& text);

struct RangeState {
  std::int64_t next = 0;
  std::int64_t stop = 0;
  std::int64_t step = 1;
};

struct Environment {
  std::map<std::string, Value> bindings;
  int stdin_cursor = 0;
  std::shared_ptr<const std::vector<Value>> stdin;
  // Live for-loop iterators, keyed by the for-iter node.
  std::map<int, RangeState> loops;
  std::string stdout_text;

  explicit Environment(std::vector<Value> input = {});
  // "{x: -3, y: 3}"
  std::string describe() const;
};

struct Raised {
  ErrorKind kind = ErrorKind::kValueError;
  int line = 0;
  std::string message;
};

// Executes a simple statement, or evaluates a header's condition for its
// side effects. Errors come back in the result, never as exceptions.
std::optional<Raised> evaluate_statement(const minilang::Statement& statement, Environment& env);

struct NodeOutcome {
  bool take_n1 = true;
  std::optional<Raised> raised;
};
NodeOutcome execute_node(const minilang::ControlFlowGraph& cfg, const minilang::Program& program,
                         int node, Environment& env);

struct Step {
  int t = 0;
  int node = 0;
  Environment env;
};

enum class Outcome { kNoError, kError, kStepBudgetExceeded };

struct DiscreteTrace {
  std::vector<Step> steps;
  Outcome outcome = Outcome::kNoError;
  ErrorKind kind = ErrorKind::kTimeout;
  int line = 0;  // raising line for kError
  std::string message;

  // 0 for no error, 1 + kind otherwise (budget exhaustion is Timeout).
  int target_class() const;
  // One `t,node,line` row per step and a final `outcome,kind,line` row.
  std::string dump(const minilang::ControlFlowGraph& cfg) const;
};

inline constexpr int kDefaultStepBudget = 500;

DiscreteTrace run_interpreter_a(const minilang::ControlFlowGraph& cfg,
                                const minilang::Program& program, const std::vector<Value>& input,
                                int step_budget = kDefaultStepBudget);
DiscreteTrace run_interpreter_b(const minilang::ControlFlowGraph& cfg,
                                const minilang::Program& program, const std::vector<Value>& input,
                                int step_budget = kDefaultStepBudget);

}  // namespace ipa::interp

#endif  // IPA_INTERP_H_
