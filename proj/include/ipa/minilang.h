#ifndef IPA_MINILANG_H_
#define IPA_MINILANG_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// A small indentation-structured imperative language: assignments,
// arithmetic, comparisons, boolean ops, list literals and indexing, calls to
// a fixed builtin set, if/else, while, for-in-range, try/except (depth <= 2),
// break/continue/pass. Blocks are indented by two spaces.
namespace ipa::minilang {

enum class TokenKind { kIdent, kIntLiteral, kStringLiteral, kKeyword, kOperator, kPunctuation };

struct Token {
  std::string text;
  TokenKind kind = TokenKind::kIdent;
  int statement_index = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

enum class StatementKind {
  kAssign,
  kExprCall,
  kIfHeader,
  kElseMarker,
  kWhileHeader,
  kForHeader,
  kTryMarker,
  kExceptHeader,
  kPass,
  kPrint,
  kBreak,
  kContinue,
  // Leading string literal carrying a resource description.
  kDocstring,
};

const char* statement_kind_name(StatementKind kind);
bool is_marker(StatementKind kind);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { kInt, kString, kName, kList, kUnary, kBinary, kIndex, kCall };
  Kind kind = Kind::kInt;
  std::int64_t int_value = 0;
  // Name, string contents, operator, or callee.
  std::string text;
  std::vector<ExprPtr> args;
};

struct Statement {
  StatementKind kind = StatementKind::kPass;
  std::vector<Token> tokens;
  int line = 0;  // 1-based; an injected docstring sits on line 0
  int indent = 0;
  // Assignment target or loop variable.
  std::string target;
  // Assigned value, condition, call, or the range(...) call of a for header.
  ExprPtr expr;
};

struct Program {
  std::vector<Statement> statements;
  std::string source;
  std::optional<std::string> docstring;

  int token_count() const;
};

struct ParseLimits {
  int max_statements = 64;
  int max_tokens = 512;
};

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

class LimitExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integer literals must stay below this bound.
inline constexpr std::int64_t kMaxLiteral = std::int64_t{1} << 31;

Program parse(std::string_view source, const ParseLimits& limits = {});

// Canonical source form; parse(pretty_print(p)) is structurally equal to p.
std::string pretty_print(const Program& program);
std::string expr_to_string(const Expr& expr);

// Structural equality: statement kinds, indentation, targets and expression
// trees (line numbers and source text are ignored).
bool structurally_equal(const Program& a, const Program& b);

// Prepends a docstring statement (line 0) whose tokens are the description's
// words. Line numbers of the original statements are unchanged.
Program inject_docstring(const Program& program, std::string_view description);

// Word-level tokens of free text: runs of letters/digits/underscore, and
// single punctuation characters.
std::vector<std::string> description_words(std::string_view text);

// One (begin, end) token range per statement; the ranges partition the
// concatenated token sequence.
std::vector<std::pair<int, int>> statement_spans(const Program& program);
std::vector<Token> flat_tokens(const Program& program);

// ---- control flow graph ----------------------------------------------------

enum class NodeRole {
  kStatement,
  // The two halves of a for header: iterator construction, then loop
  // variable assignment (which also decides whether the loop continues).
  kForIter,
  kForNext,
  // else markers keep their statement's node number but carry no control
  // flow; they are never reached. try markers execute as no-ops.
  kMarker,
  kExit,
  kError,
};

struct CfgNode {
  NodeRole role = NodeRole::kStatement;
  int statement = -1;  // -1 for exit/error
  int line = 0;        // 0 for exit/error
  int n1 = 0;          // true / only successor
  int n2 = 0;          // false successor
  int r = 0;           // raise target
  std::pair<int, int> span{0, 0};
};

struct ControlFlowGraph {
  std::vector<CfgNode> nodes;
  int exit = 0;
  int error = 0;

  int size() const { return static_cast<int>(nodes.size()); }
  bool is_terminal(int n) const { return n == exit || n == error; }
  // Terminal or marker: a node that never executes a statement.
  bool is_inert(int n) const {
    return is_terminal(n) || nodes[n].role == NodeRole::kMarker;
  }
  bool is_branch(int n) const { return nodes[n].n1 != nodes[n].n2; }

  // One line per node: `node-id | kind | n1 | n2 | r | span`.
  std::string dump(const Program& program) const;
};

ControlFlowGraph build_cfg(const Program& program);

// Nodes reachable from node 0 along n1/n2/r edges.
std::vector<bool> reachable_nodes(const ControlFlowGraph& cfg);

}  // namespace ipa::minilang

#endif  // IPA_MINILANG_H_
