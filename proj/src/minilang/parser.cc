#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "block_tree.h"
#include "ipa/minilang.h"

namespace ipa::minilang {

SyntaxError::SyntaxError(int line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

const char* statement_kind_name(StatementKind kind) {
  switch (kind) {
    case StatementKind::kAssign: return "assign";
    case StatementKind::kExprCall: return "expr-call";
    case StatementKind::kIfHeader: return "if-header";
    case StatementKind::kElseMarker: return "else-marker";
    case StatementKind::kWhileHeader: return "while-header";
    case StatementKind::kForHeader: return "for-header";
    case StatementKind::kTryMarker: return "try-marker";
    case StatementKind::kExceptHeader: return "except-header";
    case StatementKind::kPass: return "pass";
    case StatementKind::kPrint: return "print";
    case StatementKind::kBreak: return "break";
    case StatementKind::kContinue: return "continue";
    case StatementKind::kDocstring: return "docstring";
  }
  return "?";
}

bool is_marker(StatementKind kind) {
  return kind == StatementKind::kElseMarker || kind == StatementKind::kTryMarker;
}

int Program::token_count() const {
  int n = 0;
  for (const Statement& s : statements) n += static_cast<int>(s.tokens.size());
  return n;
}

namespace {

const std::set<std::string>& keywords() {
  static const std::set<std::string> k = {"if",    "else", "while", "for",      "in",
                                          "try",   "except", "pass", "break", "continue",
                                          "and",   "or",   "not"};
  return k;
}

// ---- lexer ------------------------------------------------------------------

std::vector<Token> lex_line(std::string_view text, int line) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](std::string t, TokenKind k) { out.push_back(Token{std::move(t), k, 0}); };
  while (i < text.size()) {
    const char c = text[i];
    if (c == ' ') {
      ++i;
      continue;
    }
    if (c == '#') break;
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      std::string digits(text.substr(i, j - i));
      if (digits.size() > 10 || std::stoll(digits) >= kMaxLiteral) {
        throw SyntaxError(line, "integer literal " + digits + " exceeds 2^31");
      }
      push(std::move(digits), TokenKind::kIntLiteral);
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
        ++j;
      std::string word(text.substr(i, j - i));
      const bool kw = keywords().count(word) > 0;
      push(std::move(word), kw ? TokenKind::kKeyword : TokenKind::kIdent);
      i = j;
      continue;
    }
    if (c == '"') {
      const std::size_t j = text.find('"', i + 1);
      if (j == std::string_view::npos) throw SyntaxError(line, "unterminated string literal");
      push(std::string(text.substr(i, j - i + 1)), TokenKind::kStringLiteral);
      i = j + 1;
      continue;
    }
    static const char* const kTwo[] = {"//", "==", "!=", "<=", ">="};
    bool matched = false;
    for (const char* op : kTwo) {
      if (text.substr(i, 2) == op) {
        push(op, TokenKind::kOperator);
        i += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("+-*/%<>=").find(c) != std::string_view::npos) {
      push(std::string(1, c), TokenKind::kOperator);
      ++i;
      continue;
    }
    if (std::string_view("()[],:").find(c) != std::string_view::npos) {
      push(std::string(1, c), TokenKind::kPunctuation);
      ++i;
      continue;
    }
    throw SyntaxError(line, std::string("unexpected character '") + c + "'");
  }
  return out;
}

// ---- expression parser ------------------------------------------------------

ExprPtr make(Expr::Kind kind, std::string text = {}, std::vector<ExprPtr> args = {},
             std::int64_t v = 0) {
  auto e = std::make_shared<Expr>();
  e->kind = kind;
  e->text = std::move(text);
  e->args = std::move(args);
  e->int_value = v;
  return e;
}

class ExprParser {
 public:
  ExprParser(const std::vector<Token>& toks, std::size_t begin, std::size_t end, int line)
      : toks_(toks), pos_(begin), end_(end), line_(line) {}

  ExprPtr parse_all() {
    ExprPtr e = parse_or();
    if (pos_ != end_) fail("unexpected token '" + toks_[pos_].text + "'");
    return e;
  }

 private:
  bool at(std::string_view text) const { return pos_ < end_ && toks_[pos_].text == text; }
  bool at_kind(TokenKind k) const { return pos_ < end_ && toks_[pos_].kind == k; }
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(line_, msg); }
  void expect(std::string_view text) {
    if (!at(text)) {
      fail("expected '" + std::string(text) + "'" +
           (pos_ < end_ ? " before '" + toks_[pos_].text + "'" : " at end of line"));
    }
    ++pos_;
  }

  ExprPtr parse_or() {
    ExprPtr l = parse_and();
    while (at("or")) {
      ++pos_;
      l = make(Expr::Kind::kBinary, "or", {l, parse_and()});
    }
    return l;
  }
  ExprPtr parse_and() {
    ExprPtr l = parse_not();
    while (at("and")) {
      ++pos_;
      l = make(Expr::Kind::kBinary, "and", {l, parse_not()});
    }
    return l;
  }
  ExprPtr parse_not() {
    if (at("not")) {
      ++pos_;
      return make(Expr::Kind::kUnary, "not", {parse_not()});
    }
    return parse_compare();
  }
  ExprPtr parse_compare() {
    ExprPtr l = parse_arith();
    static const std::set<std::string> ops = {"==", "!=", "<", "<=", ">", ">="};
    if (pos_ < end_ && toks_[pos_].kind == TokenKind::kOperator && ops.count(toks_[pos_].text)) {
      std::string op = toks_[pos_++].text;
      l = make(Expr::Kind::kBinary, op, {l, parse_arith()});
      if (pos_ < end_ && toks_[pos_].kind == TokenKind::kOperator && ops.count(toks_[pos_].text)) {
        fail("chained comparisons are not supported");
      }
    }
    return l;
  }
  ExprPtr parse_arith() {
    ExprPtr l = parse_term();
    while (at("+") || at("-")) {
      std::string op = toks_[pos_++].text;
      l = make(Expr::Kind::kBinary, op, {l, parse_term()});
    }
    return l;
  }
  ExprPtr parse_term() {
    ExprPtr l = parse_unary();
    while (at("*") || at("/") || at("//") || at("%")) {
      std::string op = toks_[pos_++].text;
      l = make(Expr::Kind::kBinary, op, {l, parse_unary()});
    }
    return l;
  }
  ExprPtr parse_unary() {
    if (at("-")) {
      ++pos_;
      return make(Expr::Kind::kUnary, "-", {parse_unary()});
    }
    return parse_postfix();
  }
  ExprPtr parse_postfix() {
    ExprPtr e = parse_atom();
    while (true) {
      if (at("[")) {
        ++pos_;
        ExprPtr idx = parse_or();
        expect("]");
        e = make(Expr::Kind::kIndex, "", {e, idx});
      } else if (at("(")) {
        if (e->kind != Expr::Kind::kName) fail("only named builtins can be called");
        ++pos_;
        std::vector<ExprPtr> args;
        if (!at(")")) {
          args.push_back(parse_or());
          while (at(",")) {
            ++pos_;
            args.push_back(parse_or());
          }
        }
        expect(")");
        e = make(Expr::Kind::kCall, e->text, std::move(args));
      } else {
        return e;
      }
    }
  }
  ExprPtr parse_atom() {
    if (pos_ >= end_) fail("expected an expression at end of line");
    const Token& t = toks_[pos_];
    switch (t.kind) {
      case TokenKind::kIntLiteral:
        ++pos_;
        return make(Expr::Kind::kInt, t.text, {}, std::stoll(t.text));
      case TokenKind::kStringLiteral:
        ++pos_;
        return make(Expr::Kind::kString, t.text.substr(1, t.text.size() - 2));
      case TokenKind::kIdent:
        ++pos_;
        return make(Expr::Kind::kName, t.text);
      default:
        break;
    }
    if (at("(")) {
      ++pos_;
      ExprPtr e = parse_or();
      expect(")");
      return e;
    }
    if (at("[")) {
      ++pos_;
      std::vector<ExprPtr> items;
      if (!at("]")) {
        items.push_back(parse_or());
        while (at(",")) {
          ++pos_;
          items.push_back(parse_or());
        }
      }
      expect("]");
      return make(Expr::Kind::kList, "", std::move(items));
    }
    fail("unexpected token '" + t.text + "'");
  }

  const std::vector<Token>& toks_;
  std::size_t pos_;
  std::size_t end_;
  int line_;
};

// ---- statement parser -------------------------------------------------------

void require_colon_end(const std::vector<Token>& toks, int line) {
  if (toks.empty() || toks.back().text != ":") throw SyntaxError(line, "expected ':' at end of line");
}

Statement parse_statement(std::vector<Token> toks, int line, int indent, bool first) {
  Statement s;
  s.line = line;
  s.indent = indent;
  const std::string& head = toks[0].text;
  const bool kw = toks[0].kind == TokenKind::kKeyword;
  auto only = [&](StatementKind k, std::size_t n) {
    if (toks.size() != n) throw SyntaxError(line, "unexpected tokens after '" + head + "'");
    s.kind = k;
  };
  if (kw && (head == "if" || head == "while")) {
    require_colon_end(toks, line);
    if (toks.size() < 3) throw SyntaxError(line, "missing condition");
    s.kind = head == "if" ? StatementKind::kIfHeader : StatementKind::kWhileHeader;
    s.expr = ExprParser(toks, 1, toks.size() - 1, line).parse_all();
  } else if (kw && head == "else") {
    require_colon_end(toks, line);
    only(StatementKind::kElseMarker, 2);
    toks.clear();
  } else if (kw && head == "try") {
    require_colon_end(toks, line);
    only(StatementKind::kTryMarker, 2);
    toks.clear();
  } else if (kw && head == "except") {
    require_colon_end(toks, line);
    only(StatementKind::kExceptHeader, 2);
  } else if (kw && head == "for") {
    require_colon_end(toks, line);
    if (toks.size() < 6 || toks[1].kind != TokenKind::kIdent || toks[2].text != "in" ||
        toks[3].text != "range") {
      throw SyntaxError(line, "for loops must have the form 'for name in range(...):'");
    }
    s.kind = StatementKind::kForHeader;
    s.target = toks[1].text;
    s.expr = ExprParser(toks, 3, toks.size() - 1, line).parse_all();
    if (s.expr->kind != Expr::Kind::kCall || s.expr->args.empty() || s.expr->args.size() > 3) {
      throw SyntaxError(line, "range() takes 1 to 3 arguments");
    }
  } else if (kw && head == "pass") {
    only(StatementKind::kPass, 1);
  } else if (kw && head == "break") {
    only(StatementKind::kBreak, 1);
  } else if (kw && head == "continue") {
    only(StatementKind::kContinue, 1);
  } else if (kw) {
    throw SyntaxError(line, "unexpected keyword '" + head + "'");
  } else if (toks.size() >= 2 && toks[0].kind == TokenKind::kIdent && toks[1].text == "=") {
    if (toks.size() == 2) throw SyntaxError(line, "missing value in assignment");
    s.kind = StatementKind::kAssign;
    s.target = toks[0].text;
    s.expr = ExprParser(toks, 2, toks.size(), line).parse_all();
  } else if (toks.size() == 1 && toks[0].kind == TokenKind::kStringLiteral) {
    if (!first || indent != 0) throw SyntaxError(line, "string statements are only allowed as a leading docstring");
    s.kind = StatementKind::kDocstring;
    s.target = toks[0].text.substr(1, toks[0].text.size() - 2);
    toks.clear();
    for (std::string& w : description_words(s.target)) {
      toks.push_back(Token{std::move(w), TokenKind::kStringLiteral, 0});
    }
    if (toks.empty()) throw SyntaxError(line, "empty docstring");
  } else {
    s.expr = ExprParser(toks, 0, toks.size(), line).parse_all();
    if (s.expr->kind != Expr::Kind::kCall) throw SyntaxError(line, "expression statements must be calls");
    s.kind = s.expr->text == "print" ? StatementKind::kPrint : StatementKind::kExprCall;
  }
  s.tokens = std::move(toks);
  return s;
}

// ---- block structure --------------------------------------------------------

class TreeBuilder {
 public:
  explicit TreeBuilder(const Program& p) : st_(p.statements) {}

  internal::Block build() {
    std::size_t i = 0;
    internal::Block b = block(i, 0, false, 0);
    if (i != st_.size()) throw SyntaxError(st_[i].line, "unexpected indent");
    return b;
  }

 private:
  [[noreturn]] void fail(std::size_t i, const std::string& msg) const {
    throw SyntaxError(i < st_.size() ? st_[i].line : (st_.empty() ? 1 : st_.back().line), msg);
  }

  internal::Block nested(std::size_t& i, int depth, bool in_loop, int try_depth, std::size_t header) {
    if (i >= st_.size() || st_[i].indent != depth) {
      fail(header, "expected an indented block after '" +
                       std::string(statement_kind_name(st_[header].kind)) + "'");
    }
    return block(i, depth, in_loop, try_depth);
  }

  internal::Block block(std::size_t& i, int depth, bool in_loop, int try_depth) {
    internal::Block out;
    while (i < st_.size()) {
      const Statement& s = st_[i];
      if (s.indent < depth) break;
      if (s.indent > depth) fail(i, "unexpected indent");
      if (s.kind == StatementKind::kElseMarker) fail(i, "else without matching if");
      if (s.kind == StatementKind::kExceptHeader) fail(i, "except without matching try");
      if ((s.kind == StatementKind::kBreak || s.kind == StatementKind::kContinue) && !in_loop) {
        fail(i, std::string(statement_kind_name(s.kind)) + " outside loop");
      }
      internal::BlockItem item;
      item.stmt = static_cast<int>(i);
      const std::size_t header = i++;
      switch (s.kind) {
        case StatementKind::kIfHeader:
          item.body = nested(i, depth + 1, in_loop, try_depth, header);
          if (i < st_.size() && st_[i].indent == depth &&
              st_[i].kind == StatementKind::kElseMarker) {
            item.alt = static_cast<int>(i);
            const std::size_t alt = i++;
            item.alt_body = nested(i, depth + 1, in_loop, try_depth, alt);
          }
          break;
        case StatementKind::kWhileHeader:
        case StatementKind::kForHeader:
          item.body = nested(i, depth + 1, true, try_depth, header);
          break;
        case StatementKind::kTryMarker: {
          if (try_depth >= 2) fail(header, "try/except nested deeper than 2");
          item.body = nested(i, depth + 1, in_loop, try_depth + 1, header);
          if (i >= st_.size() || st_[i].indent != depth ||
              st_[i].kind != StatementKind::kExceptHeader) {
            fail(header, "try without except");
          }
          item.alt = static_cast<int>(i);
          const std::size_t alt = i++;
          item.alt_body = nested(i, depth + 1, in_loop, try_depth, alt);
          break;
        }
        default:
          break;
      }
      out.push_back(std::move(item));
    }
    return out;
  }

  const std::vector<Statement>& st_;
};

// ---- printing ---------------------------------------------------------------

int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::kBinary:
      if (e.text == "or") return 1;
      if (e.text == "and") return 2;
      if (e.text == "+" || e.text == "-") return 5;
      if (e.text == "*" || e.text == "/" || e.text == "//" || e.text == "%") return 6;
      return 4;  // comparison
    case Expr::Kind::kUnary:
      return e.text == "not" ? 3 : 7;
    case Expr::Kind::kIndex:
    case Expr::Kind::kCall:
      return 8;
    default:
      return 9;
  }
}

void print_expr(std::ostream& os, const Expr& e, int min_prec) {
  const int p = precedence(e);
  const bool paren = p < min_prec;
  if (paren) os << '(';
  switch (e.kind) {
    case Expr::Kind::kInt:
      os << e.int_value;
      break;
    case Expr::Kind::kString:
      os << '"' << e.text << '"';
      break;
    case Expr::Kind::kName:
      os << e.text;
      break;
    case Expr::Kind::kList:
      os << '[';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) os << ", ";
        print_expr(os, *e.args[i], 0);
      }
      os << ']';
      break;
    case Expr::Kind::kUnary:
      os << (e.text == "not" ? "not " : "-");
      print_expr(os, *e.args[0], p);
      break;
    case Expr::Kind::kBinary: {
      const bool compare = p == 4;
      print_expr(os, *e.args[0], compare ? p + 1 : p);
      os << ' ' << e.text << ' ';
      print_expr(os, *e.args[1], p + 1);
      break;
    }
    case Expr::Kind::kIndex:
      print_expr(os, *e.args[0], p);
      os << '[';
      print_expr(os, *e.args[1], 0);
      os << ']';
      break;
    case Expr::Kind::kCall:
      os << e.text << '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) os << ", ";
        print_expr(os, *e.args[i], 0);
      }
      os << ')';
      break;
  }
  if (paren) os << ')';
}

bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind || a->text != b->text || a->int_value != b->int_value ||
      a->args.size() != b->args.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a->args.size(); ++i)
    if (!expr_equal(a->args[i], b->args[i])) return false;
  return true;
}

}  // namespace

namespace internal {
Block build_block_tree(const Program& program) { return TreeBuilder(program).build(); }
}  // namespace internal

std::vector<std::string> description_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c) || c == '"') {
      ++i;
    } else if (std::isalnum(c) || c == '_') {
      std::size_t j = i;
      while (j < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
        ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

Program parse(std::string_view source, const ParseLimits& limits) {
  Program program;
  program.source = std::string(source);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= source.size()) {
    std::size_t nl = source.find('\n', pos);
    if (nl == std::string_view::npos) nl = source.size();
    std::string_view line = source.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::size_t spaces = 0;
    while (spaces < line.size() && line[spaces] == ' ') ++spaces;
    if (spaces < line.size() && line[spaces] == '\t') throw SyntaxError(line_no, "tabs are not allowed");
    std::vector<Token> toks = lex_line(line, line_no);
    if (toks.empty()) continue;
    if (spaces % 2 != 0) throw SyntaxError(line_no, "indentation must be a multiple of 2 spaces");
    if (static_cast<int>(program.statements.size()) >= limits.max_statements) {
      throw LimitExceeded("program has more than " + std::to_string(limits.max_statements) +
                          " statements");
    }
    Statement s = parse_statement(std::move(toks), line_no, static_cast<int>(spaces / 2),
                                  program.statements.empty());
    const int idx = static_cast<int>(program.statements.size());
    for (Token& t : s.tokens) t.statement_index = idx;
    if (s.kind == StatementKind::kDocstring) program.docstring = s.target;
    program.statements.push_back(std::move(s));
    if (nl == source.size()) break;
  }
  if (program.statements.empty()) throw SyntaxError(1, "empty program");
  if (program.token_count() > limits.max_tokens) {
    throw LimitExceeded("program has " + std::to_string(program.token_count()) +
                        " tokens, limit " + std::to_string(limits.max_tokens));
  }
  internal::build_block_tree(program);
  return program;
}

std::string expr_to_string(const Expr& expr) {
  std::ostringstream os;
  print_expr(os, expr, 0);
  return os.str();
}

std::string pretty_print(const Program& program) {
  std::ostringstream os;
  for (const Statement& s : program.statements) {
    os << std::string(2 * s.indent, ' ');
    switch (s.kind) {
      case StatementKind::kAssign:
        os << s.target << " = " << expr_to_string(*s.expr);
        break;
      case StatementKind::kExprCall:
      case StatementKind::kPrint:
        os << expr_to_string(*s.expr);
        break;
      case StatementKind::kIfHeader:
        os << "if " << expr_to_string(*s.expr) << ':';
        break;
      case StatementKind::kWhileHeader:
        os << "while " << expr_to_string(*s.expr) << ':';
        break;
      case StatementKind::kForHeader:
        os << "for " << s.target << " in " << expr_to_string(*s.expr) << ':';
        break;
      case StatementKind::kElseMarker: os << "else:"; break;
      case StatementKind::kTryMarker: os << "try:"; break;
      case StatementKind::kExceptHeader: os << "except:"; break;
      case StatementKind::kPass: os << "pass"; break;
      case StatementKind::kBreak: os << "break"; break;
      case StatementKind::kContinue: os << "continue"; break;
      case StatementKind::kDocstring: os << '"' << s.target << '"'; break;
    }
    os << '\n';
  }
  return os.str();
}

bool structurally_equal(const Program& a, const Program& b) {
  if (a.statements.size() != b.statements.size()) return false;
  for (std::size_t i = 0; i < a.statements.size(); ++i) {
    const Statement& x = a.statements[i];
    const Statement& y = b.statements[i];
    if (x.kind != y.kind || x.indent != y.indent || x.target != y.target ||
        !expr_equal(x.expr, y.expr)) {
      return false;
    }
  }
  return true;
}

Program inject_docstring(const Program& program, std::string_view description) {
  std::string text(description);
  std::replace(text.begin(), text.end(), '"', '\'');
  std::replace(text.begin(), text.end(), '\n', ' ');
  Statement doc;
  doc.kind = StatementKind::kDocstring;
  doc.line = 0;
  doc.indent = 0;
  doc.target = text;
  for (std::string& w : description_words(text)) {
    doc.tokens.push_back(Token{std::move(w), TokenKind::kStringLiteral, 0});
  }
  if (doc.tokens.empty()) doc.tokens.push_back(Token{"\"\"", TokenKind::kStringLiteral, 0});

  Program out;
  out.docstring = text;
  out.source = "\"" + text + "\"\n" + program.source;
  out.statements.push_back(std::move(doc));
  for (const Statement& s : program.statements) {
    if (s.kind == StatementKind::kDocstring) continue;
    out.statements.push_back(s);
  }
  for (std::size_t i = 0; i < out.statements.size(); ++i)
    for (Token& t : out.statements[i].tokens) t.statement_index = static_cast<int>(i);
  return out;
}

std::vector<std::pair<int, int>> statement_spans(const Program& program) {
  std::vector<std::pair<int, int>> spans;
  int at = 0;
  for (const Statement& s : program.statements) {
    const int n = static_cast<int>(s.tokens.size());
    spans.emplace_back(at, at + n);
    at += n;
  }
  return spans;
}

std::vector<Token> flat_tokens(const Program& program) {
  std::vector<Token> out;
  for (const Statement& s : program.statements) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

}  // namespace ipa::minilang
