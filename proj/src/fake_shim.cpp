#include "memhub/fake_shim.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string_view>
#include <thread>
#include <vector>

namespace memhub {

namespace {

// ---------------------------------------------------------------------------
// Values
// ---------------------------------------------------------------------------

struct FuncDef;

struct Value {
  enum class T { kNone, kBool, kInt, kFloat, kStr, kFunc, kModule, kAttr, kBytes, kBuiltin };
  T t = T::kNone;
  long long i = 0;
  double f = 0.0;
  std::string s;  // string value, module name, qualified attribute or builtin name
  std::shared_ptr<const FuncDef> fn;

  static Value none() { return {}; }
  static Value boolean(bool b) {
    Value v;
    v.t = T::kBool;
    v.i = b;
    return v;
  }
  static Value integer(long long x) {
    Value v;
    v.t = T::kInt;
    v.i = x;
    return v;
  }
  static Value real(double x) {
    Value v;
    v.t = T::kFloat;
    v.f = x;
    return v;
  }
  static Value str(std::string x) {
    Value v;
    v.t = T::kStr;
    v.s = std::move(x);
    return v;
  }
  static Value tagged(T t, std::string name) {
    Value v;
    v.t = t;
    v.s = std::move(name);
    return v;
  }
};

const char* type_name(const Value& v) {
  switch (v.t) {
    case Value::T::kNone: return "NoneType";
    case Value::T::kBool: return "bool";
    case Value::T::kInt: return "int";
    case Value::T::kFloat: return "float";
    case Value::T::kStr: return "str";
    case Value::T::kFunc: return "function";
    case Value::T::kModule: return "module";
    case Value::T::kAttr: return "builtin_function_or_method";
    case Value::T::kBytes: return "bytearray";
    case Value::T::kBuiltin: return "builtin_function_or_method";
  }
  return "object";
}

std::string float_repr(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  std::string out = buf;
  if (out.find_first_of(".en") == std::string::npos) out += ".0";
  return out;
}

std::string str_of(const Value& v) {
  switch (v.t) {
    case Value::T::kNone: return "None";
    case Value::T::kBool: return v.i ? "True" : "False";
    case Value::T::kInt: return std::to_string(v.i);
    case Value::T::kFloat: return float_repr(v.f);
    case Value::T::kStr: return v.s;
    case Value::T::kFunc: return "<function " + v.s + ">";
    case Value::T::kModule: return "<module '" + v.s + "'>";
    case Value::T::kAttr:
    case Value::T::kBuiltin: return "<built-in function " + v.s + ">";
    case Value::T::kBytes: return "bytearray(" + std::to_string(v.i) + ")";
  }
  return "";
}

std::string repr_of(const Value& v) {
  if (v.t != Value::T::kStr) return str_of(v);
  std::string out = "'";
  for (char c : v.s) {
    if (c == '\'' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "'";
}

bool truthy(const Value& v) {
  switch (v.t) {
    case Value::T::kNone: return false;
    case Value::T::kBool:
    case Value::T::kInt:
    case Value::T::kBytes: return v.i != 0;
    case Value::T::kFloat: return v.f != 0.0;
    case Value::T::kStr: return !v.s.empty();
    default: return true;
  }
}

bool is_number(const Value& v) {
  return v.t == Value::T::kInt || v.t == Value::T::kFloat || v.t == Value::T::kBool;
}

double as_double(const Value& v) { return v.t == Value::T::kFloat ? v.f : static_cast<double>(v.i); }

// ---------------------------------------------------------------------------
// Exceptions raised by interpreted code
// ---------------------------------------------------------------------------

struct Frame {
  std::string name;
  int line = 0;
};

struct PyError {
  std::string type;
  std::string message;
  std::vector<Frame> stack;
  int syntax_line = 0;  // set for compile-time errors
};

struct Hang {
  double seconds = -1;  // < 0 means "forever"
};

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

struct Token {
  enum class K { kName, kInt, kFloat, kStr, kOp, kEnd };
  K k = K::kEnd;
  std::string text;
  long long i = 0;
  double f = 0.0;
};

PyError syntax_error(int line, std::string message = "invalid syntax") {
  PyError e;
  e.type = "SyntaxError";
  e.message = std::move(message);
  e.syntax_line = line;
  return e;
}

std::vector<Token> lex(std::string_view src, int line) {
  std::vector<Token> out;
  std::size_t i = 0;
  const auto n = src.size();
  while (i < n) {
    const char c = src[i];
    if (c == ' ' || c == '\t') {
      ++i;
      continue;
    }
    if (c == '#') break;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < n && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      out.push_back({Token::K::kName, std::string(src.substr(i, j - i))});
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      bool is_float = false;
      while (j < n && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.' ||
                       src[j] == '_' || src[j] == 'e' || src[j] == 'E' ||
                       ((src[j] == '+' || src[j] == '-') && (src[j - 1] == 'e' || src[j - 1] == 'E')))) {
        if (src[j] == '.' || src[j] == 'e' || src[j] == 'E') is_float = true;
        ++j;
      }
      std::string lit;
      for (char ch : src.substr(i, j - i)) {
        if (ch != '_') lit += ch;
      }
      Token t;
      t.text = lit;
      try {
        std::size_t used = 0;
        if (is_float) {
          t.k = Token::K::kFloat;
          t.f = std::stod(lit, &used);
        } else {
          t.k = Token::K::kInt;
          t.i = std::stoll(lit, &used);
        }
        if (used != lit.size()) throw syntax_error(line);
      } catch (const std::logic_error&) {
        throw syntax_error(line);
      }
      if (j < n && (std::isalpha(static_cast<unsigned char>(src[j])) || src[j] == '_')) {
        throw syntax_error(line);
      }
      out.push_back(t);
      i = j;
      continue;
    }
    if (c == '"' || c == '\'') {
      const bool triple = i + 2 < n && src[i + 1] == c && src[i + 2] == c;
      std::size_t j = i + (triple ? 3 : 1);
      std::string s;
      bool closed = false;
      while (j < n) {
        if (src[j] == '\\' && j + 1 < n) {
          const char e = src[j + 1];
          switch (e) {
            case 'n': s += '\n'; break;
            case 't': s += '\t'; break;
            case '\\': s += '\\'; break;
            case '\'': s += '\''; break;
            case '"': s += '"'; break;
            case '0': s += '\0'; break;
            default:
              s += '\\';
              s += e;
          }
          j += 2;
          continue;
        }
        if (triple) {
          if (src.substr(j, 3) == std::string(3, c)) {
            closed = true;
            j += 3;
            break;
          }
        } else if (src[j] == c) {
          closed = true;
          ++j;
          break;
        }
        s += src[j];
        ++j;
      }
      if (!closed) {
        throw syntax_error(line, "unterminated string literal (detected at line " +
                                     std::to_string(line) + ")");
      }
      Token t;
      t.k = Token::K::kStr;
      t.text = std::move(s);
      out.push_back(std::move(t));
      i = j;
      continue;
    }
    static const char* kOps[] = {"//=", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=",
                                 "/=",  "+",  "-",  "*",  "/",  "%",  "<",  ">",  "=",  "(",
                                 ")",   ",",  ":",  ".",  "[",  "]",  "!"};
    bool matched = false;
    for (const char* op : kOps) {
      const std::string_view o(op);
      if (src.substr(i, o.size()) == o) {
        out.push_back({Token::K::kOp, std::string(o)});
        i += o.size();
        matched = true;
        break;
      }
    }
    if (!matched) throw syntax_error(line);
  }
  out.push_back({Token::K::kEnd, ""});
  return out;
}

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

struct Expr {
  enum class K { kConst, kName, kUnary, kBinary, kCompare, kCall, kAttr, kAnd, kOr };
  K k = K::kConst;
  Value constant;
  std::string name;  // variable, operator or attribute
  std::vector<std::unique_ptr<Expr>> kids;
  std::vector<std::pair<std::string, std::unique_ptr<Expr>>> kwargs;
};
using ExprPtr = std::unique_ptr<Expr>;

struct Stmt;
using Block = std::vector<std::unique_ptr<Stmt>>;

struct Stmt {
  enum class K {
    kExpr, kAssign, kAugAssign, kPass, kReturn, kImport, kFromImport, kPip, kRaise,
    kDef, kWhile, kIf, kFor, kBreak, kContinue, kGlobal
  };
  K k = K::kPass;
  int line = 0;
  std::string name;  // target, operator, function name, exception name, loop variable
  std::vector<std::string> names;  // params, modules, packages, imported names
  std::vector<ExprPtr> exprs;
  Block body;
  Block orelse;
};

struct FuncDef {
  std::string name;
  std::vector<std::string> params;
  const Block* body = nullptr;
  int line = 0;
};

// Expression parser over one line's tokens.
class ExprParser {
 public:
  ExprParser(const std::vector<Token>& toks, int line) : t_(toks), line_(line) {}

  std::size_t pos() const { return p_; }
  void set_pos(std::size_t p) { p_ = p; }
  const Token& peek(std::size_t ahead = 0) const { return t_[std::min(p_ + ahead, t_.size() - 1)]; }
  bool at_end() const { return peek().k == Token::K::kEnd; }
  bool is_op(std::string_view op, std::size_t ahead = 0) const {
    return peek(ahead).k == Token::K::kOp && peek(ahead).text == op;
  }
  bool is_name(std::string_view n, std::size_t ahead = 0) const {
    return peek(ahead).k == Token::K::kName && peek(ahead).text == n;
  }
  void expect_op(std::string_view op) {
    if (!is_op(op)) throw syntax_error(line_);
    ++p_;
  }
  std::string expect_name() {
    if (peek().k != Token::K::kName) throw syntax_error(line_);
    return t_[p_++].text;
  }
  void expect_end() {
    if (!at_end()) throw syntax_error(line_);
  }

  ExprPtr parse() { return parse_or(); }

 private:
  ExprPtr parse_or() {
    auto lhs = parse_and();
    while (is_name("or")) {
      ++p_;
      auto e = std::make_unique<Expr>();
      e->k = Expr::K::kOr;
      e->kids.push_back(std::move(lhs));
      e->kids.push_back(parse_and());
      lhs = std::move(e);
    }
    return lhs;
  }
  ExprPtr parse_and() {
    auto lhs = parse_not();
    while (is_name("and")) {
      ++p_;
      auto e = std::make_unique<Expr>();
      e->k = Expr::K::kAnd;
      e->kids.push_back(std::move(lhs));
      e->kids.push_back(parse_not());
      lhs = std::move(e);
    }
    return lhs;
  }
  ExprPtr parse_not() {
    if (is_name("not")) {
      ++p_;
      auto e = std::make_unique<Expr>();
      e->k = Expr::K::kUnary;
      e->name = "not";
      e->kids.push_back(parse_not());
      return e;
    }
    return parse_compare();
  }
  ExprPtr parse_compare() {
    auto lhs = parse_additive();
    for (const char* op : {"==", "!=", "<=", ">=", "<", ">"}) {
      if (is_op(op)) {
        ++p_;
        auto e = std::make_unique<Expr>();
        e->k = Expr::K::kCompare;
        e->name = op;
        e->kids.push_back(std::move(lhs));
        e->kids.push_back(parse_additive());
        return e;
      }
    }
    return lhs;
  }
  ExprPtr parse_additive() {
    auto lhs = parse_term();
    while (is_op("+") || is_op("-")) {
      auto e = std::make_unique<Expr>();
      e->k = Expr::K::kBinary;
      e->name = t_[p_++].text;
      e->kids.push_back(std::move(lhs));
      e->kids.push_back(parse_term());
      lhs = std::move(e);
    }
    return lhs;
  }
  ExprPtr parse_term() {
    auto lhs = parse_unary();
    while (is_op("*") || is_op("/") || is_op("//") || is_op("%")) {
      auto e = std::make_unique<Expr>();
      e->k = Expr::K::kBinary;
      e->name = t_[p_++].text;
      e->kids.push_back(std::move(lhs));
      e->kids.push_back(parse_unary());
      lhs = std::move(e);
    }
    return lhs;
  }
  ExprPtr parse_unary() {
    if (is_op("-") || is_op("+")) {
      auto e = std::make_unique<Expr>();
      e->k = Expr::K::kUnary;
      e->name = t_[p_++].text;
      e->kids.push_back(parse_unary());
      return e;
    }
    return parse_postfix();
  }
  ExprPtr parse_postfix() {
    auto e = parse_primary();
    for (;;) {
      if (is_op("(")) {
        ++p_;
        auto call = std::make_unique<Expr>();
        call->k = Expr::K::kCall;
        call->kids.push_back(std::move(e));
        while (!is_op(")")) {
          if (peek().k == Token::K::kName && is_op("=", 1)) {
            std::string key = t_[p_].text;
            p_ += 2;
            call->kwargs.emplace_back(std::move(key), parse());
          } else {
            if (!call->kwargs.empty()) {
              throw syntax_error(line_, "positional argument follows keyword argument");
            }
            call->kids.push_back(parse());
          }
          if (is_op(",")) {
            ++p_;
          } else if (!is_op(")")) {
            throw syntax_error(line_);
          }
        }
        ++p_;
        e = std::move(call);
      } else if (is_op(".")) {
        ++p_;
        auto attr = std::make_unique<Expr>();
        attr->k = Expr::K::kAttr;
        attr->name = expect_name();
        attr->kids.push_back(std::move(e));
        e = std::move(attr);
      } else {
        return e;
      }
    }
  }
  ExprPtr parse_primary() {
    const Token& tok = peek();
    auto e = std::make_unique<Expr>();
    switch (tok.k) {
      case Token::K::kInt:
        e->constant = Value::integer(tok.i);
        ++p_;
        return e;
      case Token::K::kFloat:
        e->constant = Value::real(tok.f);
        ++p_;
        return e;
      case Token::K::kStr: {
        std::string s;
        while (peek().k == Token::K::kStr) s += t_[p_++].text;  // implicit concatenation
        e->constant = Value::str(std::move(s));
        return e;
      }
      case Token::K::kName: {
        static const std::set<std::string> kReserved = {
            "def", "return", "if", "elif", "else", "while", "for", "in", "import", "from",
            "raise", "pass", "and", "or", "not", "break", "continue", "class", "global"};
        if (tok.text == "None") {
          ++p_;
          return e;
        }
        if (tok.text == "True" || tok.text == "False") {
          e->constant = Value::boolean(tok.text == "True");
          ++p_;
          return e;
        }
        if (kReserved.contains(tok.text)) throw syntax_error(line_);
        e->k = Expr::K::kName;
        e->name = tok.text;
        ++p_;
        return e;
      }
      case Token::K::kOp:
        if (tok.text == "(") {
          ++p_;
          auto inner = parse();
          expect_op(")");
          return inner;
        }
        throw syntax_error(line_);
      case Token::K::kEnd:
        throw syntax_error(line_);
    }
    throw syntax_error(line_);
  }

  const std::vector<Token>& t_;
  int line_;
  std::size_t p_ = 0;
};

// ---------------------------------------------------------------------------
// Statement parser
// ---------------------------------------------------------------------------

struct SourceLine {
  int number = 0;  // 1-based
  int indent = 0;
  std::string text;  // without indentation
};

std::vector<SourceLine> logical_lines(const std::vector<std::string>& raw) {
  std::vector<SourceLine> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::string& l = raw[i];
    int indent = 0;
    std::size_t j = 0;
    while (j < l.size() && (l[j] == ' ' || l[j] == '\t')) {
      indent += l[j] == '\t' ? 4 : 1;
      ++j;
    }
    std::string text = l.substr(j);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.pop_back();
    if (text.empty() || text[0] == '#') continue;
    const int number = static_cast<int>(i) + 1;
    // A triple-quoted string left open on this line swallows following lines.
    for (const char* q : {"\"\"\"", "'''"}) {
      const auto first = text.find(q);
      if (first == std::string::npos || text.find(q, first + 3) != std::string::npos) continue;
      while (++i < raw.size()) {
        text += "\\n" + raw[i];
        if (raw[i].find(q) != std::string::npos) break;
      }
      break;
    }
    out.push_back({number, indent, std::move(text)});
  }
  return out;
}

class StmtParser {
 public:
  explicit StmtParser(std::vector<SourceLine> lines) : lines_(std::move(lines)) {}

  Block parse_module() {
    if (!lines_.empty() && lines_[0].indent != 0) {
      throw syntax_error(lines_[0].number, "unexpected indent");
    }
    Block b = parse_block(0, false);
    if (i_ < lines_.size()) throw syntax_error(lines_[i_].number, "unindent does not match any outer indentation level");
    return b;
  }

 private:
  Block parse_block(int indent, bool in_function) {
    Block out;
    while (i_ < lines_.size()) {
      const auto& l = lines_[i_];
      if (l.indent < indent) break;
      if (l.indent > indent) throw syntax_error(l.number, "unexpected indent");
      out.push_back(parse_statement(indent, in_function));
    }
    return out;
  }

  Block parse_suite(const SourceLine& header, bool in_function) {
    ++i_;
    if (i_ >= lines_.size() || lines_[i_].indent <= header.indent) {
      const int at = i_ < lines_.size() ? lines_[i_].number : header.number + 1;
      throw syntax_error(at, "expected an indented block after line " + std::to_string(header.number));
    }
    return parse_block(lines_[i_].indent, in_function);
  }

  std::unique_ptr<Stmt> parse_statement(int indent, bool in_function) {
    const SourceLine& l = lines_[i_];
    auto st = std::make_unique<Stmt>();
    st->line = l.number;

    // Shell-style install directives.
    {
      std::string_view t = l.text;
      if (!t.empty() && (t[0] == '!' || t[0] == '%')) t.remove_prefix(1);
      if (t.rfind("pip install ", 0) == 0) {
        st->k = Stmt::K::kPip;
        std::istringstream ss{std::string(t.substr(12))};
        std::string pkg;
        while (ss >> pkg) {
          if (pkg[0] != '-') st->names.push_back(pkg);
        }
        if (st->names.empty()) throw syntax_error(l.number);
        ++i_;
        return st;
      }
    }

    const auto toks = lex(l.text, l.number);
    ExprParser p(toks, l.number);

    const auto header_expr = [&](ExprParser& ep) {
      auto e = ep.parse();
      ep.expect_op(":");
      ep.expect_end();
      return e;
    };

    if (p.is_name("def")) {
      p.set_pos(1);
      st->k = Stmt::K::kDef;
      st->name = p.expect_name();
      p.expect_op("(");
      while (!p.is_op(")")) {
        st->names.push_back(p.expect_name());
        if (p.is_op(",")) {
          p.set_pos(p.pos() + 1);
        } else if (!p.is_op(")")) {
          throw syntax_error(l.number);
        }
      }
      p.set_pos(p.pos() + 1);
      if (p.is_op("-")) throw syntax_error(l.number);
      p.expect_op(":");
      p.expect_end();
      st->body = parse_suite(l, true);
      return st;
    }
    if (p.is_name("while")) {
      p.set_pos(1);
      st->k = Stmt::K::kWhile;
      st->exprs.push_back(header_expr(p));
      st->body = parse_suite(l, in_function);
      return st;
    }
    if (p.is_name("for")) {
      p.set_pos(1);
      st->k = Stmt::K::kFor;
      st->name = p.expect_name();
      if (!p.is_name("in")) throw syntax_error(l.number);
      p.set_pos(p.pos() + 1);
      st->exprs.push_back(header_expr(p));
      st->body = parse_suite(l, in_function);
      return st;
    }
    if (p.is_name("if")) {
      p.set_pos(1);
      st->k = Stmt::K::kIf;
      st->exprs.push_back(header_expr(p));
      st->body = parse_suite(l, in_function);
      if (i_ < lines_.size() && lines_[i_].indent == indent) {
        const SourceLine& next = lines_[i_];
        if (next.text.rfind("elif ", 0) == 0) {
          // Rewrite "elif c:" as "else: if c:".
          lines_[i_].text = next.text.substr(2);
          st->orelse.push_back(parse_statement(indent, in_function));
        } else if (next.text == "else:") {
          st->orelse = parse_suite(next, in_function);
        }
      }
      return st;
    }
    if (p.is_name("elif") || p.is_name("else")) throw syntax_error(l.number);

    ++i_;
    if (p.is_name("pass") || p.is_name("break") || p.is_name("continue")) {
      st->k = p.is_name("pass") ? Stmt::K::kPass
              : p.is_name("break") ? Stmt::K::kBreak : Stmt::K::kContinue;
      p.set_pos(1);
      p.expect_end();
      return st;
    }
    if (p.is_name("return")) {
      if (!in_function) throw syntax_error(l.number, "'return' outside function");
      st->k = Stmt::K::kReturn;
      p.set_pos(1);
      if (!p.at_end()) st->exprs.push_back(p.parse());
      p.expect_end();
      return st;
    }
    if (p.is_name("global")) {
      st->k = Stmt::K::kGlobal;
      p.set_pos(1);
      st->names.push_back(p.expect_name());
      while (p.is_op(",")) {
        p.set_pos(p.pos() + 1);
        st->names.push_back(p.expect_name());
      }
      p.expect_end();
      return st;
    }
    if (p.is_name("import")) {
      st->k = Stmt::K::kImport;
      p.set_pos(1);
      for (;;) {
        std::string mod = p.expect_name();
        while (p.is_op(".")) {
          p.set_pos(p.pos() + 1);
          mod += "." + p.expect_name();
        }
        std::string alias = mod.substr(0, mod.find('.'));
        if (p.is_name("as")) {
          p.set_pos(p.pos() + 1);
          alias = p.expect_name();
        }
        st->names.push_back(mod);
        st->names.push_back(alias);
        if (!p.is_op(",")) break;
        p.set_pos(p.pos() + 1);
      }
      p.expect_end();
      return st;
    }
    if (p.is_name("from")) {
      st->k = Stmt::K::kFromImport;
      p.set_pos(1);
      st->name = p.expect_name();
      while (p.is_op(".")) {
        p.set_pos(p.pos() + 1);
        st->name += "." + p.expect_name();
      }
      if (!p.is_name("import")) throw syntax_error(l.number);
      p.set_pos(p.pos() + 1);
      st->names.push_back(p.expect_name());
      while (p.is_op(",")) {
        p.set_pos(p.pos() + 1);
        st->names.push_back(p.expect_name());
      }
      p.expect_end();
      return st;
    }
    if (p.is_name("raise")) {
      st->k = Stmt::K::kRaise;
      p.set_pos(1);
      st->name = p.expect_name();
      if (p.is_op("(")) {
        p.set_pos(p.pos() + 1);
        if (!p.is_op(")")) st->exprs.push_back(p.parse());
        p.expect_op(")");
      }
      p.expect_end();
      return st;
    }
    if (p.peek().k == Token::K::kName && p.is_op("=", 1)) {
      st->k = Stmt::K::kAssign;
      st->name = p.expect_name();
      p.set_pos(2);
      st->exprs.push_back(p.parse());
      p.expect_end();
      return st;
    }
    if (p.peek().k == Token::K::kName &&
        (p.is_op("+=", 1) || p.is_op("-=", 1) || p.is_op("*=", 1) || p.is_op("/=", 1) ||
         p.is_op("//=", 1))) {
      st->k = Stmt::K::kAugAssign;
      st->names.push_back(p.expect_name());
      const std::string op = p.peek().text;
      st->name = op.substr(0, op.size() - 1);
      p.set_pos(2);
      st->exprs.push_back(p.parse());
      p.expect_end();
      return st;
    }
    st->k = Stmt::K::kExpr;
    st->exprs.push_back(p.parse());
    p.expect_end();
    return st;
  }

  std::vector<SourceLine> lines_;
  std::size_t i_ = 0;
};

const std::set<std::string>& stdlib_modules() {
  static const std::set<std::string> kModules = {
      "base64", "collections", "csv", "datetime", "functools", "hashlib", "io", "itertools",
      "json", "math", "os", "pathlib", "random", "re", "shutil", "string", "struct",
      "subprocess", "sys", "tempfile", "textwrap", "time", "typing", "urllib", "zipfile"};
  return kModules;
}

class OutputStream {
 public:
  explicit OutputStream(std::size_t cap) : cap_(cap) {}
  void write(std::string_view s) {
    if (truncated_) return;
    if (data_.size() + s.size() > cap_) {
      data_.append(s.substr(0, cap_ - data_.size()));
      truncated_ = true;
      return;
    }
    data_.append(s);
  }
  std::string finish() const { return truncated_ ? data_ + std::string(kTruncationMarker) : data_; }

 private:
  std::size_t cap_;
  std::string data_;
  bool truncated_ = false;
};

}  // namespace

// ---------------------------------------------------------------------------
// Interpreter
// ---------------------------------------------------------------------------

struct FakeShim::Impl {
  using Scope = std::map<std::string, Value>;

  explicit Impl(const FakeShimOptions& o, std::set<std::string>& installed)
      : opts(o), installed(installed) {}

  const FakeShimOptions& opts;
  std::set<std::string>& installed;
  Scope globals;
  // Parsed cells stay alive while functions defined in them are reachable.
  std::vector<std::shared_ptr<Block>> cells;
  std::vector<std::string> source;  // lines of the cell being executed

  // Per-exec state.
  OutputStream* out = nullptr;
  OutputStream* err = nullptr;
  std::vector<Frame> stack;
  std::vector<Scope*> locals;
  std::vector<std::set<std::string>> global_decls;
  std::size_t steps = 0;
  double timeout_s = 0;
  double slept_s = 0;
  static constexpr std::size_t kStepBudget = 2'000'000;
  static constexpr std::size_t kMaxDepth = 200;

  enum class Flow { kNormal, kBreak, kContinue, kReturn };

  [[noreturn]] void raise(std::string type, std::string message) {
    PyError e;
    e.type = std::move(type);
    e.message = std::move(message);
    e.stack = stack;
    throw e;
  }

  Value lookup(const std::string& name) {
    if (!locals.empty()) {
      if (auto it = locals.back()->find(name); it != locals.back()->end()) return it->second;
    }
    if (auto it = globals.find(name); it != globals.end()) return it->second;
    static const std::set<std::string> kBuiltins = {"print", "len", "str", "int", "float", "abs",
                                                    "bytearray", "repr", "range", "bool", "min", "max"};
    if (kBuiltins.contains(name)) return Value::tagged(Value::T::kBuiltin, name);
    raise("NameError", "name '" + name + "' is not defined");
  }

  void assign(const std::string& name, Value v) {
    if (!locals.empty() && !global_decls.back().contains(name)) {
      (*locals.back())[name] = std::move(v);
    } else {
      globals[name] = std::move(v);
    }
  }

  void tick() {
    if (++steps > kStepBudget) throw Hang{};
  }

  void check_size(std::size_t bytes) {
    if (bytes > opts.mem_limit_bytes) raise("MemoryError", "");
  }

  Value arith(const std::string& op, const Value& a, const Value& b) {
    const auto unsupported = [&]() -> Value {
      raise("TypeError", "unsupported operand type(s) for " + op + ": '" + type_name(a) + "' and '" +
                             type_name(b) + "'");
    };
    if (op == "+" && a.t == Value::T::kStr && b.t == Value::T::kStr) {
      check_size(a.s.size() + b.s.size());
      return Value::str(a.s + b.s);
    }
    if (op == "*" && ((a.t == Value::T::kStr && b.t == Value::T::kInt) ||
                      (a.t == Value::T::kInt && b.t == Value::T::kStr))) {
      const auto& s = a.t == Value::T::kStr ? a.s : b.s;
      const long long n = a.t == Value::T::kInt ? a.i : b.i;
      if (n <= 0 || s.empty()) return Value::str("");
      if (static_cast<unsigned long long>(n) > opts.mem_limit_bytes / s.size()) raise("MemoryError", "");
      std::string r;
      r.reserve(s.size() * static_cast<std::size_t>(n));
      for (long long k = 0; k < n; ++k) r += s;
      return Value::str(std::move(r));
    }
    if (!is_number(a) || !is_number(b)) return unsupported();
    const bool ints = a.t != Value::T::kFloat && b.t != Value::T::kFloat;
    if (op == "/") {
      if (as_double(b) == 0.0) raise("ZeroDivisionError", "division by zero");
      return Value::real(as_double(a) / as_double(b));
    }
    if (op == "//" || op == "%") {
      if (as_double(b) == 0.0) {
        raise("ZeroDivisionError", ints ? "integer division or modulo by zero" : "float divmod()");
      }
      if (ints) {
        long long q = a.i / b.i;
        long long r = a.i % b.i;
        if (r != 0 && ((r < 0) != (b.i < 0))) {
          --q;
          r += b.i;
        }
        return Value::integer(op == "//" ? q : r);
      }
      const double q = std::floor(as_double(a) / as_double(b));
      return Value::real(op == "//" ? q : as_double(a) - q * as_double(b));
    }
    if (ints) {
      long long r = 0;
      bool overflow = false;
      if (op == "+") overflow = __builtin_add_overflow(a.i, b.i, &r);
      else if (op == "-") overflow = __builtin_sub_overflow(a.i, b.i, &r);
      else if (op == "*") overflow = __builtin_mul_overflow(a.i, b.i, &r);
      else return unsupported();
      if (overflow) raise("OverflowError", "integer result too large for this interpreter");
      return Value::integer(r);
    }
    const double x = as_double(a), y = as_double(b);
    if (op == "+") return Value::real(x + y);
    if (op == "-") return Value::real(x - y);
    if (op == "*") return Value::real(x * y);
    return unsupported();
  }

  Value compare(const std::string& op, const Value& a, const Value& b) {
    if (op == "==" || op == "!=") {
      bool eq = false;
      if (is_number(a) && is_number(b)) eq = as_double(a) == as_double(b);
      else if (a.t == b.t) eq = a.t == Value::T::kNone || a.s == b.s;
      return Value::boolean(op == "==" ? eq : !eq);
    }
    int c = 0;
    if (is_number(a) && is_number(b)) {
      c = as_double(a) < as_double(b) ? -1 : as_double(a) > as_double(b) ? 1 : 0;
    } else if (a.t == Value::T::kStr && b.t == Value::T::kStr) {
      c = a.s.compare(b.s);
    } else {
      raise("TypeError", "'" + op + "' not supported between instances of '" + type_name(a) +
                             "' and '" + type_name(b) + "'");
    }
    if (op == "<") return Value::boolean(c < 0);
    if (op == ">") return Value::boolean(c > 0);
    if (op == "<=") return Value::boolean(c <= 0);
    return Value::boolean(c >= 0);
  }

  Value to_int(const Value& v) {
    switch (v.t) {
      case Value::T::kBool:
      case Value::T::kInt: return Value::integer(v.i);
      case Value::T::kFloat: return Value::integer(static_cast<long long>(v.f));
      case Value::T::kStr: {
        try {
          std::size_t used = 0;
          std::string t = v.s;
          t.erase(0, t.find_first_not_of(" \t\n"));
          t.erase(t.find_last_not_of(" \t\n") + 1);
          const long long x = std::stoll(t, &used);
          if (used == t.size() && !t.empty()) return Value::integer(x);
        } catch (const std::logic_error&) {
        }
        raise("ValueError", "invalid literal for int() with base 10: " + repr_of(v));
      }
      default:
        raise("TypeError", std::string("int() argument must be a string or a number, not '") +
                               type_name(v) + "'");
    }
  }

  Value call_builtin(const std::string& name, std::vector<Value>& args,
                     std::vector<std::pair<std::string, Value>>& kwargs) {
    const auto arity = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi) {
        raise("TypeError", name + "() takes " + std::to_string(lo) +
                               (hi != lo ? " to " + std::to_string(hi) : std::string()) +
                               " arguments (" + std::to_string(args.size()) + " given)");
      }
    };
    if (name == "print") {
      std::string sep = " ", end = "\n";
      OutputStream* stream = out;
      for (auto& [k, v] : kwargs) {
        if (k == "sep") sep = str_of(v);
        else if (k == "end") end = str_of(v);
        else if (k == "file") stream = v.t == Value::T::kAttr && v.s == "sys.stderr" ? err : out;
        else if (k != "flush") raise("TypeError", "'" + k + "' is an invalid keyword argument for print()");
      }
      std::string line;
      for (std::size_t k = 0; k < args.size(); ++k) {
        if (k) line += sep;
        line += str_of(args[k]);
      }
      stream->write(line + end);
      return Value::none();
    }
    if (!kwargs.empty()) raise("TypeError", name + "() takes no keyword arguments");
    if (name == "len") {
      arity(1, 1);
      if (args[0].t == Value::T::kStr) return Value::integer(static_cast<long long>(args[0].s.size()));
      if (args[0].t == Value::T::kBytes) return Value::integer(args[0].i);
      raise("TypeError", std::string("object of type '") + type_name(args[0]) + "' has no len()");
    }
    if (name == "str") {
      arity(0, 1);
      return Value::str(args.empty() ? "" : str_of(args[0]));
    }
    if (name == "repr") {
      arity(1, 1);
      return Value::str(repr_of(args[0]));
    }
    if (name == "bool") {
      arity(0, 1);
      return Value::boolean(!args.empty() && truthy(args[0]));
    }
    if (name == "int") {
      arity(0, 1);
      return args.empty() ? Value::integer(0) : to_int(args[0]);
    }
    if (name == "float") {
      arity(0, 1);
      if (args.empty()) return Value::real(0);
      if (is_number(args[0])) return Value::real(as_double(args[0]));
      if (args[0].t == Value::T::kStr) {
        try {
          std::size_t used = 0;
          const double x = std::stod(args[0].s, &used);
          if (used == args[0].s.size()) return Value::real(x);
        } catch (const std::logic_error&) {
        }
        raise("ValueError", "could not convert string to float: " + repr_of(args[0]));
      }
      raise("TypeError", std::string("float() argument must be a string or a real number, not '") +
                             type_name(args[0]) + "'");
    }
    if (name == "abs") {
      arity(1, 1);
      if (args[0].t == Value::T::kFloat) return Value::real(std::fabs(args[0].f));
      if (is_number(args[0])) return Value::integer(args[0].i < 0 ? -args[0].i : args[0].i);
      raise("TypeError", std::string("bad operand type for abs(): '") + type_name(args[0]) + "'");
    }
    if (name == "min" || name == "max") {
      if (args.empty()) raise("TypeError", name + " expected at least 1 argument, got 0");
      Value best = args[0];
      for (std::size_t k = 1; k < args.size(); ++k) {
        const bool less = truthy(compare("<", args[k], best));
        if ((name == "min") == less && !truthy(compare("==", args[k], best))) best = args[k];
      }
      return best;
    }
    if (name == "bytearray") {
      arity(0, 1);
      const long long n = args.empty() ? 0 : to_int(args[0]).i;
      if (n < 0) raise("ValueError", "negative count");
      check_size(static_cast<std::size_t>(n));
      Value v;
      v.t = Value::T::kBytes;
      v.i = n;
      return v;
    }
    raise("TypeError", "'" + name + "' object is not callable");
  }

  Value call_module_attr(const std::string& qualified, std::vector<Value>& args) {
    if (qualified == "math.sqrt" && args.size() == 1 && is_number(args[0])) {
      if (as_double(args[0]) < 0) raise("ValueError", "math domain error");
      return Value::real(std::sqrt(as_double(args[0])));
    }
    if (qualified == "time.sleep" && args.size() == 1 && is_number(args[0])) {
      const double secs = as_double(args[0]);
      if (secs < 0) raise("ValueError", "sleep length must be non-negative");
      if (slept_s + secs > timeout_s) throw Hang{secs};
      if (opts.real_time) std::this_thread::sleep_for(std::chrono::duration<double>(secs));
      slept_s += secs;
      return Value::none();
    }
    if (qualified == "os._exit" || qualified == "sys.exit") {
      throw ShimExit{args.empty() || !is_number(args[0]) ? 0 : static_cast<int>(as_double(args[0]))};
    }
    return Value::none();
  }

  Value call_function(const FuncDef& fn, std::vector<Value>& args) {
    if (args.size() != fn.params.size()) {
      raise("TypeError", fn.name + "() takes " + std::to_string(fn.params.size()) +
                             " positional arguments but " + std::to_string(args.size()) +
                             " were given");
    }
    if (stack.size() >= kMaxDepth) raise("RecursionError", "maximum recursion depth exceeded");
    Scope scope;
    for (std::size_t k = 0; k < args.size(); ++k) scope[fn.params[k]] = std::move(args[k]);
    stack.push_back({fn.name, fn.line});
    locals.push_back(&scope);
    global_decls.emplace_back();
    Value result;
    const Flow f = run_block(*fn.body, &result);
    global_decls.pop_back();
    locals.pop_back();
    stack.pop_back();
    return f == Flow::kReturn ? result : Value::none();
  }

  Value eval(const Expr& e) {
    tick();
    switch (e.k) {
      case Expr::K::kConst: return e.constant;
      case Expr::K::kName: return lookup(e.name);
      case Expr::K::kUnary: {
        const Value v = eval(*e.kids[0]);
        if (e.name == "not") return Value::boolean(!truthy(v));
        if (v.t == Value::T::kFloat) return Value::real(e.name == "-" ? -v.f : v.f);
        if (is_number(v)) return Value::integer(e.name == "-" ? -v.i : v.i);
        raise("TypeError", "bad operand type for unary " + e.name + ": '" + type_name(v) + "'");
      }
      case Expr::K::kAnd: {
        Value a = eval(*e.kids[0]);
        return truthy(a) ? eval(*e.kids[1]) : a;
      }
      case Expr::K::kOr: {
        Value a = eval(*e.kids[0]);
        return truthy(a) ? a : eval(*e.kids[1]);
      }
      case Expr::K::kBinary: return arith(e.name, eval(*e.kids[0]), eval(*e.kids[1]));
      case Expr::K::kCompare: return compare(e.name, eval(*e.kids[0]), eval(*e.kids[1]));
      case Expr::K::kAttr: {
        const Value base = eval(*e.kids[0]);
        if (base.t == Value::T::kModule) return Value::tagged(Value::T::kAttr, base.s + "." + e.name);
        raise("AttributeError", std::string("'") + type_name(base) + "' object has no attribute '" +
                                    e.name + "'");
      }
      case Expr::K::kCall: {
        const Value callee = eval(*e.kids[0]);
        std::vector<Value> args;
        for (std::size_t k = 1; k < e.kids.size(); ++k) args.push_back(eval(*e.kids[k]));
        std::vector<std::pair<std::string, Value>> kwargs;
        for (const auto& [k, v] : e.kwargs) kwargs.emplace_back(k, eval(*v));
        switch (callee.t) {
          case Value::T::kBuiltin: return call_builtin(callee.s, args, kwargs);
          case Value::T::kAttr: return call_module_attr(callee.s, args);
          case Value::T::kFunc:
            if (!kwargs.empty()) raise("TypeError", callee.s + "() got an unexpected keyword argument");
            return call_function(*callee.fn, args);
          default:
            raise("TypeError", std::string("'") + type_name(callee) + "' object is not callable");
        }
      }
    }
    return Value::none();
  }

  void import_module(const std::string& module) {
    const std::string top = module.substr(0, module.find('.'));
    if (!stdlib_modules().contains(top) && !installed.contains(top)) {
      raise("ModuleNotFoundError", "No module named '" + top + "'");
    }
  }

  Flow run_block(const Block& block, Value* result) {
    for (const auto& st : block) {
      const Flow f = run(*st, result);
      if (f != Flow::kNormal) return f;
    }
    return Flow::kNormal;
  }

  Flow run(const Stmt& st, Value* result) {
    tick();
    if (stack.empty()) stack.push_back({"<module>", st.line});
    stack.back().line = st.line;
    switch (st.k) {
      case Stmt::K::kPass:
      case Stmt::K::kGlobal:
        if (st.k == Stmt::K::kGlobal && !global_decls.empty()) {
          for (const auto& n : st.names) global_decls.back().insert(n);
        }
        return Flow::kNormal;
      case Stmt::K::kBreak: return Flow::kBreak;
      case Stmt::K::kContinue: return Flow::kContinue;
      case Stmt::K::kExpr:
        eval(*st.exprs[0]);
        return Flow::kNormal;
      case Stmt::K::kAssign:
        assign(st.name, eval(*st.exprs[0]));
        return Flow::kNormal;
      case Stmt::K::kAugAssign: {
        const Value cur = lookup(st.names[0]);
        assign(st.names[0], arith(st.name, cur, eval(*st.exprs[0])));
        return Flow::kNormal;
      }
      case Stmt::K::kReturn:
        *result = st.exprs.empty() ? Value::none() : eval(*st.exprs[0]);
        return Flow::kReturn;
      case Stmt::K::kImport:
        for (std::size_t k = 0; k < st.names.size(); k += 2) {
          import_module(st.names[k]);
          assign(st.names[k + 1], Value::tagged(Value::T::kModule, st.names[k].substr(0, st.names[k].find('.'))));
        }
        return Flow::kNormal;
      case Stmt::K::kFromImport:
        import_module(st.name);
        for (const auto& n : st.names) assign(n, Value::tagged(Value::T::kAttr, st.name + "." + n));
        return Flow::kNormal;
      case Stmt::K::kPip:
        for (const auto& pkg : st.names) {
          installed.insert(pkg);
          out->write("Successfully installed " + pkg + "\n");
        }
        return Flow::kNormal;
      case Stmt::K::kRaise: {
        std::string msg;
        if (!st.exprs.empty()) msg = str_of(eval(*st.exprs[0]));
        raise(st.name, msg);
      }
      case Stmt::K::kDef: {
        auto fn = std::make_shared<FuncDef>();
        fn->name = st.name;
        fn->params = st.names;
        fn->body = &st.body;
        fn->line = st.line;
        Value v = Value::tagged(Value::T::kFunc, st.name);
        v.fn = std::move(fn);
        assign(st.name, std::move(v));
        return Flow::kNormal;
      }
      case Stmt::K::kIf:
        return truthy(eval(*st.exprs[0])) ? run_block(st.body, result) : run_block(st.orelse, result);
      case Stmt::K::kWhile:
        while (truthy(eval(*st.exprs[0]))) {
          const Flow f = run_block(st.body, result);
          if (f == Flow::kBreak) break;
          if (f == Flow::kReturn) return f;
        }
        return Flow::kNormal;
      case Stmt::K::kFor: {
        const Expr& it = *st.exprs[0];
        if (it.k != Expr::K::kCall || it.kids[0]->k != Expr::K::kName || it.kids[0]->name != "range" ||
            it.kids.size() < 2 || it.kids.size() > 3) {
          raise("TypeError", "only range() iteration is supported");
        }
        long long lo = 0, hi = 0;
        if (it.kids.size() == 2) {
          hi = to_int(eval(*it.kids[1])).i;
        } else {
          lo = to_int(eval(*it.kids[1])).i;
          hi = to_int(eval(*it.kids[2])).i;
        }
        for (long long k = lo; k < hi; ++k) {
          assign(st.name, Value::integer(k));
          const Flow f = run_block(st.body, result);
          if (f == Flow::kBreak) break;
          if (f == Flow::kReturn) return f;
        }
        return Flow::kNormal;
      }
    }
    return Flow::kNormal;
  }

  std::string render_traceback(const PyError& e) const {
    std::string tb = "Traceback (most recent call last):\n";
    const auto src = [&](int line) -> std::string {
      if (line < 1 || static_cast<std::size_t>(line) > source.size()) return {};
      std::string s = source[static_cast<std::size_t>(line) - 1];
      s.erase(0, s.find_first_not_of(" \t"));
      return "    " + s + "\n";
    };
    if (e.type == "SyntaxError") {
      tb += "  File \"<cell>\", line " + std::to_string(e.syntax_line) + "\n" + src(e.syntax_line);
    } else {
      for (const auto& f : e.stack) {
        tb += "  File \"<cell>\", line " + std::to_string(f.line) + ", in " + f.name + "\n" + src(f.line);
      }
    }
    tb += e.type;
    if (!e.message.empty()) tb += ": " + e.message;
    return tb + "\n";
  }
};

namespace {

std::string error_kind_for(const std::string& exception_type) {
  if (exception_type == "SyntaxError" || exception_type == "IndentationError") return "SyntaxError";
  if (exception_type == "ModuleNotFoundError" || exception_type == "ImportError") return "MissingDependency";
  if (exception_type == "MemoryError") return "ResourceLimit";
  return "RuntimeError";
}

std::vector<std::string> split_lines(const std::string& code) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= code.size()) {
    auto nl = code.find('\n', start);
    if (nl == std::string::npos) nl = code.size();
    std::string l = code.substr(start, nl - start);
    if (!l.empty() && l.back() == '\r') l.pop_back();
    lines.push_back(std::move(l));
    start = nl + 1;
  }
  return lines;
}

}  // namespace

FakeShim::FakeShim(FakeShimOptions options)
    : options_(options), impl_(std::make_unique<Impl>(options_, installed_)) {}

FakeShim::~FakeShim() = default;

void FakeShim::reset() { impl_ = std::make_unique<Impl>(options_, installed_); }

ShimReply FakeShim::exec(const std::string& code, int timeout_s) {
  const auto t0 = std::chrono::steady_clock::now();
  Impl& in = *impl_;
  OutputStream out(options_.output_cap), err(options_.output_cap);
  in.out = &out;
  in.err = &err;
  in.stack.clear();
  in.locals.clear();
  in.global_decls.clear();
  in.steps = 0;
  in.slept_s = 0;
  in.timeout_s = timeout_s;
  in.source = split_lines(code);

  ShimReply reply;
  std::optional<PyError> failure;
  bool hung = false;
  try {
    auto block = std::make_shared<Block>(StmtParser(logical_lines(in.source)).parse_module());
    in.cells.push_back(block);
    Value ignored;
    in.run_block(*block, &ignored);
  } catch (PyError& e) {
    failure = std::move(e);
  } catch (const Hang&) {
    hung = true;
    if (options_.ignore_timeout) {
      for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
    }
    if (options_.real_time) {
      const auto deadline = t0 + std::chrono::duration<double>(timeout_s);
      std::this_thread::sleep_until(std::chrono::time_point_cast<std::chrono::steady_clock::duration>(deadline));
    }
  }
  in.out = in.err = nullptr;

  reply.stdout_text = out.finish();
  reply.stderr_text = err.finish();
  if (failure) {
    reply.status = "error";
    reply.error_kind = error_kind_for(failure->type);
    reply.traceback = in.render_traceback(*failure);
  } else if (hung) {
    reply.status = "error";
    reply.error_kind = "Timeout";
    reply.traceback = "TimeoutError: execution exceeded " + std::to_string(timeout_s) + " s\n";
  }
  if (options_.real_time) {
    reply.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  } else {
    reply.wall_ms = hung ? std::int64_t{timeout_s} * 1000 : 0;
  }
  return reply;
}

std::string FakeShim::handle_line(const std::string& line) {
  ShimRequest req;
  try {
    req = decode_shim_request(line);
  } catch (const Error& e) {
    ShimReply r;
    r.status = "error";
    r.error_kind = "protocol";
    r.stderr_text = e.what();
    return encode_shim_reply(r);
  }
  if (req.op == ShimRequest::Op::kReset) {
    reset();
    return encode_shim_reply(ShimReply{});
  }
  return encode_shim_reply(exec(req.code, req.timeout_s));
}

int serve_shim(std::istream& in, std::ostream& out, FakeShim& shim) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      out << shim.handle_line(line) << '\n' << std::flush;
    } catch (const ShimExit& e) {
      return e.code;
    }
  }
  return 0;
}

}  // namespace memhub
