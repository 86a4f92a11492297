#pragma once

// Model formula mini-language:
//
//   formula := response '~' term ('+' term)*
//   term    := identifier | '1'
//            | 's(' id [',' id] ',' 'bs' '=' 're' ')'
//            | 's(' id [',' 'by' '=' id] ',' 'bs' '=' 'mrf' [',' 'k' '=' int] ')'
//            | 'offset(' id ')' | 'offset(log(' id '))'
//
// Named smooth arguments may appear in any order; 're' / 'mrf' may be single-
// or double-quoted (or bare). The neighbourhood structure for 'mrf' terms is
// supplied at fit time, not in the formula.

#include "arelink/errors.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace arelink {

enum class Family { gaussian, poisson };

inline std::string to_string(Family f) { return f == Family::gaussian ? "gaussian" : "poisson"; }

inline Family parse_family(std::string_view s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "poisson") return Family::poisson;
  throw InputError("unknown family '" + std::string(s) + "' (expected gaussian or poisson)");
}

enum class TermKind { fixed, re_intercept, re_slope, mrf_intercept, mrf_slope };

struct SmoothTerm {
  TermKind kind = TermKind::re_intercept;
  std::string group;
  std::string covariate;  // re slope covariate or mrf `by` variable; empty for intercepts
  std::optional<int> k;   // mrf only; absent means full rank

  bool is_mrf() const { return kind == TermKind::mrf_intercept || kind == TermKind::mrf_slope; }
  bool is_slope() const { return kind == TermKind::re_slope || kind == TermKind::mrf_slope; }

  friend bool operator==(const SmoothTerm&, const SmoothTerm&) = default;
};

struct Offset {
  std::string variable;
  bool log = false;

  friend bool operator==(const Offset&, const Offset&) = default;
};

struct ModelSpec {
  std::string response;
  Family family = Family::gaussian;  // not part of the formula text
  std::vector<std::string> fixed;    // the intercept is implicit
  std::vector<SmoothTerm> smooths;   // in formula order
  std::optional<Offset> offset;

  std::vector<SmoothTerm> of_kind(TermKind kind) const {
    std::vector<SmoothTerm> out;
    std::copy_if(smooths.begin(), smooths.end(), std::back_inserter(out),
                 [kind](const SmoothTerm& t) { return t.kind == kind; });
    return out;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

class FormulaError : public Error {
 public:
  FormulaError(std::size_t offset, const std::string& message, std::vector<std::string> expected = {})
      : Error("formula", compose(offset, message, expected)),
        offset_(offset),
        expected_(std::move(expected)) {}

  /// Byte offset into the source text.
  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  static std::string compose(std::size_t offset, const std::string& message,
                             const std::vector<std::string>& expected) {
    std::string s = "formula error at offset " + std::to_string(offset) + ": " + message;
    if (!expected.empty()) {
      s += " (expected one of:";
      for (const auto& e : expected) s += " " + e;
      s += ")";
    }
    return s;
  }

  std::size_t offset_;
  std::vector<std::string> expected_;
};

namespace detail {

enum class Tok { ident, integer, string, tilde, plus, lparen, rparen, comma, equals, end };

struct Token {
  Tok type;
  std::string text;
  std::size_t offset;
};

inline std::string describe(const Token& t) {
  switch (t.type) {
    case Tok::end:
      return "end of input";
    case Tok::string:
      return "string '" + t.text + "'";
    default:
      return "'" + t.text + "'";
  }
}

inline std::vector<Token> lex_formula(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; };
  auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (ident_start(c)) {
      while (i < src.size() && ident_char(src[i])) ++i;
      out.push_back({Tok::ident, std::string(src.substr(start, i - start)), start});
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
      if (i < src.size() && ident_char(src[i]))
        throw FormulaError(i, "malformed number");
      out.push_back({Tok::integer, std::string(src.substr(start, i - start)), start});
    } else if (c == '\'' || c == '"') {
      const auto close = src.find(c, i + 1);
      if (close == std::string_view::npos) throw FormulaError(start, "unterminated string");
      out.push_back({Tok::string, std::string(src.substr(i + 1, close - i - 1)), start});
      i = close + 1;
    } else {
      Tok t;
      switch (c) {
        case '~': t = Tok::tilde; break;
        case '+': t = Tok::plus; break;
        case '(': t = Tok::lparen; break;
        case ')': t = Tok::rparen; break;
        case ',': t = Tok::comma; break;
        case '=': t = Tok::equals; break;
        default:
          throw FormulaError(start, std::string("unexpected character '") + c + "'");
      }
      out.push_back({t, std::string(1, c), start});
      ++i;
    }
  }
  out.push_back({Tok::end, "", src.size()});
  return out;
}

class FormulaParser {
 public:
  explicit FormulaParser(std::string_view src) : toks_(lex_formula(src)) {}

  ModelSpec parse() {
    ModelSpec spec;
    spec.response = expect(Tok::ident, {"response variable"}).text;
    expect(Tok::tilde, {"'~'"});
    parse_term(spec);
    while (peek().type == Tok::plus) {
      next();
      parse_term(spec);
    }
    if (peek().type != Tok::end) fail(peek(), "unexpected " + describe(peek()), {"'+'", "end of input"});
    return spec;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

  [[noreturn]] static void fail(const Token& at, const std::string& msg,
                                std::vector<std::string> expected = {}) {
    throw FormulaError(at.offset, msg, std::move(expected));
  }

  const Token& expect(Tok type, std::vector<std::string> expected) {
    if (peek().type != type) fail(peek(), "unexpected " + describe(peek()), std::move(expected));
    return next();
  }

  void check_not_response(const ModelSpec& spec, const Token& t) {
    if (t.text == spec.response)
      fail(t, "response '" + spec.response + "' cannot also appear as a covariate");
  }

  void parse_term(ModelSpec& spec) {
    const Token& t = peek();
    if (t.type == Tok::integer) {
      if (t.text != "1") fail(t, "only '1' (the intercept) is allowed as a numeric term");
      next();
      return;
    }
    if (t.type != Tok::ident)
      fail(t, "unexpected " + describe(t), {"identifier", "'1'", "'s('", "'offset('"});
    if (peek(1).type == Tok::lparen && t.text == "s") return parse_smooth(spec);
    if (peek(1).type == Tok::lparen && t.text == "offset") return parse_offset(spec);
    if (peek(1).type == Tok::lparen) fail(t, "unknown function '" + t.text + "'", {"'s('", "'offset('"});
    const Token& var = next();
    check_not_response(spec, var);
    if (std::find(spec.fixed.begin(), spec.fixed.end(), var.text) != spec.fixed.end())
      fail(var, "duplicate term '" + var.text + "'");
    spec.fixed.push_back(var.text);
  }

  void parse_offset(ModelSpec& spec) {
    const Token& head = next();
    next();  // '('
    Offset off;
    if (peek().type == Tok::ident && peek().text == "log" && peek(1).type == Tok::lparen) {
      next();
      next();
      off.log = true;
      const Token& v = expect(Tok::ident, {"identifier"});
      check_not_response(spec, v);
      off.variable = v.text;
      expect(Tok::rparen, {"')'"});
    } else {
      const Token& v = expect(Tok::ident, {"identifier", "'log('"});
      check_not_response(spec, v);
      off.variable = v.text;
    }
    expect(Tok::rparen, {"')'"});
    if (spec.offset) fail(head, "duplicate offset term");
    spec.offset = off;
  }

  void parse_smooth(ModelSpec& spec) {
    const Token& head = next();
    next();  // '('
    const Token& group = expect(Tok::ident, {"grouping variable"});
    check_not_response(spec, group);
    std::optional<Token> positional, by, k, bs;
    while (peek().type == Tok::comma) {
      next();
      const Token& name = expect(Tok::ident, {"'bs'", "'by'", "'k'", "covariate"});
      if (peek().type != Tok::equals) {
        if (positional) fail(name, "too many positional arguments");
        check_not_response(spec, name);
        positional = name;
        continue;
      }
      next();  // '='
      if (name.text == "bs") {
        if (bs) fail(name, "duplicate argument 'bs'");
        const Token& v = peek();
        if (v.type != Tok::string && v.type != Tok::ident) fail(v, "unexpected " + describe(v), {"'re'", "'mrf'"});
        bs = next();
      } else if (name.text == "by") {
        if (by) fail(name, "duplicate argument 'by'");
        by = expect(Tok::ident, {"identifier"});
        check_not_response(spec, *by);
      } else if (name.text == "k") {
        if (k) fail(name, "duplicate argument 'k'");
        k = expect(Tok::integer, {"integer"});
      } else if (name.text == "xt") {
        fail(name, "'xt' is not supported: the neighbourhood structure is supplied at fit time");
      } else {
        fail(name, "unknown argument '" + name.text + "'", {"'bs'", "'by'", "'k'"});
      }
    }
    expect(Tok::rparen, {"','", "')'"});
    if (!bs) fail(head, "smooth term needs a basis: bs='re' or bs='mrf'");

    SmoothTerm term;
    term.group = group.text;
    if (bs->text == "re") {
      if (by) fail(*by, "'by' is only supported for bs='mrf'");
      if (k) fail(*k, "'k' is only supported for bs='mrf'");
      term.kind = positional ? TermKind::re_slope : TermKind::re_intercept;
      if (positional) term.covariate = positional->text;
    } else if (bs->text == "mrf") {
      if (positional) fail(*positional, "bs='mrf' takes a covariate via 'by=', not positionally");
      term.kind = by ? TermKind::mrf_slope : TermKind::mrf_intercept;
      if (by) term.covariate = by->text;
      if (k) {
        if (k->text.size() > 9) fail(*k, "k is too large");
        const int kv = std::stoi(k->text);
        if (kv < 1) fail(*k, "k must be a positive integer");
        term.k = kv;
      }
    } else {
      fail(*bs, "unknown bs value '" + bs->text + "'", {"'re'", "'mrf'"});
    }
    for (const auto& existing : spec.smooths)
      if (existing.kind == term.kind && existing.group == term.group &&
          existing.covariate == term.covariate)
        fail(head, "duplicate term");
    spec.smooths.push_back(std::move(term));
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ModelSpec parse_formula(std::string_view src) {
  if (src.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw FormulaError(0, "empty formula", {"response variable"});
  return detail::FormulaParser(src).parse();
}

/// Canonical rendering; parse_formula(format_formula(s)) == s for every valid
/// spec with the default family.
inline std::string format_formula(const ModelSpec& spec) {
  std::vector<std::string> terms = spec.fixed;
  for (const auto& t : spec.smooths) {
    std::string s = "s(" + t.group;
    switch (t.kind) {
      case TermKind::re_intercept:
        s += ", bs = 're'";
        break;
      case TermKind::re_slope:
        s += ", " + t.covariate + ", bs = 're'";
        break;
      case TermKind::mrf_intercept:
        s += ", bs = 'mrf'";
        break;
      case TermKind::mrf_slope:
        s += ", by = " + t.covariate + ", bs = 'mrf'";
        break;
      case TermKind::fixed:
        break;
    }
    if (t.k) s += ", k = " + std::to_string(*t.k);
    terms.push_back(s + ")");
  }
  if (spec.offset)
    terms.push_back(spec.offset->log ? "offset(log(" + spec.offset->variable + "))"
                                     : "offset(" + spec.offset->variable + ")");
  if (terms.empty()) terms.push_back("1");
  std::string out = spec.response + " ~ ";
  for (std::size_t i = 0; i < terms.size(); ++i) out += (i ? " + " : "") + terms[i];
  return out;
}

}  // namespace arelink
