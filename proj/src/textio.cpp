#include "textio.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace tc {

namespace {

// ---------------------------------------------------------------------------
// Tokenizer

struct Token {
  enum Type { Ident, Int, Sym, End } type = End;
  std::string text;
  size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek(int ahead = 0) {
    while (static_cast<int>(buf_.size()) <= ahead) buf_.push_back(lex());
    return buf_[static_cast<size_t>(ahead)];
  }

  Token next() {
    Token t = peek();
    buf_.erase(buf_.begin());
    return t;
  }

  [[noreturn]] void error(const std::string& msg, size_t pos) const {
    std::string context = src_.substr(pos, std::min<size_t>(16, src_.size() - pos));
    fail(Status::ParseError,
         msg + " at offset " + std::to_string(pos) + " near '" + context + "'");
  }

 private:
  void advance() {}

  Token lex() {
    while (i_ < src_.size()) {
      char c = src_[i_];
      if (c == '#') {
        while (i_ < src_.size() && src_[i_] != '\n') ++i_;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i_;
        continue;
      }
      break;
    }
    if (i_ >= src_.size()) return Token{Token::End, "", i_};
    size_t start = i_;
    char c = src_[i_];
    if (std::isalpha(static_cast<unsigned char>(c))) {
      while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) ||
                                  src_[i_] == '_'))
        ++i_;
      return Token{Token::Ident, src_.substr(start, i_ - start), start};
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) ++i_;
      return Token{Token::Int, src_.substr(start, i_ - start), start};
    }
    static const std::string syms = "+-*/^()[],";
    if (syms.find(c) != std::string::npos) {
      ++i_;
      return Token{Token::Sym, std::string(1, c), start};
    }
    fail(Status::ParseError, std::string("unexpected character '") + c + "' at offset " +
                                 std::to_string(start));
  }

  const std::string& src_;
  size_t i_ = 0;
  std::vector<Token> buf_;
};

// ---------------------------------------------------------------------------
// Parser

struct ParsedFactor {
  Factor factor;
  std::vector<std::pair<std::string, size_t>> names;  // per slot, with source pos
};

class Parser {
 public:
  Parser(const std::string& src, std::optional<long> n) : lex_(src), n_(n) {}

  LinComb parse_lincomb() {
    // Special case: a bare "0" denotes the empty combination.
    if (lex_.peek().type == Token::Int && lex_.peek().text == "0" &&
        lex_.peek(1).type == Token::End) {
      lex_.next();
      return LinComb::zero();
    }
    LinComb out;
    bool negative = false;
    if (is_sym("-")) {
      lex_.next();
      negative = true;
    }
    out.terms.push_back(parse_term(negative));
    while (lex_.peek().type != Token::End) {
      Token t = lex_.peek();
      if (!is_sym("+") && !is_sym("-")) lex_.error("expected '+' or '-' between terms", t.pos);
      lex_.next();
      out.terms.push_back(parse_term(t.text == "-"));
    }
    return out;
  }

  Term parse_term(bool negative) {
    DimRatio coef(1);
    if (!(lex_.peek().type == Token::Ident && lex_.peek().text == "contr")) {
      coef = parse_coef_expr();
      expect_sym("*");
    }
    Token kw = lex_.next();
    if (kw.type != Token::Ident || kw.text != "contr")
      lex_.error("expected 'contr'", kw.pos);
    expect_sym("(");
    std::vector<ParsedFactor> factors;
    while (!is_sym(")")) factors.push_back(parse_factor());
    lex_.next();  // ')'
    if (negative) coef = -coef;
    return Term{coef, assemble(factors)};
  }

  DimRatio parse_coef_expr() { return parse_sum(); }

  bool at_end() { return lex_.peek().type == Token::End; }

 private:
  bool is_sym(const char* s) {
    const Token& t = lex_.peek();
    return t.type == Token::Sym && t.text == s;
  }

  void expect_sym(const char* s) {
    if (!is_sym(s)) lex_.error(std::string("expected '") + s + "'", lex_.peek().pos);
    lex_.next();
  }

  DimRatio parse_sum() {
    DimRatio v = parse_product();
    while (is_sym("+") || is_sym("-")) {
      bool minus = lex_.peek().text == "-";
      lex_.next();
      DimRatio rhs = parse_product();
      v = minus ? v - rhs : v + rhs;
    }
    return v;
  }

  DimRatio parse_product() {
    DimRatio v = parse_unary();
    while (is_sym("*") || is_sym("/")) {
      // A '*' immediately followed by 'contr' is the coefficient separator.
      if (lex_.peek().text == "*" && lex_.peek(1).type == Token::Ident &&
          lex_.peek(1).text == "contr")
        break;
      bool div = lex_.peek().text == "/";
      lex_.next();
      DimRatio rhs = parse_unary();
      v = div ? v / rhs : v * rhs;
    }
    return v;
  }

  DimRatio parse_unary() {
    if (is_sym("-")) {
      lex_.next();
      return -parse_unary();
    }
    if (is_sym("+")) {
      lex_.next();
      return parse_unary();
    }
    return parse_power();
  }

  DimRatio parse_power() {
    DimRatio base = parse_atom();
    if (is_sym("^")) {
      lex_.next();
      Token e = lex_.next();
      if (e.type != Token::Int) lex_.error("expected integer exponent", e.pos);
      long k = std::stol(e.text);
      DimRatio v(1);
      for (long i = 0; i < k; ++i) v = v * base;
      return v;
    }
    return base;
  }

  DimRatio parse_atom() {
    Token t = lex_.peek();
    if (t.type == Token::Int) {
      lex_.next();
      return DimRatio(Rational(t.text));
    }
    if (t.type == Token::Ident) {
      if (t.text == "n") {
        lex_.next();
        return DimRatio::of(DimPoly::variable("n"));
      }
      lex_.error("unknown symbol in coefficient: '" + t.text + "'", t.pos);
    }
    if (is_sym("(")) {
      lex_.next();
      DimRatio v = parse_sum();
      expect_sym(")");
      return v;
    }
    lex_.error("expected coefficient atom", t.pos);
  }

  // Affine count expression for sugared derivative groups: n, n/2, integers,
  // combined with + and -.
  AffineInt parse_affine() {
    AffineInt acc{0, 0};
    int sign = 1;
    if (is_sym("-")) {
      lex_.next();
      sign = -1;
    }
    while (true) {
      Token t = lex_.next();
      if (t.type == Token::Ident && t.text == "n") {
        long denom = 1;
        if (is_sym("/")) {
          lex_.next();
          Token d = lex_.next();
          if (d.type != Token::Int || d.text != "2")
            lex_.error("only n/2 is supported in derivative counts", d.pos);
          denom = 2;
        }
        acc.half_n += sign * (denom == 2 ? 1 : 2);
      } else if (t.type == Token::Int) {
        acc.cst += sign * std::stol(t.text);
      } else {
        lex_.error("expected derivative-count atom", t.pos);
      }
      if (is_sym("+") || is_sym("-")) {
        sign = lex_.peek().text == "-" ? -1 : 1;
        lex_.next();
        continue;
      }
      break;
    }
    return acc;
  }

  std::vector<std::pair<std::string, size_t>> parse_name_list() {
    std::vector<std::pair<std::string, size_t>> names;
    expect_sym("[");
    if (!is_sym("]")) {
      while (true) {
        Token t = lex_.next();
        if (t.type != Token::Ident) lex_.error("expected index name", t.pos);
        for (char ch : t.text)
          if (!std::isalpha(static_cast<unsigned char>(ch)))
            lex_.error("index names are letters only: '" + t.text + "'", t.pos);
        names.emplace_back(t.text, t.pos);
        if (is_sym(",")) {
          lex_.next();
          continue;
        }
        break;
      }
    }
    expect_sym("]");
    return names;
  }

  ParsedFactor parse_factor() {
    std::vector<std::pair<std::string, size_t>> deriv_names;
    while (lex_.peek().type == Token::Ident && lex_.peek().text == "D") {
      lex_.next();
      if (is_sym("^")) {
        lex_.next();
        expect_sym("[");
        AffineInt count = parse_affine();
        expect_sym("]");
        require(n_.has_value(), Status::ParseError,
                "symbolic derivative count needs a declared dimension n");
        long k = count.eval_at(*n_);
        require(k >= 0, Status::ParseError, "negative derivative count");
        auto base = parse_name_list();
        for (const auto& [name, pos] : base)
          for (long j = 1; j <= k; ++j)
            deriv_names.emplace_back(name + "__" + std::to_string(j), pos);
      } else {
        auto names = parse_name_list();
        deriv_names.insert(deriv_names.end(), names.begin(), names.end());
      }
    }
    Token k = lex_.next();
    if (k.type != Token::Ident) lex_.error("expected factor kind", k.pos);
    Factor f;
    if (k.text == "R") f.kind = Kind::ScalarCurv;
    else if (k.text == "Ric") f.kind = Kind::Ricci;
    else if (k.text == "Rm") f.kind = Kind::Riemann;
    else if (k.text == "W") f.kind = Kind::Weyl;
    else if (k.text == "P") f.kind = Kind::Schouten;
    else if (k.text == "Omega") f.kind = Kind::AuxFn;
    else if (k.text == "g") f.kind = Kind::Metric;
    else if (k.text.rfind("psi", 0) == 0 && k.text.size() > 3 &&
             std::all_of(k.text.begin() + 3, k.text.end(),
                         [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      f.kind = Kind::ScalarFn;
      f.label = std::stoi(k.text.substr(3));
    } else {
      lex_.error("unknown factor kind '" + k.text + "'", k.pos);
    }
    auto intrinsic = parse_name_list();
    if (static_cast<int>(intrinsic.size()) != intrinsic_slots(f.kind))
      lex_.error("kind '" + k.text + "' takes " + std::to_string(intrinsic_slots(f.kind)) +
                     " indices, got " + std::to_string(intrinsic.size()),
                 k.pos);
    f.m = static_cast<int>(deriv_names.size());
    ParsedFactor pf;
    pf.factor = f;
    pf.names = std::move(deriv_names);
    pf.names.insert(pf.names.end(), intrinsic.begin(), intrinsic.end());
    return pf;
  }

  Contraction assemble(const std::vector<ParsedFactor>& factors) {
    std::vector<Factor> fs;
    for (const auto& pf : factors) fs.push_back(pf.factor);
    Contraction c = Contraction::of(fs);
    std::map<std::string, std::vector<std::pair<SlotRef, size_t>>> uses;
    for (int f = 0; f < static_cast<int>(factors.size()); ++f)
      for (int s = 0; s < static_cast<int>(factors[f].names.size()); ++s)
        uses[factors[f].names[static_cast<size_t>(s)].first].push_back(
            {SlotRef{f, s}, factors[f].names[static_cast<size_t>(s)].second});

    std::vector<std::string> free_names;
    for (const auto& [name, occ] : uses) {
      if (occ.size() == 1) {
        free_names.push_back(name);
      } else if (occ.size() == 2) {
        // paired below
      } else {
        lex_.error("index '" + name + "' appears " + std::to_string(occ.size()) +
                       " times (first use shown)",
                   occ.front().second);
      }
    }
    std::sort(free_names.begin(), free_names.end());
    for (const auto& [name, occ] : uses) {
      if (occ.size() == 2) {
        c.pair_slots(occ[0].first, occ[1].first);
      } else {
        int label = static_cast<int>(
            std::lower_bound(free_names.begin(), free_names.end(), name) - free_names.begin());
        c.set_free(occ[0].first, label);
      }
    }
    c.validate();
    return c;
  }

  Lexer lex_;
  std::optional<long> n_;
};

// ---------------------------------------------------------------------------
// Printing

std::string free_name(int label) {
  require(label >= 0 && label < 18, Status::InternalError, "free label out of naming range");
  return std::string(1, static_cast<char>('i' + label));
}

std::string edge_name(int k) {
  // a..h, then aa..ah, ba..bh, ...
  std::string s;
  s.push_back(static_cast<char>('a' + k % 8));
  k /= 8;
  while (k > 0) {
    s.insert(s.begin(), static_cast<char>('a' + (k - 1) % 8));
    k = (k - 1) / 8;
  }
  return s;
}

bool coef_is_negative(const DimRatio& r) {
  return !r.is_zero() && r.num().leading() < 0;
}

}  // namespace

LinComb parse_lincomb(const std::string& text, std::optional<long> n) {
  Parser p(text, n);
  LinComb lc = p.parse_lincomb();
  require(p.at_end(), Status::ParseError, "trailing input after linear combination");
  return lc;
}

Contraction parse_contraction(const std::string& text, std::optional<long> n) {
  LinComb lc = parse_lincomb(text, n);
  require(lc.terms.size() == 1, Status::ParseError, "expected a single contraction");
  require(lc.terms[0].coef == DimRatio(1), Status::ParseError,
          "expected a bare contraction without coefficient");
  return lc.terms[0].contr;
}

DimRatio parse_coefficient(const std::string& text) {
  Parser p(text, std::nullopt);
  DimRatio r = p.parse_coef_expr();
  require(p.at_end(), Status::ParseError, "trailing input after coefficient");
  return r;
}

std::string print_contraction(const Contraction& c) {
  std::map<SlotRef, std::string> names;
  int next_edge = 0;
  for (int f = 0; f < c.num_factors(); ++f)
    for (int s = 0; s < static_cast<int>(c.partner[f].size()); ++s) {
      SlotRef here{f, s};
      if (names.count(here)) continue;
      SlotRef p = c.partner[f][s];
      if (p.is_free_marker()) {
        names[here] = free_name(p.s);
      } else {
        std::string nm = edge_name(next_edge++);
        names[here] = nm;
        names[p] = nm;
      }
    }
  std::ostringstream os;
  os << "contr(";
  for (int f = 0; f < c.num_factors(); ++f) {
    if (f > 0) os << " ";
    const Factor& fac = c.factors[f];
    if (fac.m > 0) {
      os << "D[";
      for (int s = 0; s < fac.m; ++s) os << (s ? "," : "") << names[SlotRef{f, s}];
      os << "] ";
    }
    os << kind_name(fac.kind);
    if (fac.kind == Kind::ScalarFn) os << fac.label;
    os << "[";
    for (int s = fac.m; s < fac.slots(); ++s)
      os << (s > fac.m ? "," : "") << names[SlotRef{f, s}];
    os << "]";
  }
  os << ")";
  return os.str();
}

std::string print_term(const Term& t) {
  std::string body = print_contraction(t.contr);
  DimRatio coef = t.coef;
  std::string prefix;
  if (coef_is_negative(coef)) {
    prefix = "-";
    coef = -coef;
  }
  if (coef == DimRatio(1)) return prefix + body;
  std::string cs = coef.to_string();
  if (cs.find(' ') != std::string::npos && cs.front() != '(') cs = "(" + cs + ")";
  return prefix + cs + " * " + body;
}

std::string print_lincomb(const LinComb& lc) {
  if (lc.terms.empty()) return "0";
  std::ostringstream os;
  for (size_t i = 0; i < lc.terms.size(); ++i) {
    const Term& t = lc.terms[i];
    bool neg = coef_is_negative(t.coef);
    if (i == 0) {
      os << print_term(t);
      continue;
    }
    os << (neg ? " - " : " + ");
    Term abs = t;
    if (neg) abs.coef = -abs.coef;
    os << print_term(abs);
  }
  return os.str();
}

}  // namespace tc
