#pragma once

#include <gmpxx.h>

#include <optional>
#include <string>
#include <vector>

#include "error.hpp"

namespace tc {

// Exact rational scalar. mpq_class keeps values reduced with positive
// denominator once canonicalized; all construction goes through helpers
// that guarantee that invariant.
using Rational = mpq_class;

Rational make_rational(long num, long den = 1);
Rational make_rational(const mpz_class& num, const mpz_class& den);
std::string to_string(const Rational& q);

Rational binomial(long n, long k);
Rational factorial(long n);

// Dense univariate polynomial over Rational in a formal dimension-like
// variable (usually "n", occasionally "y" for row-cancellation identities).
// Coefficients are stored lowest degree first with no trailing zeros.
class DimPoly {
 public:
  DimPoly() = default;
  explicit DimPoly(Rational constant, std::string var = "n");
  explicit DimPoly(long constant, std::string var = "n");

  // The polynomial consisting of the variable itself.
  static DimPoly variable(std::string var = "n");
  // a*var + b
  static DimPoly affine(const Rational& a, const Rational& b, std::string var = "n");

  const std::string& var() const { return var_; }
  bool is_zero() const { return coeffs_.empty(); }
  bool is_constant() const { return coeffs_.size() <= 1; }
  int degree() const { return coeffs_.empty() ? -1 : static_cast<int>(coeffs_.size()) - 1; }
  Rational coeff(int k) const;
  const Rational& leading() const;

  Rational eval_at(const Rational& x) const;

  DimPoly operator-() const;
  DimPoly operator+(const DimPoly& o) const;
  DimPoly operator-(const DimPoly& o) const;
  DimPoly operator*(const DimPoly& o) const;
  DimPoly operator*(const Rational& s) const;
  bool operator==(const DimPoly& o) const;
  bool operator!=(const DimPoly& o) const { return !(*this == o); }

  // Exact division; fails with InternalError if the remainder is nonzero.
  DimPoly divexact(const DimPoly& d) const;

  // Monic greatest common divisor (1 if either side is a nonzero constant).
  static DimPoly gcd(const DimPoly& a, const DimPoly& b);

  std::string to_string() const;

 private:
  void trim();
  void check_var(const DimPoly& o) const;

  std::vector<Rational> coeffs_;
  std::string var_ = "n";
};

// Reduced ratio of two DimPoly with monic denominator. The zero element is
// canonically 0/1.
class DimRatio {
 public:
  DimRatio() : num_(Rational(0)), den_(Rational(1)) {}
  DimRatio(DimPoly num, DimPoly den);
  explicit DimRatio(const Rational& c, std::string var = "n");
  explicit DimRatio(long c, std::string var = "n");
  static DimRatio of(const DimPoly& p);

  const DimPoly& num() const { return num_; }
  const DimPoly& den() const { return den_; }
  const std::string& var() const { return num_.var(); }
  bool is_zero() const { return num_.is_zero(); }
  bool is_constant() const { return num_.is_constant() && den_.is_constant(); }
  // Constant value; fails if not constant.
  Rational constant_value() const;

  Rational eval_at(const Rational& x) const;  // PoleError if den vanishes at x

  DimRatio operator-() const;
  DimRatio operator+(const DimRatio& o) const;
  DimRatio operator-(const DimRatio& o) const;
  DimRatio operator*(const DimRatio& o) const;
  DimRatio operator/(const DimRatio& o) const;  // DomainError on division by zero
  DimRatio operator*(const Rational& s) const;
  bool operator==(const DimRatio& o) const;
  bool operator!=(const DimRatio& o) const { return !(*this == o); }

  std::string to_string() const;

 private:
  void reduce();

  DimPoly num_;
  DimPoly den_;
};

// Integer-valued affine expression k*(n/2) + c, used for derivative orders
// and range-product bounds ("n-3", "n/2-2", plain constants). Values are
// only requested at even n.
struct AffineInt {
  long half_n = 0;  // coefficient of n/2
  long cst = 0;

  static AffineInt constant(long c) { return {0, c}; }
  static AffineInt n_plus(long c) { return {2, c}; }       // n + c
  static AffineInt half_n_plus(long c) { return {1, c}; }  // n/2 + c

  long eval_at(long n) const;
  bool is_constant() const { return half_n == 0; }
  bool operator==(const AffineInt& o) const { return half_n == o.half_n && cst == o.cst; }
  AffineInt operator+(long c) const { return {half_n, cst + c}; }
  AffineInt operator-(long c) const { return {half_n, cst - c}; }
  std::string to_string() const;
};

// Descending product start * (start - step) * ... * stop with symbolic
// bounds; bounds are inclusive and must stay aligned (start - stop must be
// divisible by step at evaluation time). An empty range (start < stop) has
// value 1.
struct RangeProd {
  AffineInt start;
  AffineInt stop;
  long step = 1;

  Rational eval_at(long n) const;
  std::string to_string() const;
  bool operator==(const RangeProd& o) const {
    return start == o.start && stop == o.stop && step == o.step;
  }
};

// Closed-form symbolic constant: a DimRatio scaled by range products in the
// numerator and denominator. Only used for dimension-generic closed forms
// (range products have n-dependent length, so they are not DimPoly).
struct SymConst {
  DimRatio base = DimRatio(1);
  std::vector<RangeProd> num_prods;
  std::vector<RangeProd> den_prods;

  static SymConst of(const DimRatio& r) { return SymConst{r, {}, {}}; }

  Rational eval_at(long n) const;  // PoleError if a denominator part vanishes
  SymConst operator*(const SymConst& o) const;
  SymConst reciprocal() const;  // DomainError if base is zero
  std::string to_string() const;
};

// falling_product(start, stop, step): if the number of factors is
// n-independent the result is an expanded polynomial; otherwise it is kept
// as a RangeProd inside a SymConst.
SymConst falling_product(const AffineInt& start, const AffineInt& stop, long step = 1);

struct Positivity {
  bool positive = false;
  bool identically_zero = false;
};

// Exact sign analysis: is value(n) > 0 for every even n >= n0? Identically
// zero input is reported through the flag (and is not positive).
Positivity positive_for_all_n_geq(const DimRatio& r, long n0);
Positivity positive_for_all_n_geq(const SymConst& c, long n0);

}  // namespace tc
