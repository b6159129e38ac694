#include "ratcoef.hpp"

#include <algorithm>
#include <sstream>

namespace tc {

Rational make_rational(long num, long den) {
  require(den != 0, Status::DomainError, "rational with zero denominator");
  Rational q(num, den);
  q.canonicalize();
  return q;
}

Rational make_rational(const mpz_class& num, const mpz_class& den) {
  require(den != 0, Status::DomainError, "rational with zero denominator");
  Rational q(num, den);
  q.canonicalize();
  return q;
}

std::string to_string(const Rational& q) { return q.get_str(); }

Rational factorial(long n) {
  require(n >= 0, Status::DomainError, "factorial of negative argument");
  mpz_class r;
  mpz_fac_ui(r.get_mpz_t(), static_cast<unsigned long>(n));
  return Rational(r);
}

Rational binomial(long n, long k) {
  if (k < 0 || k > n) return Rational(0);
  mpz_class r;
  mpz_bin_uiui(r.get_mpz_t(), static_cast<unsigned long>(n), static_cast<unsigned long>(k));
  return Rational(r);
}

// ---------------------------------------------------------------------------
// DimPoly

DimPoly::DimPoly(Rational constant, std::string var) : var_(std::move(var)) {
  if (constant != 0) coeffs_.push_back(std::move(constant));
}

DimPoly::DimPoly(long constant, std::string var) : DimPoly(Rational(constant), std::move(var)) {}

DimPoly DimPoly::variable(std::string var) {
  DimPoly p;
  p.var_ = std::move(var);
  p.coeffs_ = {Rational(0), Rational(1)};
  return p;
}

DimPoly DimPoly::affine(const Rational& a, const Rational& b, std::string var) {
  DimPoly p;
  p.var_ = std::move(var);
  p.coeffs_ = {b, a};
  p.trim();
  return p;
}

Rational DimPoly::coeff(int k) const {
  if (k < 0 || k >= static_cast<int>(coeffs_.size())) return Rational(0);
  return coeffs_[static_cast<size_t>(k)];
}

const Rational& DimPoly::leading() const {
  require(!coeffs_.empty(), Status::DomainError, "leading coefficient of zero polynomial");
  return coeffs_.back();
}

void DimPoly::trim() {
  while (!coeffs_.empty() && coeffs_.back() == 0) coeffs_.pop_back();
}

void DimPoly::check_var(const DimPoly& o) const {
  // Constants are variable-agnostic.
  require(is_constant() || o.is_constant() || var_ == o.var_, Status::DomainError,
          "mixed polynomial variables " + var_ + " and " + o.var_);
}

Rational DimPoly::eval_at(const Rational& x) const {
  Rational acc(0);
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * x + *it;
  return acc;
}

DimPoly DimPoly::operator-() const {
  DimPoly r = *this;
  for (auto& c : r.coeffs_) c = -c;
  return r;
}

DimPoly DimPoly::operator+(const DimPoly& o) const {
  check_var(o);
  DimPoly r;
  r.var_ = is_constant() ? o.var_ : var_;
  r.coeffs_.resize(std::max(coeffs_.size(), o.coeffs_.size()), Rational(0));
  for (size_t i = 0; i < r.coeffs_.size(); ++i) {
    if (i < coeffs_.size()) r.coeffs_[i] += coeffs_[i];
    if (i < o.coeffs_.size()) r.coeffs_[i] += o.coeffs_[i];
  }
  r.trim();
  return r;
}

DimPoly DimPoly::operator-(const DimPoly& o) const { return *this + (-o); }

DimPoly DimPoly::operator*(const DimPoly& o) const {
  check_var(o);
  if (is_zero() || o.is_zero()) return DimPoly();
  DimPoly r;
  r.var_ = is_constant() ? o.var_ : var_;
  r.coeffs_.assign(coeffs_.size() + o.coeffs_.size() - 1, Rational(0));
  for (size_t i = 0; i < coeffs_.size(); ++i)
    for (size_t j = 0; j < o.coeffs_.size(); ++j) r.coeffs_[i + j] += coeffs_[i] * o.coeffs_[j];
  r.trim();
  return r;
}

DimPoly DimPoly::operator*(const Rational& s) const {
  DimPoly r = *this;
  for (auto& c : r.coeffs_) c *= s;
  r.trim();
  return r;
}

bool DimPoly::operator==(const DimPoly& o) const {
  if (coeffs_ != o.coeffs_) return false;
  return is_constant() || o.is_constant() || var_ == o.var_;
}

namespace {

// Polynomial division: returns quotient, leaves remainder in r.
DimPoly poly_divmod(const DimPoly& a, const DimPoly& d, DimPoly* rem) {
  require(!d.is_zero(), Status::DomainError, "polynomial division by zero");
  DimPoly q(0, a.var());
  DimPoly r = a;
  while (!r.is_zero() && r.degree() >= d.degree()) {
    int k = r.degree() - d.degree();
    Rational c = r.leading() / d.leading();
    // t = c * x^k
    DimPoly t(0, a.var());
    {
      DimPoly x = DimPoly::variable(a.var());
      DimPoly pw(Rational(1), a.var());
      for (int i = 0; i < k; ++i) pw = pw * x;
      t = pw * c;
    }
    q = q + t;
    r = r - t * d;
  }
  if (rem) *rem = r;
  return q;
}

}  // namespace

DimPoly DimPoly::divexact(const DimPoly& d) const {
  DimPoly rem;
  DimPoly q = poly_divmod(*this, d, &rem);
  require(rem.is_zero(), Status::InternalError, "inexact polynomial division");
  return q;
}

DimPoly DimPoly::gcd(const DimPoly& a, const DimPoly& b) {
  DimPoly x = a, y = b;
  while (!y.is_zero()) {
    DimPoly rem;
    poly_divmod(x, y, &rem);
    x = y;
    y = rem;
  }
  if (x.is_zero()) return x;
  // Normalize monic.
  return x * (Rational(1) / x.leading());
}

std::string DimPoly::to_string() const {
  if (is_zero()) return "0";
  std::ostringstream os;
  bool first = true;
  for (int k = degree(); k >= 0; --k) {
    Rational c = coeff(k);
    if (c == 0) continue;
    bool neg = c < 0;
    Rational mag = neg ? Rational(-c) : c;
    if (first) {
      if (neg) os << "-";
      first = false;
    } else {
      os << (neg ? " - " : " + ");
    }
    if (k == 0) {
      os << mag.get_str();
    } else {
      if (mag != 1) os << mag.get_str() << "*";
      os << var_;
      if (k > 1) os << "^" << k;
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// DimRatio

DimRatio::DimRatio(DimPoly num, DimPoly den) : num_(std::move(num)), den_(std::move(den)) {
  require(!den_.is_zero(), Status::DomainError, "DimRatio with zero denominator");
  reduce();
}

DimRatio::DimRatio(const Rational& c, std::string var)
    : num_(c, var), den_(Rational(1), std::move(var)) {}

DimRatio::DimRatio(long c, std::string var) : DimRatio(Rational(c), std::move(var)) {}

DimRatio DimRatio::of(const DimPoly& p) { return DimRatio(p, DimPoly(Rational(1), p.var())); }

void DimRatio::reduce() {
  if (num_.is_zero()) {
    den_ = DimPoly(Rational(1), den_.var());
    return;
  }
  DimPoly g = DimPoly::gcd(num_, den_);
  if (!g.is_constant()) {
    num_ = num_.divexact(g);
    den_ = den_.divexact(g);
  }
  Rational lead = den_.leading();
  num_ = num_ * (Rational(1) / lead);
  den_ = den_ * (Rational(1) / lead);
}

Rational DimRatio::constant_value() const {
  require(is_constant(), Status::DomainError, "DimRatio is not constant: " + to_string());
  if (num_.is_zero()) return Rational(0);
  return num_.coeff(0) / den_.coeff(0);
}

Rational DimRatio::eval_at(const Rational& x) const {
  Rational d = den_.eval_at(x);
  require(d != 0, Status::PoleError,
          "evaluation at pole of " + to_string() + " at " + x.get_str());
  return num_.eval_at(x) / d;
}

DimRatio DimRatio::operator-() const {
  DimRatio r = *this;
  r.num_ = -r.num_;
  return r;
}

DimRatio DimRatio::operator+(const DimRatio& o) const {
  return DimRatio(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
}

DimRatio DimRatio::operator-(const DimRatio& o) const { return *this + (-o); }

DimRatio DimRatio::operator*(const DimRatio& o) const {
  return DimRatio(num_ * o.num_, den_ * o.den_);
}

DimRatio DimRatio::operator/(const DimRatio& o) const {
  require(!o.is_zero(), Status::DomainError, "DimRatio division by zero");
  return DimRatio(num_ * o.den_, den_ * o.num_);
}

DimRatio DimRatio::operator*(const Rational& s) const { return *this * DimRatio(s, var()); }

bool DimRatio::operator==(const DimRatio& o) const { return num_ == o.num_ && den_ == o.den_; }

std::string DimRatio::to_string() const {
  if (den_ == DimPoly(Rational(1))) {
    if (num_.is_constant()) return num_.to_string();
    return num_.to_string();
  }
  std::string ns = num_.to_string();
  return "(" + ns + ")/(" + den_.to_string() + ")";
}

// ---------------------------------------------------------------------------
// AffineInt / RangeProd / SymConst

long AffineInt::eval_at(long n) const {
  require(n % 2 == 0, Status::DomainError, "AffineInt evaluated at odd n");
  return half_n * (n / 2) + cst;
}

std::string AffineInt::to_string() const {
  std::ostringstream os;
  auto tail = [&](long c) {
    if (c > 0) os << "+" << c;
    if (c < 0) os << c;
  };
  if (half_n == 0) {
    os << cst;
  } else if (half_n == 2) {
    os << "n";
    tail(cst);
  } else if (half_n == -2) {
    os << "-n";
    tail(cst);
  } else if (half_n == 1) {
    os << "n/2";
    tail(cst);
  } else if (half_n == -1) {
    os << "-n/2";
    tail(cst);
  } else if (half_n % 2 == 0) {
    os << (half_n / 2) << "*n";
    tail(cst);
  } else {
    os << half_n << "*n/2";
    tail(cst);
  }
  return os.str();
}

Rational RangeProd::eval_at(long n) const {
  require(step >= 1, Status::DomainError, "RangeProd with nonpositive step");
  long a = start.eval_at(n);
  long b = stop.eval_at(n);
  if (a < b) return Rational(1);
  require((a - b) % step == 0, Status::DomainError,
          "misaligned range product " + to_string() + " at n=" + std::to_string(n));
  mpz_class acc(1);
  for (long v = a; v >= b; v -= step) acc *= v;
  return Rational(acc);
}

std::string RangeProd::to_string() const {
  std::string s = "prod(" + start.to_string() + " .. " + stop.to_string();
  if (step != 1) s += " step " + std::to_string(step);
  return s + ")";
}

Rational SymConst::eval_at(long n) const {
  Rational v = base.eval_at(Rational(n));
  for (const auto& p : num_prods) v *= p.eval_at(n);
  for (const auto& p : den_prods) {
    Rational d = p.eval_at(n);
    require(d != 0, Status::PoleError,
            "range product " + p.to_string() + " vanishes at n=" + std::to_string(n));
    v /= d;
  }
  return v;
}

SymConst SymConst::operator*(const SymConst& o) const {
  SymConst r;
  r.base = base * o.base;
  r.num_prods = num_prods;
  r.num_prods.insert(r.num_prods.end(), o.num_prods.begin(), o.num_prods.end());
  r.den_prods = den_prods;
  r.den_prods.insert(r.den_prods.end(), o.den_prods.begin(), o.den_prods.end());
  return r;
}

SymConst SymConst::reciprocal() const {
  require(!base.is_zero(), Status::DomainError, "reciprocal of zero SymConst");
  SymConst r;
  r.base = DimRatio(Rational(1)) / base;
  r.num_prods = den_prods;
  r.den_prods = num_prods;
  return r;
}

std::string SymConst::to_string() const {
  std::string s = base.to_string();
  for (const auto& p : num_prods) s += " * " + p.to_string();
  for (const auto& p : den_prods) s += " / " + p.to_string();
  return s;
}

SymConst falling_product(const AffineInt& start, const AffineInt& stop, long step) {
  require(step >= 1, Status::DomainError, "falling_product with nonpositive step");
  if (start.half_n == stop.half_n) {
    long diff = start.cst - stop.cst;
    if (diff < 0) return SymConst::of(DimRatio(1));
    require(diff % step == 0, Status::DomainError, "misaligned falling_product bounds");
    long len = diff / step + 1;
    DimPoly prod(Rational(1));
    for (long j = 0; j < len; ++j) {
      // factor (start - j*step) as a polynomial in n
      DimPoly f = DimPoly::affine(make_rational(start.half_n, 2),
                                  Rational(start.cst - j * step));
      prod = prod * f;
    }
    return SymConst::of(DimRatio::of(prod));
  }
  SymConst r;
  r.num_prods.push_back(RangeProd{start, stop, step});
  return r;
}

// ---------------------------------------------------------------------------
// Positivity

namespace {

// Smallest even integer >= x for rational x.
long even_ceiling(const Rational& x) {
  mpz_class num = x.get_num(), den = x.get_den();
  mpz_class q;
  mpz_cdiv_q(q.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
  long v = q.get_si();
  if (v % 2 != 0) ++v;
  return v;
}

// Cauchy-style bound: all real roots of p lie strictly inside |x| <= bound.
Rational root_bound(const DimPoly& p) {
  if (p.degree() <= 0) return Rational(0);
  Rational m(0);
  for (int k = 0; k < p.degree(); ++k) {
    Rational a = abs(p.coeff(k) / p.leading());
    if (a > m) m = a;
  }
  return m + 1;
}

}  // namespace

Positivity positive_for_all_n_geq(const DimRatio& r, long n0) {
  if (r.is_zero()) return {false, true};
  if (n0 % 2 != 0) ++n0;
  // sign(r(n)) = sign(num*den at n) away from poles.
  DimPoly p = r.num() * r.den();
  long bound = even_ceiling(root_bound(p));
  long hi = std::max(n0, bound) + 2;
  for (long n = n0; n <= hi; n += 2) {
    if (r.den().eval_at(Rational(n)) == 0) return {false, false};
    if (p.eval_at(Rational(n)) <= 0) return {false, false};
  }
  // Beyond all roots the sign equals the sign of the leading coefficient.
  return {p.leading() > 0, false};
}

namespace {

// Stable sign of a RangeProd for all even n >= some threshold; also returns
// that threshold. Fails for shapes whose asymptotic sign genuinely
// alternates (descending stop bound), which no closed form here produces.
struct StableSign {
  int sign = 1;   // sign for all even n >= from
  long from = 0;  // threshold
};

StableSign range_prod_stable_sign(const RangeProd& rp) {
  const AffineInt& a = rp.start;
  const AffineInt& b = rp.stop;
  long s1 = a.half_n, s2 = b.half_n;
  auto affine_root_threshold = [](const AffineInt& f) {
    // smallest even n beyond which f keeps one sign; f nonconstant
    // f(n) = half_n*(n/2)+cst = 0 at n = -2c/half_n
    Rational root = make_rational(-2 * f.cst, f.half_n);
    return even_ceiling(root) + 2;
  };
  if (s1 < s2) {
    // Eventually empty (start < stop): value 1.
    AffineInt diff{s1 - s2, a.cst - b.cst};
    return {1, affine_root_threshold(diff)};
  }
  if (s2 > 0) {
    // stop(n) -> +inf: eventually every factor positive.
    return {1, affine_root_threshold(b)};
  }
  if (s2 == 0) {
    long c = b.cst;
    if (c > 0) return {1, 0};
    if (s1 == 0) {
      // Fully constant product.
      int prod_sign = 1;
      for (long v = a.cst; v >= c; v -= rp.step) {
        if (v == 0) return {0, 0};
        if (v < 0) prod_sign = -prod_sign;
      }
      if (a.cst < c) prod_sign = 1;
      return {prod_sign, 0};
    }
    // start grows, stop constant c <= 0: for large n the factors <= 0 are
    // exactly {c, c+step, ...} up to 0.
    long from = affine_root_threshold(a);
    if ((-c) % rp.step == 0) return {0, from};  // hits a zero factor forever
    long negs = (-c - 1) / rp.step + 1;
    return {negs % 2 == 0 ? 1 : -1, from};
  }
  fail(Status::DomainError,
       "range product with descending stop bound has no stable sign: " + rp.to_string());
}

}  // namespace

Positivity positive_for_all_n_geq(const SymConst& c, long n0) {
  if (c.base.is_zero()) return {false, true};
  if (n0 % 2 != 0) ++n0;
  long threshold = n0;
  int asym_sign = 1;
  {
    DimPoly p = c.base.num() * c.base.den();
    threshold = std::max(threshold, even_ceiling(root_bound(p)) + 2);
    if (p.leading() < 0) asym_sign = -asym_sign;
  }
  std::vector<RangeProd> all = c.num_prods;
  all.insert(all.end(), c.den_prods.begin(), c.den_prods.end());
  for (const auto& rp : all) {
    StableSign ss = range_prod_stable_sign(rp);
    if (ss.sign == 0) return {false, false};
    threshold = std::max(threshold, ss.from);
    asym_sign *= ss.sign;
  }
  for (long n = n0; n <= threshold; n += 2) {
    for (const auto& rp : c.den_prods)
      if (rp.eval_at(n) == 0) return {false, false};
    if (c.base.den().eval_at(Rational(n)) == 0) return {false, false};
    if (c.eval_at(n) <= 0) return {false, false};
  }
  return {asym_sign > 0, false};
}

}  // namespace tc
