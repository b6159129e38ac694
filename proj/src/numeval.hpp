#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "expr.hpp"

namespace tc {

// Value of a complete contraction on a metric jet: a polynomial in the
// curvature-scale parameter t, exact rational coefficients, truncated at
// the jet's t order.
struct JetValue {
  std::vector<Rational> t;  // coefficient of t^k at index k

  bool is_zero() const {
    for (const auto& c : t)
      if (c != 0) return false;
    return true;
  }
  Rational coeff(int k) const {
    return k < static_cast<int>(t.size()) ? t[static_cast<size_t>(k)] : Rational(0);
  }
  std::string to_string() const;
};

struct JetSpec {
  long n = 6;          // dimension (<= 14)
  int tmax = 2;        // truncation order in t
  uint64_t seed = 1;   // deterministic generator seed
  int hterms = 5;      // monomial entries of the metric perturbation
  int hdeg = 5;        // maximum x-degree of those monomials (>= 2)
};

// Polynomial metric jet g = delta + t*h at the origin, with h a sparse
// symmetric 2-tensor of integer monomials vanishing to second order at 0.
// Curvature tensors are computed exactly from Christoffel symbols; scalar
// functions psi_h and the auxiliary scalar are independent random
// polynomials. Covariant derivatives are nested in slot order (first
// derivative slot outermost); no symmetrization is applied.
class MetricJet {
 public:
  explicit MetricJet(const JetSpec& spec);
  ~MetricJet();
  MetricJet(const MetricJet&) = delete;
  MetricJet& operator=(const MetricJet&) = delete;

  long n() const;
  int tmax() const;

  // Exact value (up to the jet's t order) of a complete contraction.
  JetValue evaluate(const Contraction& c) const;

  // Coefficient of t^k, using per-factor truncation budgets (every
  // curvature factor is O(t)).
  Rational t_coefficient(const Contraction& c, int k) const;

  // Exact internal consistency checks: Riemann symmetries, first and second
  // Bianchi identities, Weyl trace-freeness, metric compatibility. Throws on
  // violation.
  void self_test() const;

 private:
  struct Impl;
  Impl* impl_;
};

// Sum of coefficient * value over the terms, with coefficients evaluated at
// the jet dimension. Full t expansion.
JetValue evaluate_lincomb(const LinComb& lc, const MetricJet& jet);

// Coefficient of t^grade of the lincomb value.
Rational graded_coefficient(const LinComb& lc, const MetricJet& jet, int grade);

// Number of curvature factors (the leading t order of a complete
// contraction with underived scalar functions present).
int curvature_grade(const Contraction& c);

}  // namespace tc
