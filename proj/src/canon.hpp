#pragma once

#include <cstdint>
#include <vector>

#include "expr.hpp"

namespace tc {

// Canonicalization result. The input contraction equals scale * form as a
// tensor, where scale folds in symmetry signs and factors of n coming from
// metric traces. scale == 0 exactly when the input vanishes identically by
// the enumerated slot symmetries (then form/key are empty).
struct Canonical {
  DimRatio scale = DimRatio(0);
  Contraction form;
  std::vector<uint32_t> key;

  bool is_zero() const { return scale.is_zero(); }
};

// Canonical representative over factor reorderings, derivative-block
// symmetry, the symmetric pairs of Ricci/Schouten/metric factors, and the
// sign symmetries of Riemann/Weyl factors (antisymmetric index pairs and
// the pair swap). Metric factors are eliminated first: a fully contracted
// metric contributes a factor n, a metric contracted on one side re-points
// the other side, and only metrics with two free slots survive.
Canonical canonicalize(const Contraction& c);

// Key of the canonical representative (convenience).
std::vector<uint32_t> canonical_key(const Contraction& c);

// Exact tensor equality after canonicalization.
bool equal_mod_symmetry(const Contraction& a, const Contraction& b);

// Collect a linear combination: canonicalize each term, merge equal shapes,
// drop vanished terms, order deterministically by canonical key.
LinComb collect(const LinComb& lc);

// Collected view exposing keys, used by linear algebra over shape space.
struct CollectedTerm {
  std::vector<uint32_t> key;
  DimRatio coef;
  Contraction form;
};
std::vector<CollectedTerm> collect_detailed(const LinComb& lc);

// collect(a - b) empty?
bool lincomb_equal(const LinComb& a, const LinComb& b);

}  // namespace tc
