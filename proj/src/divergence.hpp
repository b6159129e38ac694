#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "expr.hpp"
#include "ratcoef.hpp"

namespace tc {

// Explicit divergence constructions: integration by parts as a bookkept
// operation. Every reduction in this module returns a certificate listing
// which vector fields were peeled off, so that
//
//   input  -  sum_i coefficient_i * div(field_i)  -  remainder
//
// vanishes (exactly, or modulo the recorded reordering corrections when a
// grade policy tracks them). Certificates are first-class values: they can
// be serialized and replayed without rerunning the search that produced
// them.

// Formal divergence of a field with exactly one free slot: one term per
// factor, the new derivative outermost on that factor and contracted with
// the free slot. The term whose derivative lands on the free slot's own
// factor closes the pair internally. Metric factors contribute nothing.
LinComb free_index_divergence(const Contraction& v);

// One integration-by-parts move. `vector_field` is `source` with the
// `erased` derivative slot removed and its contraction partner `freed`; the
// slot references use the coordinates of `source`. `coefficient` scales the
// move inside a multi-step certificate.
struct DivStep {
  Contraction source;
  SlotRef erased;
  SlotRef freed;
  DimRatio coefficient = DimRatio(1);
  Contraction vector_field;
};

struct DivCertificate {
  Contraction input;
  std::vector<DivStep> steps;
  LinComb remainder;
  // Reordering corrections picked up while moving restored derivatives back
  // into place; populated only under a tracking grade policy, otherwise the
  // identity above holds at the level of canonical forms.
  LinComb corrections;

  // sum_i coefficient_i * div(field_i), expanded.
  LinComb divergence_sum() const;
  // input - divergence_sum() - remainder - corrections.
  LinComb residual() const;
  std::string to_json() const;
};

// Remove one contracted derivative: the edge must join a derivative slot to
// some other slot (on the same factor or across factors). The derivative
// endpoint is erased and the partner slot becomes free. Rejects edges with
// no derivative endpoint; those need a trace identity first.
DivStep erase_and_free(const Contraction& c, std::pair<SlotRef, SlotRef> edge);

// Iteratively integrate by parts every contraction internal to a single
// factor, deepest factor first (most derivative slots, then lowest factor
// and slot id). Internal pairs between two intrinsic slots are first
// converted with the matching trace or Bianchi identity. The remainder has
// no internal contractions left; each step lowers the internal-contraction
// count of the term it acts on by exactly one. Pairs that admit neither an
// erasure nor a conversion stop the reduction with an error rather than
// being dropped.
DivCertificate eliminate_internal_contractions(const Contraction& c,
                                               const GradePolicy& policy = {});

// Reduce a complete two-Weyl contraction from one of the five recognized
// input families (see the instance builders below) to a rational multiple
// of the canonical divergence quadratic in dimension n = 4 + (total
// derivative count). Returns the certificate and the remainder, which is
// that multiple of quadratic_divergence_norm(n). Inputs outside the five
// families are rejected with an error naming the failed shape tests.
std::pair<DivCertificate, LinComb> reduce_quadratic_weyl(const Contraction& c);

// Search for a divergence certificate taking a complete two-Weyl
// contraction to a multiple of the cross quadratic quadratic_cross(n),
// using single-edge integrations by parts. Returns the certificate and the
// multiple. Fails if no short route exists.
std::pair<DivCertificate, DimRatio> reduce_to_cross_quadratic(const Contraction& c);

// Transfer every derivative off the scalar factor with the given label, one
// slot at a time, discarding the pure-divergence piece of each transfer.
// The result is equal to the input modulo divergences; per-term weight and
// factor count are preserved. Every term must contain exactly one scalar
// factor with that label.
LinComb silly_integrate_by_parts(const LinComb& lc, int label);

// Terms whose canonical form satisfies the predicate, with collected
// coefficients.
LinComb select_sublinear(const LinComb& lc, const std::function<bool(const Contraction&)>& pred);

// --- reference shapes ----------------------------------------------------------

// |grad^(n/2-2) W|^2: all derivatives and all intrinsic slots contracted
// pairwise across the two factors.
Contraction quadratic_gradient_norm(long n);

// The cross quadratic: one derivative of each factor contracted with the
// first intrinsic slot of the other, remaining derivatives and intrinsic
// slots matched across.
Contraction quadratic_cross(long n);

// The canonical divergence quadratic: each factor carries its own internal
// divergence (innermost derivative against the first intrinsic slot),
// everything else matched across.
Contraction quadratic_divergence_norm(long n);

// The doubly linked cross quadratic: two derivatives of each factor
// contracted with the first and last intrinsic slots of the other.
Contraction quadratic_double_cross(long n);

// The five recognized inputs of reduce_quadratic_weyl. Exponent arguments
// range over the values that keep the total weight equal to -n.
Contraction bare_factor_instance(long n);                // W (x) Lap^(n/2-3) double divergence
Contraction double_divergence_instance(long n, int x);   // two double divergences, x in [0, n/2-4]
Contraction divergence_pair_instance(long n, int x);     // two single divergences, x in [0, n/2-3]
Contraction linked_divergence_instance(long n, int x);   // divergences plus one shared derivative pair
Contraction adjacent_divergence_instance(long n, int x); // divergences hitting the other factor's slot

}  // namespace tc
