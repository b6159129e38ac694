#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "canon.hpp"
#include "expr.hpp"

namespace tc {

// Directed single-factor rewrites. Each call replaces the whole contraction
// by an equivalent LinComb. Every rule preserves the conformal weight
// (asserted per application); rules that emit longer correction terms say
// so below and honor the GradePolicy: corrections with more than
// policy.sigma_max factors, or any correction when policy.track is false,
// are dropped and counted as truncation events.

// Weyl tensor in terms of Riemann, Schouten and the metric:
// W_ijkl = R_ijkl - P_ik g_jl - P_jl g_ik + P_il g_jk + P_jk g_il.
// A derivative block transfers unchanged (the metric is covariantly
// constant). Exact.
LinComb weyl_decompose(const Contraction& c, int at);

// P_ab = (Ric_ab - R g_ab / (2(n-1))) / (n-2) and its inverse. Exact.
LinComb schouten_to_ricci(const Contraction& c, int at);
LinComb ricci_to_schouten(const Contraction& c, int at);

// Trace switch on a Schouten factor carrying at least one derivative:
// nabla_c P^a_a <-> nabla_a P^a_c, an involution between the internal
// contraction sitting on the intrinsic pair and sitting on the innermost
// derivative. Exact.
LinComb contracted_bianchi(const Contraction& c, int at);

// Directed antisymmetrization of the innermost derivative of a Schouten
// factor against its first intrinsic slot:
// nabla_{...c} P_ab -> nabla_{...a} P_cb + (1/(3-n)) nabla_{...s} W_cab^s.
// slots must name the innermost derivative slot and the first intrinsic
// slot of the factor. Exact.
LinComb cotton_identity(const Contraction& c, int at, std::pair<int, int> slots);
// Convenience overload targeting the required slot pair (m-1, m).
LinComb cotton_identity(const Contraction& c, int at);

// Transposition of the two derivative slots named by slotPair on one
// factor. The derivative block is symmetric in the representation, so the
// leading term is just the reordered input; the +1-length curvature
// corrections of the true nested reordering are emitted subject to policy
// (each correction: two derivative slots consumed, one Riemann factor
// added, outer derivatives Leibniz-distributed). With all corrections kept
// the output equals the input exactly.
LinComb commute_derivatives(const Contraction& c, int at, std::pair<int, int> slotPair,
                            const GradePolicy& policy);

// Substitute second Bianchi identity on a derived Weyl factor: the target
// is replaced by the two cyclic complements in (innermost derivative,
// first intrinsic, second intrinsic) plus metric-times-divergence-of-Weyl
// corrections. The correction template is derived once from weyl_decompose,
// the true second Bianchi identity and cotton_identity. Exact, and the
// corrections have the same length as the input.
LinComb fake_second_bianchi(const Contraction& c, int at);

// Divergence rules, applicable when a derivative slot of the factor is
// contracted against one of its intrinsic slots:
//   nabla^a R_abcd -> nabla_c Ric_bd - nabla_d Ric_bc
//   nabla^a Ric_ab -> (1/2) nabla_b R
// The derivative is first moved innermost inside its symmetric block, so
// these hold modulo one extra length; the reordering corrections are always
// discarded (tracking them is not supported and policy.track must be
// false).
LinComb riemann_divergence(const Contraction& c, int at, const GradePolicy& policy);
LinComb ricci_divergence(const Contraction& c, int at, const GradePolicy& policy);
// Trace folds: Ric^a_a -> R and the intrinsic traces of a Riemann factor
// into Ricci. Exact.
LinComb ricci_trace(const Contraction& c, int at);
LinComb riemann_trace(const Contraction& c, int at);

// --- relations (identically zero LinCombs) ---------------------------------

// First Bianchi cyclic sum on the last three intrinsic slots of a Riemann
// or Weyl factor. Exact.
LinComb first_bianchi_relation(const Contraction& c, int f);

// Cyclic derivative sum on a Riemann factor (true second Bianchi). Exact.
LinComb second_bianchi_relation(const Contraction& c, int f);

// Cyclic derivative sum on a Weyl factor minus its metric corrections.
// Exact.
LinComb fake_second_bianchi_relation(const Contraction& c, int f);

// --- derived templates -------------------------------------------------------

// Once-contracted divergence decomposition
//   nabla^i nabla^l W_iakb = riemann * nabla^i nabla^l R_iakb
//                          + hessian * nabla^2_ab R + metric * (Delta R) g_ab
// modulo terms of length two. Derived at first use by reduction against the
// Ricci-form basis; the leading coefficient is cross-checked to be
// (n-3)/(n-2) and the whole template is frozen by a regression test.
struct DivergenceWeylTemplate {
  DimRatio riemann;
  DimRatio hessian;
  DimRatio metric;
};
const DivergenceWeylTemplate& divergence_weyl_template();

// Apply the template to a Weyl factor whose two innermost derivative slots
// are contracted against its first and third intrinsic slots; outer
// derivatives ride along. Modulo length two (policy.track must be false).
LinComb decompose_divergence_weyl(const Contraction& c, int at, const GradePolicy& policy);

// The derived corrections of the substitute second Bianchi identity: the
// cyclic derivative sum on nabla_a W_bcde equals exactly this combination
// of metric-times-divergence-of-Weyl terms. Free labels 0..4 stand for the
// derivative slot and the four intrinsic slots in order.
const LinComb& fake_second_bianchi_corrections();

// --- rule registry -----------------------------------------------------------

// Declarative handle on the named rules for driver code. length_delta is
// the extra length of correction terms (0 when the rule is exact at the
// input length).
struct RewriteRule {
  std::string name;
  std::function<bool(const Contraction&, int)> applicable;
  std::function<LinComb(const Contraction&, int, const GradePolicy&)> apply;
  int length_delta = 0;
};
const std::vector<RewriteRule>& rewrite_rules();

// Truncation events (corrections dropped by policy) since the last reset,
// kept per thread.
long truncation_count();
void reset_truncation_count();

// --- normalization -----------------------------------------------------------

enum class Ruleset {
  // Rewrite every Weyl into Riemann/Schouten and every Schouten into Ricci,
  // fold curvature traces, eliminate metrics, collect. Terminating by
  // construction.
  Downhill,
  // Reduce modulo the linear span of first-Bianchi and substitute
  // second-Bianchi relation instances over the reachable shape space
  // (exact linear algebra over rational functions of n).
  Bianchi,
};

LinComb normalize(const LinComb& lc, Ruleset rules, const GradePolicy& policy = {});

// Normalize several combinations against one shared relation span, seeded
// from the shapes of all of them together. The results are coordinates in a
// single quotient basis, so they can be compared or solved against each
// other; separately normalized combinations cannot (each call elects its own
// pivots). Coefficient ratios between the outputs are exact in n.
std::vector<LinComb> normalize_jointly(const std::vector<LinComb>& ls, Ruleset rules,
                                       const GradePolicy& policy = {});

// Human-readable manifest of the derived templates in the expression
// grammar (regression-tested against the checked-in copy).
std::string ruleset_manifest();

}  // namespace tc
