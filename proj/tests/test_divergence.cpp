#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "canon.hpp"
#include "divergence.hpp"
#include "error.hpp"
#include "json.hpp"
#include "numeval.hpp"
#include "rewrite.hpp"
#include "test_support.hpp"
#include "textio.hpp"

using namespace tc;
using namespace tc::testsupport;

namespace {

// The full Laplacian tower on one scalar-curvature factor: every derivative
// slot paired off with its neighbour.
Contraction laplacian_scalar_power(long n) {
  ContractionBuilder b;
  b.add(Kind::ScalarCurv, static_cast<int>(n) - 2);
  for (int s = 0; s + 1 < static_cast<int>(n) - 2; s += 2) b.pair(0, s, 0, s + 1);
  return b.build();
}

// The same tower one derivative short, with the gradient slot left free.
Contraction gradient_laplacian_scalar(long n) {
  ContractionBuilder b;
  b.add(Kind::ScalarCurv, static_cast<int>(n) - 3);
  b.free(0, 0, 0);
  for (int s = 1; s + 1 < static_cast<int>(n) - 3; s += 2) b.pair(0, s, 0, s + 1);
  return b.build();
}

// Two divergence-contracted Weyl factors (each derivative pair against the
// factor's own first and last intrinsic slots), a distinguished scalar
// carrying `laps` Laplacians, and one companion scalar under a Laplacian.
Contraction weyl_pair_with_scalars(int laps) {
  ContractionBuilder b;
  b.add(Kind::Weyl, 2);
  b.add(Kind::Weyl, 2);
  b.add(Kind::ScalarFn, 2 * laps, 1);
  b.add(Kind::ScalarFn, 2, 2);
  for (int f = 0; f < 2; ++f) {
    b.pair(f, 0, f, 2);
    b.pair(f, 1, f, 5);
  }
  b.pair(0, 3, 1, 3);
  b.pair(0, 4, 1, 4);
  for (int s = 0; s + 1 < 2 * laps; s += 2) b.pair(2, s, 2, s + 1);
  b.pair(3, 0, 3, 1);
  return b.build();
}

// The fully transferred companion of weyl_pair_with_scalars: the
// distinguished scalar underived, `xdd` derivative pairs linking the two
// Weyl factors, and each factor's remaining two derivatives against its own
// first and last intrinsic slots.
Contraction linked_weyl_target(int xdd) {
  int m = 2 + xdd;
  ContractionBuilder b;
  b.add(Kind::Weyl, m);
  b.add(Kind::Weyl, m);
  b.add(Kind::ScalarFn, 0, 1);
  b.add(Kind::ScalarFn, 2, 2);
  for (int p = 0; p < xdd; ++p) b.pair(0, p, 1, p);
  for (int f = 0; f < 2; ++f) {
    b.pair(f, xdd, f, m);
    b.pair(f, xdd + 1, f, m + 3);
  }
  b.pair(0, m + 1, 1, m + 1);
  b.pair(0, m + 2, 1, m + 2);
  return b.build();
}

// The same linkage with each factor's derivative pair against its first and
// third intrinsic slots — the pattern decompose_divergence_weyl accepts.
// Related to linked_weyl_target by one antisymmetry flip per factor, so the
// two presentations agree including sign.
Contraction linked_weyl_compat(int xdd) {
  int m = 2 + xdd;
  ContractionBuilder b;
  b.add(Kind::Weyl, m);
  b.add(Kind::Weyl, m);
  b.add(Kind::ScalarFn, 0, 1);
  b.add(Kind::ScalarFn, 2, 2);
  for (int p = 0; p < xdd; ++p) b.pair(0, p, 1, p);
  for (int f = 0; f < 2; ++f) {
    b.pair(f, xdd, f, m);
    b.pair(f, xdd + 1, f, m + 2);
  }
  b.pair(0, m + 1, 1, m + 1);
  b.pair(0, m + 3, 1, m + 3);
  return b.build();
}

// Collected coefficient of shape's canonical class inside lc, relative to
// the presentation 1 * shape. Zero when the class is absent.
DimRatio class_coefficient(const LinComb& lc, const Contraction& shape) {
  LinComb unit = collect(LinComb::single(DimRatio(1), shape));
  REQUIRE(unit.terms.size() == 1);
  std::vector<uint32_t> key = canonical_key(unit.terms[0].contr);
  for (const Term& t : collect(lc).terms)
    if (canonical_key(t.contr) == key) return t.coef / unit.terms[0].coef;
  return DimRatio(0);
}

// input - divergences - remainder - corrections vanishes at the level of
// canonical forms, or in the Bianchi quotient when the reduction stitched
// two presentations of the same class together.
bool identity_holds(const DivCertificate& cert) {
  LinComb res = collect(cert.residual() + cert.corrections);
  if (res.terms.empty()) return true;
  return normalize(res, Ruleset::Bianchi).terms.empty();
}

DimRatio stated_multiple(int family, long n) {
  long s = (n / 2) % 2 == 0 ? 1 : -1;
  switch (family) {
    case 0: return DimRatio(s);                                   // bare factor
    case 1: return DimRatio(s) * DimRatio(make_rational(1, 2));   // double divergence
    case 2: return DimRatio(-s);                                  // divergence pair
    case 3: return DimRatio(s);                                   // linked divergence
    default: return DimRatio(0);                                  // adjacent divergence
  }
}

}  // namespace

TEST_CASE("laplacian towers of the scalar curvature are single divergences") {
  for (long n : {6L, 8L, 10L}) {
    Contraction target = laplacian_scalar_power(n);
    LinComb div = free_index_divergence(gradient_laplacian_scalar(n));
    REQUIRE(div.terms.size() == 1);
    CHECK(collect(LinComb::single(DimRatio(1), target) - div).terms.empty());
  }
}

TEST_CASE("the formal divergence adds one derivative per non-metric factor") {
  ContractionBuilder b;
  b.add(Kind::Ricci, 0);
  b.add(Kind::ScalarFn, 1, 1);
  b.pair(0, 0, 1, 0);
  b.free(0, 1, 0);
  Contraction v = b.build();
  int wv = stats(v).weight;
  LinComb d = free_index_divergence(v);
  CHECK(d.terms.size() == 2);
  for (const Term& t : d.terms) {
    CHECK(t.contr.is_complete());
    CHECK(stats(t.contr).sigma == 2);
    CHECK(stats(t.contr).weight == wv - 1);
  }

  ContractionBuilder mb;
  mb.add(Kind::Schouten, 1);
  mb.add(Kind::Metric, 0);
  mb.pair(0, 1, 1, 0);
  mb.pair(0, 2, 1, 1);
  mb.free(0, 0, 0);
  LinComb dm = free_index_divergence(mb.build());
  CHECK(dm.terms.size() == 1);  // the metric factor contributes nothing

  // A complete contraction has no slot to close the new derivative against.
  CHECK_THROWS_AS(free_index_divergence(quadratic_gradient_norm(8)), Error);
  ContractionBuilder two;
  two.add(Kind::Ricci, 0);
  two.free(0, 0, 0);
  two.free(0, 1, 1);
  CHECK_THROWS_AS(free_index_divergence(two.build()), Error);
}

TEST_CASE("erasing one contracted derivative frees its partner") {
  Contraction q = quadratic_divergence_norm(8);

  DivStep st = erase_and_free(q, {SlotRef{0, 1}, SlotRef{0, 2}});
  CHECK(st.erased.f == 0);
  CHECK(st.erased.s == 1);
  CHECK(st.freed.f == 0);
  CHECK(st.freed.s == 2);
  CHECK(st.vector_field.free_labels() == std::vector<int>{0});
  CHECK(stats(st.vector_field).delta == stats(q).delta - 1);
  CHECK((st.coefficient - DimRatio(1)).is_zero());

  // The derivative endpoint is found on either side of the edge.
  DivStep rev = erase_and_free(q, {SlotRef{0, 2}, SlotRef{0, 1}});
  CHECK(rev.erased.s == 1);
  CHECK(rev.freed.s == 2);

  // Cross-factor derivative pairs erase too; the partner's slot goes free.
  DivStep cross = erase_and_free(q, {SlotRef{0, 0}, SlotRef{1, 0}});
  CHECK(cross.erased.f == 0);
  CHECK(cross.freed.f == 1);
  CHECK(cross.vector_field.free_labels() == std::vector<int>{0});

  // Intrinsic-intrinsic edges need a trace identity, not an erasure.
  ContractionBuilder tr;
  tr.add(Kind::Ricci, 0);
  tr.pair(0, 0, 0, 1);
  CHECK_THROWS_AS(erase_and_free(tr.build(), {SlotRef{0, 0}, SlotRef{0, 1}}), Error);

  // Slots that are not contracted together are rejected.
  CHECK_THROWS_AS(erase_and_free(q, {SlotRef{0, 0}, SlotRef{0, 3}}), Error);
}

TEST_CASE("internal contractions are removed deepest factor first") {
  {
    // Nothing internal: the certificate is empty and the remainder is the
    // input itself.
    Contraction c = quadratic_gradient_norm(8);
    DivCertificate cert = eliminate_internal_contractions(c);
    CHECK(cert.steps.empty());
    CHECK(collect(cert.remainder - LinComb::single(DimRatio(1), c)).terms.empty());
    CHECK(collect(cert.residual()).terms.empty());
  }
  {
    // A single scalar tower collapses to a pure divergence in one step.
    ContractionBuilder b;
    b.add(Kind::ScalarFn, 4, 1);
    b.pair(0, 0, 0, 1);
    b.pair(0, 2, 0, 3);
    DivCertificate cert = eliminate_internal_contractions(b.build());
    CHECK(cert.steps.size() == 1);
    CHECK(cert.remainder.terms.empty());
    CHECK(collect(cert.residual()).terms.empty());
  }
  {
    // Tie break: the factor with more derivative slots is drained first.
    ContractionBuilder b;
    b.add(Kind::ScalarFn, 2, 1);
    b.add(Kind::ScalarFn, 4, 2);
    b.pair(0, 0, 0, 1);
    b.pair(1, 0, 1, 1);
    b.pair(1, 2, 1, 3);
    DivCertificate cert = eliminate_internal_contractions(b.build());
    REQUIRE(!cert.steps.empty());
    CHECK(cert.steps[0].erased.f == 1);
  }
  {
    // A Laplacian on one factor of a two-factor product: the remainder has
    // no internal pairs and each step lowers the count by exactly one.
    ContractionBuilder b;
    b.add(Kind::Schouten, 2);
    b.add(Kind::Schouten, 0);
    b.pair(0, 0, 0, 1);
    b.pair(0, 2, 1, 0);
    b.pair(0, 3, 1, 1);
    DivCertificate cert = eliminate_internal_contractions(b.build());
    CHECK(!cert.steps.empty());
    for (const Term& t : cert.remainder.terms) CHECK(stats(t.contr).delta == 0);
    for (const DivStep& s : cert.steps)
      CHECK(stats(s.vector_field).delta == stats(s.source).delta - 1);
    CHECK(collect(cert.residual()).terms.empty());
  }
}

TEST_CASE("random complete contractions eliminate with exact certificates") {
  std::mt19937_64 rng(2026);
  JetSpec spec;
  spec.n = 8;
  spec.tmax = 2;
  spec.seed = 3;
  MetricJet jet(spec);

  int done = 0, stuck = 0, nonzero_samples = 0;
  while (done < 100) {
    Contraction c = random_contraction(rng, 4, 3, 0);
    DivCertificate cert;
    try {
      cert = eliminate_internal_contractions(c);
    } catch (const Error& e) {
      // Pairs admitting neither an erasure nor a conversion are reported,
      // not dropped; draw a fresh sample.
      CHECK(e.status() == Status::StuckError);
      ++stuck;
      REQUIRE(stuck < 400);
      continue;
    }
    ++done;
    for (const DivStep& s : cert.steps)
      CHECK(stats(s.vector_field).delta == stats(s.source).delta - 1);
    for (const Term& t : cert.remainder.terms) CHECK(stats(t.contr).delta == 0);

    LinComb res = cert.residual();
    LinComb flat = collect(res);
    if (!flat.terms.empty()) flat = normalize(flat, Ruleset::Downhill);
    CHECK_MESSAGE(flat.terms.empty(), print_contraction(c));

    int g = curvature_grade(c);
    if (g <= spec.tmax) {
      CHECK(graded_coefficient(res, jet, g) == Rational(0));
      if (graded_coefficient(LinComb::single(DimRatio(1), c), jet, g) != Rational(0))
        ++nonzero_samples;
    }
  }
  CHECK(nonzero_samples > 0);
}

TEST_CASE("tracked certificates are exact at every computed order") {
  // The distinguished scalar carries three derivative slots; the outermost
  // one is contracted across, so erasing the internal pair commutes past it
  // and sheds a curvature correction one factor longer than the input.
  ContractionBuilder b;
  b.add(Kind::ScalarFn, 3, 1);
  b.add(Kind::ScalarFn, 1, 2);
  b.pair(0, 0, 1, 0);
  b.pair(0, 1, 0, 2);
  Contraction c = b.build();

  GradePolicy tracked;
  tracked.track = true;
  DivCertificate cert = eliminate_internal_contractions(c, tracked);
  REQUIRE(!cert.corrections.terms.empty());
  for (const Term& t : cert.corrections.terms) CHECK(t.contr.num_factors() == 3);
  CHECK(collect(cert.residual() + cert.corrections).terms.empty());

  JetSpec spec;
  spec.n = 6;
  spec.tmax = 2;
  spec.seed = 11;
  MetricJet jet(spec);
  LinComb res = cert.residual();
  CHECK(graded_coefficient(res, jet, 0) == Rational(0));
  CHECK(graded_coefficient(res, jet, 1) == Rational(0));
  CHECK(graded_coefficient(res, jet, 2) == Rational(0));

  // Untracked, the same reduction drops those corrections: it stays exact
  // at the input's own grade and first deviates at the corrections' grade.
  DivCertificate flat = eliminate_internal_contractions(c);
  CHECK(flat.corrections.terms.empty());
  LinComb fres = flat.residual();
  CHECK(graded_coefficient(fres, jet, 0) == Rational(0));
  CHECK(graded_coefficient(fres, jet, 1) != Rational(0));
}

TEST_CASE("two-weyl reductions land on stated multiples of the divergence quadratic") {
  for (long n : {10L, 12L, 14L}) {
    int half = static_cast<int>(n / 2);
    std::vector<std::pair<int, Contraction>> inputs;
    inputs.emplace_back(0, bare_factor_instance(n));
    for (int x = 0; x <= half - 4; ++x) inputs.emplace_back(1, double_divergence_instance(n, x));
    for (int x = 0; x <= half - 3; ++x) inputs.emplace_back(2, divergence_pair_instance(n, x));
    for (int x = 0; x <= half - 4; ++x) inputs.emplace_back(3, linked_divergence_instance(n, x));
    for (int x = 0; x <= half - 4; ++x) inputs.emplace_back(4, adjacent_divergence_instance(n, x));
    for (const auto& [family, c] : inputs) {
      auto [cert, target] = reduce_quadratic_weyl(c);
      DimRatio mu = class_coefficient(target, quadratic_divergence_norm(n));
      CHECK_MESSAGE((mu - stated_multiple(family, n)).is_zero(),
                    "family ", family, " at n=", n, ": got ", mu.to_string());
      CHECK_MESSAGE(identity_holds(cert), "family ", family, " at n=", n);
    }
  }

  // Inputs outside the recognized families are rejected by name.
  try {
    reduce_quadratic_weyl(quadratic_gradient_norm(10));
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.status() == Status::ShapeError);
    CHECK(std::string(e.what()).find("bare factor") != std::string::npos);
  }
  CHECK_THROWS_AS(reduce_quadratic_weyl(laplacian_scalar_power(8)), Error);
}

TEST_CASE("the double cross quadratic reduces to half the cross quadratic") {
  for (long n : {10L, 12L}) {
    auto [cert, mu] = reduce_to_cross_quadratic(quadratic_double_cross(n));
    CHECK((mu - DimRatio(make_rational(1, 2))).is_zero());
    REQUIRE(!cert.corrections.terms.empty());
    for (const Term& t : cert.corrections.terms) CHECK(t.contr.num_factors() >= 3);
    CHECK(identity_holds(cert));
    CHECK(collect(cert.remainder - LinComb::single(mu, quadratic_cross(n))).terms.empty());
  }
}

TEST_CASE("quadratic reductions are exact through second order on jets") {
  JetSpec spec;
  spec.n = 10;
  spec.tmax = 2;
  spec.seed = 5;
  spec.hterms = 8;
  spec.hdeg = 6;
  MetricJet jet(spec);

  int nonzero = 0;
  for (const Contraction& c : {bare_factor_instance(10), double_divergence_instance(10, 0)}) {
    auto [cert, target] = reduce_quadratic_weyl(c);
    CHECK(graded_coefficient(cert.residual(), jet, 2) == Rational(0));
    if (graded_coefficient(LinComb::single(DimRatio(1), c), jet, 2) != Rational(0)) ++nonzero;
  }

  auto [cert, mu] = reduce_to_cross_quadratic(quadratic_double_cross(10));
  CHECK((mu - DimRatio(make_rational(1, 2))).is_zero());
  CHECK(graded_coefficient(cert.residual(), jet, 2) == Rational(0));
  if (graded_coefficient(LinComb::single(DimRatio(1), quadratic_double_cross(10)), jet, 2) !=
      Rational(0))
    ++nonzero;
  CHECK(nonzero > 0);
}

TEST_CASE("derivative transfers off a labeled scalar preserve shape data") {
  // Nothing to transfer: the input passes through.
  Contraction fixed = weyl_pair_with_scalars(0);
  LinComb same = silly_integrate_by_parts(LinComb::single(DimRatio(1), fixed), 1);
  CHECK((class_coefficient(same, fixed) - DimRatio(1)).is_zero());

  // Each Laplacian transferred from the distinguished scalar onto the two
  // divergence-contracted factors doubles the linked class.
  for (int laps : {0, 1, 2, 3}) {
    Contraction in = weyl_pair_with_scalars(laps);
    LinComb out = silly_integrate_by_parts(LinComb::single(DimRatio(1), in), 1);
    DimRatio got = class_coefficient(out, linked_weyl_target(laps));
    CHECK_MESSAGE((got - DimRatio(1L << laps)).is_zero(),
                  "laps=", laps, ": got ", got.to_string());
    Stats sin = stats(in);
    for (const Term& t : out.terms) {
      Stats st = stats(t.contr);
      CHECK(st.sigma == sin.sigma);
      CHECK(st.weight == sin.weight);
      // The distinguished scalar ends underived in every term.
      for (const Factor& f : t.contr.factors)
        if (f.kind == Kind::ScalarFn && f.label == 1) CHECK(f.m == 0);
    }
  }

  // Every term must contain the labeled scalar.
  CHECK_THROWS_AS(
      silly_integrate_by_parts(LinComb::single(DimRatio(1), quadratic_cross(8)), 1), Error);
}

TEST_CASE("the linked class combines with the divergence decomposition") {
  // The two divergence patterns differ by one antisymmetry flip per factor
  // and so name the same canonical class with the same sign.
  for (int xdd : {1, 2, 3}) {
    CHECK(equal_mod_symmetry(linked_weyl_target(xdd), linked_weyl_compat(xdd)));
  }

  // Applying the divergence decomposition to one factor yields exactly one
  // class carrying a Riemann factor, with the frozen leading coefficient.
  const DivergenceWeylTemplate& tpl = divergence_weyl_template();
  LinComb dec = collect(decompose_divergence_weyl(linked_weyl_compat(1), 0, GradePolicy{}));
  int riemann_classes = 0;
  DimRatio lead(0);
  for (const Term& t : dec.terms) {
    bool has_riemann = false;
    for (const Factor& f : t.contr.factors)
      if (f.kind == Kind::Riemann) has_riemann = true;
    if (has_riemann) {
      ++riemann_classes;
      lead = t.coef;
    }
  }
  CHECK(riemann_classes == 1);
  CHECK(((lead - tpl.riemann).is_zero() || (lead + tpl.riemann).is_zero()));

  // Transfer multiplicity times the decomposition's leading coefficient.
  for (int extra : {1, 2, 3}) {
    Contraction in = weyl_pair_with_scalars(extra);
    LinComb out = silly_integrate_by_parts(LinComb::single(DimRatio(1), in), 1);
    DimRatio mult = class_coefficient(out, linked_weyl_compat(extra));
    CHECK((mult - DimRatio(1L << extra)).is_zero());
    DimRatio combined = mult * tpl.riemann;
    CHECK(combined.eval_at(Rational(10)) == Rational(1L << extra) * make_rational(7, 8));
    CHECK(combined.eval_at(Rational(12)) == Rational(1L << extra) * make_rational(9, 10));
  }
}

TEST_CASE("sublinear selection filters canonical classes") {
  LinComb mix = LinComb::single(DimRatio(2), quadratic_gradient_norm(10)) +
                LinComb::single(DimRatio(3), laplacian_scalar_power(10)) +
                LinComb::single(DimRatio(5), quadratic_gradient_norm(10));
  LinComb pairs = select_sublinear(
      mix, [](const Contraction& c) { return c.num_factors() == 2; });
  REQUIRE(pairs.terms.size() == 1);
  CHECK((class_coefficient(pairs, quadratic_gradient_norm(10)) - DimRatio(7)).is_zero());
  LinComb none = select_sublinear(mix, [](const Contraction&) { return false; });
  CHECK(none.terms.empty());
}

TEST_CASE("certificates serialize with their steps and corrections") {
  GradePolicy tracked;
  tracked.track = true;
  ContractionBuilder b;
  b.add(Kind::ScalarFn, 3, 1);
  b.add(Kind::ScalarFn, 1, 2);
  b.pair(0, 0, 1, 0);
  b.pair(0, 1, 0, 2);
  DivCertificate cert = eliminate_internal_contractions(b.build(), tracked);

  nlohmann::json j = nlohmann::json::parse(cert.to_json());
  REQUIRE(j.contains("input"));
  REQUIRE(j.contains("steps"));
  REQUIRE(j.contains("remainder"));
  REQUIRE(j.contains("corrections"));
  Contraction round = parse_contraction(j["input"].get<std::string>(), std::nullopt);
  CHECK(equal_mod_symmetry(round, cert.input));
  REQUIRE(!j["steps"].empty());
  for (const auto& s : j["steps"]) {
    REQUIRE(s.contains("erased"));
    REQUIRE(s.contains("freed"));
    REQUIRE(s.contains("coefficient"));
    REQUIRE(s.contains("vectorField"));
    Contraction v = parse_contraction(s["vectorField"].get<std::string>(), std::nullopt);
    CHECK(v.free_labels() == std::vector<int>{0});
  }
  LinComb corr = parse_lincomb(j["corrections"].get<std::string>(), std::nullopt);
  CHECK(collect(corr - cert.corrections).terms.empty());
}
