#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "../src/canon.hpp"
#include "../src/expr.hpp"
#include "test_support.hpp"

using namespace tc;
using tc::testsupport::random_contraction;
using tc::testsupport::random_symmetry_move;

namespace {

// |D^m W|^2: both Weyl factors with m derivative slots, everything
// cross-contracted in aligned order.
Contraction weyl_norm_squared(int m) {
  ContractionBuilder b;
  b.add(Kind::Weyl, m).add(Kind::Weyl, m);
  for (int s = 0; s < m + 4; ++s) b.pair(0, s, 1, s);
  return b.build();
}

}  // namespace

TEST_CASE("statistics match the paper shapes") {
  // |nabla^(n/2-2) W|^2 at n = 10: two factors, no internal contractions,
  // weight -10.
  Contraction c = weyl_norm_squared(3);
  Stats st = stats(c);
  CHECK(st.sigma == 2);
  CHECK(st.delta == 0);
  CHECK(st.delta_bar == 0);
  CHECK(st.q == 0);
  CHECK(st.weight == -10);

  // A pure Laplacian of psi_1.
  ContractionBuilder b;
  b.add(Kind::ScalarFn, 2, 1);
  b.pair(0, 0, 0, 1);
  Contraction lap = b.build();
  st = stats(lap);
  CHECK(st.sigma == 1);
  CHECK(st.delta == 1);
  CHECK(st.delta_bar == 1);
  CHECK(st.q == 0);
  CHECK(st.weight == -2);

  // Scalar curvature counts two implicit traces and delta_bar.
  Contraction r = Contraction::of({Factor{Kind::ScalarCurv, 0, 0}});
  st = stats(r);
  CHECK(st.sigma == 1);
  CHECK(st.delta == 2);
  CHECK(st.delta_bar == 1);
  CHECK(st.q == 1);
  CHECK(st.weight == -2);

  // Ricci with two free slots: one implicit trace, no delta_bar.
  ContractionBuilder rb;
  rb.add(Kind::Ricci, 0).free(0, 0, 0).free(0, 1, 1);
  st = stats(rb.build());
  CHECK(st.sigma == 1);
  CHECK(st.delta == 1);
  CHECK(st.delta_bar == 0);
  CHECK(st.q == 1);
  CHECK(st.weight == -2);

  // Schouten has no implicit trace.
  ContractionBuilder pb;
  pb.add(Kind::Schouten, 0).free(0, 0, 0).free(0, 1, 1);
  st = stats(pb.build());
  CHECK(st.delta == 0);
  CHECK(st.q == 0);

  // Differentiated scalar curvature loses delta_bar.
  ContractionBuilder db;
  db.add(Kind::ScalarCurv, 2);
  db.pair(0, 0, 0, 1);
  st = stats(db.build());
  CHECK(st.delta_bar == 0);
  CHECK(st.delta == 3);
  CHECK(st.weight == -4);
}

TEST_CASE("weight is additive over factors") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    Contraction a = random_contraction(rng, 2, 2, 0);
    long w = 0;
    for (const auto& f : a.factors) {
      long base = is_curvature(f.kind) ? f.m + 2 : f.m;
      w -= base;
    }
    CHECK(stats(a).weight == w);
  }
}

TEST_CASE("canonicalization detects symmetry-forced vanishing") {
  // Weyl traced on an antisymmetric pair.
  ContractionBuilder b;
  b.add(Kind::Weyl, 0).pair(0, 0, 0, 1).free(0, 2, 0).free(0, 3, 1);
  CHECK(canonicalize(b.build()).is_zero());

  // Antisymmetrized second derivatives: D[a,b] W[b,a,i,j].
  ContractionBuilder b2;
  b2.add(Kind::Weyl, 2);
  b2.pair(0, 0, 0, 3);  // first derivative slot with second intrinsic
  b2.pair(0, 1, 0, 2);  // second derivative slot with first intrinsic
  b2.free(0, 4, 0).free(0, 5, 1);
  CHECK(canonicalize(b2.build()).is_zero());

  // The symmetric counterpart D[a,b] W[a,i,b,j] does not vanish.
  ContractionBuilder b3;
  b3.add(Kind::Weyl, 2);
  b3.pair(0, 0, 0, 2);
  b3.pair(0, 1, 0, 4);
  b3.free(0, 3, 0).free(0, 5, 1);
  CHECK_FALSE(canonicalize(b3.build()).is_zero());
}

TEST_CASE("metric elimination: traces, re-pairing, free metrics") {
  // contr(g[a,a]) == n.
  ContractionBuilder b;
  b.add(Kind::Metric, 0).pair(0, 0, 0, 1);
  Canonical cn = canonicalize(b.build());
  CHECK_FALSE(cn.is_zero());
  CHECK(cn.form.num_factors() == 0);
  CHECK(cn.scale == DimRatio::of(DimPoly::variable("n")));

  // g re-pairs its two partners: contr(g[a,b] Ric[a,c] psi-hook[b,c]) equals
  // contr(Ric[a,b] hook[a,b]).
  ContractionBuilder lhs;
  lhs.add(Kind::Metric, 0).add(Kind::Ricci, 0).add(Kind::Ricci, 0);
  lhs.pair(0, 0, 1, 0).pair(0, 1, 2, 0).pair(1, 1, 2, 1);
  ContractionBuilder rhs;
  rhs.add(Kind::Ricci, 0).add(Kind::Ricci, 0);
  rhs.pair(0, 0, 1, 0).pair(0, 1, 1, 1);
  CHECK(equal_mod_symmetry(lhs.build(), rhs.build()));

  // One free side: g_{ab} X^b = X_a keeps the free label.
  ContractionBuilder one;
  one.add(Kind::Metric, 0).add(Kind::Ricci, 0);
  one.free(0, 0, 5).pair(0, 1, 1, 0).free(1, 1, 7);
  Canonical cf = canonicalize(one.build());
  CHECK(cf.form.num_factors() == 1);
  CHECK(cf.form.free_labels() == std::vector<int>({5, 7}));

  // Two free sides survive.
  ContractionBuilder two;
  two.add(Kind::Metric, 0).add(Kind::ScalarCurv, 0);
  two.free(0, 0, 0).free(0, 1, 1);
  Canonical cg = canonicalize(two.build());
  CHECK(cg.form.num_factors() == 2);
}

TEST_CASE("canonical form is stable and order-independent") {
  ContractionBuilder a;
  a.add(Kind::Ricci, 0).add(Kind::ScalarFn, 2, 1);
  a.pair(0, 0, 1, 0).pair(0, 1, 1, 1);
  ContractionBuilder b;
  b.add(Kind::ScalarFn, 2, 1).add(Kind::Ricci, 0);
  b.pair(0, 0, 1, 0).pair(0, 1, 1, 1);
  Canonical ca = canonicalize(a.build());
  Canonical cb = canonicalize(b.build());
  CHECK(ca.key == cb.key);
  CHECK(ca.scale == cb.scale);

  // Idempotence: canonicalizing the canonical form is the identity.
  Canonical cc = canonicalize(ca.form);
  CHECK(cc.key == ca.key);
  CHECK(cc.scale == DimRatio(1));
  CHECK(cc.form == ca.form);
}

TEST_CASE("antisymmetry flips the tracked sign") {
  Contraction aligned = weyl_norm_squared(1);
  // Twist the first intrinsic pair of the second factor.
  Contraction twisted = tc::testsupport::apply_slot_bijection(
      aligned, tc::testsupport::swap_sigma(SlotRef{1, 1}, SlotRef{1, 2}));
  Canonical ca = canonicalize(aligned);
  Canonical ct = canonicalize(twisted);
  CHECK(ca.key == ct.key);
  CHECK(ca.scale == -ct.scale);

  // Their sum collects to zero; the difference doubles.
  LinComb sum = LinComb::single(DimRatio(1), aligned) + LinComb::single(DimRatio(1), twisted);
  CHECK(collect(sum).terms.empty());
  LinComb diff = LinComb::single(DimRatio(1), aligned) - LinComb::single(DimRatio(1), twisted);
  LinComb col = collect(diff);
  REQUIRE(col.terms.size() == 1);
  CHECK((col.terms[0].coef == DimRatio(2) || col.terms[0].coef == DimRatio(-2)));
}

TEST_CASE("random symmetry moves preserve the canonical form with the right sign") {
  std::mt19937_64 rng(20260813);
  int nontrivial = 0;
  for (int i = 0; i < 1000; ++i) {
    Contraction c = random_contraction(rng, 3, 3, i % 3 == 0 ? 2 : 0);
    Canonical before = canonicalize(c);
    Contraction moved = c;
    int sign = random_symmetry_move(rng, moved);
    Canonical after = canonicalize(moved);
    if (before.is_zero()) {
      CHECK(after.is_zero());
      continue;
    }
    ++nontrivial;
    REQUIRE_FALSE(after.is_zero());
    CHECK(before.key == after.key);
    CHECK(before.scale == after.scale * DimRatio(sign));
  }
  CHECK(nontrivial > 500);
}

TEST_CASE("structural surgery keeps pairings consistent") {
  Contraction c = weyl_norm_squared(2);
  Contraction d = add_outer_derivative(c, 0);
  CHECK(d.factors[0].m == 3);
  // The old pairings moved with their slots.
  CHECK(d.partner[0][1] == SlotRef{1, 0});
  CHECK(d.partner[1][0] == SlotRef{0, 1});
  CHECK(d.partner[0][0].is_free_marker());
  d.set_free(SlotRef{0, 0}, 9);
  d.validate();

  Contraction e = remove_derivative_slot(d, 0, 0);
  CHECK(equal_mod_symmetry(e, c));

  // replace_factor: turn Ric[a,b] X[a,b] into g[a,b] X[a,b]-style relink.
  ContractionBuilder rb;
  rb.add(Kind::Ricci, 0).add(Kind::Ricci, 0);
  rb.pair(0, 0, 1, 0).pair(0, 1, 1, 1);
  Contraction base = rb.build();
  // Replace factor 0 by a Schouten with the same two slots.
  Contraction rep = replace_factor(base, 0, {Factor{Kind::Schouten, 0, 0}},
                                   {{0, {0, 0}}, {1, {0, 1}}}, {});
  CHECK(rep.num_factors() == 2);
  CHECK(rep.factors[1].kind == Kind::Schouten);
  rep.validate();
  Stats st = stats(rep);
  CHECK(st.sigma == 2);
  CHECK(st.delta == 1);  // only the Ricci implicit trace remains
}

TEST_CASE("canonical zero wins over collection") {
  // A term that vanishes by symmetry never reaches the collected output.
  ContractionBuilder b2;
  b2.add(Kind::Weyl, 2);
  b2.pair(0, 0, 0, 3);
  b2.pair(0, 1, 0, 2);
  b2.free(0, 4, 0).free(0, 5, 1);
  LinComb lc = LinComb::single(DimRatio(7), b2.build());
  CHECK(collect(lc).terms.empty());
}
