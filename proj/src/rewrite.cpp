#include "rewrite.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <deque>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include "error.hpp"
#include "textio.hpp"

namespace tc {

namespace {

constexpr ReplacementSlot kDropped{-1, -1};

thread_local long g_truncations = 0;

DimRatio one() { return DimRatio(1); }

DimPoly aff(long a, long b) { return DimPoly::affine(make_rational(a), make_rational(b)); }

const Factor& factor_at(const Contraction& c, int at) {
  require(at >= 0 && at < c.num_factors(), Status::DomainError, "factor index out of range");
  return c.factors[at];
}

void check_kind(const Contraction& c, int at, Kind k) {
  require(factor_at(c, at).kind == k, Status::DomainError,
          std::string("rule expects a ") + kind_name(k) + " factor, got " +
              kind_name(c.factors[at].kind));
}

// Move slot contents along sigma: the pairing or free label carried by slot
// s is carried by sigma(s) in the result. sigma must be a bijection on the
// slots it mentions.
Contraction permute_slot_contents(const Contraction& c, const std::map<SlotRef, SlotRef>& sigma) {
  auto image = [&](SlotRef x) -> SlotRef {
    auto it = sigma.find(x);
    return it == sigma.end() ? x : it->second;
  };
  Contraction r = c;
  for (int f = 0; f < c.num_factors(); ++f) {
    for (int s = 0; s < static_cast<int>(c.partner[f].size()); ++s) {
      SlotRef here{f, s};
      SlotRef p = c.partner[f][s];
      SlotRef nh = image(here);
      r.partner[nh.f][nh.s] = p.is_free_marker() ? p : image(p);
    }
  }
  r.validate();
  return r;
}

Contraction swap_contents(const Contraction& c, SlotRef x, SlotRef y) {
  return permute_slot_contents(c, {{x, y}, {y, x}});
}

LinComb checked(const Contraction& in, LinComb out) {
  long w = stats(in).weight;
  for (const Term& t : out.terms)
    require(stats(t.contr).weight == w, Status::InternalError,
            "rewrite changed the conformal weight");
  return out;
}

LinComb drop_longer(const LinComb& lc, const GradePolicy& policy) {
  if (policy.sigma_max >= (1 << 20)) return lc;
  LinComb r;
  for (const Term& t : lc.terms) {
    if (stats(t.contr).sigma > policy.sigma_max) {
      ++g_truncations;
      continue;
    }
    r.terms.push_back(t);
  }
  return r;
}

bool has_deriv_intrinsic_pair(const Contraction& c, int f) {
  int m = c.factors[f].m;
  for (int d = 0; d < m; ++d) {
    SlotRef p = c.partner_of(f, d);
    if (!p.is_free_marker() && p.f == f && p.s >= m) return true;
  }
  return false;
}

bool has_intrinsic_trace(const Contraction& c, int f) {
  int m = c.factors[f].m;
  int k = intrinsic_slots(c.factors[f].kind);
  for (int s = m; s < m + k; ++s) {
    SlotRef p = c.partner_of(f, s);
    if (!p.is_free_marker() && p.f == f && p.s > s) return true;
  }
  return false;
}

// 0: none, 1: intrinsic pair contracted, 2: innermost derivative against
// first intrinsic, 3: innermost derivative against second intrinsic.
int contracted_bianchi_pattern(const Contraction& c, int at) {
  const Factor& F = c.factors[at];
  if (F.kind != Kind::Schouten || F.m < 1) return 0;
  int m = F.m;
  if (c.partner_of(at, m) == SlotRef{at, m + 1}) return 1;
  if (c.partner_of(at, m - 1) == SlotRef{at, m}) return 2;
  if (c.partner_of(at, m - 1) == SlotRef{at, m + 1}) return 3;
  return 0;
}

}  // namespace

long truncation_count() { return g_truncations; }
void reset_truncation_count() { g_truncations = 0; }

LinComb weyl_decompose(const Contraction& c, int at) {
  check_kind(c, at, Kind::Weyl);
  int m = c.factors[at].m;
  std::map<int, ReplacementSlot> ident;
  for (int s = 0; s < m + 4; ++s) ident[s] = ReplacementSlot{0, s};
  LinComb out =
      LinComb::single(one(), replace_factor(c, at, {Factor{Kind::Riemann, m, 0}}, ident, {}));
  // W_ijkl = R_ijkl - P_ik g_jl - P_jl g_ik + P_il g_jk + P_jk g_il
  struct PG {
    int p1, p2, g1, g2;
    long sign;
  };
  const PG table[4] = {
      {m + 0, m + 2, m + 1, m + 3, -1},
      {m + 1, m + 3, m + 0, m + 2, -1},
      {m + 0, m + 3, m + 1, m + 2, +1},
      {m + 1, m + 2, m + 0, m + 3, +1},
  };
  for (const PG& t : table) {
    std::map<int, ReplacementSlot> sm;
    for (int d = 0; d < m; ++d) sm[d] = ReplacementSlot{0, d};
    sm[t.p1] = ReplacementSlot{0, m};
    sm[t.p2] = ReplacementSlot{0, m + 1};
    sm[t.g1] = ReplacementSlot{1, 0};
    sm[t.g2] = ReplacementSlot{1, 1};
    out = out + LinComb::single(DimRatio(t.sign),
                                replace_factor(c, at,
                                               {Factor{Kind::Schouten, m, 0}, Factor{Kind::Metric, 0, 0}},
                                               sm, {}));
  }
  return checked(c, out);
}

LinComb schouten_to_ricci(const Contraction& c, int at) {
  check_kind(c, at, Kind::Schouten);
  int m = c.factors[at].m;
  std::map<int, ReplacementSlot> ident;
  for (int s = 0; s < m + 2; ++s) ident[s] = ReplacementSlot{0, s};
  std::map<int, ReplacementSlot> tog;
  for (int d = 0; d < m; ++d) tog[d] = ReplacementSlot{0, d};
  tog[m] = ReplacementSlot{1, 0};
  tog[m + 1] = ReplacementSlot{1, 1};
  DimRatio ric(DimPoly(1), aff(1, -2));
  DimRatio gterm(DimPoly(-1), aff(2, -2) * aff(1, -2));
  LinComb out =
      LinComb::single(ric, replace_factor(c, at, {Factor{Kind::Ricci, m, 0}}, ident, {})) +
      LinComb::single(gterm, replace_factor(c, at,
                                            {Factor{Kind::ScalarCurv, m, 0}, Factor{Kind::Metric, 0, 0}},
                                            tog, {}));
  return checked(c, out);
}

LinComb ricci_to_schouten(const Contraction& c, int at) {
  check_kind(c, at, Kind::Ricci);
  int m = c.factors[at].m;
  std::map<int, ReplacementSlot> ident;
  for (int s = 0; s < m + 2; ++s) ident[s] = ReplacementSlot{0, s};
  std::map<int, ReplacementSlot> tog;
  for (int d = 0; d < m; ++d) tog[d] = ReplacementSlot{0, d};
  tog[m] = ReplacementSlot{1, 0};
  tog[m + 1] = ReplacementSlot{1, 1};
  LinComb out =
      LinComb::single(DimRatio::of(aff(1, -2)),
                      replace_factor(c, at, {Factor{Kind::Schouten, m, 0}}, ident, {})) +
      LinComb::single(DimRatio(DimPoly(1), aff(2, -2)),
                      replace_factor(c, at,
                                     {Factor{Kind::ScalarCurv, m, 0}, Factor{Kind::Metric, 0, 0}},
                                     tog, {}));
  return checked(c, out);
}

LinComb contracted_bianchi(const Contraction& c, int at) {
  check_kind(c, at, Kind::Schouten);
  const Factor& F = c.factors[at];
  require(F.m >= 1, Status::DomainError, "contracted Bianchi needs a derivative slot");
  int m = F.m;
  int pat = contracted_bianchi_pattern(c, at);
  require(pat != 0, Status::DomainError, "factor carries no contracted trace pattern");
  SlotRef dm{at, m - 1}, i0{at, m}, i1{at, m + 1};
  Contraction r = c;
  if (pat == 1) {
    SlotRef x = c.partner_of(at, m - 1);
    if (x.is_free_marker())
      r.set_free(i1, x.s);
    else
      r.pair_slots(i1, x);
    r.pair_slots(dm, i0);
  } else if (pat == 2) {
    SlotRef y = c.partner_of(at, m + 1);
    if (y.is_free_marker())
      r.set_free(dm, y.s);
    else
      r.pair_slots(dm, y);
    r.pair_slots(i0, i1);
  } else {
    SlotRef z = c.partner_of(at, m);
    if (z.is_free_marker())
      r.set_free(dm, z.s);
    else
      r.pair_slots(dm, z);
    r.pair_slots(i0, i1);
  }
  r.validate();
  return checked(c, LinComb::single(one(), r));
}

LinComb cotton_identity(const Contraction& c, int at, std::pair<int, int> slots) {
  check_kind(c, at, Kind::Schouten);
  const Factor& F = c.factors[at];
  require(F.m >= 1, Status::DomainError, "cotton identity needs a derivative slot");
  int m = F.m;
  require(slots.first == m - 1 && slots.second == m, Status::DomainError,
          "cotton identity targets the innermost derivative and the first intrinsic slot");
  Contraction t1 = swap_contents(c, SlotRef{at, m - 1}, SlotRef{at, m});
  std::map<int, ReplacementSlot> sm;
  for (int d = 0; d + 1 < m; ++d) sm[d] = ReplacementSlot{0, d};
  sm[m - 1] = ReplacementSlot{0, m};
  sm[m] = ReplacementSlot{0, m + 1};
  sm[m + 1] = ReplacementSlot{0, m + 2};
  Contraction t2 = replace_factor(c, at, {Factor{Kind::Weyl, m, 0}}, sm,
                                  {{ReplacementSlot{0, m - 1}, ReplacementSlot{0, m + 3}}});
  DimRatio w(DimPoly(1), aff(-1, 3));
  return checked(c, LinComb::single(one(), t1) + LinComb::single(w, t2));
}

LinComb cotton_identity(const Contraction& c, int at) {
  const Factor& F = factor_at(c, at);
  return cotton_identity(c, at, {F.m - 1, F.m});
}

namespace {

// Corrections for transposing adjacent block positions pos, pos+1 of factor
// at, evaluated on c and appended to corr. Returns the transposed
// contraction.
Contraction commute_adjacent(const Contraction& c, int at, int pos, const GradePolicy& policy,
                             LinComb& corr) {
  const Factor& F = c.factors[at];
  int S = F.slots();
  if (!policy.track) {
    g_truncations += static_cast<long>(S - pos - 2) << pos;
  } else {
    for (int j = pos + 2; j < S; ++j) {
      for (uint32_t mask = 0; mask < (1u << pos); ++mask) {
        int k = std::popcount(mask);
        Factor fp{F.kind, F.m - 2 - k, F.label};
        Factor rf{Kind::Riemann, k, 0};
        std::map<int, ReplacementSlot> sm;
        std::vector<std::pair<ReplacementSlot, ReplacementSlot>> ip;
        int run = 0, rrun = 0;
        for (int t = 0; t < S; ++t) {
          if (t == pos) {
            sm[t] = ReplacementSlot{1, k + 2};
          } else if (t == pos + 1) {
            sm[t] = ReplacementSlot{1, k + 3};
          } else if (t < pos && (mask & (1u << t))) {
            sm[t] = ReplacementSlot{1, rrun++};
          } else if (t == j) {
            sm[t] = ReplacementSlot{1, k + 1};
            ip.push_back({ReplacementSlot{0, run}, ReplacementSlot{1, k}});
            ++run;
          } else {
            sm[t] = ReplacementSlot{0, run++};
          }
        }
        Contraction term = replace_factor(c, at, {fp, rf}, sm, ip);
        if (stats(term).sigma > policy.sigma_max) {
          ++g_truncations;
          continue;
        }
        corr.terms.push_back(Term{DimRatio(-1), term});
      }
    }
  }
  return swap_contents(c, SlotRef{at, pos}, SlotRef{at, pos + 1});
}

}  // namespace

LinComb commute_derivatives(const Contraction& c, int at, std::pair<int, int> slotPair,
                            const GradePolicy& policy) {
  const Factor& F = factor_at(c, at);
  int p = std::min(slotPair.first, slotPair.second);
  int q = std::max(slotPair.first, slotPair.second);
  require(p >= 0 && q < F.m && p != q, Status::DomainError,
          "commute_derivatives needs two derivative slots of one factor");
  LinComb corr;
  Contraction cur = c;
  for (int i = p; i < q; ++i) cur = commute_adjacent(cur, at, i, policy, corr);
  for (int i = q - 2; i >= p; --i) cur = commute_adjacent(cur, at, i, policy, corr);
  return checked(c, LinComb::single(one(), cur) + corr);
}

LinComb riemann_divergence(const Contraction& c, int at, const GradePolicy& policy) {
  check_kind(c, at, Kind::Riemann);
  require(!policy.track, Status::DomainError,
          "divergence rules do not track reordering corrections");
  int m = c.factors[at].m;
  int p = -1, q = -1;
  for (int d = m - 1; d >= 0 && p < 0; --d) {
    SlotRef pr = c.partner_of(at, d);
    if (!pr.is_free_marker() && pr.f == at && pr.s >= m) {
      p = d;
      q = pr.s;
    }
  }
  require(p >= 0, Status::DomainError, "no derivative contracted against an intrinsic slot");
  if (p != m - 1) ++g_truncations;
  struct Roles {
    int b, cc, d;
    long sign;
  };
  Roles r{};
  switch (q - m) {
    case 0: r = {m + 1, m + 2, m + 3, +1}; break;
    case 1: r = {m + 0, m + 2, m + 3, -1}; break;
    case 2: r = {m + 3, m + 0, m + 1, +1}; break;
    default: r = {m + 2, m + 0, m + 1, -1}; break;
  }
  auto mk = [&](int lead, int i0, int i1) {
    std::map<int, ReplacementSlot> sm;
    int run = 0;
    for (int d = 0; d < m; ++d) sm[d] = (d == p) ? kDropped : ReplacementSlot{0, run++};
    sm[q] = kDropped;
    sm[lead] = ReplacementSlot{0, m - 1};
    sm[i0] = ReplacementSlot{0, m};
    sm[i1] = ReplacementSlot{0, m + 1};
    return replace_factor(c, at, {Factor{Kind::Ricci, m, 0}}, sm, {});
  };
  LinComb out = LinComb::single(DimRatio(r.sign), mk(r.cc, r.b, r.d)) +
                LinComb::single(DimRatio(-r.sign), mk(r.d, r.b, r.cc));
  return checked(c, out);
}

LinComb ricci_divergence(const Contraction& c, int at, const GradePolicy& policy) {
  check_kind(c, at, Kind::Ricci);
  require(!policy.track, Status::DomainError,
          "divergence rules do not track reordering corrections");
  int m = c.factors[at].m;
  int p = -1, q = -1;
  for (int d = m - 1; d >= 0 && p < 0; --d) {
    SlotRef pr = c.partner_of(at, d);
    if (!pr.is_free_marker() && pr.f == at && pr.s >= m) {
      p = d;
      q = pr.s;
    }
  }
  require(p >= 0, Status::DomainError, "no derivative contracted against an intrinsic slot");
  if (p != m - 1) ++g_truncations;
  int b = (q == m) ? m + 1 : m;
  std::map<int, ReplacementSlot> sm;
  int run = 0;
  for (int d = 0; d < m; ++d) sm[d] = (d == p) ? kDropped : ReplacementSlot{0, run++};
  sm[q] = kDropped;
  sm[b] = ReplacementSlot{0, m - 1};
  LinComb out = LinComb::single(
      DimRatio(make_rational(1, 2)),
      replace_factor(c, at, {Factor{Kind::ScalarCurv, m, 0}}, sm, {}));
  return checked(c, out);
}

LinComb ricci_trace(const Contraction& c, int at) {
  check_kind(c, at, Kind::Ricci);
  int m = c.factors[at].m;
  require(c.partner_of(at, m) == (SlotRef{at, m + 1}), Status::DomainError,
          "Ricci factor has no intrinsic trace");
  std::map<int, ReplacementSlot> sm;
  for (int d = 0; d < m; ++d) sm[d] = ReplacementSlot{0, d};
  sm[m] = kDropped;
  sm[m + 1] = kDropped;
  return checked(c, LinComb::single(one(), replace_factor(c, at, {Factor{Kind::ScalarCurv, m, 0}},
                                                          sm, {})));
}

LinComb riemann_trace(const Contraction& c, int at) {
  check_kind(c, at, Kind::Riemann);
  int m = c.factors[at].m;
  int q1 = -1, q2 = -1;
  for (int s = m; s < m + 4 && q1 < 0; ++s) {
    SlotRef p = c.partner_of(at, s);
    if (!p.is_free_marker() && p.f == at && p.s > s && p.s >= m) {
      q1 = s;
      q2 = p.s;
    }
  }
  require(q1 >= 0, Status::DomainError, "Riemann factor has no intrinsic trace");
  int a = q1 - m, b = q2 - m;
  if ((a == 0 && b == 1) || (a == 2 && b == 3)) return LinComb::zero();  // antisymmetric pair
  long sign = (b - a == 2) ? +1 : -1;
  std::map<int, ReplacementSlot> sm;
  for (int d = 0; d < m; ++d) sm[d] = ReplacementSlot{0, d};
  int run = m;
  for (int s = m; s < m + 4; ++s)
    sm[s] = (s == q1 || s == q2) ? kDropped : ReplacementSlot{0, run++};
  return checked(c, LinComb::single(DimRatio(sign),
                                    replace_factor(c, at, {Factor{Kind::Ricci, m, 0}}, sm, {})));
}

// --- relations ---------------------------------------------------------------

LinComb first_bianchi_relation(const Contraction& c, int f) {
  Kind k = factor_at(c, f).kind;
  require(k == Kind::Riemann || k == Kind::Weyl, Status::DomainError,
          "first Bianchi applies to Riemann or Weyl factors");
  int m = c.factors[f].m;
  std::map<SlotRef, SlotRef> rho{{SlotRef{f, m + 2}, SlotRef{f, m + 1}},
                                 {SlotRef{f, m + 3}, SlotRef{f, m + 2}},
                                 {SlotRef{f, m + 1}, SlotRef{f, m + 3}}};
  Contraction t2 = permute_slot_contents(c, rho);
  Contraction t3 = permute_slot_contents(t2, rho);
  return LinComb::single(one(), c) + LinComb::single(one(), t2) + LinComb::single(one(), t3);
}

namespace {

// The two cyclic complements in (innermost derivative, first intrinsic,
// second intrinsic), shared by the true and the substitute second Bianchi.
std::pair<Contraction, Contraction> derivative_cycle(const Contraction& c, int f) {
  int m = c.factors[f].m;
  std::map<SlotRef, SlotRef> rho{{SlotRef{f, m}, SlotRef{f, m - 1}},
                                 {SlotRef{f, m + 1}, SlotRef{f, m}},
                                 {SlotRef{f, m - 1}, SlotRef{f, m + 1}}};
  Contraction t2 = permute_slot_contents(c, rho);
  Contraction t3 = permute_slot_contents(t2, rho);
  return {t2, t3};
}

}  // namespace

LinComb second_bianchi_relation(const Contraction& c, int f) {
  check_kind(c, f, Kind::Riemann);
  require(c.factors[f].m >= 1, Status::DomainError, "second Bianchi needs a derivative slot");
  auto [t2, t3] = derivative_cycle(c, f);
  return LinComb::single(one(), c) + LinComb::single(one(), t2) + LinComb::single(one(), t3);
}

// --- substitute second Bianchi ------------------------------------------------

namespace {

Contraction abstract_nabla(Kind k, const std::array<int, 5>& labels) {
  ContractionBuilder b;
  b.add(k, 1);
  for (int s = 0; s < 5; ++s) b.free(0, s, labels[s]);
  return b.build();
}

LinComb derive_fake_corrections() {
  const std::array<std::array<int, 5>, 3> pats{
      {{0, 1, 2, 3, 4}, {1, 2, 0, 3, 4}, {2, 0, 1, 3, 4}}};
  LinComb dec, rel2b;
  for (const auto& pat : pats) {
    dec = dec + weyl_decompose(abstract_nabla(Kind::Weyl, pat), 0);
    rel2b = rel2b + LinComb::single(one(), abstract_nabla(Kind::Riemann, pat));
  }
  LinComb rest = collect(dec - rel2b);
  // Orient every derived Schouten factor by cotton_identity until the free
  // label on the derivative slot is the smaller one; the oriented Schouten
  // terms cancel and only metric-times-divergence-of-Weyl terms survive.
  bool stable = false;
  for (int round = 0; round < 32 && !stable; ++round) {
    bool changed = false;
    LinComb next;
    for (const Term& t : rest.terms) {
      const Contraction& tc = t.contr;
      int at = -1;
      for (int g = 0; g < tc.num_factors(); ++g)
        if (tc.factors[g].kind == Kind::Schouten) {
          at = g;
          break;
        }
      bool fired = false;
      if (at >= 0) {
        require(tc.factors[at].m == 1, Status::InternalError,
                "unexpected factor shape in the substitute Bianchi derivation");
        SlotRef pd = tc.partner_of(at, 0), p0 = tc.partner_of(at, 1);
        require(pd.is_free_marker() && p0.is_free_marker(), Status::InternalError,
                "unexpected pairing in the substitute Bianchi derivation");
        if (pd.s > p0.s) {
          next = next + cotton_identity(tc, at).scaled(t.coef);
          fired = true;
          changed = true;
        }
      }
      if (!fired) next = next + LinComb::single(t.coef, tc);
    }
    rest = collect(next);
    stable = !changed;
  }
  require(stable, Status::InternalError, "cotton orientation did not terminate");
  for (const Term& t : rest.terms) {
    bool has_weyl = false, has_schouten = false;
    for (const Factor& fa : t.contr.factors) {
      has_weyl |= fa.kind == Kind::Weyl;
      has_schouten |= fa.kind == Kind::Schouten;
    }
    require(has_weyl && !has_schouten, Status::InternalError,
            "substitute Bianchi derivation left a non-Weyl term");
  }
  return rest;
}

LinComb instantiate_fake_corrections(const Contraction& host, int at) {
  const Factor& F = host.factors[at];
  int m = F.m;
  const LinComb& tmpl = fake_second_bianchi_corrections();
  LinComb out;
  for (const Term& t : tmpl.terms) {
    const Contraction& a = t.contr;
    std::vector<Factor> nf;
    int wf = -1;
    for (int g = 0; g < a.num_factors(); ++g) {
      Factor fa = a.factors[g];
      if (fa.kind == Kind::Weyl) {
        require(wf < 0 && fa.m == 1, Status::InternalError, "unexpected template factor");
        wf = g;
        fa.m = m;
      }
      nf.push_back(fa);
    }
    require(wf >= 0, Status::InternalError, "template term without a Weyl factor");
    auto to_new = [&](int g, int s) {
      return g == wf ? ReplacementSlot{g, s + m - 1} : ReplacementSlot{g, s};
    };
    std::map<int, ReplacementSlot> sm;
    for (int d = 0; d + 1 < m; ++d) sm[d] = ReplacementSlot{wf, d};
    for (int r = 0; r < 5; ++r) {
      SlotRef as = a.find_free(r);
      int host_slot = (r == 0) ? m - 1 : m - 1 + r;
      sm[host_slot] = to_new(as.f, as.s);
    }
    std::vector<std::pair<ReplacementSlot, ReplacementSlot>> ip;
    for (int g = 0; g < a.num_factors(); ++g)
      for (int s = 0; s < static_cast<int>(a.partner[g].size()); ++s) {
        SlotRef pp = a.partner[g][s];
        if (pp.is_free_marker()) continue;
        if (pp.f < g || (pp.f == g && pp.s <= s)) continue;
        ip.push_back({to_new(g, s), to_new(pp.f, pp.s)});
      }
    out = out + LinComb::single(t.coef, replace_factor(host, at, nf, sm, ip));
  }
  return out;
}

}  // namespace

const LinComb& fake_second_bianchi_corrections() {
  static const LinComb tmpl = derive_fake_corrections();
  return tmpl;
}

LinComb fake_second_bianchi(const Contraction& c, int at) {
  check_kind(c, at, Kind::Weyl);
  require(c.factors[at].m >= 1, Status::DomainError,
          "the substitute second Bianchi needs a derived Weyl factor");
  auto [t2, t3] = derivative_cycle(c, at);
  LinComb out = LinComb::single(DimRatio(-1), t2) + LinComb::single(DimRatio(-1), t3) +
                instantiate_fake_corrections(c, at);
  return checked(c, out);
}

LinComb fake_second_bianchi_relation(const Contraction& c, int f) {
  check_kind(c, f, Kind::Weyl);
  require(c.factors[f].m >= 1, Status::DomainError,
          "the substitute second Bianchi needs a derived Weyl factor");
  auto [t2, t3] = derivative_cycle(c, f);
  return LinComb::single(one(), c) + LinComb::single(one(), t2) + LinComb::single(one(), t3) -
         instantiate_fake_corrections(c, f);
}

// --- derived divergence template ----------------------------------------------

namespace {

LinComb reduce_to_ricci_basis(LinComb lc) {
  GradePolicy g1{1, false};
  for (int round = 0; round < 64; ++round) {
    lc = collect(lc);
    bool changed = false;
    LinComb next;
    for (const Term& t : lc.terms) {
      const Contraction& tc = t.contr;
      LinComb repl;
      bool hit = false;
      for (int f = 0; f < tc.num_factors() && !hit; ++f) {
        Kind k = tc.factors[f].kind;
        hit = true;
        if (k == Kind::Weyl)
          repl = weyl_decompose(tc, f);
        else if (k == Kind::Schouten)
          repl = schouten_to_ricci(tc, f);
        else if (k == Kind::Riemann && has_intrinsic_trace(tc, f))
          repl = riemann_trace(tc, f);
        else if (k == Kind::Riemann && has_deriv_intrinsic_pair(tc, f))
          repl = riemann_divergence(tc, f, g1);
        else if (k == Kind::Ricci && has_intrinsic_trace(tc, f))
          repl = ricci_trace(tc, f);
        else if (k == Kind::Ricci && has_deriv_intrinsic_pair(tc, f))
          repl = ricci_divergence(tc, f, g1);
        else
          hit = false;
      }
      if (hit) {
        next = next + repl.scaled(t.coef);
        changed = true;
      } else {
        next = next + LinComb::single(t.coef, tc);
      }
    }
    lc = next;
    if (!changed) return collect(lc);
  }
  fail(Status::InternalError, "basis reduction did not terminate");
}

struct RicciBasis {
  DimRatio laplace_ricci;
  DimRatio hessian_scalar;
  DimRatio laplace_scalar_metric;
};

RicciBasis classify_basis(const LinComb& lc) {
  RicciBasis out;
  for (const CollectedTerm& t : collect_detailed(lc)) {
    bool metric = false;
    Kind k0 = Kind::Metric;
    for (const Factor& fa : t.form.factors) {
      if (fa.kind == Kind::Metric)
        metric = true;
      else
        k0 = fa.kind;
    }
    if (metric) {
      require(k0 == Kind::ScalarCurv, Status::InternalError, "unexpected metric basis term");
      out.laplace_scalar_metric = out.laplace_scalar_metric + t.coef;
    } else if (k0 == Kind::Ricci) {
      out.laplace_ricci = out.laplace_ricci + t.coef;
    } else if (k0 == Kind::ScalarCurv) {
      out.hessian_scalar = out.hessian_scalar + t.coef;
    } else {
      fail(Status::InternalError, "unexpected basis term in the divergence derivation");
    }
  }
  return out;
}

DivergenceWeylTemplate derive_divergence_weyl() {
  auto build = [](Kind k) {
    ContractionBuilder b;
    b.add(k, 2);
    b.pair(0, 0, 0, 2);
    b.pair(0, 1, 0, 4);
    b.free(0, 3, 0);
    b.free(0, 5, 1);
    return b.build();
  };
  RicciBasis tv = classify_basis(reduce_to_ricci_basis(LinComb::single(DimRatio(1), build(Kind::Weyl))));
  RicciBasis sv = classify_basis(reduce_to_ricci_basis(LinComb::single(DimRatio(1), build(Kind::Riemann))));
  require(!sv.laplace_ricci.is_zero(), Status::InternalError, "degenerate reference reduction");
  DivergenceWeylTemplate out;
  out.riemann = tv.laplace_ricci / sv.laplace_ricci;
  require(out.riemann == DimRatio(aff(1, -3), aff(1, -2)), Status::InternalError,
          "unexpected leading divergence coefficient");
  out.hessian = tv.hessian_scalar - out.riemann * sv.hessian_scalar;
  out.metric = tv.laplace_scalar_metric - out.riemann * sv.laplace_scalar_metric;
  // trace-freeness oracle: the g-trace of the template must vanish
  DimRatio tr = out.riemann * make_rational(1, 2) + out.hessian +
                out.metric * DimRatio::of(DimPoly::variable("n"));
  require(tr.is_zero(), Status::InternalError, "divergence template fails the trace oracle");
  return out;
}

}  // namespace

const DivergenceWeylTemplate& divergence_weyl_template() {
  static const DivergenceWeylTemplate tmpl = derive_divergence_weyl();
  return tmpl;
}

LinComb decompose_divergence_weyl(const Contraction& c, int at, const GradePolicy& policy) {
  check_kind(c, at, Kind::Weyl);
  require(!policy.track, Status::DomainError,
          "divergence rules do not track reordering corrections");
  const Factor& F = c.factors[at];
  int m = F.m;
  require(m >= 2 && c.partner_of(at, m - 2) == (SlotRef{at, m}) &&
              c.partner_of(at, m - 1) == (SlotRef{at, m + 2}),
          Status::DomainError,
          "expected the two innermost derivatives contracted with the first and third intrinsic slots");
  const DivergenceWeylTemplate& t = divergence_weyl_template();
  std::map<int, ReplacementSlot> ident;
  for (int s = 0; s < m + 4; ++s) ident[s] = ReplacementSlot{0, s};
  LinComb out =
      LinComb::single(t.riemann, replace_factor(c, at, {Factor{Kind::Riemann, m, 0}}, ident, {}));
  auto outer = [&](std::map<int, ReplacementSlot>& sm) {
    for (int d = 0; d + 2 < m; ++d) sm[d] = ReplacementSlot{0, d};
    sm[m - 2] = kDropped;
    sm[m - 1] = kDropped;
    sm[m] = kDropped;
    sm[m + 2] = kDropped;
  };
  {
    std::map<int, ReplacementSlot> sm;
    outer(sm);
    sm[m + 1] = ReplacementSlot{0, m - 2};
    sm[m + 3] = ReplacementSlot{0, m - 1};
    out = out + LinComb::single(t.hessian,
                                replace_factor(c, at, {Factor{Kind::ScalarCurv, m, 0}}, sm, {}));
  }
  {
    std::map<int, ReplacementSlot> sm;
    outer(sm);
    sm[m + 1] = ReplacementSlot{1, 0};
    sm[m + 3] = ReplacementSlot{1, 1};
    out = out + LinComb::single(
                    t.metric,
                    replace_factor(c, at, {Factor{Kind::ScalarCurv, m, 0}, Factor{Kind::Metric, 0, 0}},
                                   sm, {{ReplacementSlot{0, m - 2}, ReplacementSlot{0, m - 1}}}));
  }
  return checked(c, out);
}

// --- normalization -----------------------------------------------------------

namespace {

LinComb normalize_downhill(const LinComb& lc0, const GradePolicy& policy) {
  LinComb lc = drop_longer(lc0, policy);
  for (int round = 0; round < 256; ++round) {
    lc = drop_longer(collect(lc), policy);
    bool changed = false;
    LinComb next;
    for (const Term& t : lc.terms) {
      const Contraction& tc = t.contr;
      LinComb repl;
      bool hit = false;
      for (int f = 0; f < tc.num_factors() && !hit; ++f) {
        Kind k = tc.factors[f].kind;
        hit = true;
        if (k == Kind::Weyl)
          repl = weyl_decompose(tc, f);
        else if (k == Kind::Schouten)
          repl = schouten_to_ricci(tc, f);
        else if (k == Kind::Riemann && has_intrinsic_trace(tc, f))
          repl = riemann_trace(tc, f);
        else if (k == Kind::Ricci && has_intrinsic_trace(tc, f))
          repl = ricci_trace(tc, f);
        else
          hit = false;
      }
      if (hit) {
        next = next + repl.scaled(t.coef);
        changed = true;
      } else {
        next = next + LinComb::single(t.coef, tc);
      }
    }
    if (!changed) return lc;
    lc = next;
  }
  fail(Status::InternalError, "normalization iteration cap exceeded");
}

// A Weyl factor with two of its own intrinsic slots contracted vanishes
// identically; such shapes only arise from the metric factors in the
// substitute Bianchi corrections and are quotiented out up front.
bool has_traced_weyl(const Contraction& c) {
  for (int f = 0; f < c.num_factors(); ++f)
    if (c.factors[f].kind == Kind::Weyl && has_intrinsic_trace(c, f)) return true;
  return false;
}

// The innermost derivative slot is contracted against an intrinsic slot of
// the same factor — the configuration in which the divergence rewrites are
// exact (no derivative has to be commuted into place first).
bool innermost_own_divergence(const Contraction& c, int f) {
  int m = c.factors[f].m;
  if (m < 1) return false;
  SlotRef p = c.partner_of(f, m - 1);
  return !p.is_free_marker() && p.f == f && p.s >= m;
}

std::vector<LinComb> normalize_bianchi_many(const std::vector<LinComb>& ls0,
                                            const GradePolicy& policy) {
  std::vector<LinComb> inputs;
  inputs.reserve(ls0.size());
  bool all_zero = true;
  for (const LinComb& l : ls0) {
    inputs.push_back(drop_longer(collect(l), policy));
    all_zero = all_zero && inputs.back().is_structurally_zero();
  }
  if (all_zero) return inputs;

  std::map<std::vector<uint32_t>, Contraction> forms;
  std::deque<Contraction> work;
  auto note_shape = [&](const Contraction& form, const std::vector<uint32_t>& key) {
    if (forms.emplace(key, form).second) work.push_back(form);
  };
  for (const LinComb& input : inputs)
    for (const CollectedTerm& t : collect_detailed(input))
      if (!has_traced_weyl(t.form)) note_shape(t.form, t.key);

  using Row = std::map<std::vector<uint32_t>, DimRatio>;
  std::map<std::vector<uint32_t>, Row> pivots;
  // r -= c * src; c is taken by value because callers pass coefficients
  // living inside r, which the update erases.
  auto axpy = [](Row& r, DimRatio c, const Row& src) {
    for (const auto& [k, v] : src) {
      auto it = r.find(k);
      DimRatio nv = (it == r.end() ? DimRatio(0) : it->second) - c * v;
      if (nv.is_zero()) {
        if (it != r.end()) r.erase(it);
      } else if (it == r.end()) {
        r.emplace(k, std::move(nv));
      } else {
        it->second = std::move(nv);
      }
    }
  };
  auto insert_row = [&](Row r) {
    while (!r.empty()) {
      auto it = pivots.find(r.begin()->first);
      if (it == pivots.end()) break;
      axpy(r, r.begin()->second, it->second);
    }
    if (r.empty()) return;
    DimRatio lead = r.begin()->second;
    for (auto& [k, v] : r) v = v / lead;
    std::vector<uint32_t> key = r.begin()->first;
    pivots.emplace(std::move(key), std::move(r));
  };
  auto row_of = [&](const LinComb& rel) {
    Row r;
    for (const CollectedTerm& t : collect_detailed(drop_longer(rel, policy))) {
      if (has_traced_weyl(t.form)) continue;
      r[t.key] = t.coef;
      note_shape(t.form, t.key);
    }
    return r;
  };

  size_t processed = 0;
  while (!work.empty()) {
    require(forms.size() <= 20000 && ++processed <= 40000, Status::InternalError,
            "relation closure exceeded its cap");
    Contraction s = std::move(work.front());
    work.pop_front();
    for (int f = 0; f < s.num_factors(); ++f) {
      Kind k = s.factors[f].kind;
      if (k == Kind::Riemann || k == Kind::Weyl) {
        insert_row(row_of(first_bianchi_relation(s, f)));
        if (s.factors[f].m >= 1) {
          insert_row(row_of(k == Kind::Riemann ? second_bianchi_relation(s, f)
                                               : fake_second_bianchi_relation(s, f)));
        }
      }
      // Exact consequences of the second Bianchi identity and the trace
      // definitions, so that combinations stitched together through a
      // divergence or trace conversion reduce to the same coordinates.
      if (k == Kind::Riemann && has_intrinsic_trace(s, f))
        insert_row(row_of(LinComb::single(one(), s) - riemann_trace(s, f)));
      if (k == Kind::Ricci && has_intrinsic_trace(s, f))
        insert_row(row_of(LinComb::single(one(), s) - ricci_trace(s, f)));
      if ((k == Kind::Riemann || k == Kind::Ricci) && innermost_own_divergence(s, f))
        insert_row(row_of(LinComb::single(one(), s) -
                          (k == Kind::Riemann ? riemann_divergence(s, f, GradePolicy{})
                                              : ricci_divergence(s, f, GradePolicy{}))));
      if (k == Kind::Schouten && contracted_bianchi_pattern(s, f) != 0)
        insert_row(row_of(LinComb::single(one(), s) - contracted_bianchi(s, f)));
    }
  }

  std::vector<LinComb> outs;
  outs.reserve(inputs.size());
  for (const LinComb& input : inputs) {
    Row v;
    for (const CollectedTerm& t : collect_detailed(input))
      if (!has_traced_weyl(t.form)) v[t.key] = t.coef;
    for (auto it = v.begin(); it != v.end();) {
      auto p = pivots.find(it->first);
      if (p == pivots.end()) {
        ++it;
        continue;
      }
      DimRatio cc = it->second;
      std::vector<uint32_t> key = p->first;
      axpy(v, cc, p->second);
      it = v.upper_bound(key);
    }

    LinComb out;
    for (const auto& [key, coef] : v) {
      auto f = forms.find(key);
      require(f != forms.end(), Status::InternalError, "shape bookkeeping lost a key");
      out.terms.push_back(Term{coef, f->second});
    }
    outs.push_back(std::move(out));
  }
  return outs;
}

LinComb normalize_bianchi(const LinComb& lc0, const GradePolicy& policy) {
  return normalize_bianchi_many({lc0}, policy)[0];
}

}  // namespace

LinComb normalize(const LinComb& lc, Ruleset rules, const GradePolicy& policy) {
  switch (rules) {
    case Ruleset::Downhill: return normalize_downhill(lc, policy);
    case Ruleset::Bianchi: return normalize_bianchi(lc, policy);
  }
  fail(Status::DomainError, "unknown ruleset");
}

std::vector<LinComb> normalize_jointly(const std::vector<LinComb>& ls, Ruleset rules,
                                       const GradePolicy& policy) {
  switch (rules) {
    case Ruleset::Downhill: {
      std::vector<LinComb> outs;
      outs.reserve(ls.size());
      for (const LinComb& l : ls) outs.push_back(normalize_downhill(l, policy));
      return outs;
    }
    case Ruleset::Bianchi: return normalize_bianchi_many(ls, policy);
  }
  fail(Status::DomainError, "unknown ruleset");
}

// --- registry and manifest -----------------------------------------------------

const std::vector<RewriteRule>& rewrite_rules() {
  static const std::vector<RewriteRule> rules = [] {
    auto kind_is = [](Kind k, int min_m = 0) {
      return [k, min_m](const Contraction& c, int at) {
        return at >= 0 && at < c.num_factors() && c.factors[at].kind == k &&
               c.factors[at].m >= min_m;
      };
    };
    std::vector<RewriteRule> r;
    r.push_back({"weyl_decompose", kind_is(Kind::Weyl),
                 [](const Contraction& c, int at, const GradePolicy&) {
                   return weyl_decompose(c, at);
                 },
                 0});
    r.push_back({"schouten_to_ricci", kind_is(Kind::Schouten),
                 [](const Contraction& c, int at, const GradePolicy&) {
                   return schouten_to_ricci(c, at);
                 },
                 0});
    r.push_back({"ricci_to_schouten", kind_is(Kind::Ricci),
                 [](const Contraction& c, int at, const GradePolicy&) {
                   return ricci_to_schouten(c, at);
                 },
                 0});
    r.push_back({"contracted_bianchi",
                 [](const Contraction& c, int at) {
                   return at >= 0 && at < c.num_factors() &&
                          contracted_bianchi_pattern(c, at) != 0;
                 },
                 [](const Contraction& c, int at, const GradePolicy&) {
                   return contracted_bianchi(c, at);
                 },
                 0});
    r.push_back({"cotton_identity", kind_is(Kind::Schouten, 1),
                 [](const Contraction& c, int at, const GradePolicy&) {
                   return cotton_identity(c, at);
                 },
                 0});
    r.push_back({"commute_derivatives", // transposes the innermost adjacent pair
                 [](const Contraction& c, int at) {
                   return at >= 0 && at < c.num_factors() && c.factors[at].m >= 2;
                 },
                 [](const Contraction& c, int at, const GradePolicy& p) {
                   int m = c.factors[at].m;
                   return commute_derivatives(c, at, {m - 2, m - 1}, p);
                 },
                 1});
    r.push_back({"fake_second_bianchi", kind_is(Kind::Weyl, 1),
                 [](const Contraction& c, int at, const GradePolicy&) {
                   return fake_second_bianchi(c, at);
                 },
                 0});
    r.push_back({"riemann_divergence",
                 [](const Contraction& c, int at) {
                   return at >= 0 && at < c.num_factors() &&
                          c.factors[at].kind == Kind::Riemann && has_deriv_intrinsic_pair(c, at);
                 },
                 [](const Contraction& c, int at, const GradePolicy& p) {
                   return riemann_divergence(c, at, p);
                 },
                 1});
    r.push_back({"ricci_divergence",
                 [](const Contraction& c, int at) {
                   return at >= 0 && at < c.num_factors() &&
                          c.factors[at].kind == Kind::Ricci && has_deriv_intrinsic_pair(c, at);
                 },
                 [](const Contraction& c, int at, const GradePolicy& p) {
                   return ricci_divergence(c, at, p);
                 },
                 1});
    r.push_back({"ricci_trace",
                 [](const Contraction& c, int at) {
                   return at >= 0 && at < c.num_factors() &&
                          c.factors[at].kind == Kind::Ricci && has_intrinsic_trace(c, at);
                 },
                 [](const Contraction& c, int at, const GradePolicy&) {
                   return ricci_trace(c, at);
                 },
                 0});
    r.push_back({"riemann_trace",
                 [](const Contraction& c, int at) {
                   return at >= 0 && at < c.num_factors() &&
                          c.factors[at].kind == Kind::Riemann && has_intrinsic_trace(c, at);
                 },
                 [](const Contraction& c, int at, const GradePolicy&) {
                   return riemann_trace(c, at);
                 },
                 0});
    r.push_back({"decompose_divergence_weyl",
                 [](const Contraction& c, int at) {
                   if (at < 0 || at >= c.num_factors()) return false;
                   const Factor& F = c.factors[at];
                   return F.kind == Kind::Weyl && F.m >= 2 &&
                          c.partner_of(at, F.m - 2) == (SlotRef{at, F.m}) &&
                          c.partner_of(at, F.m - 1) == (SlotRef{at, F.m + 2});
                 },
                 [](const Contraction& c, int at, const GradePolicy& p) {
                   return decompose_divergence_weyl(c, at, p);
                 },
                 1});
    return r;
  }();
  return rules;
}

std::string ruleset_manifest() {
  std::ostringstream os;
  os << "# derived rewrite templates\n";
  os << "# cyc nabla_i W_jklm (cycling the first three indices) equals:\n";
  os << "fake_second_bianchi:\n  " << print_lincomb(fake_second_bianchi_corrections()) << "\n";
  const DivergenceWeylTemplate& t = divergence_weyl_template();
  os << "# contracted divergence of a derived Weyl factor, modulo length two\n";
  os << "divergence_weyl.riemann: " << t.riemann.to_string() << "\n";
  os << "divergence_weyl.hessian: " << t.hessian.to_string() << "\n";
  os << "divergence_weyl.metric: " << t.metric.to_string() << "\n";
  return os.str();
}

}  // namespace tc
