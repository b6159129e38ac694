#include "numeval.hpp"

#include <algorithm>
#include <functional>
#include <initializer_list>
#include <map>
#include <random>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace tc {
namespace {

// ---------------------------------------------------------------------------
// Monomial keys. Nibble v (v < 15) holds the exponent of x_v, the top nibble
// holds the t-degree. Degree caps are kept at or below 15, so nibble sums
// never carry and key addition multiplies monomials.

constexpr uint64_t kXMask = 0x0FFFFFFFFFFFFFFFull;

inline int t_deg(uint64_t key) { return static_cast<int>(key >> 60); }

inline int x_exp(uint64_t key, int v) { return static_cast<int>((key >> (4 * v)) & 0xF); }

inline int x_deg(uint64_t key) {
  uint64_t rest = key & kXMask;
  int d = 0;
  while (rest != 0) {
    d += static_cast<int>(rest & 0xF);
    rest >>= 4;
  }
  return d;
}

inline uint64_t t_shifted(uint64_t key, int k) { return key + (static_cast<uint64_t>(k) << 60); }

// Sparse polynomial in x_0..x_{n-1} and t.
struct Poly {
  std::unordered_map<uint64_t, Rational> m;

  bool empty() const { return m.empty(); }
};

void padd(Poly& p, uint64_t key, const Rational& v) {
  if (v == 0) return;
  auto it = p.m.find(key);
  if (it == p.m.end()) {
    p.m.emplace(key, v);
    return;
  }
  it->second += v;
  if (it->second == 0) p.m.erase(it);
}

void padd_poly(Poly& p, const Poly& q, const Rational& scale) {
  for (const auto& [k, v] : q.m) padd(p, k, v * scale);
}

// Product truncated to total x-degree <= xcap and t-degree <= tcap. Both
// caps must be <= 15 so that nibble arithmetic cannot carry.
Poly pmul(const Poly& a, const Poly& b, int xcap, int tcap) {
  Poly out;
  if (a.m.empty() || b.m.empty()) return out;
  for (const auto& [ka, va] : a.m) {
    const int xa = x_deg(ka);
    const int ta = t_deg(ka);
    for (const auto& [kb, vb] : b.m) {
      if (ta + t_deg(kb) > tcap) continue;
      if (xa + x_deg(kb) > xcap) continue;
      padd(out, ka + kb, va * vb);
    }
  }
  return out;
}

Poly pdx(const Poly& a, int v) {
  Poly out;
  for (const auto& [k, c] : a.m) {
    const int e = x_exp(k, v);
    if (e == 0) continue;
    padd(out, k - (1ull << (4 * v)), c * e);
  }
  return out;
}

Poly ptrunc(const Poly& a, int xcap, int tcap) {
  Poly out;
  for (const auto& [k, v] : a.m)
    if (x_deg(k) <= xcap && t_deg(k) <= tcap) out.m.emplace(k, v);
  return out;
}

// ---------------------------------------------------------------------------
// Sparse tensors. Component index keys pack one nibble per slot position,
// position 0 in the lowest nibble; slot order matches factor slot order
// (derivative block outermost-first, then intrinsic slots).

inline int idx_get(uint64_t idx, int pos) { return static_cast<int>((idx >> (4 * pos)) & 0xF); }

inline uint64_t idx_set(uint64_t idx, int pos, int v) {
  const int sh = 4 * pos;
  return (idx & ~(0xFull << sh)) | (static_cast<uint64_t>(v) << sh);
}

inline uint64_t idx_prepend(int v, uint64_t idx) { return (idx << 4) | static_cast<uint64_t>(v); }

uint64_t idx_of(std::initializer_list<int> vals) {
  uint64_t idx = 0;
  int pos = 0;
  for (int v : vals) idx |= static_cast<uint64_t>(v) << (4 * pos++);
  return idx;
}

struct XTensor {
  int rank = 0;
  std::unordered_map<uint64_t, Poly> comp;
};

void tadd(XTensor& t, uint64_t idx, const Poly& p, const Rational& scale) {
  if (p.empty() || scale == 0) return;
  Poly& slot = t.comp[idx];
  padd_poly(slot, p, scale);
  if (slot.empty()) t.comp.erase(idx);
}

const Poly& tcomp(const XTensor& t, uint64_t idx) {
  static const Poly kEmpty;
  auto it = t.comp.find(idx);
  return it == t.comp.end() ? kEmpty : it->second;
}

// Value of the components at the base point as a t-polynomial.
struct OTensor {
  int rank = 0;
  std::unordered_map<uint64_t, JetValue> comp;
};

JetValue origin_value(const Poly& p, int tcap) {
  JetValue out;
  out.t.assign(static_cast<size_t>(tcap) + 1, Rational(0));
  for (const auto& [k, v] : p.m) {
    if ((k & kXMask) != 0) continue;
    const int td = t_deg(k);
    if (td <= tcap) out.t[static_cast<size_t>(td)] += v;
  }
  return out;
}

JetValue jv_zero(int tcap) {
  JetValue out;
  out.t.assign(static_cast<size_t>(tcap) + 1, Rational(0));
  return out;
}

void jv_add(JetValue& a, const JetValue& b, const Rational& scale) {
  if (a.t.size() < b.t.size()) a.t.resize(b.t.size(), Rational(0));
  for (size_t k = 0; k < b.t.size(); ++k) a.t[k] += b.t[k] * scale;
}

JetValue jv_mul(const JetValue& a, const JetValue& b, int tcap) {
  JetValue out = jv_zero(tcap);
  for (size_t i = 0; i < a.t.size(); ++i) {
    if (a.t[i] == 0) continue;
    for (size_t j = 0; j < b.t.size(); ++j) {
      if (i + j > static_cast<size_t>(tcap)) break;
      if (b.t[j] == 0) continue;
      out.t[i + j] += a.t[i] * b.t[j];
    }
  }
  return out;
}

}  // namespace

std::string JetValue::to_string() const {
  std::ostringstream os;
  bool first = true;
  for (size_t k = 0; k < t.size(); ++k) {
    if (t[k] == 0) continue;
    if (!first) os << " + ";
    os << tc::to_string(t[k]);
    if (k == 1) os << "*t";
    if (k > 1) os << "*t^" << k;
    first = false;
  }
  if (first) os << "0";
  return os.str();
}

// ---------------------------------------------------------------------------

struct MetricJet::Impl {
  JetSpec spec;
  long n = 0;
  int xbase = 0;  // x-degree cap for the base curvature tensors

  XTensor g, ginv, gamma;  // gamma[k,i,j] = Gamma^k_{ij}
  XTensor riemann;         // all slots lowered
  XTensor ricci, schouten, weyl;
  Poly scal;

  struct GammaEntry {
    int lo1 = 0;
    int lo2 = 0;
    const Poly* p = nullptr;
  };
  std::vector<std::vector<GammaEntry>> gamma_by_upper;

  mutable std::map<long, Poly> scalar_fns;  // ScalarFn by label, AuxFn at -1
  mutable std::map<std::tuple<int, int, long, int>, OTensor> chain_cache;

  explicit Impl(const JetSpec& s) : spec(s), n(s.n) {
    require(n >= 3 && n <= 14, Status::DomainError, "jet dimension must be between 3 and 14");
    require(spec.tmax >= 1 && spec.tmax <= 12, Status::DomainError,
            "jet t-order must be between 1 and 12");
    require(spec.hdeg >= 2 && spec.hdeg <= 6, Status::DomainError,
            "metric perturbation degree must be between 2 and 6");
    require(spec.hterms >= 1 && spec.hterms <= 64, Status::DomainError,
            "metric perturbation term count must be between 1 and 64");
    xbase = std::min(15, 2 * spec.hdeg + 3);
    build();
  }

  // --- random generation ---------------------------------------------------

  uint64_t random_monomial(std::mt19937_64& eng, int deg) const {
    uint64_t key = 0;
    for (int i = 0; i < deg; ++i) {
      const int v = static_cast<int>(eng() % static_cast<uint64_t>(n));
      key += 1ull << (4 * v);
    }
    return key;
  }

  Rational random_coeff(std::mt19937_64& eng) const {
    const long mag = static_cast<long>(eng() % 3) + 1;
    return make_rational(eng() % 2 == 0 ? mag : -mag);
  }

  Poly random_scalar(uint64_t seed_mix) const {
    std::mt19937_64 eng(spec.seed * 0x9E3779B97F4A7C15ull + seed_mix);
    Poly p;
    for (int i = 0; i < 6; ++i) {
      const int deg = static_cast<int>(eng() % static_cast<uint64_t>(spec.hdeg + 1));
      padd(p, random_monomial(eng, deg), random_coeff(eng));
    }
    // Guarantee curvature at the base point for Laplacian-style probes.
    padd(p, random_monomial(eng, 2), random_coeff(eng));
    return p;
  }

  const Poly& scalar_fn(Kind kind, long label) const {
    const long key = kind == Kind::AuxFn ? -1 - label : label;
    auto it = scalar_fns.find(key);
    if (it != scalar_fns.end()) return it->second;
    const uint64_t mix =
        kind == Kind::AuxFn ? 0xA5A5A5A5ull + static_cast<uint64_t>(label)
                            : 0x51ED2701ull * (static_cast<uint64_t>(label) + 2);
    return scalar_fns.emplace(key, random_scalar(mix)).first->second;
  }

  // --- base tensors ----------------------------------------------------------

  void build() {
    std::mt19937_64 eng(spec.seed);

    // h: sparse symmetric perturbation, each entry a monomial of degree >= 2,
    // so h and dh vanish at the base point and g(0) = delta exactly.
    XTensor h;
    h.rank = 2;
    for (int i = 0; i < spec.hterms; ++i) {
      int a = static_cast<int>(eng() % static_cast<uint64_t>(n));
      int b = static_cast<int>(eng() % static_cast<uint64_t>(n));
      if (a > b) std::swap(a, b);
      const int deg = 2 + static_cast<int>(eng() % static_cast<uint64_t>(spec.hdeg - 1));
      Poly mono;
      padd(mono, random_monomial(eng, deg), random_coeff(eng));
      tadd(h, idx_of({a, b}), mono, Rational(1));
      if (a != b) tadd(h, idx_of({b, a}), mono, Rational(1));
    }
    {
      // Deterministic low-degree core: a quadratic diagonal entry and a cubic
      // off-diagonal one. Without a degree-2 monomial the curvature would
      // vanish at the base point, without a degree-3 one its first
      // derivatives would; random draws miss those degrees too often.
      Poly quad;
      padd(quad, 0x20, Rational(1));  // x_1^2
      tadd(h, idx_of({0, 0}), quad, Rational(1));
      Poly cubic;
      padd(cubic, 0x111, Rational(1));  // x_0 x_1 x_2
      tadd(h, idx_of({1, 2}), cubic, Rational(1));
      tadd(h, idx_of({2, 1}), cubic, Rational(1));
    }

    // g = delta + t h.
    g.rank = 2;
    Poly one;
    padd(one, 0, Rational(1));
    for (int a = 0; a < n; ++a) tadd(g, idx_of({a, a}), one, Rational(1));
    for (const auto& [idx, p] : h.comp) {
      Poly tp;
      for (const auto& [k, v] : p.m) tp.m.emplace(t_shifted(k, 1), v);
      tadd(g, idx, tp, Rational(1));
    }

    // Neumann series for the inverse: ginv = delta + sum_k (-t)^k h^k.
    ginv.rank = 2;
    for (int a = 0; a < n; ++a) tadd(ginv, idx_of({a, a}), one, Rational(1));
    XTensor power = h;
    for (int k = 1; k <= spec.tmax; ++k) {
      for (const auto& [idx, p] : power.comp) {
        Poly tp;
        for (const auto& [mk, v] : p.m) {
          if (x_deg(mk) > xbase) continue;
          tp.m.emplace(t_shifted(mk, k), v);
        }
        tadd(ginv, idx, tp, k % 2 == 0 ? Rational(1) : Rational(-1));
      }
      if (k == spec.tmax) break;
      XTensor next;
      next.rank = 2;
      for (const auto& [i1, p1] : h.comp) {
        for (const auto& [i2, p2] : power.comp) {
          if (idx_get(i1, 1) != idx_get(i2, 0)) continue;
          tadd(next, idx_of({idx_get(i1, 0), idx_get(i2, 1)}), pmul(p1, p2, xbase, 0),
               Rational(1));
        }
      }
      power = std::move(next);
    }

    // A[l,i,j] = d_i g_{lj} + d_j g_{li} - d_l g_{ij}; Gamma = ginv.A / 2.
    XTensor asym;
    asym.rank = 3;
    for (const auto& [idx, p] : g.comp) {
      const int a = idx_get(idx, 0);
      const int b = idx_get(idx, 1);
      for (int v = 0; v < n; ++v) {
        Poly d = pdx(p, v);
        if (d.empty()) continue;
        tadd(asym, idx_of({a, v, b}), d, Rational(1));
        tadd(asym, idx_of({a, b, v}), d, Rational(1));
        tadd(asym, idx_of({v, a, b}), d, Rational(-1));
      }
    }
    gamma.rank = 3;
    std::vector<std::vector<std::pair<uint64_t, const Poly*>>> asym_by_first(
        static_cast<size_t>(n));
    for (const auto& [idx, p] : asym.comp)
      asym_by_first[static_cast<size_t>(idx_get(idx, 0))].push_back({idx, &p});
    for (const auto& [gi, gp] : ginv.comp) {
      const int k = idx_get(gi, 0);
      const int l = idx_get(gi, 1);
      for (const auto& [ai, ap] : asym_by_first[static_cast<size_t>(l)]) {
        tadd(gamma, idx_of({k, idx_get(ai, 1), idx_get(ai, 2)}),
             pmul(gp, *ap, xbase, spec.tmax), make_rational(1, 2));
      }
    }
    gamma_by_upper.assign(static_cast<size_t>(n), {});
    for (const auto& [idx, p] : gamma.comp)
      gamma_by_upper[static_cast<size_t>(idx_get(idx, 0))].push_back(
          GammaEntry{idx_get(idx, 1), idx_get(idx, 2), &p});

    // Riemann with the first slot up: R^i_{jkl} = d_k Gamma^i_{lj}
    // - d_l Gamma^i_{kj} + Gamma^i_{ka} Gamma^a_{lj} - Gamma^i_{la} Gamma^a_{kj}.
    XTensor half;  // the k-leading half, antisymmetrized in (k,l) below
    half.rank = 4;
    for (const auto& [idx, p] : gamma.comp) {
      const int up = idx_get(idx, 0);
      const int lo1 = idx_get(idx, 1);
      const int lo2 = idx_get(idx, 2);
      for (int v = 0; v < n; ++v) {
        Poly d = pdx(p, v);
        if (d.empty()) continue;
        tadd(half, idx_of({up, lo2, v, lo1}), d, Rational(1));
      }
    }
    for (const auto& [i1, p1] : gamma.comp) {
      const int up = idx_get(i1, 0);
      const int k = idx_get(i1, 1);
      const int a = idx_get(i1, 2);
      for (const auto& e : gamma_by_upper[static_cast<size_t>(a)]) {
        tadd(half, idx_of({up, e.lo2, k, e.lo1}), pmul(p1, *e.p, xbase, spec.tmax), Rational(1));
      }
    }
    XTensor rup;
    rup.rank = 4;
    for (const auto& [idx, p] : half.comp) {
      tadd(rup, idx, p, Rational(1));
      tadd(rup, idx_of({idx_get(idx, 0), idx_get(idx, 1), idx_get(idx, 3), idx_get(idx, 2)}), p,
           Rational(-1));
    }

    // Lower the first slot; Ricci is the trace of slots (0, 2) of rup.
    riemann.rank = 4;
    std::vector<std::vector<std::pair<uint64_t, const Poly*>>> rup_by_first(
        static_cast<size_t>(n));
    for (const auto& [idx, p] : rup.comp)
      rup_by_first[static_cast<size_t>(idx_get(idx, 0))].push_back({idx, &p});
    for (const auto& [gi, gp] : g.comp) {
      const int i = idx_get(gi, 0);
      const int a = idx_get(gi, 1);
      for (const auto& [ri, rp] : rup_by_first[static_cast<size_t>(a)]) {
        tadd(riemann, idx_set(ri, 0, i), pmul(gp, *rp, xbase, spec.tmax), Rational(1));
      }
    }
    ricci.rank = 2;
    for (const auto& [idx, p] : rup.comp) {
      if (idx_get(idx, 0) != idx_get(idx, 2)) continue;
      tadd(ricci, idx_of({idx_get(idx, 1), idx_get(idx, 3)}), p, Rational(1));
    }
    for (const auto& [gi, gp] : ginv.comp) {
      const auto it = ricci.comp.find(gi);
      if (it != ricci.comp.end()) padd_poly(scal, pmul(gp, it->second, xbase, spec.tmax), Rational(1));
    }

    // Schouten P = (Ric - R g / (2(n-1))) / (n-2); Weyl W = R - P ^ g with
    // (P ^ g)_{ijkl} = P_ik g_jl + P_jl g_ik - P_il g_jk - P_jk g_il.
    schouten.rank = 2;
    for (const auto& [idx, p] : ricci.comp)
      tadd(schouten, idx, p, make_rational(1, n - 2));
    for (const auto& [idx, p] : g.comp)
      tadd(schouten, idx, pmul(p, scal, xbase, spec.tmax),
           make_rational(-1, 2 * (n - 1) * (n - 2)));
    weyl.rank = 4;
    for (const auto& [idx, p] : riemann.comp) tadd(weyl, idx, p, Rational(1));
    for (const auto& [pi, pp] : schouten.comp) {
      const int a = idx_get(pi, 0);
      const int b = idx_get(pi, 1);
      for (const auto& [gi, gp] : g.comp) {
        const int c = idx_get(gi, 0);
        const int d = idx_get(gi, 1);
        Poly prod = pmul(pp, gp, xbase, spec.tmax);
        if (prod.empty()) continue;
        tadd(weyl, idx_of({a, c, b, d}), prod, Rational(-1));
        tadd(weyl, idx_of({c, a, d, b}), prod, Rational(-1));
        tadd(weyl, idx_of({a, c, d, b}), prod, Rational(1));
        tadd(weyl, idx_of({c, a, b, d}), prod, Rational(1));
      }
    }
  }

  // --- covariant derivative chains -------------------------------------------

  XTensor base_tensor(Kind kind, long label) const {
    switch (kind) {
      case Kind::Metric:
        return g;
      case Kind::Riemann:
        return riemann;
      case Kind::Ricci:
        return ricci;
      case Kind::ScalarCurv: {
        XTensor t;
        t.rank = 0;
        t.comp.emplace(0, scal);
        return t;
      }
      case Kind::Weyl:
        return weyl;
      case Kind::Schouten:
        return schouten;
      case Kind::ScalarFn:
      case Kind::AuxFn: {
        XTensor t;
        t.rank = 0;
        t.comp.emplace(0, scalar_fn(kind, label));
        return t;
      }
    }
    fail(Status::InternalError, "unhandled factor kind");
  }

  // One covariant derivative, new index prepended as position 0.
  XTensor cov_step(const XTensor& t, int xcap, int tcap) const {
    XTensor out;
    out.rank = t.rank + 1;
    require(out.rank <= 15, Status::DomainError, "tensor rank exceeds packing limit");
    for (const auto& [idx, p] : t.comp) {
      for (int v = 0; v < n; ++v) {
        Poly d = pdx(p, v);
        if (d.empty()) continue;
        tadd(out, idx_prepend(v, idx), d, Rational(1));
      }
      for (int pos = 0; pos < t.rank; ++pos) {
        const int a = idx_get(idx, pos);
        for (const auto& e : gamma_by_upper[static_cast<size_t>(a)]) {
          Poly prod = pmul(*e.p, p, xcap, tcap);
          if (prod.empty()) continue;
          tadd(out, idx_prepend(e.lo1, idx_set(idx, pos, e.lo2)), prod, Rational(-1));
        }
      }
    }
    return out;
  }

  // nabla^m of the base tensor, evaluated at the base point, with the t
  // expansion truncated at tbudget.
  const OTensor& derived(Kind kind, int m, long label, int tbudget) const {
    const int tb = std::min(tbudget, spec.tmax);
    const auto key = std::make_tuple(static_cast<int>(kind), m, label, tb);
    auto it = chain_cache.find(key);
    if (it != chain_cache.end()) return it->second;

    require(m <= xbase, Status::DomainError, "derivative order exceeds jet resolution");
    XTensor x = base_tensor(kind, label);
    // Components of x-degree above m - k cannot reach degree zero in the
    // remaining steps (a derivative lowers the degree by one, a Christoffel
    // factor raises it), so each level is truncated to that bound.
    XTensor cur;
    cur.rank = x.rank;
    for (const auto& [idx, p] : x.comp) {
      Poly q = ptrunc(p, m, tb);
      if (!q.empty()) cur.comp.emplace(idx, std::move(q));
    }
    for (int k = 0; k < m; ++k) cur = cov_step(cur, m - k - 1, tb);

    OTensor o;
    o.rank = cur.rank;
    for (const auto& [idx, p] : cur.comp) {
      JetValue v = origin_value(p, tb);
      if (!v.is_zero()) o.comp.emplace(idx, std::move(v));
    }
    return chain_cache.emplace(key, std::move(o)).first->second;
  }

  // --- contraction of factor tensors at the base point -----------------------
  //
  // g(0) = delta exactly (the perturbation vanishes to second order), so
  // raising an index at the base point is the identity and every pairing
  // edge becomes plain index matching.

  JetValue merge(const Contraction& c, const std::vector<const OTensor*>& tens, int tcap) const {
    const int nf = c.num_factors();
    std::vector<int> order(static_cast<size_t>(nf));
    for (int f = 0; f < nf; ++f) order[static_cast<size_t>(f)] = f;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const size_t sa = tens[static_cast<size_t>(a)]->comp.size();
      const size_t sb = tens[static_cast<size_t>(b)]->comp.size();
      return sa != sb ? sa < sb : a < b;
    });
    std::vector<int> pos_of(static_cast<size_t>(nf));
    for (int q = 0; q < nf; ++q) pos_of[static_cast<size_t>(order[static_cast<size_t>(q)])] = q;

    struct Stage {
      const OTensor* ten = nullptr;
      std::vector<std::pair<int, int>> internal;            // slot pairs within the factor
      std::vector<std::tuple<int, int, int>> bound;         // (slot, earlier stage, earlier slot)
      std::unordered_map<uint64_t, std::vector<std::pair<uint64_t, const JetValue*>>> buckets;
    };
    std::vector<Stage> stages(static_cast<size_t>(nf));
    for (int q = 0; q < nf; ++q) {
      const int f = order[static_cast<size_t>(q)];
      Stage& st = stages[static_cast<size_t>(q)];
      st.ten = tens[static_cast<size_t>(f)];
      const int slots = c.factors[static_cast<size_t>(f)].slots();
      for (int s = 0; s < slots; ++s) {
        const SlotRef p = c.partner_of(f, s);
        if (p.f == f) {
          if (p.s > s) st.internal.push_back({s, p.s});
        } else if (pos_of[static_cast<size_t>(p.f)] < q) {
          st.bound.push_back({s, pos_of[static_cast<size_t>(p.f)], p.s});
        }
      }
      for (const auto& [idx, val] : st.ten->comp) {
        bool ok = true;
        for (const auto& [s1, s2] : st.internal)
          if (idx_get(idx, s1) != idx_get(idx, s2)) {
            ok = false;
            break;
          }
        if (!ok) continue;
        uint64_t bkey = 0;
        for (size_t bi = 0; bi < st.bound.size(); ++bi)
          bkey |= static_cast<uint64_t>(idx_get(idx, std::get<0>(st.bound[bi]))) << (4 * bi);
        st.buckets[bkey].push_back({idx, &val});
      }
    }

    JetValue total = jv_zero(tcap);
    std::vector<uint64_t> chosen(static_cast<size_t>(nf), 0);
    std::function<void(int, const JetValue&)> rec = [&](int q, const JetValue& prod) {
      if (q == nf) {
        jv_add(total, prod, Rational(1));
        return;
      }
      const Stage& st = stages[static_cast<size_t>(q)];
      uint64_t bkey = 0;
      for (size_t bi = 0; bi < st.bound.size(); ++bi) {
        const auto& [s, eq, es] = st.bound[bi];
        (void)s;
        bkey |= static_cast<uint64_t>(idx_get(chosen[static_cast<size_t>(eq)], es)) << (4 * bi);
      }
      const auto it = st.buckets.find(bkey);
      if (it == st.buckets.end()) return;
      for (const auto& [idx, val] : it->second) {
        JetValue next = jv_mul(prod, *val, tcap);
        if (next.is_zero()) continue;
        chosen[static_cast<size_t>(q)] = idx;
        rec(q + 1, next);
      }
    };
    JetValue unit = jv_zero(tcap);
    unit.t[0] = 1;
    rec(0, unit);
    return total;
  }

  std::vector<int> min_orders(const Contraction& c) const {
    std::vector<int> mo;
    mo.reserve(c.factors.size());
    for (const auto& f : c.factors) mo.push_back(is_curvature(f.kind) ? 1 : 0);
    return mo;
  }

  JetValue evaluate(const Contraction& c) const {
    c.validate();
    require(c.is_complete(), Status::DomainError, "can only evaluate complete contractions");
    std::vector<const OTensor*> tens;
    tens.reserve(c.factors.size());
    for (const auto& f : c.factors)
      tens.push_back(&derived(f.kind, f.m, f.label, spec.tmax));
    return merge(c, tens, spec.tmax);
  }

  Rational t_coefficient(const Contraction& c, int k) const {
    c.validate();
    require(c.is_complete(), Status::DomainError, "can only evaluate complete contractions");
    require(k <= spec.tmax, Status::DomainError, "t order exceeds jet resolution");
    const std::vector<int> mo = min_orders(c);
    int base = 0;
    for (int m : mo) base += m;
    if (k < base) return Rational(0);
    std::vector<const OTensor*> tens;
    tens.reserve(c.factors.size());
    for (size_t f = 0; f < c.factors.size(); ++f) {
      const int budget = k - (base - mo[f]);
      tens.push_back(&derived(c.factors[f].kind, c.factors[f].m, c.factors[f].label, budget));
    }
    return merge(c, tens, k).coeff(k);
  }

  // --- consistency checks -----------------------------------------------------

  void check(bool cond, const char* what) const {
    require(cond, Status::InternalError, std::string("jet self-test failed: ") + what);
  }

  bool poly_is(const Poly& a, const Poly& b, const Rational& scale) const {
    Poly d = a;
    padd_poly(d, b, -scale);
    return d.empty();
  }

  void self_test() const {
    // Inverse metric.
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        Poly s;
        for (int l = 0; l < n; ++l)
          padd_poly(s, pmul(tcomp(g, idx_of({a, l})), tcomp(ginv, idx_of({l, b})), xbase,
                            spec.tmax),
                    Rational(1));
        if (a == b) padd(s, 0, Rational(-1));
        check(s.empty(), "metric inverse");
      }
    }

    // Metric compatibility as a tensor field.
    check(cov_step(g, xbase, spec.tmax).comp.empty(), "covariant constancy of the metric");

    // Hessian symmetry for a scalar function (torsion-freeness away from the
    // base point).
    {
      XTensor psi = base_tensor(Kind::ScalarFn, 1);
      XTensor hess = cov_step(cov_step(psi, xbase, spec.tmax), xbase, spec.tmax);
      for (const auto& [idx, p] : hess.comp)
        check(poly_is(p, tcomp(hess, idx_of({idx_get(idx, 1), idx_get(idx, 0)})), Rational(1)),
              "Hessian symmetry");
    }

    // Riemann symmetries and the first Bianchi identity.
    for (const auto& [idx, p] : riemann.comp) {
      const int i = idx_get(idx, 0), j = idx_get(idx, 1), k = idx_get(idx, 2), l = idx_get(idx, 3);
      check(poly_is(p, tcomp(riemann, idx_of({j, i, k, l})), Rational(-1)), "Riemann antisymmetry (0,1)");
      check(poly_is(p, tcomp(riemann, idx_of({i, j, l, k})), Rational(-1)), "Riemann antisymmetry (2,3)");
      check(poly_is(p, tcomp(riemann, idx_of({k, l, i, j})), Rational(1)), "Riemann pair symmetry");
      Poly s = p;
      padd_poly(s, tcomp(riemann, idx_of({i, k, l, j})), Rational(1));
      padd_poly(s, tcomp(riemann, idx_of({i, l, j, k})), Rational(1));
      check(s.empty(), "first Bianchi identity");
    }

    // Second Bianchi identity.
    {
      XTensor dr = cov_step(riemann, xbase, spec.tmax);
      std::unordered_map<uint64_t, Poly> cyc;
      for (const auto& [idx, p] : dr.comp) {
        const int a = idx_get(idx, 0), i = idx_get(idx, 1), j = idx_get(idx, 2),
                  k = idx_get(idx, 3), l = idx_get(idx, 4);
        padd_poly(cyc[idx], p, Rational(1));
        padd_poly(cyc[idx_of({k, i, j, l, a})], p, Rational(1));
        padd_poly(cyc[idx_of({l, i, j, a, k})], p, Rational(1));
      }
      for (const auto& [idx, p] : cyc) check(p.empty(), "second Bianchi identity");
    }

    // Ricci and Schouten symmetry.
    for (const auto& [idx, p] : ricci.comp)
      check(poly_is(p, tcomp(ricci, idx_of({idx_get(idx, 1), idx_get(idx, 0)})), Rational(1)),
            "Ricci symmetry");
    for (const auto& [idx, p] : schouten.comp)
      check(poly_is(p, tcomp(schouten, idx_of({idx_get(idx, 1), idx_get(idx, 0)})), Rational(1)),
            "Schouten symmetry");

    // Weyl inherits the Riemann symmetries and is trace-free.
    for (const auto& [idx, p] : weyl.comp) {
      const int i = idx_get(idx, 0), j = idx_get(idx, 1), k = idx_get(idx, 2), l = idx_get(idx, 3);
      check(poly_is(p, tcomp(weyl, idx_of({j, i, k, l})), Rational(-1)), "Weyl antisymmetry (0,1)");
      check(poly_is(p, tcomp(weyl, idx_of({k, l, i, j})), Rational(1)), "Weyl pair symmetry");
      Poly s = p;
      padd_poly(s, tcomp(weyl, idx_of({i, k, l, j})), Rational(1));
      padd_poly(s, tcomp(weyl, idx_of({i, l, j, k})), Rational(1));
      check(s.empty(), "Weyl first Bianchi identity");
    }
    for (int j = 0; j < n; ++j) {
      for (int l = 0; l < n; ++l) {
        Poly s;
        for (const auto& [gi, gp] : ginv.comp)
          padd_poly(s,
                    pmul(gp, tcomp(weyl, idx_of({idx_get(gi, 0), j, idx_get(gi, 1), l})), xbase,
                         spec.tmax),
                    Rational(1));
        check(s.empty(), "Weyl trace-freeness");
      }
    }
  }
};

MetricJet::MetricJet(const JetSpec& spec) : impl_(new Impl(spec)) {}
MetricJet::~MetricJet() { delete impl_; }
long MetricJet::n() const { return impl_->n; }
int MetricJet::tmax() const { return impl_->spec.tmax; }
JetValue MetricJet::evaluate(const Contraction& c) const { return impl_->evaluate(c); }
Rational MetricJet::t_coefficient(const Contraction& c, int k) const {
  return impl_->t_coefficient(c, k);
}
void MetricJet::self_test() const { impl_->self_test(); }

JetValue evaluate_lincomb(const LinComb& lc, const MetricJet& jet) {
  JetValue out = jv_zero(jet.tmax());
  for (const auto& term : lc.terms) {
    const Rational cv = term.coef.eval_at(make_rational(jet.n()));
    if (cv == 0) continue;
    jv_add(out, jet.evaluate(term.contr), cv);
  }
  return out;
}

Rational graded_coefficient(const LinComb& lc, const MetricJet& jet, int grade) {
  Rational out(0);
  for (const auto& term : lc.terms) {
    const Rational cv = term.coef.eval_at(make_rational(jet.n()));
    if (cv == 0) continue;
    out += cv * jet.t_coefficient(term.contr, grade);
  }
  return out;
}

int curvature_grade(const Contraction& c) {
  int g = 0;
  for (const auto& f : c.factors)
    if (is_curvature(f.kind)) ++g;
  return g;
}

}  // namespace tc
