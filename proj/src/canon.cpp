#include "canon.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

namespace tc {

namespace {

// ---------------------------------------------------------------------------
// Metric elimination

Contraction remove_factor(const Contraction& c, int f) {
  Contraction r;
  for (int g = 0; g < c.num_factors(); ++g)
    if (g != f) r.factors.push_back(c.factors[g]);
  r.partner.resize(r.factors.size());
  auto remap = [&](int g) { return g < f ? g : g - 1; };
  for (int g = 0; g < c.num_factors(); ++g) {
    if (g == f) continue;
    for (int s = 0; s < static_cast<int>(c.partner[g].size()); ++s) {
      SlotRef p = c.partner[g][s];
      require(p.is_free_marker() || p.f != f, Status::InternalError,
              "remove_factor with live references");
      r.partner[remap(g)].push_back(p.is_free_marker() ? p : SlotRef{remap(p.f), p.s});
    }
  }
  return r;
}

// Eliminate metric factors in place; multiplies scale by n per full trace.
// Metrics with two free slots are kept.
Contraction eliminate_metrics(Contraction c, DimRatio* scale) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (int f = 0; f < c.num_factors(); ++f) {
      if (c.factors[f].kind != Kind::Metric) continue;
      SlotRef p0 = c.partner[f][0];
      SlotRef p1 = c.partner[f][1];
      if (p0 == SlotRef{f, 1}) {
        // g^a_a = n
        *scale = *scale * DimRatio::of(DimPoly::variable("n"));
        c = remove_factor(c, f);
      } else if (p0.is_free_marker() && p1.is_free_marker()) {
        continue;  // survives as a free symmetric factor
      } else if (p0.is_free_marker() || p1.is_free_marker()) {
        SlotRef free_side = p0.is_free_marker() ? p0 : p1;
        SlotRef other = p0.is_free_marker() ? p1 : p0;
        c.partner[other.f][other.s] = free_side;
        c = remove_factor(c, f);
      } else {
        c.partner[p0.f][p0.s] = p1;
        c.partner[p1.f][p1.s] = p0;
        c = remove_factor(c, f);
      }
      changed = true;
      break;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Symmetry group of Riemann/Weyl intrinsic slots

struct GroupElem {
  std::array<int, 4> perm;  // perm[i] = class position of intrinsic slot i
  int sign;
};

const std::vector<GroupElem>& riemann_group() {
  static const std::vector<GroupElem> table = [] {
    std::vector<GroupElem> elems{GroupElem{{0, 1, 2, 3}, 1}};
    const GroupElem gens[] = {
        GroupElem{{1, 0, 2, 3}, -1},  // first-pair swap
        GroupElem{{0, 1, 3, 2}, -1},  // second-pair swap
        GroupElem{{2, 3, 0, 1}, 1},   // pair interchange
    };
    bool grew = true;
    while (grew) {
      grew = false;
      for (size_t i = 0; i < elems.size(); ++i)
        for (const auto& g : gens) {
          GroupElem h;
          for (int k = 0; k < 4; ++k) h.perm[k] = g.perm[elems[i].perm[k]];
          h.sign = g.sign * elems[i].sign;
          bool found = false;
          for (const auto& e : elems)
            if (e.perm == h.perm) {
              require(e.sign == h.sign, Status::InternalError, "inconsistent symmetry signs");
              found = true;
            }
          if (!found) {
            elems.push_back(h);
            grew = true;
          }
        }
    }
    require(elems.size() == 8, Status::InternalError, "unexpected symmetry group size");
    std::sort(elems.begin(), elems.end(),
              [](const GroupElem& a, const GroupElem& b) { return a.perm < b.perm; });
    return elems;
  }();
  return table;
}

constexpr uint32_t kClassesPerFactor = 8;
constexpr uint32_t kFreeBase = 0x40000000u;

bool has_sign_group(Kind k) { return k == Kind::Riemann || k == Kind::Weyl; }

struct FactorKey {
  int kind;
  int m;
  int label;
  bool operator<(const FactorKey& o) const {
    return std::tie(kind, m, label) < std::tie(o.kind, o.m, o.label);
  }
  bool operator==(const FactorKey& o) const {
    return kind == o.kind && m == o.m && label == o.label;
  }
};

FactorKey key_of(const Factor& f) { return {static_cast<int>(f.kind), f.m, f.label}; }

using EdgeList = std::vector<std::pair<uint32_t, uint32_t>>;

}  // namespace

Canonical canonicalize(const Contraction& input) {
  input.validate();
  DimRatio scale(1);
  Contraction c = eliminate_metrics(input, &scale);

  const int nf = c.num_factors();

  // Group factors by invariant key; canonical factor order is by sorted key.
  std::vector<int> order(nf);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return key_of(c.factors[a]) < key_of(c.factors[b]);
  });
  // Contiguous groups of equal keys in canonical order.
  std::vector<std::pair<int, int>> groups;  // [begin, end) into order
  for (int i = 0; i < nf;) {
    int j = i + 1;
    while (j < nf && key_of(c.factors[order[i]]) == key_of(c.factors[order[j]])) ++j;
    groups.emplace_back(i, j);
    i = j;
  }

  // Sign-group choice per factor (identity for non-Riemann/Weyl kinds).
  std::vector<int> rw_factors;
  for (int f = 0; f < nf; ++f)
    if (has_sign_group(c.factors[f].kind)) rw_factors.push_back(f);

  {
    double combos = 1;
    for (const auto& [b, e] : groups)
      for (int k = 2; k <= e - b; ++k) combos *= k;
    combos *= std::pow(8.0, static_cast<double>(rw_factors.size()));
    require(combos <= 2.0e6, Status::InternalError,
            "canonicalization search space too large");
  }

  // pos_of[orig factor] under the current ordering.
  std::vector<int> pos_of(nf);

  // Current sign-group element per factor (index into riemann_group()).
  std::vector<int> elem_idx(nf, 0);
  const auto& group = riemann_group();

  EdgeList best_edges;
  int best_sign = 0;
  bool found_zero = false;
  bool have_best = false;

  EdgeList edges;
  edges.reserve(64);

  auto node_of = [&](int f, int s) -> uint32_t {
    const Factor& fac = c.factors[f];
    uint32_t cls;
    if (s < fac.m) {
      cls = 0;
    } else {
      int i = s - fac.m;
      if (has_sign_group(fac.kind))
        cls = 1 + static_cast<uint32_t>(group[elem_idx[f]].perm[i]);
      else
        cls = 1;  // symmetric pair (or single-class) kinds
    }
    return static_cast<uint32_t>(pos_of[f]) * kClassesPerFactor + cls;
  };

  auto evaluate_assignment = [&]() {
    edges.clear();
    for (int f = 0; f < nf; ++f)
      for (int s = 0; s < static_cast<int>(c.partner[f].size()); ++s) {
        SlotRef p = c.partner[f][s];
        if (p.is_free_marker()) {
          edges.emplace_back(node_of(f, s), kFreeBase + static_cast<uint32_t>(p.s));
        } else if (SlotRef{f, s} < p) {
          uint32_t a = node_of(f, s), b = node_of(p.f, p.s);
          if (a > b) std::swap(a, b);
          edges.emplace_back(a, b);
        }
      }
    std::sort(edges.begin(), edges.end());
    int sign = 1;
    for (int f : rw_factors) sign *= group[elem_idx[f]].sign;
    if (!have_best || edges < best_edges) {
      best_edges = edges;
      best_sign = sign;
      have_best = true;
    } else if (edges == best_edges && sign != best_sign) {
      found_zero = true;
    }
  };

  // Odometer over sign-group choices, innermost; factor orderings outermost.
  std::vector<std::vector<int>> group_orders;
  for (const auto& [b, e] : groups) {
    std::vector<int> g(order.begin() + b, order.begin() + e);
    group_orders.push_back(g);
  }

  auto run_sign_choices = [&]() {
    size_t k = rw_factors.size();
    std::vector<int> idx(k, 0);
    while (true) {
      for (size_t i = 0; i < k; ++i) elem_idx[rw_factors[i]] = idx[i];
      evaluate_assignment();
      if (found_zero) return;
      size_t carry = 0;
      while (carry < k) {
        if (++idx[carry] < 8) break;
        idx[carry] = 0;
        ++carry;
      }
      if (carry == k) return;
    }
  };

  std::function<void(size_t)> run_orderings = [&](size_t gi) {
    if (found_zero) return;
    if (gi == group_orders.size()) {
      int pos = 0;
      for (const auto& g : group_orders)
        for (int f : g) pos_of[f] = pos++;
      run_sign_choices();
      return;
    }
    auto& g = group_orders[gi];
    std::sort(g.begin(), g.end());
    do {
      run_orderings(gi + 1);
      if (found_zero) return;
    } while (std::next_permutation(g.begin(), g.end()));
  };

  if (nf == 0) {
    Canonical out;
    out.scale = scale;
    out.form = Contraction{};
    out.key = {0u};
    return out;
  }

  run_orderings(0);

  if (found_zero) return Canonical{};

  // Rebuild the canonical representative from the winning edge list. The
  // factor list is the key-sorted multiset; equal-key factors are identical.
  Contraction form;
  for (int i = 0; i < nf; ++i) form.factors.push_back(c.factors[order[i]]);
  form.partner.resize(form.factors.size());
  for (size_t f = 0; f < form.factors.size(); ++f)
    form.partner[f].assign(static_cast<size_t>(form.factors[f].slots()), free_marker(-3));

  std::map<uint32_t, int> next_in_class;  // node -> consumed count
  auto take_slot = [&](uint32_t node) -> SlotRef {
    int pos = static_cast<int>(node / kClassesPerFactor);
    int cls = static_cast<int>(node % kClassesPerFactor);
    const Factor& fac = form.factors[pos];
    int used = next_in_class[node]++;
    int slot;
    if (cls == 0) {
      require(used < fac.m, Status::InternalError, "derivative class overflow");
      slot = used;
    } else if (has_sign_group(fac.kind)) {
      require(used == 0, Status::InternalError, "singleton class overflow");
      slot = fac.m + (cls - 1);
    } else {
      require(used < 2, Status::InternalError, "symmetric class overflow");
      slot = fac.m + used;
    }
    return SlotRef{pos, slot};
  };

  for (const auto& [a, b] : best_edges) {
    if (b >= kFreeBase) {
      SlotRef s = take_slot(a);
      form.partner[s.f][s.s] = free_marker(static_cast<int>(b - kFreeBase));
    } else {
      SlotRef s1 = take_slot(a);
      SlotRef s2 = take_slot(b);
      form.pair_slots(s1, s2);
    }
  }
  form.validate();

  Canonical out;
  out.scale = scale * DimRatio(best_sign);
  out.form = std::move(form);
  out.key.push_back(static_cast<uint32_t>(out.form.factors.size()));
  for (const auto& fac : out.form.factors) {
    out.key.push_back(static_cast<uint32_t>(fac.kind));
    out.key.push_back(static_cast<uint32_t>(fac.m));
    out.key.push_back(static_cast<uint32_t>(fac.label));
  }
  out.key.push_back(static_cast<uint32_t>(best_edges.size()));
  for (const auto& [a, b] : best_edges) {
    out.key.push_back(a);
    out.key.push_back(b);
  }
  return out;
}

std::vector<uint32_t> canonical_key(const Contraction& c) { return canonicalize(c).key; }

bool equal_mod_symmetry(const Contraction& a, const Contraction& b) {
  Canonical ca = canonicalize(a);
  Canonical cb = canonicalize(b);
  if (ca.is_zero() || cb.is_zero()) return ca.is_zero() && cb.is_zero();
  return ca.key == cb.key && ca.scale == cb.scale;
}

std::vector<CollectedTerm> collect_detailed(const LinComb& lc) {
  std::map<std::vector<uint32_t>, CollectedTerm> acc;
  for (const auto& t : lc.terms) {
    Canonical cn = canonicalize(t.contr);
    if (cn.is_zero()) continue;
    DimRatio add = t.coef * cn.scale;
    auto it = acc.find(cn.key);
    if (it == acc.end()) {
      acc.emplace(cn.key, CollectedTerm{cn.key, add, cn.form});
    } else {
      it->second.coef = it->second.coef + add;
    }
  }
  std::vector<CollectedTerm> out;
  for (auto& [k, v] : acc)
    if (!v.coef.is_zero()) out.push_back(std::move(v));
  return out;
}

LinComb collect(const LinComb& lc) {
  LinComb out;
  for (auto& ct : collect_detailed(lc)) out.terms.push_back(Term{ct.coef, ct.form});
  return out;
}

bool lincomb_equal(const LinComb& a, const LinComb& b) {
  return collect(a - b).terms.empty();
}

}  // namespace tc
