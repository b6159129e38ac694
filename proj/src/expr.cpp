#include "expr.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace tc {

int intrinsic_slots(Kind k) {
  switch (k) {
    case Kind::Metric: return 2;
    case Kind::Riemann: return 4;
    case Kind::Ricci: return 2;
    case Kind::ScalarCurv: return 0;
    case Kind::Weyl: return 4;
    case Kind::Schouten: return 2;
    case Kind::ScalarFn: return 0;
    case Kind::AuxFn: return 0;
  }
  fail(Status::InternalError, "unknown factor kind");
}

bool is_curvature(Kind k) {
  switch (k) {
    case Kind::Riemann:
    case Kind::Ricci:
    case Kind::ScalarCurv:
    case Kind::Weyl:
    case Kind::Schouten: return true;
    default: return false;
  }
}

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Metric: return "g";
    case Kind::Riemann: return "Rm";
    case Kind::Ricci: return "Ric";
    case Kind::ScalarCurv: return "R";
    case Kind::Weyl: return "W";
    case Kind::Schouten: return "P";
    case Kind::ScalarFn: return "psi";
    case Kind::AuxFn: return "Omega";
  }
  return "?";
}

std::string Factor::to_string() const {
  std::ostringstream os;
  if (m > 0) os << "D^" << m << " ";
  os << kind_name(kind);
  if (kind == Kind::ScalarFn) os << label;
  return os.str();
}

// ---------------------------------------------------------------------------
// Contraction

Contraction Contraction::of(std::vector<Factor> fs) {
  Contraction c;
  c.factors = std::move(fs);
  c.partner.resize(c.factors.size());
  int next_free = 0;
  for (size_t f = 0; f < c.factors.size(); ++f) {
    c.partner[f].assign(static_cast<size_t>(c.factors[f].slots()), SlotRef{});
    for (auto& p : c.partner[f]) p = free_marker(next_free++);
  }
  return c;
}

void Contraction::pair_slots(SlotRef a, SlotRef b) {
  require(!a.is_free_marker() && !b.is_free_marker(), Status::DomainError,
          "pair_slots needs concrete slots");
  require(!(a == b), Status::DomainError, "cannot pair a slot with itself");
  partner[a.f][a.s] = b;
  partner[b.f][b.s] = a;
}

void Contraction::set_free(SlotRef a, int label) {
  require(label >= 0, Status::DomainError, "free labels must be nonnegative");
  partner[a.f][a.s] = free_marker(label);
}

void Contraction::validate() const {
  require(partner.size() == factors.size(), Status::InternalError, "partner table size mismatch");
  std::set<int> free_seen;
  for (int f = 0; f < num_factors(); ++f) {
    const Factor& fac = factors[f];
    require(fac.m >= 0, Status::DomainError, "negative derivative order");
    require(fac.kind != Kind::Metric || fac.m == 0, Status::DomainError,
            "derivatives of the metric are not representable");
    require(fac.kind != Kind::ScalarFn || fac.label >= 1, Status::DomainError,
            "scalar function factors need a positive label");
    require(static_cast<int>(partner[f].size()) == fac.slots(), Status::InternalError,
            "slot table size mismatch");
    for (int s = 0; s < fac.slots(); ++s) {
      SlotRef p = partner[f][s];
      if (p.is_free_marker()) {
        require(free_seen.insert(p.s).second, Status::DomainError,
                "free label used more than once: " + std::to_string(p.s));
        continue;
      }
      require(p.f >= 0 && p.f < num_factors() && p.s >= 0 && p.s < factors[p.f].slots(),
              Status::InternalError, "pairing out of range");
      require(partner[p.f][p.s] == SlotRef{f, s}, Status::DomainError,
              "pairing is not an involution");
      require(!(p.f == f && p.s == s), Status::DomainError, "slot paired with itself");
    }
  }
}

std::vector<int> Contraction::free_labels() const {
  std::vector<int> out;
  for (const auto& row : partner)
    for (const auto& p : row)
      if (p.is_free_marker()) out.push_back(p.s);
  std::sort(out.begin(), out.end());
  return out;
}

SlotRef Contraction::find_free(int label) const {
  for (int f = 0; f < num_factors(); ++f)
    for (int s = 0; s < static_cast<int>(partner[f].size()); ++s)
      if (partner[f][s].is_free_marker() && partner[f][s].s == label) return SlotRef{f, s};
  fail(Status::DomainError, "free label not present: " + std::to_string(label));
}

int Contraction::internal_edges() const {
  int count = 0;
  for (int f = 0; f < num_factors(); ++f)
    for (int s = 0; s < static_cast<int>(partner[f].size()); ++s) {
      SlotRef p = partner[f][s];
      if (!p.is_free_marker() && p.f == f && p.s > s) ++count;
    }
  return count;
}

// ---------------------------------------------------------------------------
// Builder

ContractionBuilder& ContractionBuilder::add(Kind k, int m, int label) {
  Factor fac{k, m, label};
  c_.factors.push_back(fac);
  c_.partner.emplace_back();
  c_.partner.back().assign(static_cast<size_t>(fac.slots()), free_marker(-1));
  return *this;
}

ContractionBuilder& ContractionBuilder::pair(int f1, int s1, int f2, int s2) {
  c_.pair_slots(SlotRef{f1, s1}, SlotRef{f2, s2});
  return *this;
}

ContractionBuilder& ContractionBuilder::free(int f, int s, int label) {
  c_.set_free(SlotRef{f, s}, label);
  return *this;
}

Contraction ContractionBuilder::build() {
  // Any slot still carrying the placeholder marker is an error.
  for (const auto& row : c_.partner)
    for (const auto& p : row)
      require(!(p.is_free_marker() && p.s < 0), Status::DomainError,
              "builder left a slot unassigned");
  c_.validate();
  return c_;
}

// ---------------------------------------------------------------------------
// Statistics

Stats stats(const Contraction& c) {
  Stats st;
  for (int f = 0; f < c.num_factors(); ++f) {
    const Factor& fac = c.factors[f];
    if (fac.kind != Kind::Metric) ++st.sigma;
    switch (fac.kind) {
      case Kind::Ricci:
        st.delta += 1;
        st.q += 1;
        break;
      case Kind::ScalarCurv:
        st.delta += 2;
        st.q += 1;
        if (fac.m == 0) ++st.delta_bar;
        break;
      case Kind::ScalarFn:
        if (fac.m == 2 && c.partner[f][0] == SlotRef{f, 1}) ++st.delta_bar;
        break;
      default: break;
    }
    switch (fac.kind) {
      case Kind::Riemann:
      case Kind::Weyl:
      case Kind::Ricci:
      case Kind::Schouten:
      case Kind::ScalarCurv: st.weight -= fac.m + 2; break;
      case Kind::ScalarFn:
      case Kind::AuxFn: st.weight -= fac.m; break;
      case Kind::Metric: break;
    }
  }
  st.delta += c.internal_edges();
  return st;
}

bool is_acceptable(const Contraction& c) {
  for (const auto& fac : c.factors)
    if (fac.kind == Kind::ScalarFn && fac.m < 2) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Structural surgery

Contraction add_outer_derivative(const Contraction& c, int f) {
  require(f >= 0 && f < c.num_factors(), Status::DomainError, "factor index out of range");
  require(c.factors[f].kind != Kind::Metric, Status::DomainError,
          "derivatives of the metric are not representable");
  Contraction r = c;
  r.factors[f].m += 1;
  r.partner[f].insert(r.partner[f].begin(), free_marker(-1));
  // Every reference to a slot of factor f now points one position too low.
  for (int g = 0; g < r.num_factors(); ++g)
    for (auto& p : r.partner[g])
      if (!p.is_free_marker() && p.f == f) p.s += 1;
  return r;
}

Contraction remove_derivative_slot(const Contraction& c, int f, int s) {
  require(f >= 0 && f < c.num_factors(), Status::DomainError, "factor index out of range");
  require(s >= 0 && s < c.factors[f].m, Status::DomainError,
          "only derivative slots can be removed");
  require(c.partner[f][s].is_free_marker(), Status::DomainError,
          "detach the slot before removing it");
  Contraction r = c;
  r.factors[f].m -= 1;
  r.partner[f].erase(r.partner[f].begin() + s);
  for (int g = 0; g < r.num_factors(); ++g)
    for (auto& p : r.partner[g])
      if (!p.is_free_marker() && p.f == f && p.s > s) p.s -= 1;
  return r;
}

Contraction replace_factor(const Contraction& c, int f, const std::vector<Factor>& new_factors,
                           const std::map<int, ReplacementSlot>& slot_map,
                           const std::vector<std::pair<ReplacementSlot, ReplacementSlot>>& internal_pairs) {
  require(f >= 0 && f < c.num_factors(), Status::DomainError, "factor index out of range");
  Contraction r;
  // Old factor g != f keeps its position if g < f, shifts down by one if g > f.
  auto remap_old = [&](int g) { return g < f ? g : g - 1; };
  int base = c.num_factors() - 1;  // first index of the appended block
  for (int g = 0; g < c.num_factors(); ++g)
    if (g != f) r.factors.push_back(c.factors[g]);
  for (const auto& nf : new_factors) r.factors.push_back(nf);
  r.partner.resize(r.factors.size());
  for (size_t g = 0; g < r.factors.size(); ++g)
    r.partner[g].assign(static_cast<size_t>(r.factors[g].slots()), free_marker(-1));

  auto mapping_of = [&](int old_slot) -> const ReplacementSlot& {
    auto it = slot_map.find(old_slot);
    require(it != slot_map.end(), Status::DomainError,
            "replace_factor: old slot " + std::to_string(old_slot) + " not mapped");
    return it->second;
  };
  auto is_dropped = [&](int old_slot) { return mapping_of(old_slot).nf < 0; };
  auto target_of = [&](int old_slot) -> SlotRef {
    const ReplacementSlot& rs = mapping_of(old_slot);
    require(rs.nf >= 0, Status::DomainError,
            "replace_factor: dropped slot " + std::to_string(old_slot) + " is still referenced");
    return SlotRef{base + rs.nf, rs.s};
  };

  // Carry over pairings.
  for (int g = 0; g < c.num_factors(); ++g) {
    if (g == f) continue;
    for (int s = 0; s < static_cast<int>(c.partner[g].size()); ++s) {
      SlotRef p = c.partner[g][s];
      SlotRef here{remap_old(g), s};
      if (p.is_free_marker()) {
        r.partner[here.f][here.s] = p;
      } else if (p.f != f) {
        r.partner[here.f][here.s] = SlotRef{remap_old(p.f), p.s};
      } else {
        SlotRef t = target_of(p.s);
        r.partner[here.f][here.s] = t;
        r.partner[t.f][t.s] = here;
      }
    }
  }
  // Pairings and free labels internal to the replaced factor.
  for (int s = 0; s < static_cast<int>(c.partner[f].size()); ++s) {
    SlotRef p = c.partner[f][s];
    if (p.is_free_marker()) {
      SlotRef t = target_of(s);
      r.partner[t.f][t.s] = p;  // keep the free label
    } else if (p.f == f && p.s > s) {
      bool d1 = is_dropped(s), d2 = is_dropped(p.s);
      if (d1 && d2) continue;  // contracted pair consumed
      require(!d1 && !d2, Status::DomainError,
              "replace_factor: a dropped slot must be paired with a dropped slot");
      r.pair_slots(target_of(s), target_of(p.s));
    }
  }
  for (const auto& [a, b] : internal_pairs)
    r.pair_slots(SlotRef{base + a.nf, a.s}, SlotRef{base + b.nf, b.s});

  for (const auto& row : r.partner)
    for (const auto& p : row)
      require(!(p.is_free_marker() && p.s < 0), Status::DomainError,
              "replace_factor left a slot unassigned");
  r.validate();
  return r;
}

// ---------------------------------------------------------------------------
// LinComb

LinComb LinComb::single(DimRatio coef, Contraction c) {
  LinComb lc;
  lc.terms.push_back(Term{std::move(coef), std::move(c)});
  return lc;
}

LinComb LinComb::operator+(const LinComb& o) const {
  LinComb r = *this;
  r.terms.insert(r.terms.end(), o.terms.begin(), o.terms.end());
  return r;
}

LinComb LinComb::operator-(const LinComb& o) const { return *this + o.scaled(DimRatio(-1)); }

LinComb LinComb::scaled(const DimRatio& s) const {
  LinComb r = *this;
  for (auto& t : r.terms) t.coef = t.coef * s;
  return r;
}

}  // namespace tc
