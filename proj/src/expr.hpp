#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ratcoef.hpp"

namespace tc {

// Tensor factor kinds. "ScalarCurv" is the scalar curvature, "ScalarFn" an
// auxiliary scalar function psi_h (labelled), "AuxFn" the ambient auxiliary
// scalar. Metric factors are eliminated eagerly during collection.
enum class Kind : uint8_t {
  Metric = 0,
  Riemann = 1,
  Ricci = 2,
  ScalarCurv = 3,
  Weyl = 4,
  Schouten = 5,
  ScalarFn = 6,
  AuxFn = 7,
};

int intrinsic_slots(Kind k);
bool is_curvature(Kind k);
const char* kind_name(Kind k);

// One tensor factor nabla^(m) T. Slots 0..m-1 are the derivative block
// (outermost derivative first), followed by the intrinsic slots of T.
struct Factor {
  Kind kind = Kind::Metric;
  int m = 0;
  int label = 0;  // ScalarFn only: the psi subscript (>= 1)

  int slots() const { return m + intrinsic_slots(kind); }
  bool operator==(const Factor& o) const {
    return kind == o.kind && m == o.m && label == o.label;
  }
  std::string to_string() const;
};

// Slot address, or a free-slot marker when f < 0 (then s is the free label).
struct SlotRef {
  int f = -1;
  int s = -1;

  bool is_free_marker() const { return f < 0; }
  bool operator==(const SlotRef& o) const { return f == o.f && s == o.s; }
  bool operator<(const SlotRef& o) const { return f != o.f ? f < o.f : s < o.s; }
};

inline SlotRef free_marker(int label) { return SlotRef{-1, label}; }

// A (possibly partial) contraction: tensor product of factors with a
// pairing on slots. Every slot is either paired with exactly one other slot
// or free (carrying a stable free label).
struct Contraction {
  std::vector<Factor> factors;
  std::vector<std::vector<SlotRef>> partner;

  static Contraction of(std::vector<Factor> fs);

  int num_factors() const { return static_cast<int>(factors.size()); }
  SlotRef partner_of(int f, int s) const { return partner[f][s]; }
  void pair_slots(SlotRef a, SlotRef b);
  void set_free(SlotRef a, int label);

  // Every slot paired or free, involution consistent, free labels unique,
  // metric factors underived.
  void validate() const;

  std::vector<int> free_labels() const;      // sorted
  SlotRef find_free(int label) const;        // fails if absent
  bool is_complete() const { return free_labels().empty(); }

  // Number of pairing edges internal to a single factor.
  int internal_edges() const;
  bool operator==(const Contraction& o) const {
    return factors == o.factors && partner == o.partner;
  }
};

// Convenience builder used by tests and shape constructors.
class ContractionBuilder {
 public:
  ContractionBuilder& add(Kind k, int m, int label = 0);
  ContractionBuilder& pair(int f1, int s1, int f2, int s2);
  ContractionBuilder& free(int f, int s, int label);
  Contraction build();  // validates

 private:
  Contraction c_;
};

struct Stats {
  int sigma = 0;      // non-metric factor count
  int delta = 0;      // internal contractions (plus implicit Ricci/Scalar traces)
  int delta_bar = 0;  // factors that are exactly a pure Laplacian of psi, or scalar curvature
  int q = 0;          // Ricci + scalar-curvature factor count
  long weight = 0;    // conformal weight

  bool operator==(const Stats& o) const {
    return sigma == o.sigma && delta == o.delta && delta_bar == o.delta_bar && q == o.q &&
           weight == o.weight;
  }
};

Stats stats(const Contraction& c);
// Every scalar-function factor carries at least two derivatives.
bool is_acceptable(const Contraction& c);

// --- structural surgery helpers -------------------------------------------

// Insert a new outermost derivative slot on factor f. Existing slots of f
// shift up by one; the new slot is (f, 0) and is left unpaired (caller pairs
// or frees it). Other factors are untouched.
Contraction add_outer_derivative(const Contraction& c, int f);

// Remove derivative slot (f, s); its pairing must have been detached by the
// caller (slot must be free). Frees nothing else.
Contraction remove_derivative_slot(const Contraction& c, int f, int s);

// Replace factor f by a list of new factors appended at the end (factor f
// removed, remaining factors keep their relative order and the new ones
// follow). slot_map sends each old slot of f to a slot of the appended
// factors, given in coordinates relative to the appended block (index into
// new_factors, slot). An old slot may instead map to ReplacementSlot{-1, -1}
// (dropped); its partner must then be another dropped slot of the same
// factor, i.e. the contracted pair is consumed by the rewrite.
// internal_pairs are extra pairings among the appended factors, same
// coordinates. Unmapped new slots must be covered by internal_pairs.
struct ReplacementSlot {
  int nf = 0;  // index into the new factor block
  int s = 0;
};
Contraction replace_factor(const Contraction& c, int f, const std::vector<Factor>& new_factors,
                           const std::map<int, ReplacementSlot>& slot_map,
                           const std::vector<std::pair<ReplacementSlot, ReplacementSlot>>& internal_pairs);

// --- linear combinations ----------------------------------------------------

struct Term {
  DimRatio coef;
  Contraction contr;
};

struct LinComb {
  std::vector<Term> terms;

  static LinComb zero() { return {}; }
  static LinComb single(DimRatio coef, Contraction c);

  bool is_structurally_zero() const { return terms.empty(); }
  LinComb operator+(const LinComb& o) const;
  LinComb operator-(const LinComb& o) const;
  LinComb scaled(const DimRatio& s) const;
};

// Grade policy for operations that work modulo longer terms. sigma_max is
// the length at and below which terms are kept; longer terms are either
// discarded or routed to a correction ledger.
struct GradePolicy {
  int sigma_max = 1 << 20;
  bool track = false;
};

}  // namespace tc
