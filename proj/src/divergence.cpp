#include "divergence.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <utility>

#include "json.hpp"

#include "canon.hpp"
#include "error.hpp"
#include "rewrite.hpp"
#include "textio.hpp"

namespace tc {

namespace {

bool same_slot(SlotRef a, SlotRef b) { return a.f == b.f && a.s == b.s; }

bool is_derivative_slot(const Contraction& c, SlotRef r) {
  return r.s < c.factors[r.f].m;
}

// One contraction edge, listed once, oriented so that `d` is the derivative
// endpoint preferred for erasure (the lexicographically first one when both
// ends are derivatives).
struct Edge {
  SlotRef a;
  SlotRef b;
  bool same_factor = false;
  int derivs = 0;
  SlotRef d{-1, -1};
  SlotRef e{-1, -1};
};

std::vector<Edge> list_edges(const Contraction& c) {
  std::vector<Edge> out;
  for (int f = 0; f < c.num_factors(); ++f) {
    int total = c.factors[f].slots();
    for (int s = 0; s < total; ++s) {
      SlotRef a{f, s};
      SlotRef b = c.partner_of(f, s);
      if (b.is_free_marker()) continue;
      if (!(a < b)) continue;
      Edge ed;
      ed.a = a;
      ed.b = b;
      ed.same_factor = (a.f == b.f);
      bool ad = is_derivative_slot(c, a);
      bool bd = is_derivative_slot(c, b);
      ed.derivs = (ad ? 1 : 0) + (bd ? 1 : 0);
      if (ad) {
        ed.d = a;
        ed.e = b;
      } else if (bd) {
        ed.d = b;
        ed.e = a;
      }
      out.push_back(ed);
    }
  }
  return out;
}

// Erasure priority: deepest factor first (most derivative slots), then
// lowest factor index, then lowest erased slot.
std::tuple<int, int, int> erase_order(const Contraction& c, const Edge& ed) {
  return {-c.factors[ed.d.f].m, ed.d.f, ed.d.s};
}

// One integration by parts applied to the term coef * t at the given edge:
// the step to record, the signed replacement terms that continue in the
// working sum, and the signed entry for the corrections ledger (empty unless
// the policy tracks reordering).
struct IbpOutcome {
  DivStep step;
  LinComb continuing;
  LinComb corrections;
};

IbpOutcome ibp_move(const Contraction& t, const DimRatio& coef,
                    std::pair<SlotRef, SlotRef> edge, const GradePolicy& policy) {
  IbpOutcome out;
  out.step = erase_and_free(t, edge);
  out.step.coefficient = coef;
  const SlotRef d = out.step.erased;
  const Contraction& v = out.step.vector_field;

  Contraction restore;
  for (int f = 0; f < v.num_factors(); ++f) {
    if (v.factors[f].kind == Kind::Metric) continue;
    Contraction u = add_outer_derivative(v, f);
    u.pair_slots(SlotRef{f, 0}, u.find_free(0));
    if (f == d.f) {
      restore = std::move(u);
    } else {
      out.continuing.terms.push_back(Term{DimRatio(-1) * coef, std::move(u)});
    }
  }

  if (policy.track && d.s > 0) {
    // The restored derivative sits outermost; move it back to the erased
    // position by adjacent transpositions, banking the exact commutator
    // terms each transposition sheds.
    Contraction main = restore;
    LinComb shed;
    for (int p = 0; p < d.s; ++p) {
      LinComb sw = commute_derivatives(main, d.f, {p, p + 1}, policy);
      bool found = false;
      for (Term& u : sw.terms) {
        if (u.contr.num_factors() == main.num_factors()) {
          require(!found && (u.coef - DimRatio(1)).is_zero(), Status::InternalError,
                  "derivative transposition lost its principal term");
          main = std::move(u.contr);
          found = true;
        } else {
          shed.terms.push_back(std::move(u));
        }
      }
      require(found, Status::InternalError, "derivative transposition lost its principal term");
    }
    require(equal_mod_symmetry(main, t), Status::InternalError,
            "reordered restore term does not match its source");
    out.corrections = shed.scaled(DimRatio(-1) * coef);
  }
  return out;
}

LinComb convert_internal(const Term& t, int at) {
  Kind k = t.contr.factors[at].kind;
  LinComb repl;
  switch (k) {
    case Kind::Riemann: repl = riemann_trace(t.contr, at); break;
    case Kind::Ricci: repl = ricci_trace(t.contr, at); break;
    case Kind::Weyl: repl = weyl_decompose(t.contr, at); break;
    case Kind::Schouten:
      repl = t.contr.factors[at].m >= 1 ? contracted_bianchi(t.contr, at)
                                        : schouten_to_ricci(t.contr, at);
      break;
    default:
      fail(Status::StuckError, "internal contraction admits neither an erasure nor a conversion");
  }
  return repl.scaled(t.coef);
}

long even_dimension(const Contraction& c) {
  long n = 4;
  for (const Factor& f : c.factors) n += f.m;
  require(n % 2 == 0 && n >= 6, Status::DomainError,
          "the derivative count does not match an even dimension of at least six");
  return n;
}

// Shared terminal shape of the quadratic reductions: one derivative of each
// factor contracted into the other factor's first intrinsic slot and one
// into its own last intrinsic slot.
Contraction cross_divergence_link(long n) {
  require(n >= 8 && n % 2 == 0, Status::DomainError,
          "the linked cross shape needs an even dimension of at least eight");
  int m = static_cast<int>(n / 2 - 2);
  ContractionBuilder b;
  b.add(Kind::Weyl, m);
  b.add(Kind::Weyl, m);
  for (int i = 0; i + 2 < m; ++i) b.pair(0, i, 1, i);
  b.pair(0, m - 2, 1, m);
  b.pair(0, m - 1, 0, m + 3);
  b.pair(1, m - 2, 0, m);
  b.pair(1, m - 1, 1, m + 3);
  b.pair(0, m + 1, 1, m + 1);
  b.pair(0, m + 2, 1, m + 2);
  return b.build();
}

// Exact coefficient ratio a / b in the joint Bianchi quotient; empty when
// the reduced forms are not proportional.
std::optional<DimRatio> quotient_ratio(const LinComb& a, const LinComb& b) {
  std::vector<LinComb> rs = normalize_jointly({a, b}, Ruleset::Bianchi);
  const LinComb& ra = rs[0];
  const LinComb& rb = rs[1];
  if (ra.terms.empty()) return DimRatio(0);
  if (rb.terms.empty() || ra.terms.size() != rb.terms.size()) return std::nullopt;
  DimRatio ratio = ra.terms[0].coef / rb.terms[0].coef;
  for (size_t i = 0; i < ra.terms.size(); ++i) {
    if (canonical_key(ra.terms[i].contr) != canonical_key(rb.terms[i].contr))
      return std::nullopt;
    if (!(ra.terms[i].coef - ratio * rb.terms[i].coef).is_zero()) return std::nullopt;
  }
  return ratio;
}

}  // namespace

LinComb free_index_divergence(const Contraction& v) {
  v.validate();
  std::vector<int> frees = v.free_labels();
  require(frees.size() == 1, Status::DomainError,
          "the divergence needs a field with exactly one free slot");
  int label = frees[0];
  LinComb out;
  for (int f = 0; f < v.num_factors(); ++f) {
    if (v.factors[f].kind == Kind::Metric) continue;
    Contraction t = add_outer_derivative(v, f);
    t.pair_slots(SlotRef{f, 0}, t.find_free(label));
    out.terms.push_back(Term{DimRatio(1), std::move(t)});
  }
  return out;
}

DivStep erase_and_free(const Contraction& c, std::pair<SlotRef, SlotRef> edge) {
  c.validate();
  SlotRef a = edge.first;
  SlotRef b = edge.second;
  require(!a.is_free_marker() && !b.is_free_marker(), Status::DomainError,
          "the edge must join two held slots");
  SlotRef pa = c.partner_of(a.f, a.s);
  require(same_slot(pa, b), Status::DomainError, "the named slots are not contracted together");
  SlotRef d, e;
  if (is_derivative_slot(c, a)) {
    d = a;
    e = b;
  } else if (is_derivative_slot(c, b)) {
    d = b;
    e = a;
  } else {
    fail(Status::DomainError,
         "neither endpoint is a derivative slot; apply a trace identity first");
  }
  DivStep st;
  st.source = c;
  st.erased = d;
  st.freed = e;
  st.coefficient = DimRatio(1);
  Contraction v = c;
  v.set_free(d, 1);
  v.set_free(e, 0);
  st.vector_field = remove_derivative_slot(v, d.f, d.s);
  st.vector_field.validate();
  return st;
}

LinComb DivCertificate::divergence_sum() const {
  LinComb s = LinComb::zero();
  for (const DivStep& st : steps)
    s = s + free_index_divergence(st.vector_field).scaled(st.coefficient);
  return s;
}

LinComb DivCertificate::residual() const {
  return LinComb::single(DimRatio(1), input) - divergence_sum() - remainder - corrections;
}

std::string DivCertificate::to_json() const {
  nlohmann::json j;
  j["input"] = print_contraction(input);
  j["steps"] = nlohmann::json::array();
  for (const DivStep& st : steps) {
    nlohmann::json s;
    s["erased"] = {st.erased.f, st.erased.s};
    s["freed"] = {st.freed.f, st.freed.s};
    s["coefficient"] = st.coefficient.to_string();
    s["vectorField"] = print_contraction(st.vector_field);
    j["steps"].push_back(std::move(s));
  }
  j["remainder"] = print_lincomb(remainder);
  j["corrections"] = print_lincomb(corrections);
  return j.dump(2);
}

DivCertificate eliminate_internal_contractions(const Contraction& c, const GradePolicy& policy) {
  c.validate();
  require(c.is_complete(), Status::DomainError, "the input must be a complete contraction");
  DivCertificate cert;
  cert.input = c;
  cert.remainder = LinComb::zero();
  cert.corrections = LinComb::zero();

  std::deque<Term> work;
  for (Term& t : collect(LinComb::single(DimRatio(1), c)).terms) work.push_back(std::move(t));
  LinComb settled = LinComb::zero();

  long guard = 0;
  while (!work.empty()) {
    require(++guard <= 100000, Status::InternalError,
            "internal-contraction elimination exceeded its cap");
    Term t = std::move(work.front());
    work.pop_front();

    std::optional<Edge> erasable;
    std::optional<Edge> convertible;
    for (const Edge& ed : list_edges(t.contr)) {
      if (!ed.same_factor) continue;
      if (ed.derivs >= 1) {
        if (!erasable || erase_order(t.contr, ed) < erase_order(t.contr, *erasable))
          erasable = ed;
      } else if (!convertible) {
        convertible = ed;
      }
    }

    if (erasable) {
      IbpOutcome mv = ibp_move(t.contr, t.coef, {erasable->d, erasable->e}, policy);
      cert.steps.push_back(std::move(mv.step));
      cert.corrections = cert.corrections + mv.corrections;
      for (Term& u : collect(mv.continuing).terms) work.push_back(std::move(u));
    } else if (convertible) {
      for (Term& u : collect(convert_internal(t, convertible->a.f)).terms)
        work.push_back(std::move(u));
    } else {
      settled.terms.push_back(std::move(t));
    }
  }
  cert.remainder = collect(settled);
  return cert;
}

namespace {

void require_two_weyl(const Contraction& c) {
  c.validate();
  require(c.is_complete() && c.num_factors() == 2 && c.factors[0].kind == Kind::Weyl &&
              c.factors[1].kind == Kind::Weyl,
          Status::DomainError, "expected a complete contraction of two Weyl factors");
}

// The ordered edges of a divergence route, each referring to the collected
// representative of its state, plus whether the last move's continuing term
// cancelled outright (a route whose remainder is zero).
struct ErasureRoute {
  std::vector<std::pair<SlotRef, SlotRef>> edges;
  bool vanished = false;
};

// Breadth-first search from the collected representative of c over the
// states reachable by erasing one derivative endpoint at a time, stopping at
// the first state whose canonical key lies in `landing` or whose continuing
// term cancels. Erasing either endpoint of a derivative-derivative pair can
// land on inequivalent shapes, so both orientations are explored; a greedy
// descent is not safe here because only some branches reach a landing shape.
ErasureRoute find_erasure_route(const Contraction& c,
                                const std::set<std::vector<uint32_t>>& landing, int max_depth,
                                long max_expansions) {
  LinComb start = collect(LinComb::single(DimRatio(1), c));
  if (start.terms.empty()) return {{}, true};
  if (landing.count(canonical_key(start.terms[0].contr))) return {{}, false};

  struct Node {
    Contraction state;
    std::vector<std::pair<SlotRef, SlotRef>> edges;
  };
  std::deque<Node> queue;
  std::set<std::vector<uint32_t>> seen;
  queue.push_back(Node{start.terms[0].contr, {}});
  seen.insert(canonical_key(start.terms[0].contr));

  long expansions = 0;
  while (!queue.empty()) {
    Node nd = std::move(queue.front());
    queue.pop_front();
    if (static_cast<int>(nd.edges.size()) >= max_depth) continue;
    require(++expansions <= max_expansions, Status::StuckError,
            "no divergence route to a recognized shape");
    for (const Edge& ed : list_edges(nd.state)) {
      if (ed.derivs == 0) continue;
      std::vector<std::pair<SlotRef, SlotRef>> moves;
      moves.emplace_back(ed.d, ed.e);
      if (ed.derivs == 2 && !ed.same_factor) moves.emplace_back(ed.e, ed.d);
      for (const auto& mvp : moves) {
        IbpOutcome mv = ibp_move(nd.state, DimRatio(1), mvp, GradePolicy{});
        require(mv.continuing.terms.size() == 1, Status::InternalError,
                "a two-factor erasure split into several terms");
        LinComb child = collect(mv.continuing);
        std::vector<std::pair<SlotRef, SlotRef>> edges = nd.edges;
        edges.push_back(mvp);
        if (child.terms.empty()) return {std::move(edges), true};
        std::vector<uint32_t> key = canonical_key(child.terms[0].contr);
        if (landing.count(key)) return {std::move(edges), false};
        if (!seen.insert(std::move(key)).second) continue;
        queue.push_back(Node{child.terms[0].contr, std::move(edges)});
      }
    }
  }
  fail(Status::StuckError, "no divergence route to a recognized shape");
}

// Replay a found route from c, recording every step in the certificate.
// Returns the final continuing term (zero for a vanished route). The search
// stored edges against collected representatives, so each hop re-collects.
LinComb replay_route(DivCertificate& cert, const Contraction& c, const ErasureRoute& route,
                     const GradePolicy& policy) {
  LinComb state = collect(LinComb::single(DimRatio(1), c));
  for (size_t k = 0; k < route.edges.size(); ++k) {
    require(state.terms.size() == 1, Status::InternalError, "certificate replay diverged");
    IbpOutcome mv =
        ibp_move(state.terms[0].contr, state.terms[0].coef, route.edges[k], policy);
    cert.steps.push_back(std::move(mv.step));
    cert.corrections = cert.corrections + mv.corrections;
    state = collect(mv.continuing);
  }
  bool want_empty = route.vanished;
  require(state.terms.empty() == want_empty, Status::InternalError,
          "certificate replay diverged");
  return state;
}

}  // namespace

std::pair<DivCertificate, LinComb> reduce_quadratic_weyl(const Contraction& c) {
  require_two_weyl(c);
  long n = even_dimension(c);
  int half = static_cast<int>(n / 2);

  std::vector<uint32_t> key = canonical_key(c);
  bool known = false;
  if (n >= 8 && key == canonical_key(bare_factor_instance(n))) known = true;
  for (int x = 0; !known && x <= half - 4; ++x)
    known = key == canonical_key(double_divergence_instance(n, x));
  for (int x = 0; !known && x <= half - 3; ++x)
    known = key == canonical_key(divergence_pair_instance(n, x));
  for (int x = 0; !known && x <= half - 4; ++x)
    known = key == canonical_key(linked_divergence_instance(n, x));
  for (int x = 0; !known && x <= half - 4; ++x)
    known = key == canonical_key(adjacent_divergence_instance(n, x));
  require(known, Status::ShapeError,
          "unrecognized input: failed the bare factor, double divergence, divergence pair, "
          "linked divergence, and adjacent divergence shape tests");

  std::set<std::vector<uint32_t>> terminal;
  terminal.insert(canonical_key(quadratic_divergence_norm(n)));
  if (n >= 8) terminal.insert(canonical_key(cross_divergence_link(n)));

  DivCertificate cert;
  cert.input = c;
  cert.corrections = LinComb::zero();

  ErasureRoute route =
      find_erasure_route(c, terminal, static_cast<int>(n / 2 + 3), 20000);
  LinComb finals = replay_route(cert, c, route, GradePolicy{});

  LinComb q = LinComb::single(DimRatio(1), quadratic_divergence_norm(n));
  std::optional<DimRatio> mu = quotient_ratio(finals, q);
  require(mu.has_value(), Status::StuckError,
          "the reduced form is not a multiple of the canonical quadratic");
  cert.remainder = q.scaled(*mu);
  return {cert, cert.remainder};
}

std::pair<DivCertificate, DimRatio> reduce_to_cross_quadratic(const Contraction& c) {
  require_two_weyl(c);
  long n = even_dimension(c);
  require(n >= 8, Status::DomainError, "the cross quadratic needs a dimension of at least eight");

  DivCertificate cert;
  cert.input = c;
  cert.remainder = LinComb::zero();
  cert.corrections = LinComb::zero();

  std::set<std::vector<uint32_t>> landing;
  landing.insert(canonical_key(quadratic_divergence_norm(n)));
  landing.insert(canonical_key(cross_divergence_link(n)));

  // Search for a divergence route onto a shape whose ratio to the canonical
  // quadratic is known to the relation span, then replay it with reordering
  // tracked so the certificate carries its exact correction terms.
  GradePolicy tracked;
  tracked.track = true;
  ErasureRoute route = find_erasure_route(c, landing, 6, 4000);
  LinComb landed = replay_route(cert, c, route, tracked);
  if (landed.terms.empty()) return {cert, DimRatio(0)};

  Contraction qshape = quadratic_divergence_norm(n);
  std::optional<DimRatio> rho =
      quotient_ratio(landed, LinComb::single(DimRatio(1), qshape));
  require(rho.has_value(), Status::StuckError,
          "the landing shape is not a multiple of the canonical quadratic");

  // Continue from the canonical quadratic itself: integrating its two
  // internal divergences by parts lands on the cross quadratic.
  std::vector<uint32_t> cross_key = canonical_key(quadratic_cross(n));
  Term tail{*rho, qshape};
  long guard = 0;
  while (canonical_key(tail.contr) != cross_key) {
    require(++guard <= 8, Status::InternalError, "the tail reduction did not close");
    std::optional<Edge> pick;
    for (const Edge& ed : list_edges(tail.contr))
      if (ed.same_factor && ed.derivs == 1 &&
          (!pick || erase_order(tail.contr, ed) < erase_order(tail.contr, *pick)))
        pick = ed;
    require(pick.has_value(), Status::InternalError, "the tail reduction ran out of moves");
    IbpOutcome mv = ibp_move(tail.contr, tail.coef, {pick->d, pick->e}, tracked);
    cert.steps.push_back(std::move(mv.step));
    cert.corrections = cert.corrections + mv.corrections;
    LinComb cont = collect(mv.continuing);
    require(cont.terms.size() == 1, Status::InternalError, "certificate replay diverged");
    tail = cont.terms[0];
  }

  LinComb cross_unit = collect(LinComb::single(DimRatio(1), quadratic_cross(n)));
  require(cross_unit.terms.size() == 1, Status::InternalError, "the cross quadratic collapsed");
  DimRatio mu = tail.coef / cross_unit.terms[0].coef;
  cert.remainder = LinComb::single(mu, quadratic_cross(n));
  return {cert, mu};
}

namespace {

int find_scalar_factor(const Contraction& c, int label) {
  int found = -1;
  for (int f = 0; f < c.num_factors(); ++f) {
    if (c.factors[f].kind == Kind::ScalarFn && c.factors[f].label == label) {
      require(found < 0, Status::DomainError, "several scalar factors carry the transfer label");
      found = f;
    }
  }
  require(found >= 0, Status::DomainError, "no scalar factor carries the transfer label");
  return found;
}

}  // namespace

LinComb silly_integrate_by_parts(const LinComb& lc, int label) {
  LinComb out = LinComb::zero();
  for (const Term& t0 : lc.terms) {
    t0.contr.validate();
    require(t0.contr.is_complete(), Status::DomainError,
            "every term must be a complete contraction");
    find_scalar_factor(t0.contr, label);

    LinComb cur = LinComb::single(t0.coef, t0.contr);
    long guard = 0;
    while (true) {
      require(++guard <= 200000, Status::InternalError,
              "derivative transfer exceeded its cap");
      int idx = -1;
      int psi = -1;
      for (size_t i = 0; i < cur.terms.size() && idx < 0; ++i) {
        int p = find_scalar_factor(cur.terms[i].contr, label);
        if (cur.terms[i].contr.factors[p].m > 0) {
          idx = static_cast<int>(i);
          psi = p;
        }
      }
      if (idx < 0) break;
      Term t = std::move(cur.terms[idx]);
      cur.terms.erase(cur.terms.begin() + idx);
      SlotRef d{psi, 0};
      SlotRef e = t.contr.partner_of(psi, 0);
      require(!e.is_free_marker(), Status::DomainError,
              "every term must be a complete contraction");
      // Drop the divergence piece of the move; only the transfers continue.
      IbpOutcome mv = ibp_move(t.contr, t.coef, {d, e}, GradePolicy{});
      cur = cur + mv.continuing;
      if (cur.terms.size() > 4096) cur = collect(cur);
    }
    out = out + cur;
  }
  return collect(out);
}

LinComb select_sublinear(const LinComb& lc,
                         const std::function<bool(const Contraction&)>& pred) {
  LinComb out = LinComb::zero();
  for (const CollectedTerm& t : collect_detailed(lc))
    if (pred(t.form)) out.terms.push_back(Term{t.coef, t.form});
  return out;
}

// --- reference shapes ----------------------------------------------------------

namespace {

int half_dimension(long n, long least) {
  require(n >= least && n % 2 == 0, Status::DomainError,
          "the shape needs an even dimension in its valid range");
  return static_cast<int>(n / 2);
}

}  // namespace

Contraction quadratic_gradient_norm(long n) {
  int m = half_dimension(n, 6) - 2;
  ContractionBuilder b;
  b.add(Kind::Weyl, m);
  b.add(Kind::Weyl, m);
  for (int i = 0; i < m; ++i) b.pair(0, i, 1, i);
  for (int t = 0; t < 4; ++t) b.pair(0, m + t, 1, m + t);
  return b.build();
}

Contraction quadratic_cross(long n) {
  int m = half_dimension(n, 6) - 2;
  ContractionBuilder b;
  b.add(Kind::Weyl, m);
  b.add(Kind::Weyl, m);
  for (int i = 0; i + 1 < m; ++i) b.pair(0, i, 1, i);
  b.pair(0, m - 1, 1, m);
  b.pair(1, m - 1, 0, m);
  for (int t = 1; t < 4; ++t) b.pair(0, m + t, 1, m + t);
  return b.build();
}

Contraction quadratic_divergence_norm(long n) {
  int m = half_dimension(n, 6) - 2;
  ContractionBuilder b;
  b.add(Kind::Weyl, m);
  b.add(Kind::Weyl, m);
  for (int i = 0; i + 1 < m; ++i) b.pair(0, i, 1, i);
  b.pair(0, m - 1, 0, m);
  b.pair(1, m - 1, 1, m);
  for (int t = 1; t < 4; ++t) b.pair(0, m + t, 1, m + t);
  return b.build();
}

Contraction quadratic_double_cross(long n) {
  int m = half_dimension(n, 8) - 2;
  ContractionBuilder b;
  b.add(Kind::Weyl, m);
  b.add(Kind::Weyl, m);
  for (int i = 0; i + 2 < m; ++i) b.pair(0, i, 1, i);
  b.pair(0, m - 2, 1, m);
  b.pair(0, m - 1, 1, m + 3);
  b.pair(1, m - 2, 0, m);
  b.pair(1, m - 1, 0, m + 3);
  b.pair(0, m + 1, 1, m + 1);
  b.pair(0, m + 2, 1, m + 2);
  return b.build();
}

Contraction bare_factor_instance(long n) {
  int half = half_dimension(n, 8);
  int m = static_cast<int>(n) - 4;
  ContractionBuilder b;
  b.add(Kind::Weyl, 0);
  b.add(Kind::Weyl, m);
  for (int i = 0; i < half - 3; ++i) b.pair(1, 2 * i, 1, 2 * i + 1);
  b.pair(1, m - 2, 0, 0);
  b.pair(1, m - 1, 1, m);
  for (int t = 1; t < 4; ++t) b.pair(0, t, 1, m + t);
  return b.build();
}

Contraction double_divergence_instance(long n, int x) {
  int half = half_dimension(n, 8);
  require(x >= 0 && x <= half - 4, Status::DomainError, "the exponent is out of range");
  int y = half - 4 - x;
  int m0 = 2 * x + 2;
  int m1 = 2 * y + 2;
  ContractionBuilder b;
  b.add(Kind::Weyl, m0);
  b.add(Kind::Weyl, m1);
  for (int i = 0; i < x; ++i) b.pair(0, 2 * i, 0, 2 * i + 1);
  for (int i = 0; i < y; ++i) b.pair(1, 2 * i, 1, 2 * i + 1);
  b.pair(0, 2 * x, 0, m0);
  b.pair(0, 2 * x + 1, 0, m0 + 2);
  b.pair(1, 2 * y, 1, m1);
  b.pair(1, 2 * y + 1, 1, m1 + 2);
  b.pair(0, m0 + 1, 1, m1 + 1);
  b.pair(0, m0 + 3, 1, m1 + 3);
  return b.build();
}

Contraction divergence_pair_instance(long n, int x) {
  int half = half_dimension(n, 6);
  require(x >= 0 && x <= half - 3, Status::DomainError, "the exponent is out of range");
  int y = half - 3 - x;
  int m0 = 2 * x + 1;
  int m1 = 2 * y + 1;
  ContractionBuilder b;
  b.add(Kind::Weyl, m0);
  b.add(Kind::Weyl, m1);
  for (int i = 0; i < x; ++i) b.pair(0, 2 * i, 0, 2 * i + 1);
  for (int i = 0; i < y; ++i) b.pair(1, 2 * i, 1, 2 * i + 1);
  b.pair(0, 2 * x, 0, m0);
  b.pair(1, 2 * y, 1, m1);
  for (int t = 1; t < 4; ++t) b.pair(0, m0 + t, 1, m1 + t);
  return b.build();
}

Contraction linked_divergence_instance(long n, int x) {
  int half = half_dimension(n, 8);
  require(x >= 0 && x <= half - 4, Status::DomainError, "the exponent is out of range");
  int y = half - 4 - x;
  int m0 = 2 * x + 2;
  int m1 = 2 * y + 2;
  ContractionBuilder b;
  b.add(Kind::Weyl, m0);
  b.add(Kind::Weyl, m1);
  for (int i = 0; i < x; ++i) b.pair(0, 2 * i, 0, 2 * i + 1);
  for (int i = 0; i < y; ++i) b.pair(1, 2 * i, 1, 2 * i + 1);
  b.pair(0, 2 * x, 1, 2 * y);
  b.pair(0, 2 * x + 1, 0, m0);
  b.pair(1, 2 * y + 1, 1, m1);
  for (int t = 1; t < 4; ++t) b.pair(0, m0 + t, 1, m1 + t);
  return b.build();
}

Contraction adjacent_divergence_instance(long n, int x) {
  int half = half_dimension(n, 8);
  require(x >= 0 && x <= half - 4, Status::DomainError, "the exponent is out of range");
  int y = half - 4 - x;
  int m0 = 2 * x + 2;
  int m1 = 2 * y + 2;
  ContractionBuilder b;
  b.add(Kind::Weyl, m0);
  b.add(Kind::Weyl, m1);
  for (int i = 0; i < x; ++i) b.pair(0, 2 * i, 0, 2 * i + 1);
  for (int i = 0; i < y; ++i) b.pair(1, 2 * i, 1, 2 * i + 1);
  b.pair(0, 2 * x, 1, m1 + 1);
  b.pair(0, 2 * x + 1, 0, m0);
  b.pair(1, 2 * y, 0, m0 + 1);
  b.pair(1, 2 * y + 1, 1, m1);
  b.pair(0, m0 + 2, 1, m1 + 2);
  b.pair(0, m0 + 3, 1, m1 + 3);
  return b.build();
}

}  // namespace tc
