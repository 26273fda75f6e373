#ifndef ARID__IDENTIFY_HPP_
#define ARID__IDENTIFY_HPP_

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "arid/fixing.hpp"
#include "arid/graph.hpp"

namespace arid
{

// ---------------------------------------------------------------------------
// strategy selection
// ---------------------------------------------------------------------------

enum class IdKind { adjustment, primal_district, sequential_pfix, nested_ipw, not_identifiable };

inline const char * to_string(IdKind k)
{
  switch (k) {
    case IdKind::adjustment: return "adjustment";
    case IdKind::primal_district: return "primal_district";
    case IdKind::sequential_pfix: return "sequential_pfix";
    case IdKind::nested_ipw: return "nested_ipw";
    case IdKind::not_identifiable: return "not_identifiable";
  }
  return "?";
}

/// Ancestors of y after removing t from the graph.
inline VertexSet y_star(const Admg & g, const VertexId & t, const VertexId & y)
{
  if (t == y) { throw input_error("y_star: treatment equals outcome"); }
  if (!g.is_random(t) || !g.is_random(y)) {
    throw input_error("y_star: treatment and outcome must be random vertices");
  }
  Admg h = g;
  h.remove_vertex(t);
  return ancestors(h, VertexSet{y});
}

// ---------------------------------------------------------------------------
// nested reweighting plan
// ---------------------------------------------------------------------------

/// Recipe for one district rebalancing weight
///   rho_D = q_D(D | pa(D)) / prod_{D_i in D} p(D_i | mp(D_i)).
/// The numerator kernel q_D is produced by the recorded fixing sequence; its
/// sample-level factorization conditions each D_i on its Markov blanket in
/// the final CADMG.
struct RhoSpec
{
  VertexSet district;
  FixingSequence fixing;  // fixes V \ district, in order
  std::vector<std::pair<VertexId, VertexSet>> numerator;    // D_i, mb in final CADMG
  std::vector<std::pair<VertexId, VertexSet>> denominator;  // D_i, mp in G under tau
};

struct NestedPlan
{
  VertexSet y_star;
  std::vector<VertexSet> d_star;
  TopoOrder tau;  // order with every Y* vertex after all its non-Y* non-descendants
  std::vector<RhoSpec> rho_specs;
  std::string p_dagger_note;
  // final estimating-equation ingredients (both relative to tau in g)
  VertexSet treatment_pillow;
};

/// Topological order placing each vertex after its non-descendants outside
/// y_star whenever possible: Kahn, preferring non-y_star vertices, then
/// lexicographic.
inline TopoOrder nested_order(const Admg & g, const VertexSet & ys)
{
  std::map<VertexId, int> indeg;
  for (const auto & v : g.random()) { indeg[v] = 0; }
  for (const auto & [a, b] : g.directed_edges()) {
    if (g.is_random(a) && g.is_random(b)) { indeg[b]++; }
  }
  VertexSet eligible;
  for (const auto & [v, d] : indeg) {
    if (d == 0) { eligible.insert(v); }
  }
  TopoOrder out;
  while (!eligible.empty()) {
    VertexId pick;
    bool found = false;
    for (const auto & v : eligible) {
      if (!ys.count(v)) {
        pick = v;
        found = true;
        break;
      }
    }
    if (!found) { pick = *eligible.begin(); }
    eligible.erase(pick);
    out.push_back(pick);
    for (const auto & c : children(g, pick)) {
      if (g.is_random(c) && --indeg[c] == 0) { eligible.insert(c); }
    }
  }
  return out;
}

/// Fixing sequence (ordinary fixing only) that removes every vertex outside
/// s; exists exactly when reachable_closure(s) == s.  Steps fixing a
/// then-childless vertex are tagged marginalize.
inline std::optional<FixingSequence> closure_sequence(const Admg & g, const VertexSet & s)
{
  FixingSequence seq;
  Admg cur = g;
  bool advanced = true;
  while (advanced) {
    advanced = false;
    for (const auto & v : cur.random()) {
      if (s.count(v)) { continue; }
      if (is_fixable(cur, v)) {
        seq.steps.push_back(
          {v, children(cur, v).empty() ? FixKind::marginalize : FixKind::ordinary});
        cur.fix_vertex(v);
        advanced = true;
        break;
      }
    }
  }
  if (cur.random() != s) { return std::nullopt; }
  return seq;
}

struct NestedPlanResult
{
  std::optional<NestedPlan> plan;           // absent on Fail
  std::optional<VertexSet> fail_witness;    // the non-intrinsic district
};

/// Plan the nested reweighting estimator: find the districts of the
/// subgraph over y_star that touch the treatment's district, require each to
/// be intrinsic, and derive the weight recipes.  The caller is expected to
/// have restricted g to ancestors of y already (identify() does).
inline NestedPlanResult nested_ipw_plan(const Admg & g, const VertexId & t, const VertexId & y)
{
  NestedPlanResult out;
  NestedPlan plan;
  plan.y_star = y_star(g, t, y);

  const VertexSet dis_t = district_of(g, t);
  Admg g_ys = induced_subgraph(g, set_union(plan.y_star, g.context()));
  for (const auto & d : districts(g_ys)) {
    if (!set_intersect(d, dis_t).empty()) { plan.d_star.push_back(d); }
  }
  for (const auto & d : plan.d_star) {
    if (!is_intrinsic(g, d)) {
      out.fail_witness = d;
      return out;
    }
  }

  plan.tau = nested_order(g, plan.y_star);
  for (const auto & d : plan.d_star) {
    RhoSpec rho;
    rho.district = d;
    auto seq = closure_sequence(g, d);
    // intrinsic districts always admit a closure sequence
    if (!seq) { throw precondition_error("nested_ipw_plan: closure sequence missing"); }
    rho.fixing = *seq;
    Admg cadmg = g;
    for (const auto & step : rho.fixing.steps) { cadmg.fix_vertex(step.vertex); }
    for (const auto & di : d) {
      rho.numerator.emplace_back(di, markov_blanket(cadmg, di));
      rho.denominator.emplace_back(di, markov_pillow(g, plan.tau, di));
    }
    plan.rho_specs.push_back(std::move(rho));
  }

  plan.treatment_pillow = markov_pillow(g, plan.tau, t);
  std::ostringstream note;
  note << "p_dagger(V) = p(V)";
  for (const auto & rho : plan.rho_specs) {
    note << " * rho_{";
    bool first = true;
    for (const auto & v : rho.district) { note << (first ? "" : ",") << v, first = false; }
    note << "}";
  }
  plan.p_dagger_note = note.str();
  out.plan = std::move(plan);
  return out;
}

// ---------------------------------------------------------------------------
// identification dispatch
// ---------------------------------------------------------------------------

struct IdFunctional
{
  IdKind kind = IdKind::not_identifiable;
  Admg graph;  // graph restricted to ancestors of the outcome (plus treatment)
  VertexId treatment;
  VertexId outcome;
  TopoOrder tau;
  Partition_CLM partition;
  VertexSet front;                // sequential case: the fixed front set Z
  FixingSequence front_sequence;  // valid p-fixing order for front
  std::optional<NestedPlan> nested;
  std::optional<VertexSet> fail_witness;
  std::string rendered;
};

inline std::string render_functional(const IdFunctional & f);

/// Restrict to ancestors of the outcome (keeping the treatment), pick the
/// deterministic topological order, and dispatch to the least general
/// identification strategy that applies.
inline IdFunctional identify(const Admg & g, const VertexId & t, const VertexId & y)
{
  if (t == y) { throw input_error("identify: treatment equals outcome"); }
  if (!g.is_random(t) || !g.is_random(y)) {
    throw input_error("identify: treatment and outcome must be random vertices");
  }

  IdFunctional f;
  f.treatment = t;
  f.outcome = y;

  // marginalize to ancestors of y (plus t, so the trivial no-effect case
  // still carries a treatment vertex)
  VertexSet keep = set_union(ancestors(g, VertexSet{y}), VertexSet{t});
  keep = set_union(keep, g.context());
  f.graph = latent_projection(g, keep);

  f.tau = topological_order(f.graph, t, y);
  f.partition = partition_clm(f.graph, f.tau, t);

  if (is_fixable(f.graph, t)) {
    f.kind = IdKind::adjustment;
  } else if (is_p_fixable(f.graph, t)) {
    f.kind = IdKind::primal_district;
  } else {
    // greedy search for a front set outside y_star that renders t p-fixable
    const VertexSet ys = y_star(f.graph, t, y);
    VertexSet candidates = set_minus(set_minus(f.graph.random(), ys), VertexSet{t});
    Admg cur = f.graph;
    bool advanced = true;
    while (advanced) {
      advanced = false;
      // reverse topological scan
      for (auto it = f.tau.rbegin(); it != f.tau.rend(); ++it) {
        const VertexId & v = *it;
        if (!candidates.count(v) || f.front.count(v)) { continue; }
        if (is_p_fixable(cur, v)) {
          f.front_sequence.steps.push_back(
            {v, children(cur, v).empty() ? FixKind::marginalize : FixKind::primal});
          cur.fix_vertex(v);
          f.front.insert(v);
          advanced = true;
        }
      }
    }
    if (!f.front.empty() && is_p_fixable(cur, t)) {
      f.kind = IdKind::sequential_pfix;
    } else {
      f.front.clear();
      f.front_sequence.steps.clear();
      auto nested = nested_ipw_plan(f.graph, t, y);
      if (nested.plan) {
        f.kind = IdKind::nested_ipw;
        f.nested = std::move(nested.plan);
      } else {
        f.kind = IdKind::not_identifiable;
        f.fail_witness = nested.fail_witness;
      }
    }
  }
  f.rendered = render_functional(f);
  return f;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

namespace detail
{

inline std::string join_tau(const VertexSet & s, const TopoOrder & tau, const VertexSet & context)
{
  std::vector<VertexId> ordered;
  for (const auto & w : context) {
    if (s.count(w)) { ordered.push_back(w); }
  }
  for (const auto & v : tau) {
    if (s.count(v)) { ordered.push_back(v); }
  }
  for (const auto & v : s) {  // anything not covered (defensive)
    if (std::find(ordered.begin(), ordered.end(), v) == ordered.end()) { ordered.push_back(v); }
  }
  std::string out;
  for (const auto & v : ordered) { out += (out.empty() ? "" : ",") + v; }
  return out;
}

inline std::string factor_product(const Admg & g, const TopoOrder & tau, const VertexSet & over)
{
  std::string out;
  for (const auto & v : tau) {
    if (!over.count(v)) { continue; }
    VertexSet mp = markov_pillow(g, tau, v);
    out += (out.empty() ? "" : " * ") + std::string("p(") + v;
    if (!mp.empty()) { out += " | " + join_tau(mp, tau, g.context()); }
    out += ")";
  }
  return out.empty() ? "1" : out;
}

}  // namespace detail

inline std::string render_functional(const IdFunctional & f)
{
  const Admg & g = f.graph;
  const VertexId & t = f.treatment;
  const VertexId & y = f.outcome;
  std::ostringstream out;
  out << "psi(" << t << "=t) on ancestors(" << y << "): ";
  switch (f.kind) {
    case IdKind::adjustment: {
      VertexSet mp = markov_pillow(g, f.tau, t);
      out << "E[ E[" << y << " | " << t << "=t";
      if (!mp.empty()) { out << ", " << detail::join_tau(mp, f.tau, g.context()); }
      out << "] ]";
      break;
    }
    case IdKind::primal_district: {
      std::string prod = detail::factor_product(g, f.tau, f.partition.l_set);
      out << "E[ I(" << t << "=t) * { sum_" << t << " " << prod << " } / { " << prod << " } * "
          << y << " ]";
      break;
    }
    case IdKind::sequential_pfix: {
      out << "primal-fix (";
      bool first = true;
      for (const auto & step : f.front_sequence.steps) {
        out << (first ? "" : ", ") << step.vertex
            << (step.kind == FixKind::marginalize ? " [marginalize]" : "");
        first = false;
      }
      out << ") then primal-fix " << t << " in the resulting kernel; psi = sum over remaining "
          << "vertices of Y * kernel |" << t << "=t";
      break;
    }
    case IdKind::nested_ipw: {
      const NestedPlan & plan = *f.nested;
      out << "E_{p_dagger}[ I(" << t << "=t) / p_dagger(" << t;
      if (!plan.treatment_pillow.empty()) {
        out << " | " << detail::join_tau(plan.treatment_pillow, plan.tau, g.context());
      }
      out << ") * " << y << " ] with " << plan.p_dagger_note;
      for (const auto & rho : plan.rho_specs) {
        out << "; rho_{" << detail::join_tau(rho.district, plan.tau, g.context()) << "} = ";
        std::string num;
        for (const auto & [di, mb] : rho.numerator) {
          num += (num.empty() ? "" : " * ") + std::string("q(") + di;
          if (!mb.empty()) { num += " | " + detail::join_tau(mb, plan.tau, g.context()); }
          num += ")";
        }
        std::string den;
        for (const auto & [di, mp] : rho.denominator) {
          den += (den.empty() ? "" : " * ") + std::string("p(") + di;
          if (!mp.empty()) { den += " | " + detail::join_tau(mp, plan.tau, g.context()); }
          den += ")";
        }
        out << num << " / " << den;
      }
      break;
    }
    case IdKind::not_identifiable: {
      out << "NOT IDENTIFIABLE";
      if (f.fail_witness) {
        out << " (non-intrinsic district {"
            << detail::join_tau(*f.fail_witness, f.tau, g.context()) << "})";
      }
      break;
    }
  }
  return out.str();
}

}  // namespace arid

#endif  // ARID__IDENTIFY_HPP_
