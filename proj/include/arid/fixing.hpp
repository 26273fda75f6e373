#ifndef ARID__FIXING_HPP_
#define ARID__FIXING_HPP_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "arid/graph.hpp"

namespace arid
{

// ---------------------------------------------------------------------------
// fixability criteria
// ---------------------------------------------------------------------------

/// Ordinary (adjustment) fixability: the district of v meets the descendants
/// of v only in v itself.
inline bool is_fixable(const Admg & g, const VertexId & v)
{
  if (!g.is_random(v)) {
    throw precondition_error("is_fixable: '" + v + "' is not a random vertex");
  }
  return set_intersect(district_of(g, v), descendants(g, v)) == VertexSet{v};
}

inline bool is_a_fixable(const Admg & g, const VertexId & v) { return is_fixable(g, v); }

/// Primal fixability: no child of t shares t's district.  Strictly weaker
/// than ordinary fixability.
inline bool is_p_fixable(const Admg & g, const VertexId & t)
{
  if (!g.is_random(t)) {
    throw precondition_error("is_p_fixable: '" + t + "' is not a random vertex");
  }
  return set_intersect(district_of(g, t), children(g, t)).empty();
}

// ---------------------------------------------------------------------------
// fixing operators (a single graphical operation serves ordinary, primal and
// dual fixing; they differ only in the kernel algebra)
// ---------------------------------------------------------------------------

/// Fix a fixable vertex: move it to the context set and delete its incoming
/// directed edges and all its bidirected edges.
inline Admg fix(const Admg & g, const VertexId & v)
{
  if (!is_fixable(g, v)) {
    VertexSet witness = set_intersect(district_of(g, v), descendants(g, v));
    witness.erase(v);
    std::string w;
    for (const auto & u : witness) { w += (w.empty() ? "" : ", ") + u; }
    throw precondition_error(
      "fix: '" + v + "' is not fixable; its district contains descendant(s) {" + w + "}");
  }
  Admg h = g;
  h.fix_vertex(v);
  return h;
}

/// Graphical part of primal fixing (precondition is the weaker p-fixability).
inline Admg primal_fix(const Admg & g, const VertexId & t)
{
  if (!is_p_fixable(g, t)) {
    throw precondition_error("primal_fix: '" + t + "' is not primal-fixable");
  }
  Admg h = g;
  h.fix_vertex(t);
  return h;
}

// ---------------------------------------------------------------------------
// fixing sequences
// ---------------------------------------------------------------------------

enum class FixKind { ordinary, primal, marginalize };

struct FixStep
{
  VertexId vertex;
  FixKind kind = FixKind::ordinary;
};

struct FixingSequence
{
  std::vector<FixStep> steps;
};

/// Greedy search for an order in which every vertex of s can be primal-fixed
/// (valid orders are interchangeable, so greedy suffices).  Childless
/// vertices are tagged `marginalize` since fixing them is a plain
/// marginalization.  Returns nothing if no valid order exists.
inline std::optional<FixingSequence> p_fixable_sequence(const Admg & g, const VertexSet & s)
{
  FixingSequence seq;
  Admg cur = g;
  VertexSet rest = s;
  while (!rest.empty()) {
    bool advanced = false;
    for (const auto & v : rest) {  // lexicographic scan keeps this deterministic
      if (is_p_fixable(cur, v)) {
        FixKind kind = children(cur, v).empty() ? FixKind::marginalize : FixKind::primal;
        seq.steps.push_back({v, kind});
        cur.fix_vertex(v);
        rest.erase(v);
        advanced = true;
        break;
      }
    }
    if (!advanced) { return std::nullopt; }
  }
  return seq;
}

/// Reachable closure of s plus the CADMG produced by the (confluent) fixing
/// sequence that witnesses it.
inline std::pair<VertexSet, Admg> reachable_closure_graph(const Admg & g, const VertexSet & s)
{
  Admg cur = g;
  bool advanced = true;
  while (advanced) {
    advanced = false;
    for (const auto & v : cur.random()) {
      if (s.count(v)) { continue; }
      if (is_fixable(cur, v)) {
        cur.fix_vertex(v);
        advanced = true;
        break;
      }
    }
  }
  return {cur.random(), cur};
}

/// Unique minimal superset of s whose complement can be fixed entirely.
inline VertexSet reachable_closure(const Admg & g, const VertexSet & s)
{
  return reachable_closure_graph(g, s).first;
}

/// A set is intrinsic when its complement is entirely fixable and the
/// resulting CADMG has s as a single district.
inline bool is_intrinsic(const Admg & g, const VertexSet & s)
{
  if (s.empty()) {
    throw precondition_error("is_intrinsic: empty set");
  }
  for (const auto & v : s) {
    if (!g.is_random(v)) {
      throw precondition_error("is_intrinsic: '" + v + "' is not a random vertex");
    }
  }
  auto [closure, cadmg] = reachable_closure_graph(g, s);
  if (closure != s) { return false; }
  return districts(cadmg).size() == 1;
}

// ---------------------------------------------------------------------------
// nonparametric saturation (pairwise closure test) and arid projection
// ---------------------------------------------------------------------------

namespace detail
{

/// Is `s` connected using only bidirected edges of `g` restricted to `s`?
inline bool bidirected_connected_within(const Admg & g, const VertexSet & s)
{
  if (s.empty()) { return false; }
  VertexSet seen;
  std::deque<VertexId> todo{*s.begin()};
  while (!todo.empty()) {
    VertexId cur = todo.front();
    todo.pop_front();
    if (!seen.insert(cur).second) { continue; }
    for (const auto & [a, b] : g.bidirected_edges()) {
      if (a == cur && s.count(b)) { todo.push_back(b); }
      if (b == cur && s.count(a)) { todo.push_back(a); }
    }
  }
  return seen == s;
}

}  // namespace detail

/// Pairwise saturation test for a vertex pair: a directed edge survives the
/// arid projection (one of the two closure-parent rules fires) or the joint
/// closure is bidirected connected.  With `original_graph_paths` the
/// connectivity of the joint closure is judged in the input graph instead of
/// the post-fixing CADMG.
inline bool pair_saturated(const Admg & g, const VertexId & a, const VertexId & b,
  bool original_graph_paths = false)
{
  if (contains(parents(g, reachable_closure(g, {b})), a)) { return true; }
  if (contains(parents(g, reachable_closure(g, {a})), b)) { return true; }
  auto [closure, cadmg] = reachable_closure_graph(g, {a, b});
  const Admg & conn_graph = original_graph_paths ? g : cadmg;
  return detail::bidirected_connected_within(conn_graph, closure);
}

struct NpsVerdict
{
  bool saturated = true;
  std::optional<std::pair<VertexId, VertexId>> witness;
};

/// Nonparametric-saturation check: every unordered vertex pair must pass the
/// pairwise closure test; the first failing pair is reported as witness.
inline NpsVerdict check_nps(const Admg & g, bool original_graph_paths = false)
{
  std::vector<VertexId> vs(g.random().begin(), g.random().end());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (!pair_saturated(g, vs[i], vs[j], original_graph_paths)) {
        return {false, std::make_pair(vs[i], vs[j])};
      }
    }
  }
  return {true, std::nullopt};
}

/// True when every nonadjacent pair is mutually outside each other's Markov
/// blanket.
inline bool is_mb_shielded(const Admg & g)
{
  std::vector<VertexId> vs(g.random().begin(), g.random().end());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (g.adjacent(vs[i], vs[j])) { continue; }
      if (contains(markov_blanket(g, vs[i]), vs[j])) { return false; }
      if (contains(markov_blanket(g, vs[j]), vs[i])) { return false; }
    }
  }
  return true;
}

/// Maximal arid projection: a -> b iff a parents the closure of b; a <-> b
/// iff neither directed rule fires and the joint closure is bidirected
/// connected.  The projection is complete exactly when the model is
/// nonparametrically saturated.
inline Admg maximal_arid_projection(const Admg & g, bool original_graph_paths = false)
{
  Admg h;
  for (const auto & v : g.declaration_order()) {
    if (g.is_random(v)) {
      h.add_random(v);
    } else {
      h.add_context(v);
    }
  }
  std::vector<VertexId> vs(g.random().begin(), g.random().end());
  std::map<VertexId, VertexSet> closure_parents;
  for (const auto & v : vs) { closure_parents[v] = parents(g, reachable_closure(g, {v})); }
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = 0; j < vs.size(); ++j) {
      if (i == j) { continue; }
      if (closure_parents[vs[j]].count(vs[i])) { h.add_directed(vs[i], vs[j]); }
    }
  }
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (h.has_directed(vs[i], vs[j]) || h.has_directed(vs[j], vs[i])) { continue; }
      auto [closure, cadmg] = reachable_closure_graph(g, {vs[i], vs[j]});
      const Admg & conn_graph = original_graph_paths ? g : cadmg;
      if (detail::bidirected_connected_within(conn_graph, closure)) {
        h.add_bidirected(vs[i], vs[j]);
      }
    }
  }
  // context vertices keep their outgoing edges verbatim
  for (const auto & [a, b] : g.directed_edges()) {
    if (g.is_context(a) && !h.has_directed(a, b)) { h.add_directed(a, b); }
  }
  return h;
}

/// True when every random pair of the projection is adjacent.
inline bool is_complete(const Admg & g)
{
  std::vector<VertexId> vs(g.random().begin(), g.random().end());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (!g.adjacent(vs[i], vs[j])) { return false; }
    }
  }
  return true;
}

}  // namespace arid

#endif  // ARID__FIXING_HPP_
