#ifndef ARID__GRAPH_HPP_
#define ARID__GRAPH_HPP_

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace arid
{

/// Malformed user input (graph text, CSV, config files).
class input_error : public std::runtime_error
{
public:
  explicit input_error(const std::string & what) : std::runtime_error(what) {}
};

/// An operation was called on arguments that violate its contract
/// (e.g. asking for a primal estimator when the treatment is not p-fixable).
class precondition_error : public std::runtime_error
{
public:
  explicit precondition_error(const std::string & what) : std::runtime_error(what) {}
};

using VertexId = std::string;
using VertexSet = std::set<VertexId>;
using TopoOrder = std::vector<VertexId>;

// ---------------------------------------------------------------------------
// small set helpers
// ---------------------------------------------------------------------------

inline bool contains(const VertexSet & s, const VertexId & v) { return s.count(v) != 0; }

inline VertexSet set_union(const VertexSet & a, const VertexSet & b)
{
  VertexSet r = a;
  r.insert(b.begin(), b.end());
  return r;
}

inline VertexSet set_minus(const VertexSet & a, const VertexSet & b)
{
  VertexSet r;
  for (const auto & v : a) {
    if (!b.count(v)) { r.insert(v); }
  }
  return r;
}

inline VertexSet set_intersect(const VertexSet & a, const VertexSet & b)
{
  VertexSet r;
  for (const auto & v : a) {
    if (b.count(v)) { r.insert(v); }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Admg: acyclic directed mixed graph with an optional set of context
// (already-fixed) vertices.  Context vertices may point into random vertices
// but have no incoming directed edges and no bidirected edges.
// ---------------------------------------------------------------------------

class Admg
{
public:
  Admg() = default;

  void add_random(const VertexId & v)
  {
    require_fresh(v);
    random_.insert(v);
    order_.push_back(v);
  }

  void add_context(const VertexId & v)
  {
    require_fresh(v);
    context_.insert(v);
    order_.push_back(v);
  }

  void add_directed(const VertexId & a, const VertexId & b)
  {
    require_known(a);
    require_known(b);
    if (a == b) { throw input_error("self loop on '" + a + "'"); }
    if (context_.count(b)) {
      throw input_error("directed edge into context vertex '" + b + "'");
    }
    directed_.insert({a, b});
  }

  void add_bidirected(const VertexId & a, const VertexId & b)
  {
    require_known(a);
    require_known(b);
    if (a == b) { throw input_error("bidirected self loop on '" + a + "'"); }
    if (context_.count(a) || context_.count(b)) {
      throw input_error("bidirected edge touching a context vertex");
    }
    bidirected_.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
  }

  const VertexSet & random() const { return random_; }
  const VertexSet & context() const { return context_; }

  /// All vertices (random + context).
  VertexSet vertices() const { return set_union(random_, context_); }

  /// Vertices in declaration order (used for deterministic output).
  const std::vector<VertexId> & declaration_order() const { return order_; }

  const std::set<std::pair<VertexId, VertexId>> & directed_edges() const { return directed_; }
  const std::set<std::pair<VertexId, VertexId>> & bidirected_edges() const { return bidirected_; }

  bool has_vertex(const VertexId & v) const { return random_.count(v) || context_.count(v); }
  bool is_random(const VertexId & v) const { return random_.count(v) != 0; }
  bool is_context(const VertexId & v) const { return context_.count(v) != 0; }

  bool has_directed(const VertexId & a, const VertexId & b) const
  {
    return directed_.count({a, b}) != 0;
  }

  bool has_bidirected(const VertexId & a, const VertexId & b) const
  {
    return bidirected_.count(a < b ? std::make_pair(a, b) : std::make_pair(b, a)) != 0;
  }

  bool adjacent(const VertexId & a, const VertexId & b) const
  {
    return has_directed(a, b) || has_directed(b, a) || has_bidirected(a, b);
  }

  /// Move a random vertex to the context set, deleting its incoming directed
  /// edges and all its bidirected edges (the graphical fixing operation).
  void fix_vertex(const VertexId & v)
  {
    if (!random_.count(v)) {
      throw precondition_error("fix_vertex: '" + v + "' is not a random vertex");
    }
    random_.erase(v);
    context_.insert(v);
    for (auto it = directed_.begin(); it != directed_.end();) {
      it = (it->second == v) ? directed_.erase(it) : std::next(it);
    }
    for (auto it = bidirected_.begin(); it != bidirected_.end();) {
      it = (it->first == v || it->second == v) ? bidirected_.erase(it) : std::next(it);
    }
  }

  /// Delete a vertex and every edge touching it.
  void remove_vertex(const VertexId & v)
  {
    random_.erase(v);
    context_.erase(v);
    order_.erase(std::remove(order_.begin(), order_.end(), v), order_.end());
    for (auto it = directed_.begin(); it != directed_.end();) {
      it = (it->first == v || it->second == v) ? directed_.erase(it) : std::next(it);
    }
    for (auto it = bidirected_.begin(); it != bidirected_.end();) {
      it = (it->first == v || it->second == v) ? bidirected_.erase(it) : std::next(it);
    }
  }

  /// Throws input_error if the directed part has a cycle.
  void validate_acyclic() const;

private:
  void require_known(const VertexId & v) const
  {
    if (!has_vertex(v)) { throw input_error("unknown vertex '" + v + "'"); }
  }

  void require_fresh(const VertexId & v) const
  {
    if (v.empty()) { throw input_error("empty vertex name"); }
    if (has_vertex(v)) { throw input_error("duplicate vertex '" + v + "'"); }
  }

  VertexSet random_;
  VertexSet context_;
  std::vector<VertexId> order_;
  std::set<std::pair<VertexId, VertexId>> directed_;
  std::set<std::pair<VertexId, VertexId>> bidirected_;
};

// ---------------------------------------------------------------------------
// genealogy
// ---------------------------------------------------------------------------

inline VertexSet parents(const Admg & g, const VertexId & v)
{
  VertexSet r;
  for (const auto & [a, b] : g.directed_edges()) {
    if (b == v) { r.insert(a); }
  }
  return r;
}

/// Parents of a set, excluding the set itself.
inline VertexSet parents(const Admg & g, const VertexSet & s)
{
  VertexSet r;
  for (const auto & [a, b] : g.directed_edges()) {
    if (s.count(b) && !s.count(a)) { r.insert(a); }
  }
  return r;
}

inline VertexSet children(const Admg & g, const VertexId & v)
{
  VertexSet r;
  for (const auto & [a, b] : g.directed_edges()) {
    if (a == v) { r.insert(b); }
  }
  return r;
}

/// Children of a set, excluding the set itself.
inline VertexSet children(const Admg & g, const VertexSet & s)
{
  VertexSet r;
  for (const auto & [a, b] : g.directed_edges()) {
    if (s.count(a) && !s.count(b)) { r.insert(b); }
  }
  return r;
}

/// Descendants of v including v itself.
inline VertexSet descendants(const Admg & g, const VertexId & v)
{
  VertexSet r;
  std::deque<VertexId> todo{v};
  while (!todo.empty()) {
    VertexId cur = todo.front();
    todo.pop_front();
    if (!r.insert(cur).second) { continue; }
    for (const auto & c : children(g, cur)) { todo.push_back(c); }
  }
  return r;
}

/// Ancestors of every vertex in s, including s itself.
inline VertexSet ancestors(const Admg & g, const VertexSet & s)
{
  VertexSet r;
  std::deque<VertexId> todo(s.begin(), s.end());
  while (!todo.empty()) {
    VertexId cur = todo.front();
    todo.pop_front();
    if (!r.insert(cur).second) { continue; }
    for (const auto & p : parents(g, cur)) { todo.push_back(p); }
  }
  return r;
}

inline VertexSet ancestors(const Admg & g, const VertexId & v)
{
  return ancestors(g, VertexSet{v});
}

/// Descendants of every vertex in s, including s itself.
inline VertexSet descendants(const Admg & g, const VertexSet & s)
{
  VertexSet r;
  for (const auto & v : s) { r = set_union(r, descendants(g, v)); }
  return r;
}

enum class Relation { parents, children, ancestors, descendants };

/// Uniform entry point for the four genealogic queries on a vertex set.
/// Ancestors/descendants include the set itself; parents/children exclude it.
inline VertexSet genealogy(const Admg & g, const VertexSet & s, Relation rel)
{
  for (const auto & v : s) {
    if (!g.has_vertex(v)) { throw input_error("genealogy: unknown vertex '" + v + "'"); }
  }
  switch (rel) {
    case Relation::parents: return parents(g, s);
    case Relation::children: return children(g, s);
    case Relation::ancestors: return ancestors(g, s);
    case Relation::descendants: return descendants(g, s);
  }
  throw input_error("genealogy: bad relation");
}

inline void Admg::validate_acyclic() const
{
  // Kahn: all vertices must be consumable.
  std::map<VertexId, int> indeg;
  for (const auto & v : vertices()) { indeg[v] = 0; }
  for (const auto & [a, b] : directed_) { indeg[b]++; }
  std::deque<VertexId> q;
  for (const auto & [v, d] : indeg) {
    if (d == 0) { q.push_back(v); }
  }
  std::size_t seen = 0;
  while (!q.empty()) {
    VertexId v = q.front();
    q.pop_front();
    seen++;
    for (const auto & [a, b] : directed_) {
      if (a == v && --indeg[b] == 0) { q.push_back(b); }
    }
  }
  if (seen != indeg.size()) { throw input_error("directed part of the graph has a cycle"); }
}

// ---------------------------------------------------------------------------
// districts and Markov blankets
// ---------------------------------------------------------------------------

/// The district of v: maximal set of random vertices connected to v by
/// bidirected edges (context vertices never belong to a district).
inline VertexSet district_of(const Admg & g, const VertexId & v)
{
  if (!g.is_random(v)) {
    throw precondition_error("district_of: '" + v + "' is not a random vertex");
  }
  VertexSet r;
  std::deque<VertexId> todo{v};
  while (!todo.empty()) {
    VertexId cur = todo.front();
    todo.pop_front();
    if (!r.insert(cur).second) { continue; }
    for (const auto & [a, b] : g.bidirected_edges()) {
      if (a == cur) { todo.push_back(b); }
      if (b == cur) { todo.push_back(a); }
    }
  }
  return r;
}

/// All districts, sorted by their smallest element for determinism.
inline std::vector<VertexSet> districts(const Admg & g)
{
  std::vector<VertexSet> out;
  VertexSet done;
  for (const auto & v : g.random()) {
    if (done.count(v)) { continue; }
    VertexSet d = district_of(g, v);
    done.insert(d.begin(), d.end());
    out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Markov blanket: district of v together with the parents of that district,
/// minus v itself.  Context vertices can appear through the parent sets.
inline VertexSet markov_blanket(const Admg & g, const VertexId & v)
{
  VertexSet d = district_of(g, v);
  VertexSet r = set_union(d, parents(g, d));
  r.erase(v);
  return r;
}

/// Induced subgraph over `keep` (vertices retain their random/context
/// status; only edges with both endpoints kept survive).
inline Admg induced_subgraph(const Admg & g, const VertexSet & keep)
{
  Admg h;
  for (const auto & v : g.declaration_order()) {
    if (!keep.count(v)) { continue; }
    if (g.is_random(v)) {
      h.add_random(v);
    } else {
      h.add_context(v);
    }
  }
  for (const auto & [a, b] : g.directed_edges()) {
    if (keep.count(a) && keep.count(b)) { h.add_directed(a, b); }
  }
  for (const auto & [a, b] : g.bidirected_edges()) {
    if (keep.count(a) && keep.count(b)) { h.add_bidirected(a, b); }
  }
  return h;
}

// ---------------------------------------------------------------------------
// deterministic topological order
// ---------------------------------------------------------------------------

/// Valid topological order of the random vertices with two tie-breaking
/// rules on top of Kahn's algorithm: vertices that are not descendants of
/// the treatment are emitted before any descendant of the treatment, and the
/// outcome is emitted as soon as it becomes eligible.  Remaining ties are
/// broken lexicographically.  Context vertices are not part of the order.
inline TopoOrder topological_order(const Admg & g, const VertexId & t, const VertexId & y)
{
  if (!g.has_vertex(t) || !g.has_vertex(y)) {
    throw input_error("topological_order: unknown vertex '" + (g.has_vertex(t) ? y : t) + "'");
  }
  if (!g.is_random(t) || !g.is_random(y)) {
    throw precondition_error("topological_order: treatment and outcome must be random vertices");
  }
  g.validate_acyclic();
  const VertexSet de_t = descendants(g, t);

  std::map<VertexId, int> indeg;
  for (const auto & v : g.random()) { indeg[v] = 0; }
  for (const auto & [a, b] : g.directed_edges()) {
    // edges out of context vertices never block a random vertex
    if (g.is_random(a) && g.is_random(b)) { indeg[b]++; }
  }

  TopoOrder out;
  VertexSet eligible;
  for (const auto & [v, d] : indeg) {
    if (d == 0) { eligible.insert(v); }
  }
  while (!eligible.empty()) {
    // pick: non-descendants of t first, then y itself, then lexicographic
    VertexId pick;
    bool found = false;
    for (const auto & v : eligible) {  // std::set iterates lexicographically
      if (!de_t.count(v)) {
        pick = v;
        found = true;
        break;
      }
    }
    if (!found && eligible.count(y)) {
      pick = y;
      found = true;
    }
    if (!found) { pick = *eligible.begin(); }
    eligible.erase(pick);
    out.push_back(pick);
    for (const auto & c : children(g, pick)) {
      if (g.is_random(c) && --indeg[c] == 0) { eligible.insert(c); }
    }
  }
  if (out.size() != g.random().size()) {
    throw input_error("topological_order: graph has a directed cycle");
  }
  return out;
}

/// Position lookup for a topological order.
inline std::map<VertexId, std::size_t> order_index(const TopoOrder & tau)
{
  std::map<VertexId, std::size_t> idx;
  for (std::size_t i = 0; i < tau.size(); ++i) { idx[tau[i]] = i; }
  return idx;
}

/// Vertices strictly before v in tau.
inline VertexSet preceding(const TopoOrder & tau, const VertexId & v)
{
  VertexSet r;
  for (const auto & u : tau) {
    if (u == v) { return r; }
    r.insert(u);
  }
  throw precondition_error("'" + v + "' is not in the given order");
}

// ---------------------------------------------------------------------------
// Markov pillow
// ---------------------------------------------------------------------------

/// Markov blanket of v in the induced subgraph over v, its predecessors in
/// tau, and all context vertices.
inline VertexSet markov_pillow(const Admg & g, const TopoOrder & tau, const VertexId & v)
{
  VertexSet keep = preceding(tau, v);
  keep.insert(v);
  keep = set_union(keep, g.context());
  return markov_blanket(induced_subgraph(g, keep), v);
}

/// The three-way split of the random vertices around a treatment: c_set is
/// everything before t in tau, l_set is the part of t's district at or after
/// t, and m_set is the rest.
struct Partition_CLM
{
  VertexSet c_set;
  VertexSet l_set;
  VertexSet m_set;
};

inline Partition_CLM partition_clm(const Admg & g, const TopoOrder & tau, const VertexId & t)
{
  Partition_CLM p;
  p.c_set = preceding(tau, t);
  const VertexSet dis_t = district_of(g, t);
  for (const auto & v : tau) {
    if (p.c_set.count(v)) { continue; }
    if (dis_t.count(v)) {
      p.l_set.insert(v);
    } else {
      p.m_set.insert(v);
    }
  }
  return p;
}

/// Vertices outside the district of t whose Markov pillow contains t.
inline VertexSet inverse_markov_pillow(const Admg & g, const TopoOrder & tau, const VertexId & t)
{
  const VertexSet dis_t = district_of(g, t);
  VertexSet r;
  for (const auto & v : tau) {
    if (dis_t.count(v)) { continue; }
    if (markov_pillow(g, tau, v).count(t)) { r.insert(v); }
  }
  return r;
}

// ---------------------------------------------------------------------------
// latent projection
// ---------------------------------------------------------------------------

/// Project g onto `keep`: a -> b survives iff there is a directed path from
/// a to b through dropped vertices only; a <-> b appears iff some dropped
/// source (including the implicit hidden cause behind each bidirected edge)
/// reaches both a and b by directed paths through dropped vertices.
inline Admg latent_projection(const Admg & g, const VertexSet & keep)
{
  for (const auto & v : keep) {
    if (!g.has_vertex(v)) {
      throw input_error("latent_projection: unknown vertex '" + v + "'");
    }
  }
  // canonical expansion: one hidden source per bidirected edge
  Admg canon;
  for (const auto & v : g.declaration_order()) {
    if (g.is_random(v)) {
      canon.add_random(v);
    } else {
      canon.add_context(v);
    }
  }
  for (const auto & [a, b] : g.directed_edges()) { canon.add_directed(a, b); }
  int hidx = 0;
  for (const auto & [a, b] : g.bidirected_edges()) {
    VertexId h = "__h" + std::to_string(hidx++);
    canon.add_random(h);
    canon.add_directed(h, a);
    canon.add_directed(h, b);
  }

  const VertexSet all = canon.vertices();
  const VertexSet dropped = set_minus(all, keep);

  // reach[u] = kept vertices reachable from u by directed paths whose
  // intermediate vertices are all dropped
  auto reach_kept = [&](const VertexId & u) {
    VertexSet out;
    VertexSet seen;
    std::deque<VertexId> todo{u};
    seen.insert(u);
    while (!todo.empty()) {
      VertexId cur = todo.front();
      todo.pop_front();
      for (const auto & c : children(canon, cur)) {
        if (keep.count(c)) {
          out.insert(c);
        } else if (seen.insert(c).second) {
          todo.push_back(c);
        }
      }
    }
    return out;
  };

  Admg h;
  for (const auto & v : g.declaration_order()) {
    if (!keep.count(v)) { continue; }
    if (g.is_random(v)) {
      h.add_random(v);
    } else {
      h.add_context(v);
    }
  }
  for (const auto & v : keep) {
    for (const auto & c : reach_kept(v)) {
      if (c != v) { h.add_directed(v, c); }
    }
  }
  for (const auto & u : dropped) {
    const VertexSet r = reach_kept(u);
    for (auto it = r.begin(); it != r.end(); ++it) {
      for (auto jt = std::next(it); jt != r.end(); ++jt) {
        if (h.is_random(*it) && h.is_random(*jt)) { h.add_bidirected(*it, *jt); }
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// m-separation (canonical expansion + d-separation)
// ---------------------------------------------------------------------------

namespace detail
{

/// d-separation on a DAG via the reachability ("Bayes ball") algorithm.
/// Returns true when every x in X is d-separated from every y in Y given Z.
inline bool d_separated(const Admg & dag, const VertexSet & x, const VertexSet & y,
  const VertexSet & z)
{
  // ancestors of Z, for the collider rule
  const VertexSet anz = ancestors(dag, z);

  // states: (vertex, direction) with direction = came-from-child (up) or
  // came-from-parent (down)
  enum Dir { UP, DOWN };
  std::set<std::pair<VertexId, int>> visited;
  std::deque<std::pair<VertexId, int>> todo;
  for (const auto & v : x) { todo.push_back({v, UP}); }

  while (!todo.empty()) {
    auto [v, dir] = todo.front();
    todo.pop_front();
    if (!visited.insert({v, dir}).second) { continue; }
    if (y.count(v) && !z.count(v)) { return false; }

    if (dir == UP && !z.count(v)) {
      for (const auto & p : parents(dag, v)) { todo.push_back({p, UP}); }
      for (const auto & c : children(dag, v)) { todo.push_back({c, DOWN}); }
    } else if (dir == DOWN) {
      if (!z.count(v)) {
        for (const auto & c : children(dag, v)) { todo.push_back({c, DOWN}); }
      }
      if (anz.count(v)) {
        for (const auto & p : parents(dag, v)) { todo.push_back({p, UP}); }
      }
    }
  }
  return true;
}

}  // namespace detail

/// m-separation of X from Y given Z in a (C)ADMG, decided by expanding each
/// bidirected edge into a fresh hidden common parent and running
/// d-separation on the resulting DAG.  Overlaps are stripped first:
/// X := X \ Z, Y := Y \ (X u Z); empty sides are vacuously separated.
inline bool m_separated(const Admg & g, const VertexSet & x_in, const VertexSet & y_in,
  const VertexSet & z)
{
  VertexSet x = set_minus(x_in, z);
  VertexSet y = set_minus(set_minus(y_in, z), x);
  if (x.empty() || y.empty()) { return true; }

  Admg canon;
  for (const auto & v : g.declaration_order()) { canon.add_random(v); }
  for (const auto & [a, b] : g.directed_edges()) { canon.add_directed(a, b); }
  int hidx = 0;
  for (const auto & [a, b] : g.bidirected_edges()) {
    VertexId h = "__h" + std::to_string(hidx++);
    canon.add_random(h);
    canon.add_directed(h, a);
    canon.add_directed(h, b);
  }
  return detail::d_separated(canon, x, y, z);
}

inline bool m_separated(const Admg & g, const VertexId & x, const VertexId & y,
  const VertexSet & z)
{
  return m_separated(g, VertexSet{x}, VertexSet{y}, z);
}

// ---------------------------------------------------------------------------
// text format
// ---------------------------------------------------------------------------

/// Parse the plain-text graph format:
///   # comment
///   V name        random vertex
///   F name        fixed (context) vertex
///   a -> b        directed edge
///   a <-> b       bidirected edge
/// Vertices must be declared before use.
inline Admg parse_graph(const std::string & text)
{
  Admg g;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    auto hash = line.find('#');
    if (hash != std::string::npos) { line = line.substr(0, hash); }
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string w;
    while (ls >> w) { tok.push_back(w); }
    if (tok.empty()) { continue; }
    try {
      if (tok.size() == 2 && tok[0] == "V") {
        g.add_random(tok[1]);
      } else if (tok.size() == 2 && tok[0] == "F") {
        g.add_context(tok[1]);
      } else if (tok.size() == 3 && tok[1] == "->") {
        g.add_directed(tok[0], tok[2]);
      } else if (tok.size() == 3 && tok[1] == "<->") {
        g.add_bidirected(tok[0], tok[2]);
      } else {
        throw input_error("unrecognized statement");
      }
    } catch (const input_error & e) {
      throw input_error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  g.validate_acyclic();
  return g;
}

/// Serialize back to the text format (declaration order preserved).
inline std::string to_text(const Admg & g)
{
  std::ostringstream out;
  for (const auto & v : g.declaration_order()) {
    out << (g.is_random(v) ? "V " : "F ") << v << "\n";
  }
  for (const auto & [a, b] : g.directed_edges()) { out << a << " -> " << b << "\n"; }
  for (const auto & [a, b] : g.bidirected_edges()) { out << a << " <-> " << b << "\n"; }
  return out.str();
}

}  // namespace arid

#endif  // ARID__GRAPH_HPP_
