#ifndef ARID__ORACLE_HPP_
#define ARID__ORACLE_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "arid/graph.hpp"
#include "arid/fixing.hpp"
#include "arid/identify.hpp"

namespace arid
{

/// Positivity violation or other numeric failure during exact evaluation.
class numeric_error : public std::runtime_error
{
public:
  explicit numeric_error(const std::string & what) : std::runtime_error(what) {}
};

/// A requested exact computation exceeds the configured size bounds.
class resource_error : public std::runtime_error
{
public:
  explicit resource_error(const std::string & what) : std::runtime_error(what) {}
};

inline constexpr std::size_t kMaxJointStates = std::size_t(1) << 14;
inline constexpr std::size_t kMaxKernelStates = std::size_t(1) << 20;
inline constexpr double kKernelTol = 1e-10;
inline constexpr double kExactTol = 1e-12;

// ---------------------------------------------------------------------------
// dense tensors over a fixed variable universe
// ---------------------------------------------------------------------------

/// Shared axis layout: an ordered variable list with per-variable
/// cardinalities; entries are addressed row-major with vars[0] slowest.
struct Universe
{
  std::vector<VertexId> vars;
  std::vector<int> cards;
  std::map<VertexId, std::size_t> axis;
  std::vector<std::size_t> stride;
  std::size_t total = 1;

  Universe() = default;
  Universe(std::vector<VertexId> v, std::vector<int> c) : vars(std::move(v)), cards(std::move(c))
  {
    stride.assign(vars.size(), 1);
    for (std::size_t i = vars.size(); i-- > 0;) {
      axis[vars[i]] = i;
      if (i + 1 < vars.size()) { stride[i] = stride[i + 1] * std::size_t(cards[i + 1]); }
    }
    for (int c0 : cards) { total *= std::size_t(c0); }
  }

  int card(const VertexId & v) const { return cards[axis.at(v)]; }
  int value_of(std::size_t flat, const VertexId & v) const
  {
    std::size_t k = axis.at(v);
    return int((flat / stride[k]) % std::size_t(cards[k]));
  }
};

using Tensor = std::vector<double>;

/// Sum over the axes in `over`, keeping the result replicated along them so
/// every tensor stays full-universe.
inline Tensor collapse(const Universe & u, const Tensor & a, const VertexSet & over)
{
  Tensor out = a;
  for (const auto & v : over) {
    std::size_t k = u.axis.at(v);
    std::size_t s = u.stride[k];
    std::size_t c = std::size_t(u.cards[k]);
    Tensor next(u.total, 0.0);
    for (std::size_t i = 0; i < u.total; ++i) {
      std::size_t base = i - (i / s % c) * s;
      next[i] = 0.0;
      for (std::size_t val = 0; val < c; ++val) { next[i] += out[base + val * s]; }
    }
    out.swap(next);
  }
  return out;
}

/// Replace every entry with the entry at axis `v` set to `val`.
inline Tensor clamp_axis(const Universe & u, const Tensor & a, const VertexId & v, int val)
{
  std::size_t k = u.axis.at(v);
  std::size_t s = u.stride[k];
  std::size_t c = std::size_t(u.cards[k]);
  Tensor out(u.total);
  for (std::size_t i = 0; i < u.total; ++i) {
    std::size_t base = i - (i / s % c) * s;
    out[i] = a[base + std::size_t(val) * s];
  }
  return out;
}

inline Tensor mul(const Tensor & a, const Tensor & b)
{
  Tensor out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) { out[i] = a[i] * b[i]; }
  return out;
}

/// Pointwise ratio with the 0/0 -> 0 convention; a positive numerator over a
/// zero denominator is a positivity violation.
inline Tensor div(const Tensor & a, const Tensor & b, const std::string & what)
{
  Tensor out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] <= 0.0) {
      if (std::abs(a[i]) > 0.0) {
        throw numeric_error("zero denominator in " + what);
      }
      out[i] = 0.0;
    } else {
      out[i] = a[i] / b[i];
    }
  }
  return out;
}

/// Tensor whose entries equal the numeric code of variable v.
inline Tensor value_tensor(const Universe & u, const VertexId & v)
{
  Tensor out(u.total);
  for (std::size_t i = 0; i < u.total; ++i) { out[i] = double(u.value_of(i, v)); }
  return out;
}

/// Indicator tensor of variable v taking value val.
inline Tensor indicator_tensor(const Universe & u, const VertexId & v, int val)
{
  Tensor out(u.total);
  for (std::size_t i = 0; i < u.total; ++i) { out[i] = (u.value_of(i, v) == val) ? 1.0 : 0.0; }
  return out;
}

// ---------------------------------------------------------------------------
// joint tables and kernels
// ---------------------------------------------------------------------------

struct JointTable
{
  Universe u;
  Tensor p;

  void validate() const
  {
    double s = 0.0;
    for (double x : p) {
      if (x < -kExactTol) { throw numeric_error("negative joint probability"); }
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) { throw numeric_error("joint table does not sum to 1"); }
  }
};

/// Marginal joint over a subset of variables (axes dropped).
inline JointTable marginal(const JointTable & j, const VertexSet & keep)
{
  std::vector<VertexId> vars;
  std::vector<int> cards;
  for (std::size_t i = 0; i < j.u.vars.size(); ++i) {
    if (keep.count(j.u.vars[i])) {
      vars.push_back(j.u.vars[i]);
      cards.push_back(j.u.cards[i]);
    }
  }
  JointTable out;
  out.u = Universe(vars, cards);
  out.p.assign(out.u.total, 0.0);
  for (std::size_t i = 0; i < j.u.total; ++i) {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      idx += std::size_t(j.u.value_of(i, vars[k])) * out.u.stride[k];
    }
    out.p[idx] += j.p[i];
  }
  return out;
}

/// A kernel: a normalized map from context configurations to distributions
/// over the random variables.  Marginalized variables are dropped from the
/// universe; fixed variables stay as context axes.
struct Kernel
{
  Universe u;
  Tensor p;
  VertexSet random;

  VertexSet context() const
  {
    VertexSet ctx;
    for (const auto & v : u.vars) {
      if (!random.count(v)) { ctx.insert(v); }
    }
    return ctx;
  }

  void validate(double tol = kKernelTol) const
  {
    if (u.total > kMaxKernelStates) { throw resource_error("kernel exceeds size bound"); }
    Tensor s = collapse(u, p, random);
    for (double x : s) {
      if (std::abs(x - 1.0) > tol) { throw numeric_error("kernel slice not normalized"); }
    }
  }
};

inline Kernel to_kernel(const JointTable & j, const VertexSet & random)
{
  Kernel q;
  q.u = j.u;
  q.p = j.p;
  q.random = random;
  return q;
}

inline Kernel to_kernel(const JointTable & j)
{
  return to_kernel(j, VertexSet(j.u.vars.begin(), j.u.vars.end()));
}

/// Conditional q(v | given, context) as a full-universe tensor (constant
/// along every irrelevant axis).  `given` is intersected with the kernel's
/// random set; context variables are always conditioned on.
inline Tensor kernel_conditional(const Kernel & q, const VertexId & v, const VertexSet & given)
{
  VertexSet g = set_intersect(given, q.random);
  VertexSet vg = set_union(VertexSet{v}, g);
  Tensor num = collapse(q.u, q.p, set_minus(q.random, vg));
  Tensor den = collapse(q.u, q.p, set_minus(q.random, g));
  std::string what = "p(" + v + " | ...)";
  return div(num, den, what);
}

/// Probabilistic ordinary fixing: divide by q(v | mb(v), context) and move v
/// to the context set.
inline Kernel kernel_fix(const Kernel & q, const Admg & g, const VertexId & v)
{
  if (!is_fixable(g, v)) {
    throw precondition_error("kernel_fix: '" + v + "' is not fixable");
  }
  Tensor f = kernel_conditional(q, v, markov_blanket(g, v));
  Kernel out;
  out.u = q.u;
  out.p = div(q.p, f, "p(" + v + " | mb)");
  out.random = q.random;
  out.random.erase(v);
  out.validate();
  return out;
}

/// Probabilistic primal fixing: multiply by the summed-over-t product of the
/// district factors and divide by the product itself.
inline Kernel kernel_primal_fix(const Kernel & q, const Admg & g, const VertexId & t,
  const TopoOrder * tau_in = nullptr)
{
  if (!is_p_fixable(g, t)) {
    throw precondition_error("kernel_primal_fix: '" + t + "' is not primal-fixable");
  }
  TopoOrder tau = tau_in ? *tau_in : topological_order(g, t, t);
  Tensor prod(q.u.total, 1.0);
  for (const auto & vi : district_of(g, t)) {
    prod = mul(prod, kernel_conditional(q, vi, markov_pillow(g, tau, vi)));
  }
  Tensor summed = collapse(q.u, prod, VertexSet{t});
  Kernel out;
  out.u = q.u;
  out.p = mul(q.p, div(summed, prod, "district factor product"));
  out.random = q.random;
  out.random.erase(t);
  out.validate();
  return out;
}

/// Probabilistic dual fixing: reweight the inverse-pillow factors to t_val
/// and sum t out.
inline Kernel kernel_dual_fix(const Kernel & q, const Admg & g, const TopoOrder & tau,
  const VertexId & t, int t_val)
{
  if (!is_p_fixable(g, t)) {
    throw precondition_error("kernel_dual_fix: '" + t + "' is not primal-fixable");
  }
  Tensor ratio(q.u.total, 1.0);
  for (const auto & vj : inverse_markov_pillow(g, tau, t)) {
    Tensor f = kernel_conditional(q, vj, markov_pillow(g, tau, vj));
    ratio = mul(ratio, div(clamp_axis(q.u, f, t, t_val), f, "p(" + vj + " | mp)"));
  }
  Kernel out;
  out.u = q.u;
  out.p = collapse(q.u, mul(q.p, ratio), VertexSet{t});
  out.random = q.random;
  out.random.erase(t);
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// discrete hidden-variable models
// ---------------------------------------------------------------------------

struct DiscreteDagModel
{
  Admg dag;  // directed edges only
  VertexSet hidden;
  std::map<VertexId, int> cards;
  std::map<VertexId, std::vector<VertexId>> parent_order;  // CPT axis order
  std::map<VertexId, std::vector<double>> cpts;  // row-major parents, value fastest

  VertexSet observed() const { return set_minus(dag.random(), hidden); }

  void validate() const
  {
    dag.validate_acyclic();
    if (!dag.bidirected_edges().empty()) {
      throw input_error("model graph must be a DAG (no bidirected edges)");
    }
    std::size_t states = 1;
    for (const auto & v : dag.random()) {
      int c = cards.at(v);
      if (c < 2) { throw input_error("cardinality of '" + v + "' must be >= 2"); }
      states *= std::size_t(c);
      if (states > kMaxJointStates) { throw resource_error("model exceeds joint size bound"); }
      const auto & po = parent_order.at(v);
      if (VertexSet(po.begin(), po.end()) != parents(dag, v)) {
        throw input_error("parent list mismatch for '" + v + "'");
      }
      std::size_t rows = 1;
      for (const auto & p : po) { rows *= std::size_t(cards.at(p)); }
      const auto & cpt = cpts.at(v);
      if (cpt.size() != rows * std::size_t(c)) {
        throw input_error("CPT size mismatch for '" + v + "'");
      }
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int k = 0; k < c; ++k) { s += cpt[r * std::size_t(c) + k]; }
        if (std::abs(s - 1.0) > kExactTol) {
          throw input_error("CPT row of '" + v + "' does not sum to 1");
        }
      }
    }
  }
};

namespace detail
{

inline double cpt_prob(const DiscreteDagModel & m, const Universe & u, std::size_t flat,
  const VertexId & v, int override_none = -1)
{
  (void)override_none;
  const auto & po = m.parent_order.at(v);
  std::size_t row = 0;
  for (const auto & p : po) {
    row = row * std::size_t(m.cards.at(p)) + std::size_t(u.value_of(flat, p));
  }
  int c = m.cards.at(v);
  return m.cpts.at(v)[row * std::size_t(c) + std::size_t(u.value_of(flat, v))];
}

inline Universe model_universe(const DiscreteDagModel & m)
{
  std::vector<VertexId> vars;
  std::vector<int> cards;
  for (const auto & v : m.dag.declaration_order()) {
    vars.push_back(v);
    cards.push_back(m.cards.at(v));
  }
  return Universe(vars, cards);
}

}  // namespace detail

/// Exact joint over every (observed and hidden) variable of the model.
inline JointTable enumerate_joint(const DiscreteDagModel & m)
{
  m.validate();
  JointTable j;
  j.u = detail::model_universe(m);
  if (j.u.total > kMaxJointStates) { throw resource_error("joint exceeds size bound"); }
  j.p.assign(j.u.total, 1.0);
  for (std::size_t i = 0; i < j.u.total; ++i) {
    for (const auto & v : m.dag.random()) { j.p[i] *= detail::cpt_prob(m, j.u, i, v); }
  }
  return j;
}

/// Exact joint over the observed variables only.
inline JointTable observed_joint(const DiscreteDagModel & m)
{
  return marginal(enumerate_joint(m), m.observed());
}

/// Ground truth E[Y(t)] via the truncated factorization: drop the
/// treatment's factor and clamp the treatment everywhere it appears.
inline double truth_psi(const DiscreteDagModel & m, const VertexId & t, int t_val,
  const VertexId & y)
{
  m.validate();
  Universe u = detail::model_universe(m);
  double psi = 0.0;
  for (std::size_t i = 0; i < u.total; ++i) {
    if (u.value_of(i, t) != t_val) { continue; }
    double w = 1.0;
    for (const auto & v : m.dag.random()) {
      if (v == t) { continue; }
      w *= detail::cpt_prob(m, u, i, v);
    }
    psi += w * double(u.value_of(i, y));
  }
  return psi;
}

// ---------------------------------------------------------------------------
// JSON model format
// ---------------------------------------------------------------------------

inline DiscreteDagModel load_model(const std::string & text)
{
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const std::exception & e) {
    throw input_error(std::string("model JSON parse failure: ") + e.what());
  }
  DiscreteDagModel m;
  if (!doc.contains("vertices") || !doc["vertices"].is_array()) {
    throw input_error("model JSON must contain a 'vertices' array");
  }
  for (const auto & v : doc["vertices"]) { m.dag.add_random(v.at("name").get<std::string>()); }
  for (const auto & v : doc["vertices"]) {
    VertexId name = v.at("name").get<std::string>();
    m.cards[name] = v.value("card", 2);
    if (v.value("hidden", false)) { m.hidden.insert(name); }
    std::vector<VertexId> po;
    for (const auto & p : v.value("parents", std::vector<std::string>{})) {
      m.dag.add_directed(p, name);
      po.push_back(p);
    }
    m.parent_order[name] = po;
    m.cpts[name] = v.at("cpt").get<std::vector<double>>();
  }
  m.validate();
  return m;
}

inline std::string save_model(const DiscreteDagModel & m)
{
  nlohmann::json doc;
  doc["vertices"] = nlohmann::json::array();
  for (const auto & v : m.dag.declaration_order()) {
    nlohmann::json jv;
    jv["name"] = v;
    jv["card"] = m.cards.at(v);
    jv["hidden"] = m.hidden.count(v) != 0;
    jv["parents"] = m.parent_order.at(v);
    jv["cpt"] = m.cpts.at(v);
    doc["vertices"].push_back(jv);
  }
  return doc.dump(2);
}

/// Random binary model whose latent projection onto the observed vertices is
/// the given ADMG: every bidirected edge gets a fresh hidden common parent;
/// CPT probabilities are drawn uniformly from [0.05, 0.95].
inline DiscreteDagModel make_random_model(const Admg & g, std::uint64_t seed)
{
  DiscreteDagModel m;
  for (const auto & v : g.declaration_order()) { m.dag.add_random(v); }
  int hidx = 0;
  for (const auto & [a, b] : g.bidirected_edges()) {
    VertexId h = "U" + std::to_string(hidx++);
    m.dag.add_random(h);
    m.hidden.insert(h);
    m.dag.add_directed(h, a);
    m.dag.add_directed(h, b);
  }
  for (const auto & [a, b] : g.directed_edges()) { m.dag.add_directed(a, b); }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (const auto & v : m.dag.random()) {
    m.cards[v] = 2;
    VertexSet pa = parents(m.dag, v);
    m.parent_order[v] = std::vector<VertexId>(pa.begin(), pa.end());
    std::size_t rows = std::size_t(1) << pa.size();
    std::vector<double> cpt(rows * 2);
    for (std::size_t r = 0; r < rows; ++r) {
      double p1 = u(rng);
      cpt[2 * r] = 1.0 - p1;
      cpt[2 * r + 1] = p1;
    }
    m.cpts[v] = cpt;
  }
  m.validate();
  return m;
}

/// Draw n joint samples of the observed variables (ancestral sampling).
inline std::map<VertexId, std::vector<double>> sample_model(const DiscreteDagModel & m,
  std::size_t n, std::uint64_t seed)
{
  m.validate();
  TopoOrder order;
  {
    Admg d = m.dag;
    // plain Kahn in declaration order
    std::map<VertexId, int> indeg;
    for (const auto & v : d.random()) { indeg[v] = 0; }
    for (const auto & [a, b] : d.directed_edges()) { indeg[b]++; }
    std::deque<VertexId> q;
    for (const auto & v : d.declaration_order()) {
      if (indeg[v] == 0) { q.push_back(v); }
    }
    while (!q.empty()) {
      VertexId v = q.front();
      q.pop_front();
      order.push_back(v);
      for (const auto & c : children(d, v)) {
        if (--indeg[c] == 0) { q.push_back(c); }
      }
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::map<VertexId, std::vector<double>> out;
  for (const auto & v : m.observed()) { out[v].resize(n); }
  std::map<VertexId, int> cur;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto & v : order) {
      const auto & po = m.parent_order.at(v);
      std::size_t row = 0;
      for (const auto & p : po) { row = row * std::size_t(m.cards.at(p)) + std::size_t(cur[p]); }
      int c = m.cards.at(v);
      double r = u01(rng);
      int val = c - 1;
      double acc = 0.0;
      for (int k = 0; k < c; ++k) {
        acc += m.cpts.at(v)[row * std::size_t(c) + std::size_t(k)];
        if (r <= acc) {
          val = k;
          break;
        }
      }
      cur[v] = val;
      if (!m.hidden.count(v)) { out[v][i] = double(val); }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// exact estimator expectations
// ---------------------------------------------------------------------------

enum class Estimand { beta_primal, beta_dual, if_gaipw, if_apipw, psi_nested, reweighted_ee };

/// Optional replacement factors p(v | mp(v)) used when evaluating the
/// estimator formula (the outer expectation always uses the true joint).
/// Perturbing factors an estimand never reads must leave its value
/// bit-identical.
using FactorOverrides = std::map<VertexId, Tensor>;

namespace detail
{

struct ExactCtx
{
  const JointTable & j;
  const Admg & g;
  VertexId t;
  int t_val;
  VertexId y;
  Kernel q0;
  TopoOrder tau;
  Partition_CLM part;
  const FactorOverrides * overrides;

  ExactCtx(const JointTable & joint, const Admg & graph, VertexId tv, int tval, VertexId yv,
    const FactorOverrides * ov)
  : j(joint), g(graph), t(std::move(tv)), t_val(tval), y(std::move(yv)), overrides(ov)
  {
    q0 = to_kernel(j);
    tau = topological_order(g, t, y);
    part = partition_clm(g, tau, t);
  }

  Tensor factor(const VertexId & v) const
  {
    if (overrides) {
      auto it = overrides->find(v);
      if (it != overrides->end()) { return it->second; }
    }
    return kernel_conditional(q0, v, markov_pillow(g, tau, v));
  }

  double mean(const Tensor & a) const
  {
    double s = 0.0;
    for (std::size_t i = 0; i < j.u.total; ++i) { s += j.p[i] * a[i]; }
    return s;
  }

  /// beta for the primal weighting: indicator times the nested propensity
  /// ratio times the outcome.
  Tensor beta_primal() const
  {
    Tensor prod(j.u.total, 1.0);
    for (const auto & vi : part.l_set) { prod = mul(prod, factor(vi)); }
    Tensor summed = collapse(j.u, prod, VertexSet{t});
    Tensor beta = mul(indicator_tensor(j.u, t, t_val), div(summed, prod, "primal denominator"));
    return mul(beta, value_tensor(j.u, y));
  }

  Tensor beta_dual() const
  {
    Tensor ratio(j.u.total, 1.0);
    for (const auto & vj : inverse_markov_pillow(g, tau, t)) {
      Tensor f = factor(vj);
      ratio = mul(ratio, div(clamp_axis(j.u, f, t, t_val), f, "dual factor p(" + vj + "|mp)"));
    }
    return mul(ratio, value_tensor(j.u, y));
  }

  Tensor if_gaipw() const
  {
    if (!is_fixable(g, t)) {
      throw precondition_error("if_gaipw: treatment is not adjustment-fixable");
    }
    Tensor pi = factor(t);
    // outcome regression E[y | t=t_val, mp(t)] from the true joint
    VertexSet mp_t = markov_pillow(g, tau, t);
    Tensor fy = kernel_conditional(q0, y, set_union(mp_t, VertexSet{t}));
    Tensor mu = collapse(j.u, mul(fy, value_tensor(j.u, y)), VertexSet{y});
    mu = clamp_axis(j.u, mu, t, t_val);
    Tensor resid(j.u.total);
    Tensor yv = value_tensor(j.u, y);
    Tensor ind = indicator_tensor(j.u, t, t_val);
    Tensor out(j.u.total);
    for (std::size_t i = 0; i < j.u.total; ++i) {
      if (pi[i] <= 0.0 && ind[i] > 0.0) { throw numeric_error("zero propensity p(t|mp)"); }
      double w = ind[i] > 0.0 ? ind[i] / pi[i] : 0.0;
      out[i] = w * (yv[i] - mu[i]) + mu[i];
    }
    return out;
  }

  /// The explicit influence-function contribution for the primal/dual
  /// (augmented) estimator, evaluated with exact factors.
  Tensor if_apipw() const
  {
    if (!is_p_fixable(g, t)) {
      throw precondition_error("if_apipw: treatment is not primal-fixable");
    }
    const Universe & u = j.u;
    Tensor yv = value_tensor(u, y);
    // clamped factor lookup: mid-set factors are always evaluated at t=t_val
    auto starred = [&](const VertexId & v) {
      Tensor f = factor(v);
      return part.m_set.count(v) ? clamp_axis(u, f, t, t_val) : f;
    };
    // position lookup
    auto idx = order_index(tau);

    Tensor total(u.total, 0.0);
    Tensor ind = indicator_tensor(u, t, t_val);

    // mid-variable terms
    for (const auto & mi : part.m_set) {
      VertexSet succ, succ_eq;
      for (const auto & v : tau) {
        if (idx[v] > idx[mi]) { succ.insert(v); }
        if (idx[v] >= idx[mi]) { succ_eq.insert(v); }
      }
      // weight: indicator over the product of earlier late-set factors
      Tensor wden(u.total, 1.0);
      for (const auto & lj : part.l_set) {
        if (idx[lj] < idx[mi]) { wden = mul(wden, factor(lj)); }
      }
      Tensor w = div(ind, wden, "late factors before " + mi);

      auto inner = [&](const VertexSet & tail) {
        VertexSet prod_set = set_union(part.l_set, tail);
        Tensor prod = yv;
        for (const auto & vjj : prod_set) { prod = mul(prod, starred(vjj)); }
        return collapse(u, prod, set_union(tail, VertexSet{t}));
      };
      Tensor diff = inner(succ);
      Tensor b2 = inner(succ_eq);
      for (std::size_t i = 0; i < u.total; ++i) {
        total[i] += w[i] * (diff[i] - b2[i]);
      }
    }

    // late-variable terms (excluding the treatment itself)
    for (const auto & li : part.l_set) {
      if (li == t) { continue; }
      Tensor w(u.total, 1.0);
      for (const auto & mj : part.m_set) {
        if (idx[mj] < idx[li]) {
          Tensor f = factor(mj);
          w = mul(w, div(clamp_axis(u, f, t, t_val), f, "mid factor p(" + mj + "|mp)"));
        }
      }
      auto inner = [&](bool strict) {
        Tensor prod = yv;
        VertexSet tail;
        for (const auto & v : tau) {
          if (idx[v] > idx[li] || (!strict && v == li)) { tail.insert(v); }
        }
        for (const auto & vjj : tail) { prod = mul(prod, starred(vjj)); }
        return collapse(u, prod, tail);
      };
      Tensor c1 = inner(true);
      Tensor c2 = inner(false);
      for (std::size_t i = 0; i < u.total; ++i) { total[i] += w[i] * (c1[i] - c2[i]); }
    }

    // anchor term: everything after the context block, mid factors clamped
    {
      Tensor prod = yv;
      VertexSet sum_set;
      for (const auto & v : set_union(part.m_set, part.l_set)) {
        if (v == t) { continue; }
        prod = mul(prod, starred(v));
        sum_set.insert(v);
      }
      Tensor d = collapse(u, prod, sum_set);
      for (std::size_t i = 0; i < u.total; ++i) { total[i] += d[i]; }
    }
    return total;
  }

  double psi_nested() const
  {
    auto res = nested_ipw_plan(g, t, y);
    if (!res.plan) {
      throw precondition_error("psi_nested: a required district is not intrinsic");
    }
    const NestedPlan & plan = *res.plan;
    Tensor pdag = j.p;
    for (const auto & rho : plan.rho_specs) {
      // numerator kernel by replaying the fixing sequence
      Kernel q = q0;
      Admg cur = g;
      for (const auto & step : rho.fixing.steps) {
        q = kernel_fix(q, cur, step.vertex);
        cur.fix_vertex(step.vertex);
      }
      Tensor num = q.p;
      Tensor den(j.u.total, 1.0);
      for (const auto & [di, mp] : rho.denominator) {
        den = mul(den, kernel_conditional(q0, di, mp));
      }
      pdag = mul(pdag, div(num, den, "rho denominator"));
    }
    // final weighting under the rebalanced law
    Kernel qdag = to_kernel(j);
    qdag.p = pdag;
    Tensor pit = kernel_conditional(qdag, t, plan.treatment_pillow);
    Tensor ind = indicator_tensor(j.u, t, t_val);
    Tensor yv = value_tensor(j.u, y);
    double psi = 0.0;
    for (std::size_t i = 0; i < j.u.total; ++i) {
      if (ind[i] <= 0.0) { continue; }
      if (pit[i] <= 0.0) {
        if (pdag[i] > 0.0) { throw numeric_error("zero rebalanced propensity"); }
        continue;
      }
      psi += pdag[i] * yv[i] / pit[i];
    }
    return psi;
  }

  double reweighted_ee() const
  {
    IdFunctional f = identify(g, t, y);
    if (f.kind == IdKind::adjustment || f.kind == IdKind::primal_district) {
      // empty front set: the plain primal expectation applies
      return mean(beta_primal());
    }
    if (f.kind != IdKind::sequential_pfix) {
      throw precondition_error("reweighted_ee: no valid p-fixing front set");
    }
    // marginalize onto the restricted graph, replay the front sequence
    JointTable jr = marginal(j, f.graph.random());
    Kernel q = to_kernel(jr);
    Admg cur = f.graph;
    for (const auto & step : f.front_sequence.steps) {
      if (step.kind == FixKind::marginalize) {
        q = kernel_fix(q, cur, step.vertex);
      } else {
        q = kernel_primal_fix(q, cur, step.vertex);
      }
      cur.fix_vertex(step.vertex);
    }
    TopoOrder tau2 = topological_order(cur, t, y);
    q = kernel_primal_fix(q, cur, t, &tau2);
    // psi = sum over remaining random vertices of Y * kernel at t = t_val,
    // averaged over the (now-context) front values under the true law
    Tensor a = clamp_axis(jr.u, mul(q.p, value_tensor(jr.u, y)), t, t_val);
    a = collapse(jr.u, a, q.random);
    double psi = 0.0;
    for (std::size_t i = 0; i < jr.u.total; ++i) { psi += jr.p[i] * a[i]; }
    return psi;
  }
};

}  // namespace detail

/// Population value of an estimator: the exact expectation of its
/// per-sample contribution under the joint law.  Influence-function
/// estimands return E[contribution] which equals psi at the true law.
inline double exact_estimator_value(const JointTable & j, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, Estimand e, const FactorOverrides * overrides = nullptr)
{
  detail::ExactCtx ctx(j, g, t, t_val, y, overrides);
  switch (e) {
    case Estimand::beta_primal:
      if (!is_p_fixable(g, t)) {
        throw precondition_error("beta_primal: treatment is not primal-fixable");
      }
      return ctx.mean(ctx.beta_primal());
    case Estimand::beta_dual:
      if (!is_p_fixable(g, t)) {
        throw precondition_error("beta_dual: treatment is not primal-fixable");
      }
      return ctx.mean(ctx.beta_dual());
    case Estimand::if_gaipw: return ctx.mean(ctx.if_gaipw());
    case Estimand::if_apipw: return ctx.mean(ctx.if_apipw());
    case Estimand::psi_nested: return ctx.psi_nested();
    case Estimand::reweighted_ee: return ctx.reweighted_ee();
  }
  throw input_error("unknown estimand");
}

/// Exact conditional-independence check on an enumerated joint.
inline bool joint_independent(const JointTable & j, const VertexSet & xs, const VertexSet & ys,
  const VertexSet & zs, double tol = 1e-9)
{
  VertexSet all(j.u.vars.begin(), j.u.vars.end());
  VertexSet rest = set_minus(set_minus(set_minus(all, xs), ys), zs);
  Tensor pabz = collapse(j.u, j.p, rest);
  Tensor pz = collapse(j.u, pabz, set_union(xs, ys));
  Tensor paz = collapse(j.u, pabz, ys);
  Tensor pbz = collapse(j.u, pabz, xs);
  for (std::size_t i = 0; i < j.u.total; ++i) {
    if (std::abs(pabz[i] * pz[i] - paz[i] * pbz[i]) > tol) { return false; }
  }
  return true;
}

}  // namespace arid

#endif  // ARID__ORACLE_HPP_
