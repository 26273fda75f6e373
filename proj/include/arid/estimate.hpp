#pragma once

// Sample-level estimators of the interventional outcome mean psi(t):
// generalized AIPW, primal and dual IPW, the augmented primal IPW influence
// function, the efficient projections for mb-shielded graphs, sequentially
// reweighted estimating equations, and the augmented nested IPW.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arid/fixing.hpp"
#include "arid/identify.hpp"
#include "arid/nuisance.hpp"

namespace arid
{

struct EstimateOptions
{
  /// model target -> conditioning variables to drop (deliberate misspecification)
  std::map<VertexId, VertexSet> misspecify;
  int basis = 1;
  bool c_block_dual = true;   ///< pre-treatment projection terms use the dual score
};

struct EstimateResult
{
  double psi_hat = 0.0;
  std::vector<double> contributions;
  double se = 0.0;
  std::string estimator;
  std::vector<std::string> nuisances;
  std::vector<std::string> warnings;
};

namespace detail
{

inline Family family_for(const Dataset & d, const VertexId & v)
{
  return contains(d.binary, v) ? Family::binary_logistic : Family::gaussian_linear;
}

inline void require_binary(const Dataset & d, const VertexId & v, const std::string & role)
{
  if (!contains(d.binary, v)) {
    throw precondition_error(role + " '" + v + "' must be binary for this estimator");
  }
}

inline void require_columns(const Dataset & d, const Admg & g)
{
  for (const auto & v : g.random()) {
    if (!d.columns.count(v)) { throw input_error("dataset has no column for vertex '" + v + "'"); }
  }
}

/// Density/regression model fit honoring the misspecification map.
inline FittedModel fit_model(const Dataset & d, const VertexId & target, const VertexSet & cond,
  Family family, const EstimateOptions & opts)
{
  ModelSpec spec;
  spec.target = target;
  spec.conditioning = cond;
  spec.family = family;
  spec.basis = opts.basis;
  auto it = opts.misspecify.find(target);
  if (it != opts.misspecify.end()) { spec.dropped = set_intersect(it->second, cond); }
  return fit(d, spec);
}

inline std::string describe(const FittedModel & f)
{
  std::string s = f.spec.target + " ~ {";
  bool first = true;
  for (const auto & v : f.kept) {
    s += (first ? "" : ", ") + v;
    first = false;
  }
  s += "}";
  if (!f.spec.dropped.empty()) {
    s += " (dropped:";
    for (const auto & v : f.spec.dropped) { s += " " + v; }
    s += ")";
  }
  if (!f.converged) { s += " [not converged]"; }
  return s;
}

/// Conditional density tracking how often the clipping bound was hit.
inline double dens(const FittedModel & f, const std::map<VertexId, double> & row, long & clipped)
{
  double v = cond_density(f, row);
  if (f.spec.family == Family::binary_logistic
    && (v <= f.clip_eps + 1e-15 || v >= 1.0 - f.clip_eps - 1e-15)) {
    ++clipped;
  }
  return v;
}

/// Probability that the (binary) target equals `val` given the row.
inline double prob_of(const FittedModel & f, std::map<VertexId, double> row, double val,
  long & clipped)
{
  row[f.spec.target] = val;
  return dens(f, row, clipped);
}

inline void finalize(EstimateResult & r)
{
  const double n = double(r.contributions.size());
  double mu = 0.0;
  for (double c : r.contributions) { mu += c; }
  mu /= n;
  double var = 0.0;
  for (double c : r.contributions) { var += (c - mu) * (c - mu); }
  var /= (n > 1 ? n - 1 : 1);
  r.psi_hat = mu;
  r.se = std::sqrt(var / n);
}

inline void clip_warning(EstimateResult & r, long clipped, long evals)
{
  if (evals > 0 && double(clipped) / double(evals) > 0.10) {
    r.warnings.push_back("clipped " + std::to_string(clipped) + " of " + std::to_string(evals)
      + " density evaluations (> 10%)");
  }
}

/// Latent projection onto the outcome's ancestors plus the treatment; the
/// graph on which the p-fixable scores are formed.
inline Admg outcome_restriction(const Admg & g, const VertexId & t, const VertexId & y)
{
  VertexSet keep = ancestors(g, VertexSet{y});
  keep.insert(t);
  for (const auto & w : g.context()) { keep.insert(w); }
  return latent_projection(g, keep);
}

/// Per-sample primal scores I(T=t) * (sum_T prod of late-block densities) /
/// (prod of late-block densities) * Y, with the outcome's own density
/// replaced by an outcome regression whenever Y sits in the late block.
struct PrimalScore
{
  std::vector<double> values;
  std::vector<std::string> notes;
  long clipped = 0;
  long evals = 0;
};

inline PrimalScore primal_scores(const Dataset & d, const Admg & gr, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts)
{
  if (!is_p_fixable(gr, t)) {
    throw precondition_error("treatment '" + t + "' is not primal fixable");
  }
  require_binary(d, t, "treatment");
  PrimalScore out;
  TopoOrder tau = topological_order(gr, t, y);
  Partition_CLM part = partition_clm(gr, tau, t);

  if (is_fixable(gr, t) && !contains(part.l_set, y)) {
    // late block is just the treatment: score reduces to plain IPW
    FittedModel pi = fit_model(d, t, markov_pillow(gr, tau, t), Family::binary_logistic, opts);
    out.notes.push_back(describe(pi));
    for (std::size_t i = 0; i < d.n; ++i) {
      auto r = d.row(i);
      double ind = r.at(t) == double(t_val) ? 1.0 : 0.0;
      double p = prob_of(pi, r, double(t_val), out.clipped);
      ++out.evals;
      out.values.push_back(ind / p * r.at(y));
    }
    return out;
  }

  std::map<VertexId, FittedModel> dens_models;
  std::optional<FittedModel> ymodel;
  for (const auto & l : part.l_set) {
    VertexSet mp = markov_pillow(gr, tau, l);
    if (l == y) {
      ymodel = fit_model(d, y, mp, family_for(d, y), opts);
      out.notes.push_back(describe(*ymodel));
    } else {
      dens_models.emplace(l, fit_model(d, l, mp, family_for(d, l), opts));
      out.notes.push_back(describe(dens_models.at(l)));
    }
  }
  for (std::size_t i = 0; i < d.n; ++i) {
    auto r = d.row(i);
    double ind = r.at(t) == double(t_val) ? 1.0 : 0.0;
    double den = 1.0;
    for (const auto & [l, f] : dens_models) {
      den *= dens(f, r, out.clipped);
      ++out.evals;
    }
    double num = 0.0;
    for (int tv : {0, 1}) {
      auto rc = r;
      rc[t] = double(tv);
      double p = 1.0;
      for (const auto & [l, f] : dens_models) {
        p *= dens(f, rc, out.clipped);
        ++out.evals;
      }
      if (ymodel) { p *= mean(*ymodel, rc); }
      num += p;
    }
    double tail = ymodel ? 1.0 : r.at(y);
    out.values.push_back(ind * num / den * tail);
  }
  return out;
}

/// Per-sample dual scores: product of clamped-over-observed density ratios
/// over the inverse Markov pillow of the treatment, times the outcome (or an
/// outcome regression at T=t when Y itself sits in the inverse pillow).
inline PrimalScore dual_scores(const Dataset & d, const Admg & gr, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts)
{
  if (!is_p_fixable(gr, t)) {
    throw precondition_error("treatment '" + t + "' is not primal fixable");
  }
  require_binary(d, t, "treatment");
  PrimalScore out;
  TopoOrder tau = topological_order(gr, t, y);
  VertexSet inv = inverse_markov_pillow(gr, tau, t);

  std::map<VertexId, FittedModel> dens_models;
  std::optional<FittedModel> ymodel;
  for (const auto & v : inv) {
    VertexSet mp = markov_pillow(gr, tau, v);
    if (v == y) {
      ymodel = fit_model(d, y, mp, family_for(d, y), opts);
      out.notes.push_back(describe(*ymodel));
    } else {
      dens_models.emplace(v, fit_model(d, v, mp, family_for(d, v), opts));
      out.notes.push_back(describe(dens_models.at(v)));
    }
  }
  for (std::size_t i = 0; i < d.n; ++i) {
    auto r = d.row(i);
    auto rc = r;
    rc[t] = double(t_val);
    double w = 1.0;
    for (const auto & [v, f] : dens_models) {
      w *= dens(f, rc, out.clipped) / dens(f, r, out.clipped);
      out.evals += 2;
    }
    double tail = ymodel ? mean(*ymodel, rc) : r.at(y);
    out.values.push_back(w * tail);
  }
  return out;
}

/// AIPW-style contributions I(T=t)/pi * (Y - mu) + mu with nuisances fit
/// under the supplied per-row weights (empty = unweighted).
inline PrimalScore gaipw_scores(const Dataset & d, const VertexId & t, int t_val,
  const VertexId & y, const VertexSet & pillow, const EstimateOptions & opts,
  const std::vector<double> & weights)
{
  require_binary(d, t, "treatment");
  Dataset dw = d;
  if (!weights.empty()) { dw.set_weights(weights); }
  FittedModel pi = fit_model(dw, t, pillow, Family::binary_logistic, opts);
  FittedModel mu = fit_model(dw, y, set_union(pillow, VertexSet{t}), family_for(d, y), opts);
  PrimalScore out;
  out.notes.push_back(describe(pi));
  out.notes.push_back(describe(mu));
  for (std::size_t i = 0; i < d.n; ++i) {
    auto r = d.row(i);
    double ind = r.at(t) == double(t_val) ? 1.0 : 0.0;
    double p = prob_of(pi, r, double(t_val), out.clipped);
    ++out.evals;
    auto rc = r;
    rc[t] = double(t_val);
    double m = mean(mu, rc);
    out.values.push_back(ind / p * (r.at(y) - m) + m);
  }
  return out;
}

}  // namespace detail

/// AIPW estimator for adjustment-fixable treatments: doubly robust in the
/// propensity score and outcome regression, both conditioned on the
/// treatment's Markov pillow.
inline EstimateResult est_gaipw(const Dataset & d, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts = {})
{
  detail::require_columns(d, g);
  if (!is_fixable(g, t)) {
    throw precondition_error("treatment '" + t + "' is not adjustment fixable");
  }
  TopoOrder tau = topological_order(g, t, y);
  auto sc = detail::gaipw_scores(d, t, t_val, y, markov_pillow(g, tau, t), opts, {});
  EstimateResult r;
  r.estimator = "gaipw";
  r.contributions = std::move(sc.values);
  r.nuisances = std::move(sc.notes);
  detail::clip_warning(r, sc.clipped, sc.evals);
  detail::finalize(r);
  return r;
}

inline EstimateResult est_primal_ipw(const Dataset & d, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts = {})
{
  detail::require_columns(d, g);
  Admg gr = detail::outcome_restriction(g, t, y);
  auto sc = detail::primal_scores(d, gr, t, t_val, y, opts);
  EstimateResult r;
  r.estimator = "primal";
  r.contributions = std::move(sc.values);
  r.nuisances = std::move(sc.notes);
  detail::clip_warning(r, sc.clipped, sc.evals);
  detail::finalize(r);
  return r;
}

inline EstimateResult est_dual_ipw(const Dataset & d, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts = {})
{
  detail::require_columns(d, g);
  Admg gr = detail::outcome_restriction(g, t, y);
  auto sc = detail::dual_scores(d, gr, t, t_val, y, opts);
  EstimateResult r;
  r.estimator = "dual";
  r.contributions = std::move(sc.values);
  r.nuisances = std::move(sc.notes);
  detail::clip_warning(r, sc.clipped, sc.evals);
  detail::finalize(r);
  return r;
}

namespace detail
{

/// Machinery for the explicit augmented primal IPW influence function.  All
/// mid/late-block variables except the outcome must be binary; inner sums
/// enumerate their configurations, and the outcome's innermost sum is
/// replaced by an outcome regression.
struct ApipwEngine
{
  const Dataset & d;
  Admg gr;
  VertexId t, y;
  int t_val;
  TopoOrder tau;
  Partition_CLM part;
  std::vector<VertexId> s;  ///< mid and late blocks in topological order
  std::map<VertexId, FittedModel> dens_models;
  FittedModel ymodel;
  std::vector<std::string> notes;
  long clipped = 0;
  long evals = 0;

  ApipwEngine(const Dataset & dd, const Admg & graph, const VertexId & tt, int tv,
    const VertexId & yy, const EstimateOptions & opts)
  : d(dd), gr(graph), t(tt), y(yy), t_val(tv)
  {
    if (!is_p_fixable(gr, t)) {
      throw precondition_error("treatment '" + t + "' is not primal fixable");
    }
    require_binary(d, t, "treatment");
    tau = topological_order(gr, t, y);
    part = partition_clm(gr, tau, t);
    VertexSet ml = set_union(part.m_set, part.l_set);
    for (const auto & v : tau) {
      if (contains(ml, v)) { s.push_back(v); }
    }
    if (s.empty() || s.back() != y) {
      throw precondition_error("outcome '" + y + "' must close the post-treatment blocks");
    }
    for (const auto & v : s) {
      if (v == y) {
        ymodel = fit_model(d, y, markov_pillow(gr, tau, y), family_for(d, y), opts);
        notes.push_back(describe(ymodel));
      } else {
        require_binary(d, v, "post-treatment variable");
        dens_models.emplace(v,
          fit_model(d, v, markov_pillow(gr, tau, v), Family::binary_logistic, opts));
        notes.push_back(describe(dens_models.at(v)));
      }
    }
  }

  bool starred(const VertexId & v) const { return contains(part.m_set, v); }

  double factor(const VertexId & v, const std::map<VertexId, double> & r)
  {
    if (starred(v)) {
      auto rc = r;
      rc[t] = double(t_val);
      ++evals;
      return dens(dens_models.at(v), rc, clipped);
    }
    ++evals;
    return dens(dens_models.at(v), r, clipped);
  }

  /// Nested sum over binary configurations of `sum_vars` (never containing
  /// the outcome) of prod(factors) times the outcome part.  `y_summed`
  /// replaces the outcome's own factor-and-sum by the fitted regression.
  double nested(std::map<VertexId, double> & r, const std::vector<VertexId> & sum_vars,
    std::size_t k, const std::vector<VertexId> & factors, bool y_summed, double y_obs)
  {
    if (k < sum_vars.size()) {
      double total = 0.0;
      double saved = r.at(sum_vars[k]);
      for (int val : {0, 1}) {
        r[sum_vars[k]] = double(val);
        total += nested(r, sum_vars, k + 1, factors, y_summed, y_obs);
      }
      r[sum_vars[k]] = saved;
      return total;
    }
    double p = 1.0;
    for (const auto & v : factors) { p *= factor(v, r); }
    double ypart;
    if (y_summed) {
      if (starred(y)) {
        auto rc = r;
        rc[t] = double(t_val);
        ypart = mean(ymodel, rc);
      } else {
        ypart = mean(ymodel, r);
      }
    } else {
      ypart = y_obs;
    }
    return p * ypart;
  }

  /// One term sum: variables in `block` are summed (and their factors taken
  /// together with every late-block factor for the first kind of term).
  double block_sum(std::map<VertexId, double> r, VertexSet sum_set, VertexSet prod_set,
    double y_obs)
  {
    bool y_summed = contains(sum_set, y);
    sum_set.erase(y);
    prod_set.erase(y);
    std::vector<VertexId> sum_vars, factors;
    for (const auto & v : s) {
      if (contains(sum_set, v)) { sum_vars.push_back(v); }
      if (contains(prod_set, v)) { factors.push_back(v); }
    }
    return nested(r, sum_vars, 0, factors, y_summed, y_obs);
  }

  double contribution(std::size_t i)
  {
    auto r = d.row(i);
    const double y_obs = r.at(y);
    const double ind = r.at(t) == double(t_val) ? 1.0 : 0.0;
    auto idx = order_index(tau);
    double total = 0.0;

    // mid-block terms, weighted by the indicator over earlier late factors
    for (const auto & m : part.m_set) {
      double w = ind;
      if (w != 0.0) {
        for (const auto & l : part.l_set) {
          if (l != y && idx.at(l) < idx.at(m)) { w /= factor(l, r); }
        }
      }
      if (w == 0.0) { continue; }
      VertexSet succ, succeq{m};
      for (const auto & v : s) {
        if (idx.at(v) > idx.at(m)) {
          succ.insert(v);
          succeq.insert(v);
        }
      }
      double b1 = block_sum(r, set_union(VertexSet{t}, succ), set_union(part.l_set, succ), y_obs);
      double b2 =
        block_sum(r, set_union(VertexSet{t}, succeq), set_union(part.l_set, succeq), y_obs);
      total += w * (b1 - b2);
    }

    // late-block terms (excluding the treatment), weighted by products of
    // clamped-over-observed mid factors
    for (const auto & l : part.l_set) {
      if (l == t) { continue; }
      double w = 1.0;
      for (const auto & m : part.m_set) {
        if (idx.at(m) < idx.at(l)) {
          auto rc = r;
          rc[t] = double(t_val);
          w *= dens(dens_models.at(m), rc, clipped) / dens(dens_models.at(m), r, clipped);
          evals += 2;
        }
      }
      VertexSet succ, succeq{l};
      for (const auto & v : s) {
        if (idx.at(v) > idx.at(l)) {
          succ.insert(v);
          succeq.insert(v);
        }
      }
      double c1 = block_sum(r, succ, succ, y_obs);
      double c2 = block_sum(r, succeq, succeq, y_obs);
      total += w * (c1 - c2);
    }

    // anchor term: full mid/late sum given the pre-treatment prefix
    VertexSet rest;
    for (const auto & v : s) {
      if (v != t) { rest.insert(v); }
    }
    total += block_sum(r, rest, rest, y_obs);
    return total;
  }
};

}  // namespace detail

/// Augmented primal IPW: the full influence function for primal-fixable
/// treatments, doubly robust across the mid-block and late-block nuisances.
inline EstimateResult est_apipw(const Dataset & d, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts = {})
{
  detail::require_columns(d, g);
  Admg gr = detail::outcome_restriction(g, t, y);
  detail::ApipwEngine eng(d, gr, t, t_val, y, opts);
  EstimateResult r;
  r.estimator = "apipw";
  for (std::size_t i = 0; i < d.n; ++i) { r.contributions.push_back(eng.contribution(i)); }
  r.nuisances = eng.notes;
  detail::clip_warning(r, eng.clipped, eng.evals);
  detail::finalize(r);
  return r;
}

/// Vertices whose projection terms provably vanish from the efficient
/// influence function: conditional instruments and irrelevant vertices.
struct ProjectionSets
{
  VertexSet z_set;
  VertexSet d_set;
};

inline ProjectionSets projection_sets(const Admg & g, const TopoOrder & tau, const VertexId & t,
  const VertexId & y)
{
  ProjectionSets out;
  Admg g_no_t = g;
  g_no_t.remove_vertex(t);
  for (const auto & v : g.random()) {
    if (v == t || v == y) { continue; }
    VertexSet mp = markov_pillow(g, tau, v);
    bool indep_y = m_separated(g_no_t, VertexSet{v}, VertexSet{y}, set_minus(mp, VertexSet{t}));
    bool indep_t = m_separated(g, VertexSet{v}, VertexSet{t}, mp);
    if (indep_y && !indep_t) {
      out.z_set.insert(v);
      continue;
    }
    VertexSet targets = set_union(VertexSet{t, y}, markov_pillow(g, tau, t));
    if (m_separated(g, VertexSet{v}, targets, mp)) { out.d_set.insert(v); }
  }
  return out;
}

namespace detail
{

/// Sum of projection differences E[score | V_i, mp(V_i)] - E[score | mp(V_i)]
/// over the given vertices; empty-pillow reduced terms stand for the target
/// itself and are resolved jointly at the end.
struct ProjectionLadder
{
  const Dataset & d;
  const EstimateOptions & opts;
  std::vector<double> totals;  ///< running per-row pair-term sums
  std::vector<std::string> notes;
  int anchor_count = 0;        ///< number of empty-pillow terms seen
  double anchor_mean_sum = 0;  ///< sum of the score means for those terms

  explicit ProjectionLadder(const Dataset & dd, const EstimateOptions & oo)
  : d(dd), opts(oo), totals(dd.n, 0.0)
  {
  }

  void add_terms(const Admg & g, const TopoOrder & tau, const VertexSet & vertices,
    const std::vector<double> & score)
  {
    for (const auto & v : vertices) {
      VertexSet mp = markov_pillow(g, tau, v);
      FittedModel full = regress_beta(d, score, set_union(mp, VertexSet{v}), opts.basis);
      notes.push_back("E[score | " + v + ", pillow] via " + describe(full));
      if (mp.empty()) {
        double mu = 0.0;
        for (double b : score) { mu += b; }
        mu /= double(d.n);
        ++anchor_count;
        anchor_mean_sum += mu;  // placeholder for the target parameter
        for (std::size_t i = 0; i < d.n; ++i) { totals[i] += mean(full, d.row(i)); }
      } else {
        FittedModel red = regress_beta(d, score, mp, opts.basis);
        for (std::size_t i = 0; i < d.n; ++i) {
          auto r = d.row(i);
          totals[i] += mean(full, r) - mean(red, r);
        }
      }
    }
  }

  /// Solve for the estimate: the influence function contains the target once
  /// per empty-pillow term, so psi = mean(pair terms)/k; contributions are
  /// psi plus the centered influence values.
  std::vector<double> contributions() const
  {
    int k = std::max(anchor_count, 1);
    double mu = 0.0;
    for (double v : totals) { mu += v; }
    mu /= double(d.n);
    double psi = mu / double(k);
    std::vector<double> out(d.n);
    for (std::size_t i = 0; i < d.n; ++i) { out[i] = psi + (totals[i] - double(k) * psi); }
    return out;
  }
};

}  // namespace detail

/// Efficient AIPW for mb-shielded graphs with an adjustment-fixable
/// treatment: projects the IPW score onto every informative vertex's
/// (vertex, Markov pillow) pair.
inline EstimateResult est_eff_gaipw(const Dataset & d, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts = {})
{
  detail::require_columns(d, g);
  if (!is_fixable(g, t)) {
    throw precondition_error("treatment '" + t + "' is not adjustment fixable");
  }
  if (!is_mb_shielded(g)) {
    throw precondition_error("graph is not mb-shielded: the efficient projection is invalid");
  }
  detail::require_binary(d, t, "treatment");
  TopoOrder tau = topological_order(g, t, y);
  VertexSet pillow = markov_pillow(g, tau, t);
  FittedModel pi = detail::fit_model(d, t, pillow, Family::binary_logistic, opts);
  long clipped = 0, evals = 0;
  std::vector<double> score(d.n);
  for (std::size_t i = 0; i < d.n; ++i) {
    auto r = d.row(i);
    double ind = r.at(t) == double(t_val) ? 1.0 : 0.0;
    score[i] = ind / detail::prob_of(pi, r, double(t_val), clipped) * r.at(y);
    ++evals;
  }
  ProjectionSets ps = projection_sets(g, tau, t, y);
  VertexSet v_star = set_minus(g.random(), set_union(ps.z_set, ps.d_set));
  v_star.erase(t);

  detail::ProjectionLadder ladder(d, opts);
  ladder.add_terms(g, tau, v_star, score);
  EstimateResult r;
  r.estimator = "eff-gaipw";
  r.contributions = ladder.contributions();
  r.nuisances.push_back(detail::describe(pi));
  for (auto & n : ladder.notes) { r.nuisances.push_back(std::move(n)); }
  detail::clip_warning(r, clipped, evals);
  detail::finalize(r);
  return r;
}

/// Efficient augmented primal IPW for mb-shielded graphs: mid-block terms
/// project the primal score, late-block terms project the dual score, and
/// pre-treatment terms project either (dual by default).
inline EstimateResult est_eff_apipw(const Dataset & d, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts = {})
{
  detail::require_columns(d, g);
  if (!is_p_fixable(g, t)) {
    throw precondition_error("treatment '" + t + "' is not primal fixable");
  }
  if (!is_mb_shielded(g)) {
    throw precondition_error("graph is not mb-shielded: the efficient projection is invalid");
  }
  // keep pre-treatment structure; only the outcome's strict descendants drop
  Admg gp = g;
  for (const auto & v : set_minus(descendants(g, y), VertexSet{y})) { gp.remove_vertex(v); }
  TopoOrder tau = topological_order(gp, t, y);
  Partition_CLM part = partition_clm(gp, tau, t);

  auto sp = detail::primal_scores(d, gp, t, t_val, y, opts);
  auto sd = detail::dual_scores(d, gp, t, t_val, y, opts);

  detail::ProjectionLadder ladder(d, opts);
  ladder.add_terms(gp, tau, part.m_set, sp.values);
  ladder.add_terms(gp, tau, part.l_set, sd.values);
  ladder.add_terms(gp, tau, part.c_set, opts.c_block_dual ? sd.values : sp.values);

  EstimateResult r;
  r.estimator = "eff-apipw";
  r.contributions = ladder.contributions();
  r.nuisances = sp.notes;
  for (auto & n : sd.notes) { r.nuisances.push_back(std::move(n)); }
  for (auto & n : ladder.notes) { r.nuisances.push_back(std::move(n)); }
  detail::clip_warning(r, sp.clipped + sd.clipped, sp.evals + sd.evals);
  detail::finalize(r);
  return r;
}

/// Sequentially reweighted estimating equations: p-fix the front set `z`
/// with sample-level weights, then solve an AIPW-form equation under the
/// reweighted law.  With an empty front this is exactly est_apipw.
inline EstimateResult est_reweighted(const Dataset & d, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, const VertexSet & z, const EstimateOptions & opts = {})
{
  detail::require_columns(d, g);
  if (z.empty()) {
    EstimateResult r = est_apipw(d, g, t, t_val, y, opts);
    r.estimator = "reweighted";
    return r;
  }
  if (contains(z, t) || contains(z, y)) {
    throw precondition_error("front set may not contain the treatment or outcome");
  }

  // order the front by repeated reverse-topological passes
  Admg gr = detail::outcome_restriction(g, t, y);
  for (const auto & v : z) {
    if (!gr.has_vertex(v)) { throw precondition_error("front vertex '" + v + "' is irrelevant"); }
  }
  TopoOrder tau = topological_order(gr, t, y);
  std::vector<VertexId> sequence;
  {
    Admg cur = gr;
    VertexSet remaining = z;
    bool progress = true;
    while (!remaining.empty() && progress) {
      progress = false;
      for (auto it = tau.rbegin(); it != tau.rend(); ++it) {
        if (contains(remaining, *it) && is_p_fixable(cur, *it)) {
          sequence.push_back(*it);
          cur.fix_vertex(*it);
          remaining.erase(*it);
          progress = true;
        }
      }
    }
    if (!remaining.empty()) {
      throw precondition_error("front set admits no valid p-fixing sequence");
    }
    if (!is_p_fixable(cur, t)) {
      throw precondition_error("treatment is not primal fixable after fixing the front set");
    }
  }

  EstimateResult r;
  r.estimator = "reweighted";
  // the misspecification map targets the final-stage nuisances; the fixing
  // weights and reference marginals are always fit in full
  EstimateOptions wopts = opts;
  wopts.misspecify.clear();
  long clipped = 0, evals = 0;
  std::vector<double> inv_weight(d.n, 1.0);  // running 1 / prod of fixing weights
  Admg cur = gr;
  for (const auto & v : sequence) {
    TopoOrder cur_tau = topological_order(cur, t, y);
    if (children(cur, v).empty()) {
      r.nuisances.push_back("front " + v + ": marginalized (no weight)");
      cur.remove_vertex(v);
      continue;
    }
    VertexSet block = set_minus(district_of(cur, v), preceding(cur_tau, v));
    block.insert(v);
    Dataset dw = d;
    dw.set_weights(inv_weight);
    if (block == VertexSet{v}) {
      FittedModel f =
        detail::fit_model(dw, v, markov_pillow(cur, cur_tau, v), detail::family_for(d, v), wopts);
      r.nuisances.push_back("front weight pi_" + v + " via " + detail::describe(f));
      for (std::size_t i = 0; i < d.n; ++i) {
        inv_weight[i] /= detail::dens(f, d.row(i), clipped);
        ++evals;
      }
    } else {
      // nested propensity: ratio of the block product to its sum over v
      detail::require_binary(d, v, "front vertex");
      std::map<VertexId, FittedModel> fs;
      for (const auto & b : block) {
        fs.emplace(b,
          detail::fit_model(dw, b, markov_pillow(cur, cur_tau, b), detail::family_for(d, b), wopts));
        r.nuisances.push_back("front weight factor via " + detail::describe(fs.at(b)));
      }
      for (std::size_t i = 0; i < d.n; ++i) {
        auto row = d.row(i);
        double num = 1.0;
        for (const auto & [b, f] : fs) {
          num *= detail::dens(f, row, clipped);
          ++evals;
        }
        double den = 0.0;
        for (int val : {0, 1}) {
          auto rc = row;
          rc[v] = double(val);
          double p = 1.0;
          for (const auto & [b, f] : fs) {
            p *= detail::dens(f, rc, clipped);
            ++evals;
          }
          den += p;
        }
        inv_weight[i] /= num / den;
      }
    }
    cur.fix_vertex(v);
  }

  // reference density over the front: product of fitted marginals
  std::vector<double> front_density(d.n, 1.0);
  for (const auto & v : z) {
    FittedModel f = detail::fit_model(d, v, {}, detail::family_for(d, v), wopts);
    r.nuisances.push_back("reference marginal via " + detail::describe(f));
    for (std::size_t i = 0; i < d.n; ++i) {
      front_density[i] *= detail::dens(f, d.row(i), clipped);
      ++evals;
    }
  }
  std::vector<double> w(d.n);
  for (std::size_t i = 0; i < d.n; ++i) { w[i] = front_density[i] * inv_weight[i]; }

  // drop the front entirely: the reweighted law renders it irrelevant
  for (const auto & v : z) {
    if (cur.has_vertex(v)) { cur.remove_vertex(v); }
  }
  if (!is_fixable(cur, t)) {
    throw precondition_error(
      "treatment is not adjustment fixable in the reweighted graph; unsupported front set");
  }
  TopoOrder ftau = topological_order(cur, t, y);
  auto sc = detail::gaipw_scores(d, t, t_val, y, markov_pillow(cur, ftau, t), opts, w);
  for (auto & n : sc.notes) { r.nuisances.push_back("final " + n); }

  double wbar = 0.0;
  for (double x : w) { wbar += x; }
  wbar /= double(d.n);
  r.contributions.resize(d.n);
  for (std::size_t i = 0; i < d.n; ++i) { r.contributions[i] = w[i] * sc.values[i] / wbar; }
  detail::clip_warning(r, clipped + sc.clipped, evals + sc.evals);
  detail::finalize(r);
  return r;
}

/// Augmented nested IPW: rebalancing weights from the nested fixing plan,
/// then a doubly robust AIPW step under the reweighted law.  With no
/// rebalanced districts this is exactly est_gaipw.
inline EstimateResult est_anipw(const Dataset & d, const Admg & g, const VertexId & t,
  int t_val, const VertexId & y, const EstimateOptions & opts = {})
{
  detail::require_columns(d, g);
  NestedPlanResult res = nested_ipw_plan(g, t, y);
  if (!res.plan) {
    std::string msg = "effect is not identifiable";
    if (res.fail_witness) {
      msg += "; witness district {";
      bool first = true;
      for (const auto & v : *res.fail_witness) {
        msg += (first ? "" : ", ") + v;
        first = false;
      }
      msg += "}";
    }
    throw precondition_error(msg);
  }
  const NestedPlan & plan = *res.plan;
  if (plan.d_star.empty()) {
    EstimateResult r = est_gaipw(d, g, t, t_val, y, opts);
    r.estimator = "anipw";
    return r;
  }

  EstimateResult r;
  r.estimator = "anipw";
  // rebalancing weights are always fit in full; the misspecification map
  // targets the final-stage nuisances
  EstimateOptions wopts = opts;
  wopts.misspecify.clear();
  long clipped = 0, evals = 0;
  std::vector<double> w(d.n, 1.0);
  for (const RhoSpec & rho : plan.rho_specs) {
    // replay the fixing sequence with sequentially weighted density fits
    std::vector<double> kw(d.n, 1.0);
    Admg cur = g;
    for (const FixStep & step : rho.fixing.steps) {
      if (step.kind == FixKind::marginalize) {
        cur.remove_vertex(step.vertex);
        continue;
      }
      Dataset dw = d;
      dw.set_weights(kw);
      FittedModel f = detail::fit_model(dw, step.vertex, markov_blanket(cur, step.vertex),
        detail::family_for(d, step.vertex), wopts);
      r.nuisances.push_back("rebalance step via " + detail::describe(f));
      for (std::size_t i = 0; i < d.n; ++i) {
        kw[i] /= detail::dens(f, d.row(i), clipped);
        ++evals;
      }
      cur.fix_vertex(step.vertex);
    }
    // numerator: district conditionals under the replayed weights;
    // denominator: observed-law conditionals at the Markov pillows
    Dataset dw = d;
    dw.set_weights(kw);
    for (const auto & [di, cond] : rho.numerator) {
      FittedModel fn = detail::fit_model(dw, di, cond, detail::family_for(d, di), wopts);
      r.nuisances.push_back("rebalance numerator via " + detail::describe(fn));
      for (std::size_t i = 0; i < d.n; ++i) {
        w[i] *= detail::dens(fn, d.row(i), clipped);
        ++evals;
      }
    }
    for (const auto & [di, cond] : rho.denominator) {
      FittedModel fd = detail::fit_model(d, di, cond, detail::family_for(d, di), wopts);
      r.nuisances.push_back("rebalance denominator via " + detail::describe(fd));
      for (std::size_t i = 0; i < d.n; ++i) {
        w[i] /= detail::dens(fd, d.row(i), clipped);
        ++evals;
      }
    }
  }

  auto sc = detail::gaipw_scores(d, t, t_val, y, plan.treatment_pillow, opts, w);
  for (auto & n : sc.notes) { r.nuisances.push_back("final " + n); }
  double wbar = 0.0;
  for (double x : w) { wbar += x; }
  wbar /= double(d.n);
  r.contributions.resize(d.n);
  for (std::size_t i = 0; i < d.n; ++i) { r.contributions[i] = w[i] * sc.values[i] / wbar; }
  detail::clip_warning(r, clipped + sc.clipped, evals + sc.evals);
  detail::finalize(r);
  return r;
}

}  // namespace arid
