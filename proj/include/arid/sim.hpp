#pragma once

// Structural-model construction from mixed graphs, sampling, interventional
// ground truth by Monte Carlo, and the four benchmark simulation runners
// (double robustness for AIPW and augmented primal IPW, partial double
// robustness for the reweighted and nested estimators, efficiency grids).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arid/estimate.hpp"

namespace arid
{

/// One structural equation: linear predictor over observed parents and
/// assigned hidden parents; binary vertices pass it through a logistic link.
struct Equation
{
  double intercept = 0.0;
  std::vector<std::pair<std::string, double>> terms;  ///< (parent, coefficient)
  bool binary = false;
};

/// A hidden confounder feeding both endpoints of one bidirected edge.
struct HiddenVar
{
  std::string name;
  bool bernoulli = false;  ///< Bernoulli(0.5) when true, Uniform(0,1) otherwise
};

struct ScmSpec
{
  Admg admg;
  VertexSet binary;
  std::vector<HiddenVar> hidden;
  std::map<VertexId, Equation> equations;  ///< per observed vertex
  std::uint64_t seed = 0;
};

namespace detail
{

inline std::vector<VertexId> dag_order(const Admg & g)
{
  // deterministic topological order over the observed vertices
  std::vector<VertexId> out;
  VertexSet done;
  while (out.size() < g.random().size()) {
    bool advanced = false;
    for (const auto & v : g.random()) {
      if (contains(done, v)) { continue; }
      if (set_minus(set_intersect(parents(g, v), g.random()), done).empty()) {
        out.push_back(v);
        done.insert(v);
        advanced = true;
        break;
      }
    }
    if (!advanced) { throw input_error("graph has a directed cycle"); }
  }
  return out;
}

inline double signed_coefficient(std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  std::bernoulli_distribution flip(0.5);
  double c = mag(rng);
  return flip(rng) ? -c : c;
}

}  // namespace detail

/// Build a structural model over the graph: every bidirected edge gets two
/// hidden parents (one Bernoulli(0.5), one Uniform(0,1)) feeding both
/// endpoints; every observed vertex gets a linear predictor over all its
/// parents with coefficients of magnitude Uniform(0.5, 1.5) and random sign.
inline ScmSpec build_scm(const Admg & g, const VertexSet & binary, std::uint64_t seed)
{
  for (const auto & v : binary) {
    if (!g.is_random(v)) { throw input_error("binary designation for unknown vertex '" + v + "'"); }
  }
  ScmSpec s;
  s.admg = g;
  s.binary = binary;
  s.seed = seed;
  std::mt19937_64 rng(seed ^ 0x5eedf00dULL);

  std::map<VertexId, std::vector<std::string>> hidden_parents;
  int h = 0;
  for (const auto & [a, b] : g.bidirected_edges()) {
    for (bool bern : {true, false}) {
      HiddenVar hv{"__h" + std::to_string(h++), bern};
      s.hidden.push_back(hv);
      hidden_parents[a].push_back(hv.name);
      hidden_parents[b].push_back(hv.name);
    }
  }
  // approximate marginal variances, propagated in causal order (covariances
  // ignored), used to keep logistic linear predictors near unit variance so
  // binary vertices retain overlap
  std::map<std::string, double> approx_var;
  for (const auto & hv : s.hidden) { approx_var[hv.name] = hv.bernoulli ? 0.25 : 1.0 / 12.0; }
  for (const auto & v : detail::dag_order(g)) {
    Equation eq;
    eq.binary = contains(binary, v);
    eq.intercept = detail::signed_coefficient(rng) * 0.5;
    for (const auto & p : parents(g, v)) { eq.terms.emplace_back(p, detail::signed_coefficient(rng)); }
    for (const auto & p : hidden_parents[v]) { eq.terms.emplace_back(p, detail::signed_coefficient(rng)); }
    double raw_var = 0.0;
    for (const auto & [p, c] : eq.terms) { raw_var += c * c * approx_var.at(p); }
    if (eq.binary && raw_var > 1.0) {
      double lambda = 1.0 / std::sqrt(raw_var);
      eq.intercept *= lambda;
      for (auto & [p, c] : eq.terms) { c *= lambda; }
      raw_var = 1.0;
    }
    approx_var[v] = eq.binary ? 0.25 : raw_var + 1.0;
    s.equations[v] = eq;
  }
  return s;
}

namespace detail
{

/// Draw one joint realization; `clamp` overrides vertex values after their
/// equations would fire (interventions).
inline std::map<std::string, double> draw(const ScmSpec & s, std::mt19937_64 & rng,
  const std::map<VertexId, double> & clamp, const std::vector<VertexId> & order)
{
  std::map<std::string, double> vals;
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto & hv : s.hidden) { vals[hv.name] = hv.bernoulli ? double(coin(rng)) : unif(rng); }
  for (const auto & v : order) {
    auto cl = clamp.find(v);
    double eta = s.equations.at(v).intercept;
    for (const auto & [p, c] : s.equations.at(v).terms) { eta += c * vals.at(p); }
    double value;
    if (s.equations.at(v).binary) {
      value = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    } else {
      value = eta + noise(rng);
    }
    vals[v] = cl == clamp.end() ? value : cl->second;
  }
  return vals;
}

}  // namespace detail

/// Sample an observed-data table; deterministic given the seed.
inline Dataset sample(const ScmSpec & s, std::size_t n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::vector<VertexId> order = detail::dag_order(s.admg);
  std::map<VertexId, std::vector<double>> cols;
  for (const auto & v : order) { cols[v].reserve(n); }
  for (std::size_t i = 0; i < n; ++i) {
    auto vals = detail::draw(s, rng, {}, order);
    for (const auto & v : order) { cols[v].push_back(vals.at(v)); }
  }
  Dataset d;
  for (const auto & v : order) { d.add_column(v, std::move(cols.at(v))); }
  // designations are structural, not inferred from the realized values
  d.binary = s.binary;
  return d;
}

struct TrueAce
{
  double value = 0.0;
  double mc_se = 0.0;
};

/// Interventional Monte Carlo ground truth for E[Y(1)] - E[Y(0)], using
/// common random numbers across the two arms.
inline TrueAce true_ace(const ScmSpec & s, const VertexId & t, const VertexId & y,
  std::size_t n_draws = 1000000, std::uint64_t seed = 777)
{
  std::vector<VertexId> order = detail::dag_order(s.admg);
  double sum = 0.0, sumsq = 0.0;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n_draws; ++i) {
    std::uint64_t draw_seed = rng();
    std::mt19937_64 r1(draw_seed), r0(draw_seed);
    double y1 = detail::draw(s, r1, {{t, 1.0}}, order).at(y);
    double y0 = detail::draw(s, r0, {{t, 0.0}}, order).at(y);
    double diff = y1 - y0;
    sum += diff;
    sumsq += diff * diff;
  }
  TrueAce out;
  out.value = sum / double(n_draws);
  double var = sumsq / double(n_draws) - out.value * out.value;
  out.mc_se = std::sqrt(std::max(var, 0.0) / double(n_draws));
  return out;
}

struct SimReport
{
  std::string estimator;
  std::string scenario;
  std::vector<double> trials;  ///< per-trial ACE estimates
  double true_value = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double mc_se = 0.0;
  std::size_t n = 0;
  int n_trials = 0;
};

struct SimConfig
{
  std::string simulation;  ///< sim1 | sim2 | sim3 | sim4 | custom
  std::size_t n = 1000;
  int trials = 100;
  std::uint64_t master_seed = 1;
  std::vector<std::size_t> n_grid;  ///< efficiency grid (sim1/sim2); empty = skip
  std::string output_dir;           ///< empty = no files written
  std::size_t truth_draws = 1000000;
  // custom runs
  std::string graph_text;
  std::string estimator;
  VertexId treatment = "T";
  VertexId outcome = "Y";
  VertexSet binary;
};

inline SimConfig parse_sim_config(const std::string & text)
{
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const std::exception & e) {
    throw input_error(std::string("bad simulation config JSON: ") + e.what());
  }
  SimConfig cfg;
  for (const auto & [key, val] : doc.items()) {
    if (key == "simulation") {
      cfg.simulation = val.get<std::string>();
    } else if (key == "n") {
      cfg.n = val.get<std::size_t>();
    } else if (key == "trials") {
      cfg.trials = val.get<int>();
    } else if (key == "master_seed") {
      cfg.master_seed = val.get<std::uint64_t>();
    } else if (key == "n_grid") {
      cfg.n_grid = val.get<std::vector<std::size_t>>();
    } else if (key == "output_dir") {
      cfg.output_dir = val.get<std::string>();
    } else if (key == "truth_draws") {
      cfg.truth_draws = val.get<std::size_t>();
    } else if (key == "graph") {
      cfg.graph_text = val.get<std::string>();
    } else if (key == "estimator") {
      cfg.estimator = val.get<std::string>();
    } else if (key == "treatment") {
      cfg.treatment = val.get<std::string>();
    } else if (key == "outcome") {
      cfg.outcome = val.get<std::string>();
    } else if (key == "binary") {
      for (const auto & v : val) { cfg.binary.insert(v.get<std::string>()); }
    } else {
      throw input_error("unknown simulation config key '" + key + "'");
    }
  }
  return cfg;
}

namespace detail
{

// the shipped benchmark graphs

inline const char * kSim1Graph =
  "V C1\nV C2\nV Z1\nV Z2\nV T\nV M\nV Y\nV D1\nV D2\n"
  "C1 -> Z1\nC1 -> T\nC1 -> M\nC2 -> Z1\nC2 -> T\nC2 -> M\nC2 -> D1\n"
  "Z1 -> Z2\nZ2 -> T\nT -> M\nM -> Y\nM -> D1\nY -> D2\nD1 -> D2\n"
  "Z1 <-> T\nZ2 <-> C1\nC2 <-> Y\nD1 <-> Y\n";

inline const char * kSim2Graph =
  "V C1\nV C2\nV Z1\nV Z2\nV T\nV M\nV L\nV Y\n"
  "C1 -> T\nC1 -> L\nC2 -> T\nC2 -> M\nC2 -> L\nC2 -> Y\n"
  "T -> M\nM -> L\nL -> Y\n"
  "T <-> L\nZ1 <-> C1\nZ2 <-> C2\n";

inline const char * kSim3Graph =
  "V Z1\nV Z2\nV C\nV T\nV Y\n"
  "Z1 -> Z2\nZ2 -> T\nC -> T\nC -> Y\nT -> Y\n"
  "Z1 <-> T\nZ1 <-> Y\n";

inline const char * kSim4Graph =
  "V Z\nV C\nV T\nV R1\nV R2\nV M\nV Y\n"
  "Z -> T\nC -> T\nC -> Y\nT -> R1\nT -> Y\nR1 -> M\nM -> Y\nR2 -> Y\n"
  "Z <-> R2\nZ <-> R1\nR2 <-> T\nC <-> M\nC <-> Y\n";

struct SimSetup
{
  Admg graph;
  VertexSet binary;
  std::string estimator;
  /// scenario name -> misspecification map
  std::vector<std::pair<std::string, std::map<VertexId, VertexSet>>> scenarios;
  std::string efficient_estimator;  ///< empty = no efficiency grid
};

inline SimSetup sim_setup(const SimConfig & cfg)
{
  SimSetup s;
  if (cfg.simulation == "sim1") {
    s.graph = parse_graph(kSim1Graph);
    s.binary = {"Z1", "T", "D2"};
    s.estimator = "gaipw";
    s.efficient_estimator = "eff-gaipw";
    VertexSet t_cond{"Z1", "Z2", "C1", "C2"};
    s.scenarios = {
      {"both_correct", {}},
      {"treatment_wrong", {{"T", t_cond}}},
      {"outcome_wrong", {{"Y", t_cond}}},
      {"both_wrong", {{"T", t_cond}, {"Y", t_cond}}},
    };
  } else if (cfg.simulation == "sim2") {
    s.graph = parse_graph(kSim2Graph);
    s.binary = {"Z1", "C1", "T", "M", "L"};
    s.estimator = "apipw";
    s.efficient_estimator = "eff-apipw";
    std::map<VertexId, VertexSet> mid{{"M", {"T", "C2"}}, {"Y", {"L", "M", "T", "C1", "C2"}}};
    std::map<VertexId, VertexSet> late{{"T", {"C1", "C2"}}, {"L", {"M", "T", "C1", "C2"}}};
    auto both = mid;
    both.insert(late.begin(), late.end());
    s.scenarios = {
      {"both_correct", {}},
      {"mid_wrong", mid},
      {"late_wrong", late},
      {"both_wrong", both},
    };
  } else if (cfg.simulation == "sim3") {
    s.graph = parse_graph(kSim3Graph);
    s.binary = {"Z2", "T"};
    s.estimator = "reweighted";
    s.scenarios = {
      {"both_correct", {}},
      {"propensity_wrong", {{"T", {"C"}}}},
      {"outcome_wrong", {{"Y", {"C"}}}},
      {"both_wrong", {{"T", {"C"}}, {"Y", {"C"}}}},
    };
  } else if (cfg.simulation == "sim4") {
    s.graph = parse_graph(kSim4Graph);
    s.binary = {"R1", "R2", "T"};
    s.estimator = "anipw";
    s.scenarios = {
      {"both_correct", {}},
      {"propensity_wrong", {{"T", {"Z", "C"}}}},
      {"outcome_wrong", {{"Y", {"Z", "C"}}}},
      {"both_wrong", {{"T", {"Z", "C"}}, {"Y", {"Z", "C"}}}},
    };
  } else if (cfg.simulation == "custom") {
    if (cfg.graph_text.empty() || cfg.estimator.empty()) {
      throw input_error("custom simulation needs 'graph' and 'estimator'");
    }
    s.graph = parse_graph(cfg.graph_text);
    s.binary = cfg.binary.empty() ? VertexSet{cfg.treatment} : cfg.binary;
    s.estimator = cfg.estimator;
    s.scenarios = {{"custom", {}}};
  } else {
    throw input_error("unknown simulation '" + cfg.simulation + "' (expected sim1..sim4 or custom)");
  }
  return s;
}

inline EstimateResult run_estimator(const std::string & name, const Dataset & d, const Admg & g,
  const VertexId & t, int t_val, const VertexId & y, const EstimateOptions & opts)
{
  if (name == "gaipw") { return est_gaipw(d, g, t, t_val, y, opts); }
  if (name == "primal") { return est_primal_ipw(d, g, t, t_val, y, opts); }
  if (name == "dual") { return est_dual_ipw(d, g, t, t_val, y, opts); }
  if (name == "apipw") { return est_apipw(d, g, t, t_val, y, opts); }
  if (name == "eff-gaipw") { return est_eff_gaipw(d, g, t, t_val, y, opts); }
  if (name == "eff-apipw") { return est_eff_apipw(d, g, t, t_val, y, opts); }
  if (name == "reweighted") {
    IdFunctional f = identify(g, t, y);
    return est_reweighted(d, g, t, t_val, y, f.front, opts);
  }
  if (name == "anipw") { return est_anipw(d, g, t, t_val, y, opts); }
  throw input_error("unknown estimator '" + name + "'");
}

inline std::uint64_t trial_seed(std::uint64_t master, std::uint64_t index)
{
  // splitmix64 on a counter: embarrassingly parallel yet reproducible
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline void write_file(const std::string & dir, const std::string & name, const std::string & text)
{
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / name);
  out << text;
}

}  // namespace detail

/// Run the configured benchmark: a misspecification grid of ACE estimates
/// per scenario, plus an efficiency table over the n grid when requested.
/// Writes boxplot_<scenario>.csv and efficiency_table.csv when an output
/// directory is set.
inline std::vector<SimReport> run_simulation(const SimConfig & cfg)
{
  detail::SimSetup setup = detail::sim_setup(cfg);
  ScmSpec scm = build_scm(setup.graph, setup.binary, cfg.master_seed);
  TrueAce truth = true_ace(scm, cfg.treatment, cfg.outcome, cfg.truth_draws,
    detail::trial_seed(cfg.master_seed, 0));

  std::vector<SimReport> reports;
  std::ostringstream metadata;
  metadata << "{\n  \"hidden_bernoulli_p\": 0.5,\n  \"hidden_uniform\": [0.0, 1.0],\n"
           << "  \"coefficient_magnitude\": [0.5, 1.5],\n  \"true_ace\": " << truth.value
           << ",\n  \"true_ace_mc_se\": " << truth.mc_se << "\n}\n";

  for (const auto & [scenario, misspec] : setup.scenarios) {
    SimReport rep;
    rep.estimator = setup.estimator;
    rep.scenario = scenario;
    rep.true_value = truth.value;
    rep.n = cfg.n;
    rep.n_trials = cfg.trials;
    EstimateOptions opts;
    opts.misspecify = misspec;
    for (int trial = 0; trial < cfg.trials; ++trial) {
      std::uint64_t seed = detail::trial_seed(cfg.master_seed, 1000 + std::uint64_t(trial));
      Dataset d = sample(scm, cfg.n, seed);
      double a1 = detail::run_estimator(setup.estimator, d, setup.graph, cfg.treatment, 1,
        cfg.outcome, opts)
                    .psi_hat;
      double a0 = detail::run_estimator(setup.estimator, d, setup.graph, cfg.treatment, 0,
        cfg.outcome, opts)
                    .psi_hat;
      rep.trials.push_back(a1 - a0);
    }
    double mu = 0.0;
    for (double v : rep.trials) { mu += v; }
    mu /= double(rep.trials.size());
    double var = 0.0;
    for (double v : rep.trials) { var += (v - mu) * (v - mu); }
    var /= double(rep.trials.size() > 1 ? rep.trials.size() - 1 : 1);
    rep.bias = mu - truth.value;
    rep.variance = var;
    rep.mc_se = std::sqrt(var / double(rep.trials.size()));
    reports.push_back(rep);

    if (!cfg.output_dir.empty()) {
      std::ostringstream csv;
      csv.precision(17);
      csv << "trial,ace_hat\n";
      for (std::size_t i = 0; i < rep.trials.size(); ++i) { csv << i << "," << rep.trials[i] << "\n"; }
      detail::write_file(cfg.output_dir, "boxplot_" + scenario + ".csv", csv.str());
    }
  }

  if (!cfg.n_grid.empty() && !setup.efficient_estimator.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "n,base_bias,base_variance,eff_bias,eff_variance,eff_contrib_var_win_fraction\n";
    for (std::size_t n : cfg.n_grid) {
      std::vector<double> base_aces, eff_aces;
      int wins = 0;
      for (int trial = 0; trial < cfg.trials; ++trial) {
        std::uint64_t seed = detail::trial_seed(cfg.master_seed, 500000 + 1000 * n + std::uint64_t(trial));
        Dataset d = sample(scm, n, seed);
        EstimateOptions opts;
        double bvar = 0.0, evar = 0.0, bace = 0.0, eace = 0.0;
        for (int tv : {1, 0}) {
          EstimateResult b =
            detail::run_estimator(setup.estimator, d, setup.graph, cfg.treatment, tv, cfg.outcome, opts);
          EstimateResult e = detail::run_estimator(setup.efficient_estimator, d, setup.graph,
            cfg.treatment, tv, cfg.outcome, opts);
          bace += tv == 1 ? b.psi_hat : -b.psi_hat;
          eace += tv == 1 ? e.psi_hat : -e.psi_hat;
          bvar += b.se * b.se;
          evar += e.se * e.se;
        }
        base_aces.push_back(bace);
        eff_aces.push_back(eace);
        if (evar < bvar) { ++wins; }
      }
      auto stats = [](const std::vector<double> & xs) {
        double mu = 0.0;
        for (double x : xs) { mu += x; }
        mu /= double(xs.size());
        double var = 0.0;
        for (double x : xs) { var += (x - mu) * (x - mu); }
        var /= double(xs.size() > 1 ? xs.size() - 1 : 1);
        return std::pair<double, double>(mu, var);
      };
      auto [bmu, bvar] = stats(base_aces);
      auto [emu, evar] = stats(eff_aces);
      csv << n << "," << (bmu - truth.value) << "," << bvar << "," << (emu - truth.value) << ","
          << evar << "," << double(wins) / double(cfg.trials) << "\n";
    }
    if (!cfg.output_dir.empty()) {
      detail::write_file(cfg.output_dir, "efficiency_table.csv", csv.str());
    }
  }

  if (!cfg.output_dir.empty()) { detail::write_file(cfg.output_dir, "metadata.json", metadata.str()); }
  return reports;
}

}  // namespace arid
