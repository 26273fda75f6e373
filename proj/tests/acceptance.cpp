// Acceptance gate: one pass/fail line per shipped guarantee, nonzero exit on
// any failure.  Each criterion is self-contained and timed.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "arid/estimate.hpp"
#include "arid/identify.hpp"
#include "arid/oracle.hpp"
#include "arid/sim.hpp"

using namespace arid;

namespace
{

int g_failures = 0;

struct Checker
{
  std::ostringstream log;
  bool ok = true;

  void expect(bool cond, const std::string & what)
  {
    if (!cond) {
      ok = false;
      log << "    FAIL: " << what << "\n";
    }
  }
  void near(double a, double b, double tol, const std::string & what)
  {
    expect(std::isfinite(a) && std::abs(a - b) <= tol,
      what + " (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
};

void criterion(int number, const std::string & name, const std::function<void(Checker &)> & body)
{
  Checker c;
  auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception & e) {
    c.ok = false;
    c.log << "    exception: " << e.what() << "\n";
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s  criterion %2d: %s (%.1fs)\n", c.ok ? "PASS" : "FAIL", number, name.c_str(), secs);
  std::cout << c.log.str();
  if (!c.ok) { ++g_failures; }
}

std::string slurp(const std::string & path)
{
  std::ifstream in(path);
  if (!in.good()) { throw input_error("cannot open " + path); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Admg parse_fixture(const std::string & name)
{
  return parse_graph(slurp(std::string(ARID_FIXTURE_DIR) + "/" + name));
}

/// Seeded random ADMG over V1..Vk.
Admg random_admg(std::uint64_t seed, int min_v, int max_v)
{
  std::mt19937_64 rng(seed * 7919 + 13);
  std::uniform_int_distribution<int> nv(min_v, max_v);
  std::bernoulli_distribution dir(0.35), bi(0.25);
  int k = nv(rng);
  Admg g;
  for (int i = 1; i <= k; ++i) { g.add_random("V" + std::to_string(i)); }
  std::vector<VertexId> vs(g.random().begin(), g.random().end());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      if (dir(rng)) { g.add_directed(vs[i], vs[j]); }
      if (bi(rng)) { g.add_bidirected(vs[i], vs[j]); }
    }
  }
  return g;
}

Dataset dataset_from(const DiscreteDagModel & m, std::size_t n, std::uint64_t seed)
{
  Dataset d;
  for (const auto & [v, col] : sample_model(m, n, seed)) { d.add_column(v, col); }
  return d;
}

struct CliRun
{
  int status = -1;
  std::string out;
};

CliRun run_cli(const std::string & args)
{
  std::string cmd = std::string(ARID_CLI_PATH) + " " + args + " 2>&1";
  FILE * pipe = popen(cmd.c_str(), "r");
  CliRun r;
  if (!pipe) { return r; }
  std::array<char, 4096> buf{};
  while (std::size_t got = std::fread(buf.data(), 1, buf.size(), pipe)) { r.out.append(buf.data(), got); }
  int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

struct ArmStats
{
  double bias = 0.0;
  double mc_se = 0.0;
};

/// Run one benchmark scenario grid and return bias/mc_se per arm.
std::vector<std::pair<std::string, ArmStats>> run_grid(const std::string & sim, std::uint64_t seed,
  int trials, std::size_t n)
{
  SimConfig cfg;
  cfg.simulation = sim;
  cfg.master_seed = seed;
  cfg.trials = trials;
  cfg.n = n;
  cfg.truth_draws = 1000000;
  std::vector<std::pair<std::string, ArmStats>> out;
  for (const SimReport & r : run_simulation(cfg)) { out.push_back({r.scenario, {r.bias, r.mc_se}}); }
  return out;
}

void check_dr_pattern(Checker & c, const std::string & sim,
  const std::vector<std::pair<std::string, ArmStats>> & arms)
{
  for (const auto & [scenario, s] : arms) {
    double ratio = std::abs(s.bias) / s.mc_se;
    bool wrecked = scenario == "both_wrong";
    c.log << "    " << sim << " " << scenario << ": bias=" << s.bias << " mc_se=" << s.mc_se
          << " ratio=" << ratio << "\n";
    if (wrecked) {
      c.expect(ratio > 3.0, sim + " " + scenario + " should be biased (> 3 mc_se)");
    } else {
      c.expect(ratio < 3.0, sim + " " + scenario + " should be unbiased (< 3 mc_se)");
    }
  }
}

}  // namespace

int main()
{
  std::cout.precision(6);

  criterion(1, "population estimating equations recover the truth on six oracles", [](Checker & c) {
    struct Case
    {
      const char * file;
      bool p_fixable;
      bool a_fixable;
    };
    for (const Case & k : {Case{"backdoor.txt", true, true}, Case{"bow.txt", false, false},
           Case{"fig3a_primal.txt", true, false}, Case{"fig3b_primal.txt", true, false},
           Case{"fig7a_sequential.txt", false, false}, Case{"fig8_nested.txt", false, false}}) {
      Admg g = parse_fixture(k.file);
      DiscreteDagModel m = make_random_model(g, 101);
      JointTable j = observed_joint(m);
      for (int tv : {0, 1}) {
        std::string tag = std::string(k.file) + " t=" + std::to_string(tv);
        if (k.p_fixable) {
          double truth = truth_psi(m, "T", tv, "Y");
          c.near(exact_estimator_value(j, g, "T", tv, "Y", Estimand::beta_primal), truth, 1e-10,
            tag + " primal");
          c.near(exact_estimator_value(j, g, "T", tv, "Y", Estimand::beta_dual), truth, 1e-10,
            tag + " dual");
          c.near(exact_estimator_value(j, g, "T", tv, "Y", Estimand::if_apipw), truth, 1e-10,
            tag + " augmented IF mean");
          if (k.a_fixable) {
            c.near(exact_estimator_value(j, g, "T", tv, "Y", Estimand::if_gaipw), truth, 1e-10,
              tag + " adjustment IF mean");
          }
        } else {
          bool threw = false;
          try {
            exact_estimator_value(j, g, "T", tv, "Y", Estimand::beta_primal);
          } catch (const precondition_error &) {
            threw = true;
          }
          c.expect(threw, tag + " primal must be rejected");
        }
      }
    }
    // sequential front set and nested reweighting close the gap
    {
      Admg g = parse_fixture("fig7a_sequential.txt");
      DiscreteDagModel m = make_random_model(g, 101);
      JointTable j = observed_joint(m);
      for (int tv : {0, 1}) {
        c.near(exact_estimator_value(j, g, "T", tv, "Y", Estimand::reweighted_ee),
          truth_psi(m, "T", tv, "Y"), 1e-10, "fig7a reweighted");
      }
      Admg g8 = parse_fixture("fig8_nested.txt");
      DiscreteDagModel m8 = make_random_model(g8, 101);
      JointTable j8 = observed_joint(m8);
      for (int tv : {0, 1}) {
        c.near(exact_estimator_value(j8, g8, "T", tv, "Y", Estimand::psi_nested),
          truth_psi(m8, "T", tv, "Y"), 1e-10, "fig8 nested");
      }
    }
  });

  criterion(2, "kernel fixing algebra on 50 random mixed graphs", [](Checker & c) {
    int pd_checked = 0, comm_checked = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      Admg g = random_admg(seed, 3, 5);
      DiscreteDagModel m = make_random_model(g, seed);
      JointTable j = observed_joint(m);
      Kernel q = to_kernel(j);
      std::vector<VertexId> vs(g.random().begin(), g.random().end());

      // primal vs dual fixing agree once the treatment axis is clamped
      for (const auto & t : vs) {
        if (!is_p_fixable(g, t) || children(g, t).empty()) { continue; }
        VertexId y;
        for (const auto & v : vs) {
          if (v != t && !contains(ancestors(g, VertexSet{t}), v)) { y = v; }
        }
        if (y.empty()) { continue; }
        TopoOrder tau = topological_order(g, t, y);
        Kernel qp = kernel_primal_fix(q, g, t, &tau);
        for (int tv : {0, 1}) {
          Kernel qd = kernel_dual_fix(q, g, tau, t, tv);
          Tensor clamped = clamp_axis(q.u, qp.p, t, tv);
          for (std::size_t i = 0; i < clamped.size(); ++i) {
            if (std::abs(clamped[i] - qd.p[i]) > 1e-12) {
              c.expect(false, "primal/dual mismatch seed " + std::to_string(seed));
              break;
            }
          }
        }
        ++pd_checked;
        break;
      }

      // p-fixing commutes where both orders are admissible
      for (std::size_t a = 0; a < vs.size() && comm_checked <= int(seed); ++a) {
        for (std::size_t b = a + 1; b < vs.size(); ++b) {
          const VertexId &v1 = vs[a], &v2 = vs[b];
          Admg g1 = g, g2 = g;
          if (!is_p_fixable(g, v1) || !is_p_fixable(g, v2)) { continue; }
          g1.fix_vertex(v1);
          g2.fix_vertex(v2);
          if (!is_p_fixable(g1, v2) || !is_p_fixable(g2, v1)) { continue; }
          Kernel k1 = kernel_primal_fix(kernel_primal_fix(q, g, v1), g1, v2);
          Kernel k2 = kernel_primal_fix(kernel_primal_fix(q, g, v2), g2, v1);
          for (std::size_t i = 0; i < k1.p.size(); ++i) {
            if (std::abs(k1.p[i] - k2.p[i]) > 1e-12) {
              c.expect(false, "commutativity mismatch seed " + std::to_string(seed));
              break;
            }
          }
          ++comm_checked;
          break;
        }
      }
    }
    c.log << "    primal/dual instances: " << pd_checked << ", commuting pairs: " << comm_checked
          << "\n";
    c.expect(pd_checked >= 15, "too few primal/dual instances");
    c.expect(comm_checked >= 15, "too few commuting pairs");
  });

  criterion(3, "saturation verdict matches completeness of the arid projection", [](Checker & c) {
    c.expect(check_nps(parse_fixture("fig4a_saturated.txt")).saturated, "fig4a must be saturated");
    NpsVerdict v = check_nps(parse_fixture("fig4b_verma.txt"));
    c.expect(!v.saturated, "fig4b must not be saturated");
    c.expect(v.witness && v.witness->first == "C" && v.witness->second == "Y",
      "fig4b witness must be (C,Y)");
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
      Admg g = random_admg(seed + 500, 2, 6);
      bool nps = check_nps(g).saturated;
      bool complete = is_complete(maximal_arid_projection(g));
      if (nps != complete) {
        c.expect(false, "verdict/projection disagreement at seed " + std::to_string(seed));
      }
    }
  });

  criterion(4, "path separation matches exact conditional independence", [](Checker & c) {
    long triples = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      Admg g = random_admg(seed + 9000, 3, 5);
      DiscreteDagModel m = make_random_model(g, seed + 7);
      JointTable j = observed_joint(m);
      std::vector<VertexId> vs(g.random().begin(), g.random().end());
      for (std::size_t a = 0; a < vs.size(); ++a) {
        for (std::size_t b = a + 1; b < vs.size(); ++b) {
          std::vector<VertexId> rest;
          for (std::size_t k = 0; k < vs.size(); ++k) {
            if (k != a && k != b) { rest.push_back(vs[k]); }
          }
          for (std::size_t mask = 0; mask < (std::size_t(1) << rest.size()); ++mask) {
            VertexSet z;
            for (std::size_t k = 0; k < rest.size(); ++k) {
              if (mask & (std::size_t(1) << k)) { z.insert(rest[k]); }
            }
            bool sep = m_separated(g, VertexSet{vs[a]}, VertexSet{vs[b]}, z);
            bool ind = joint_independent(j, {vs[a]}, {vs[b]}, z);
            ++triples;
            if (sep != ind) {
              c.expect(false, "separation/independence disagreement seed " + std::to_string(seed)
                + " pair " + vs[a] + "," + vs[b]);
            }
          }
        }
      }
    }
    c.log << "    triples checked: " << triples << "\n";
  });

  criterion(5, "double robustness of the adjustment estimator (benchmark 1)", [](Checker & c) {
    check_dr_pattern(c, "sim1", run_grid("sim1", 1, 100, 1000));
  });

  criterion(6, "double robustness of the augmented primal estimator (benchmark 2)", [](Checker & c) {
    check_dr_pattern(c, "sim2", run_grid("sim2", 9, 100, 1000));
  });

  criterion(7, "efficient estimators lower the contribution variance across n", [](Checker & c) {
    struct Cfg
    {
      const char * sim;
      std::uint64_t seed;
    };
    for (const Cfg & k : {Cfg{"sim1", 1}, Cfg{"sim2", 9}}) {
      SimConfig cfg;
      cfg.simulation = k.sim;
      cfg.master_seed = k.seed;
      arid::detail::SimSetup setup = arid::detail::sim_setup(cfg);
      ScmSpec scm = build_scm(setup.graph, setup.binary, k.seed);
      for (std::size_t n : {500u, 1000u, 2000u, 5000u}) {
        int wins = 0;
        const int trials = 100;
        for (int tr = 0; tr < trials; ++tr) {
          Dataset d = sample(scm, n, arid::detail::trial_seed(k.seed, 500000 + 1000 * n + tr));
          EstimateOptions opts;
          double base_var = 0.0, eff_var = 0.0;
          for (int tv : {1, 0}) {
            auto b = arid::detail::run_estimator(setup.estimator, d, setup.graph, "T", tv, "Y", opts);
            auto e = arid::detail::run_estimator(setup.efficient_estimator, d, setup.graph, "T", tv,
              "Y", opts);
            base_var += b.se * b.se;
            eff_var += e.se * e.se;
          }
          if (eff_var < base_var) { ++wins; }
        }
        c.log << "    " << k.sim << " n=" << n << ": wins " << wins << "/" << trials << "\n";
        c.expect(wins >= 90, std::string(k.sim) + " n=" + std::to_string(n) + " wins below 90");
      }
    }
  });

  criterion(8, "partial double robustness of the weighted estimators (benchmarks 3-4)",
    [](Checker & c) {
      check_dr_pattern(c, "sim3", run_grid("sim3", 1, 100, 1000));
      check_dr_pattern(c, "sim4", run_grid("sim4", 4, 100, 1000));
    });

  criterion(9, "degenerate configurations reduce to the simpler estimator, bit for bit",
    [](Checker & c) {
      EstimateOptions opts;
      opts.basis = 4;

      Admg g3 = parse_fixture("fig3b_primal.txt");
      Dataset d3 = dataset_from(make_random_model(g3, 43), 4000, 23);
      EstimateResult rw = est_reweighted(d3, g3, "T", 1, "Y", {}, opts);
      EstimateResult ap = est_apipw(d3, g3, "T", 1, "Y", opts);
      c.expect(rw.contributions == ap.contributions, "empty front: reweighted != augmented primal");

      Admg bd = parse_fixture("backdoor.txt");
      Dataset db = dataset_from(make_random_model(bd, 61), 4000, 31);
      EstimateResult an = est_anipw(db, bd, "T", 1, "Y", opts);
      EstimateResult ga = est_gaipw(db, bd, "T", 1, "Y", opts);
      c.expect(an.contributions == ga.contributions, "no rebalanced districts: nested != adjustment");

      EstimateResult pr = est_primal_ipw(db, bd, "T", 1, "Y", opts);
      TopoOrder tau = topological_order(bd, "T", "Y");
      FittedModel pi =
        arid::detail::fit_model(db, "T", markov_pillow(bd, tau, "T"), Family::binary_logistic, opts);
      bool exact = true;
      for (std::size_t i = 0; i < db.n; ++i) {
        auto row = db.row(i);
        double ind = row.at("T") == 1.0 ? 1.0 : 0.0;
        row["T"] = 1.0;
        if (pr.contributions[i] != ind / cond_density(pi, row) * db.col("Y")[i]) { exact = false; }
      }
      c.expect(exact, "adjustment-fixable primal != plain IPW");
    });

  criterion(10, "command-line runs are deterministic", [](Checker & c) {
    namespace fs = std::filesystem;
    fs::path tmp = fs::temp_directory_path() / "arid_acceptance";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    std::string fix = std::string(ARID_FIXTURE_DIR);

    std::string oracle_cmd = "oracle --graph " + fix + "/fig2_adjustment.txt --seed 41 --psi "
      + "--treatment T --value 1 --outcome Y --sample 3000 --out " + (tmp / "d.csv").string();
    CliRun o1 = run_cli(oracle_cmd);
    std::string data1 = slurp((tmp / "d.csv").string());
    CliRun o2 = run_cli(oracle_cmd);
    c.expect(o1.status == 0 && o1.out == o2.out, "oracle output differs across runs");
    c.expect(data1 == slurp((tmp / "d.csv").string()), "sampled CSV differs across runs");

    std::string est_cmd = "estimate --graph " + fix + "/fig2_adjustment.txt --data "
      + (tmp / "d.csv").string() + " --treatment T --outcome Y --value 1 --estimator eff-gaipw "
      + "--basis 4";
    CliRun e1 = run_cli(est_cmd);
    CliRun e2 = run_cli(est_cmd);
    c.expect(e1.status == 0 && e1.out == e2.out, "estimate output differs across runs");

    std::ofstream cfg(tmp / "cfg.json");
    cfg << "{\"simulation\":\"sim3\",\"n\":300,\"trials\":4,\"master_seed\":6,"
        << "\"truth_draws\":20000,\"output_dir\":\"" << (tmp / "simout").string() << "\"}";
    cfg.close();
    std::string sim_cmd = "simulate --config " + (tmp / "cfg.json").string();
    CliRun s1 = run_cli(sim_cmd);
    std::string box1 = slurp((tmp / "simout" / "boxplot_both_correct.csv").string());
    CliRun s2 = run_cli(sim_cmd);
    c.expect(s1.status == 0 && s1.out == s2.out, "simulate output differs across runs");
    c.expect(box1 == slurp((tmp / "simout" / "boxplot_both_correct.csv").string()),
      "simulation artifacts differ across runs");
  });

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
