// Command-line front end: graph criteria checks, identification, estimation,
// simulation benchmarks, and discrete oracle utilities over the text graph
// format and CSV datasets.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "arid/estimate.hpp"
#include "arid/identify.hpp"
#include "arid/oracle.hpp"
#include "arid/sim.hpp"

namespace
{

using nlohmann::json;

std::string slurp(const std::string & path)
{
  std::ifstream in(path);
  if (!in.good()) { throw arid::input_error("cannot open file '" + path + "'"); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string & path, const std::string & text)
{
  std::ofstream out(path);
  if (!out.good()) { throw arid::input_error("cannot write file '" + path + "'"); }
  out << text;
}

/// "model=var1,var2;model2=var3" -> misspecification map
std::map<arid::VertexId, arid::VertexSet> parse_misspecify(const std::string & text)
{
  std::map<arid::VertexId, arid::VertexSet> out;
  std::istringstream groups(text);
  std::string group;
  while (std::getline(groups, group, ';')) {
    if (group.empty()) { continue; }
    auto eq = group.find('=');
    if (eq == std::string::npos) {
      throw arid::input_error("bad --misspecify entry '" + group + "' (expected model=var,...)");
    }
    arid::VertexSet vars;
    std::istringstream items(group.substr(eq + 1));
    std::string item;
    while (std::getline(items, item, ',')) {
      if (!item.empty()) { vars.insert(item); }
    }
    out[group.substr(0, eq)] = vars;
  }
  return out;
}

arid::VertexSet parse_vertex_list(const std::string & text)
{
  arid::VertexSet out;
  std::istringstream items(text);
  std::string item;
  while (std::getline(items, item, ',')) {
    if (!item.empty()) { out.insert(item); }
  }
  return out;
}

json vertex_array(const arid::VertexSet & s) { return json(std::vector<std::string>(s.begin(), s.end())); }

struct Options
{
  std::string graph_path, data_path, schema_path, config_path, out_path, model_path, save_model_path;
  std::string criterion, estimator_name, misspecify, front;
  std::string treatment = "T", outcome = "Y";
  int value = 1;
  int basis = 1;
  std::uint64_t seed = 1;
  std::size_t sample_n = 0;
  bool as_json = false;
  bool want_psi = false;
};

int run_check(const Options & o)
{
  arid::Admg g = arid::parse_graph(slurp(o.graph_path));
  json out;
  out["criterion"] = o.criterion;
  std::ostringstream text;
  if (o.criterion == "a-fix") {
    bool ok = arid::is_a_fixable(g, o.treatment);
    out["result"] = ok;
    text << "a-fixable: " << (ok ? "true" : "false");
  } else if (o.criterion == "p-fix") {
    bool ok = arid::is_p_fixable(g, o.treatment);
    out["result"] = ok;
    text << "p-fixable: " << (ok ? "true" : "false");
  } else if (o.criterion == "nps") {
    arid::NpsVerdict v = arid::check_nps(g);
    out["result"] = v.saturated;
    text << "NPS: " << (v.saturated ? "true" : "false");
    if (v.witness) {
      out["witness"] = {v.witness->first, v.witness->second};
      text << ", witness: (" << v.witness->first << "," << v.witness->second << ")";
    }
  } else if (o.criterion == "mb-shielded") {
    bool ok = arid::is_mb_shielded(g);
    out["result"] = ok;
    text << "mb-shielded: " << (ok ? "true" : "false");
  } else {
    throw arid::input_error("unknown criterion '" + o.criterion
      + "' (expected a-fix, p-fix, nps, or mb-shielded)");
  }
  if (o.as_json) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << text.str() << "\n";
  }
  return 0;
}

int run_identify(const Options & o)
{
  arid::Admg g = arid::parse_graph(slurp(o.graph_path));
  arid::IdFunctional f = arid::identify(g, o.treatment, o.outcome);
  json out;
  out["strategy"] = arid::to_string(f.kind);
  out["identifiable"] = f.kind != arid::IdKind::not_identifiable;
  if (f.kind == arid::IdKind::not_identifiable) {
    if (f.fail_witness) { out["witness"] = vertex_array(*f.fail_witness); }
    if (o.as_json) {
      std::cout << out.dump(2) << "\n";
    } else {
      std::cout << "not identifiable";
      if (f.fail_witness) {
        std::cout << " (witness district:";
        for (const auto & v : *f.fail_witness) { std::cout << " " << v; }
        std::cout << ")";
      }
      std::cout << "\n";
    }
    return 2;
  }
  out["functional"] = f.rendered;
  if (!f.front.empty()) { out["front"] = vertex_array(f.front); }
  if (o.as_json) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "strategy: " << arid::to_string(f.kind) << "\n";
    if (!f.front.empty()) {
      std::cout << "front:";
      for (const auto & v : f.front) { std::cout << " " << v; }
      std::cout << "\n";
    }
    std::cout << "functional: " << f.rendered << "\n";
  }
  return 0;
}

int run_estimate(const Options & o)
{
  arid::Admg g = arid::parse_graph(slurp(o.graph_path));
  std::string schema = o.schema_path.empty() ? "" : slurp(o.schema_path);
  arid::Dataset d = arid::parse_csv(slurp(o.data_path), schema);
  arid::EstimateOptions opts;
  opts.basis = o.basis;
  if (!o.misspecify.empty()) { opts.misspecify = parse_misspecify(o.misspecify); }

  arid::EstimateResult r;
  if (o.estimator_name == "reweighted" && !o.front.empty()) {
    r = arid::est_reweighted(d, g, o.treatment, o.value, o.outcome, parse_vertex_list(o.front), opts);
  } else {
    r = arid::detail::run_estimator(o.estimator_name, d, g, o.treatment, o.value, o.outcome, opts);
  }
  if (o.as_json) {
    json out;
    out["estimator"] = r.estimator;
    out["treatment"] = o.treatment;
    out["value"] = o.value;
    out["outcome"] = o.outcome;
    out["psi_hat"] = r.psi_hat;
    out["se"] = r.se;
    out["n"] = d.n;
    out["nuisances"] = r.nuisances;
    out["warnings"] = r.warnings;
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout.precision(17);
    std::cout << "estimator: " << r.estimator << "\n"
              << "psi_hat: " << r.psi_hat << "\n"
              << "se: " << r.se << "\n"
              << "n: " << d.n << "\n";
    for (const auto & s : r.nuisances) { std::cout << "nuisance: " << s << "\n"; }
    for (const auto & s : r.warnings) { std::cout << "warning: " << s << "\n"; }
  }
  return 0;
}

int run_simulate(const Options & o)
{
  arid::SimConfig cfg = arid::parse_sim_config(slurp(o.config_path));
  std::vector<arid::SimReport> reports = arid::run_simulation(cfg);
  if (o.as_json) {
    json out = json::array();
    for (const auto & r : reports) {
      out.push_back({{"estimator", r.estimator}, {"scenario", r.scenario}, {"n", r.n},
        {"n_trials", r.n_trials}, {"true_value", r.true_value}, {"bias", r.bias},
        {"variance", r.variance}, {"mc_se", r.mc_se}});
    }
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout.precision(6);
    for (const auto & r : reports) {
      std::cout << r.estimator << " " << r.scenario << ": bias=" << r.bias
                << " variance=" << r.variance << " mc_se=" << r.mc_se << " (n=" << r.n
                << ", trials=" << r.n_trials << ", truth=" << r.true_value << ")\n";
    }
  }
  return 0;
}

int run_oracle(const Options & o)
{
  arid::DiscreteDagModel m;
  if (!o.model_path.empty()) {
    m = arid::load_model(slurp(o.model_path));
  } else {
    arid::Admg g = arid::parse_graph(slurp(o.graph_path));
    m = arid::make_random_model(g, o.seed);
  }
  json out;
  std::ostringstream text;
  if (!o.save_model_path.empty()) {
    write_file(o.save_model_path, arid::save_model(m));
    out["model_written"] = o.save_model_path;
    text << "model written: " << o.save_model_path << "\n";
  }
  if (o.want_psi) {
    double psi = arid::truth_psi(m, o.treatment, o.value, o.outcome);
    out["psi"] = psi;
    text.precision(17);
    text << "psi(" << o.treatment << "=" << o.value << "): " << psi << "\n";
  }
  if (o.sample_n > 0) {
    if (o.out_path.empty()) { throw arid::input_error("--sample requires --out"); }
    arid::Dataset d;
    for (const auto & [v, col] : arid::sample_model(m, o.sample_n, o.seed + 1)) {
      d.add_column(v, col);
    }
    write_file(o.out_path, arid::to_csv(d));
    out["sample_written"] = o.out_path;
    out["sample_n"] = o.sample_n;
    text << "sample written: " << o.out_path << " (n=" << o.sample_n << ")\n";
  }
  std::cout << (o.as_json ? out.dump(2) + "\n" : text.str());
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Causal effect identification and estimation in graphical models with hidden variables"};
  app.set_version_flag("--version", "arid 1.0.0");
  app.require_subcommand(1);

  Options o;
  // reserved for parallel trial workers; current runners are sequential
  if (const char * env = std::getenv("ARID_THREADS")) { (void)env; }

  auto add_common = [&](CLI::App * sub) { sub->add_flag("--json", o.as_json, "JSON output"); };

  CLI::App * check = app.add_subcommand("check", "Check a graph criterion");
  check->add_option("--graph", o.graph_path, "graph file")->required();
  check->add_option("--criterion", o.criterion, "a-fix | p-fix | nps | mb-shielded")->required();
  check->add_option("--treatment", o.treatment, "treatment vertex (a-fix/p-fix)");
  add_common(check);

  CLI::App * identify = app.add_subcommand("identify", "Identify the effect of a treatment");
  identify->add_option("--graph", o.graph_path, "graph file")->required();
  identify->add_option("--treatment", o.treatment, "treatment vertex")->required();
  identify->add_option("--outcome", o.outcome, "outcome vertex")->required();
  add_common(identify);

  CLI::App * estimate = app.add_subcommand("estimate", "Estimate an average potential outcome");
  estimate->add_option("--graph", o.graph_path, "graph file")->required();
  estimate->add_option("--data", o.data_path, "CSV dataset")->required();
  estimate->add_option("--schema", o.schema_path, "column-type JSON sidecar");
  estimate->add_option("--treatment", o.treatment, "treatment vertex")->required();
  estimate->add_option("--outcome", o.outcome, "outcome vertex")->required();
  estimate->add_option("--value", o.value, "treatment value (0 or 1)");
  estimate
    ->add_option("--estimator", o.estimator_name,
      "gaipw | primal | dual | apipw | eff-gaipw | eff-apipw | reweighted | anipw")
    ->required();
  estimate->add_option("--misspecify", o.misspecify, "model=var1,var2;model2=... (drop columns)");
  estimate->add_option("--basis", o.basis, "polynomial basis degree for nuisance fits");
  estimate->add_option("--front", o.front, "comma-separated front set (reweighted)");
  add_common(estimate);

  CLI::App * simulate = app.add_subcommand("simulate", "Run a simulation benchmark");
  simulate->add_option("--config", o.config_path, "simulation config JSON")->required();
  add_common(simulate);

  CLI::App * oracle = app.add_subcommand("oracle", "Discrete ground-truth model utilities");
  oracle->add_option("--graph", o.graph_path, "graph file (random model from seed)");
  oracle->add_option("--model", o.model_path, "load a model JSON instead of generating");
  oracle->add_option("--seed", o.seed, "model generation seed");
  oracle->add_flag("--psi", o.want_psi, "print the true average potential outcome");
  oracle->add_option("--treatment", o.treatment, "treatment vertex");
  oracle->add_option("--value", o.value, "treatment value");
  oracle->add_option("--outcome", o.outcome, "outcome vertex");
  oracle->add_option("--sample", o.sample_n, "draw this many rows");
  oracle->add_option("--out", o.out_path, "CSV output path for --sample");
  oracle->add_option("--save-model", o.save_model_path, "write the model JSON here");
  add_common(oracle);

  CLI11_PARSE(app, argc, argv);

  try {
    if (check->parsed()) { return run_check(o); }
    if (identify->parsed()) { return run_identify(o); }
    if (estimate->parsed()) { return run_estimate(o); }
    if (simulate->parsed()) { return run_simulate(o); }
    if (oracle->parsed()) {
      if (o.graph_path.empty() && o.model_path.empty()) {
        throw arid::input_error("oracle needs --graph or --model");
      }
      return run_oracle(o);
    }
  } catch (const arid::precondition_error & e) {
    std::cerr << "error: " << e.what() << "\n";
    if (o.as_json) { std::cout << json{{"error", e.what()}, {"kind", "precondition"}}.dump(2) << "\n"; }
    return 3;
  } catch (const arid::input_error & e) {
    std::cerr << "error: " << e.what() << "\n";
    if (o.as_json) { std::cout << json{{"error", e.what()}, {"kind", "input"}}.dump(2) << "\n"; }
    return 1;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    if (o.as_json) { std::cout << json{{"error", e.what()}, {"kind", "internal"}}.dump(2) << "\n"; }
    return 1;
  }
  return 0;
}
