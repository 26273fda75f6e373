#pragma once

// Weighted generalized-linear nuisance models: conditional means, conditional
// densities, density ratios, and regressions of per-sample scores onto
// conditioning sets.  Gaussian models use closed-form weighted least squares;
// binary models use iteratively reweighted least squares.

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include "arid/graph.hpp"

namespace arid
{

/// Column-oriented sample table.  Columns are untyped doubles; `binary`
/// records which columns hold {0,1} values.  `weights` is empty (all ones)
/// or one positive value per row.
struct Dataset
{
  std::vector<VertexId> names;                       ///< column order
  std::map<VertexId, std::vector<double>> columns;
  VertexSet binary;
  std::vector<double> weights;
  std::size_t n = 0;

  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }

  const std::vector<double> & col(const VertexId & v) const
  {
    auto it = columns.find(v);
    if (it == columns.end()) { throw input_error("dataset has no column '" + v + "'"); }
    return it->second;
  }

  void add_column(const VertexId & v, std::vector<double> values)
  {
    if (n == 0 && columns.empty()) {
      n = values.size();
    } else if (values.size() != n) {
      throw input_error("column '" + v + "' has " + std::to_string(values.size())
        + " rows, expected " + std::to_string(n));
    }
    bool all01 = true;
    for (double x : values) {
      if (x != 0.0 && x != 1.0) {
        all01 = false;
        break;
      }
    }
    if (all01) { binary.insert(v); }
    if (!columns.count(v)) { names.push_back(v); }
    columns[v] = std::move(values);
  }

  void set_weights(std::vector<double> w)
  {
    if (w.size() != n) { throw input_error("weight vector length mismatch"); }
    for (double x : w) {
      if (!(x > 0.0) || !std::isfinite(x)) { throw input_error("weights must be positive"); }
    }
    weights = std::move(w);
  }

  std::map<VertexId, double> row(std::size_t i) const
  {
    std::map<VertexId, double> r;
    for (const auto & v : names) { r[v] = columns.at(v)[i]; }
    return r;
  }
};

/// Parse a CSV table with a header row.  Binary columns are inferred when all
/// values lie in {0,1}; `schema_json`, when non-empty, overrides the
/// inference with {"columns": {"name": "binary"|"continuous"}}.
inline Dataset parse_csv(const std::string & text, const std::string & schema_json = "")
{
  Dataset d;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) { throw input_error("empty CSV input"); }
  if (!line.empty() && line.back() == '\r') { line.pop_back(); }
  std::vector<VertexId> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) {
      if (cell.empty()) { throw input_error("empty CSV header cell"); }
      header.push_back(cell);
    }
  }
  std::vector<std::vector<double>> cols(header.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') { line.pop_back(); }
    if (line.empty()) { continue; }
    std::istringstream rs(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(rs, cell, ',')) {
      if (k >= header.size()) { throw input_error("line " + std::to_string(lineno) + ": too many cells"); }
      try {
        cols[k].push_back(std::stod(cell));
      } catch (const std::exception &) {
        throw input_error("line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++k;
    }
    if (k != header.size()) { throw input_error("line " + std::to_string(lineno) + ": too few cells"); }
  }
  for (std::size_t k = 0; k < header.size(); ++k) { d.add_column(header[k], std::move(cols[k])); }
  if (!schema_json.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(schema_json);
    } catch (const std::exception & e) {
      throw input_error(std::string("bad schema JSON: ") + e.what());
    }
    if (doc.contains("columns")) {
      for (const auto & [name, kind] : doc.at("columns").items()) {
        if (!d.columns.count(name)) { throw input_error("schema names unknown column '" + name + "'"); }
        std::string k = kind.get<std::string>();
        if (k == "binary") {
          d.binary.insert(name);
        } else if (k == "continuous") {
          d.binary.erase(name);
        } else {
          throw input_error("schema column kind must be 'binary' or 'continuous', got '" + k + "'");
        }
      }
    }
  }
  return d;
}

inline std::string to_csv(const Dataset & d)
{
  std::ostringstream out;
  out.precision(17);
  for (std::size_t k = 0; k < d.names.size(); ++k) { out << (k ? "," : "") << d.names[k]; }
  out << "\n";
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t k = 0; k < d.names.size(); ++k) {
      out << (k ? "," : "") << d.columns.at(d.names[k])[i];
    }
    out << "\n";
  }
  return out.str();
}

enum class Family { binary_logistic, gaussian_linear };

/// Specification of one conditional model.  `dropped` removes conditioning
/// variables from the design (deliberate misspecification); `basis` is the
/// total polynomial degree of the design expansion.
struct ModelSpec
{
  VertexId target;
  VertexSet conditioning;
  Family family = Family::gaussian_linear;
  VertexSet dropped;
  int basis = 1;

  void validate() const
  {
    if (contains(conditioning, target)) {
      throw input_error("model target '" + target + "' also appears in its conditioning set");
    }
    if (!set_minus(dropped, conditioning).empty()) {
      throw input_error("dropped variables must be a subset of the conditioning set");
    }
    if (basis < 1) { throw input_error("basis degree must be >= 1"); }
  }
};

struct FittedModel
{
  ModelSpec spec;
  std::vector<VertexId> kept;                    ///< design variables, sorted
  std::vector<std::vector<int>> term_powers;     ///< per non-intercept term
  std::vector<double> coefficients;              ///< intercept first
  double residual_variance = 1.0;                ///< gaussian only
  bool converged = true;
  int iterations = 0;
  double clip_eps = 0.01;
};

namespace detail
{

/// All monomial exponent vectors with total degree in [1, degree] and a
/// per-variable exponent cap, in a deterministic order.  Binary variables are
/// capped at exponent one (higher powers would duplicate the column), so
/// raising the degree adds their interactions instead.
inline std::vector<std::vector<int>> monomials(const std::vector<int> & caps, int degree)
{
  const std::size_t k = caps.size();
  std::vector<std::vector<int>> out;
  std::vector<int> cur(k, 0);
  auto rec = [&](auto && self, std::size_t pos, int remaining) -> void {
    if (pos == k) {
      int total = 0;
      for (int e : cur) { total += e; }
      if (total >= 1) { out.push_back(cur); }
      return;
    }
    for (int e = 0; e <= std::min(remaining, caps[pos]); ++e) {
      cur[pos] = e;
      self(self, pos + 1, remaining - e);
    }
    cur[pos] = 0;
  };
  rec(rec, 0, degree);
  return out;
}

inline double eval_term(const std::vector<int> & powers, const std::vector<double> & xs)
{
  double v = 1.0;
  for (std::size_t k = 0; k < powers.size(); ++k) {
    for (int e = 0; e < powers[k]; ++e) { v *= xs[k]; }
  }
  return v;
}

inline Eigen::MatrixXd design_matrix(const Dataset & d, const std::vector<VertexId> & kept,
  const std::vector<std::vector<int>> & terms)
{
  Eigen::MatrixXd x(d.n, 1 + terms.size());
  std::vector<const std::vector<double> *> cols;
  for (const auto & v : kept) { cols.push_back(&d.col(v)); }
  std::vector<double> xs(kept.size());
  for (std::size_t i = 0; i < d.n; ++i) {
    x(i, 0) = 1.0;
    for (std::size_t k = 0; k < kept.size(); ++k) { xs[k] = (*cols[k])[i]; }
    for (std::size_t j = 0; j < terms.size(); ++j) { x(i, 1 + j) = eval_term(terms[j], xs); }
  }
  return x;
}

inline std::string term_name(const std::vector<VertexId> & kept, const std::vector<int> & powers)
{
  std::string s;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    for (int e = 0; e < powers[k]; ++e) { s += (s.empty() ? "" : "*") + kept[k]; }
  }
  return s.empty() ? "1" : s;
}

/// Weighted least squares with a rank check; throws naming the first
/// collinear design column when the system is singular.
inline Eigen::VectorXd solve_wls(const Eigen::MatrixXd & x, const Eigen::VectorXd & y,
  const Eigen::VectorXd & w, const std::vector<VertexId> & kept,
  const std::vector<std::vector<int>> & terms)
{
  Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd xs = sw.asDiagonal() * x;
  Eigen::VectorXd ys = sw.array() * y.array();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    // the pivot ordering puts dependent columns last
    Eigen::Index bad = qr.colsPermutation().indices()(x.cols() - 1);
    std::string name = bad == 0 ? std::string("intercept") : term_name(kept, terms[bad - 1]);
    throw input_error("singular design: column '" + name + "' is collinear with the others");
  }
  return qr.solve(ys);
}

}  // namespace detail

/// Fit one conditional model by weighted least squares (gaussian) or
/// iteratively reweighted least squares (logistic, max 100 iterations,
/// convergence when the max coefficient change drops below 1e-8).
inline FittedModel fit(const Dataset & d, const ModelSpec & spec)
{
  spec.validate();
  FittedModel f;
  f.spec = spec;
  for (const auto & v : set_minus(spec.conditioning, spec.dropped)) { f.kept.push_back(v); }
  std::vector<int> caps;
  for (const auto & v : f.kept) { caps.push_back(contains(d.binary, v) ? 1 : spec.basis); }
  f.term_powers = detail::monomials(caps, spec.basis);

  const std::size_t p = 1 + f.term_powers.size();
  if (d.n <= p) {
    throw precondition_error("need more than " + std::to_string(p) + " rows to fit '"
      + spec.target + "', have " + std::to_string(d.n));
  }
  Eigen::MatrixXd x = detail::design_matrix(d, f.kept, f.term_powers);
  const std::vector<double> & ycol = d.col(spec.target);
  Eigen::VectorXd y(d.n), w(d.n);
  for (std::size_t i = 0; i < d.n; ++i) {
    y(i) = ycol[i];
    w(i) = d.weight(i);
  }
  // normalize weights to mean one so degree-of-freedom corrections behave
  w *= double(d.n) / w.sum();

  if (spec.family == Family::gaussian_linear) {
    Eigen::VectorXd beta = detail::solve_wls(x, y, w, f.kept, f.term_powers);
    Eigen::VectorXd resid = y - x * beta;
    double sse = (w.array() * resid.array().square()).sum();
    f.residual_variance = std::max(sse / double(d.n - p), 1e-12);
    f.coefficients.assign(beta.data(), beta.data() + beta.size());
    f.converged = true;
    f.iterations = 1;
    return f;
  }

  // binary logistic
  bool has0 = false, has1 = false;
  for (std::size_t i = 0; i < d.n; ++i) {
    if (ycol[i] == 0.0) {
      has0 = true;
    } else if (ycol[i] == 1.0) {
      has1 = true;
    } else {
      throw precondition_error("logistic target '" + spec.target + "' has non-binary value "
        + std::to_string(ycol[i]));
    }
  }
  if (!has0 || !has1) {
    throw precondition_error("logistic target '" + spec.target + "' has only one class");
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  f.converged = false;
  for (int it = 1; it <= 100; ++it) {
    f.iterations = it;
    Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd mu = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    Eigen::VectorXd s = (mu.array() * (1.0 - mu.array())).cwiseMax(1e-10).matrix();
    // working response z = eta + (y - mu) / s, working weights w * s
    Eigen::VectorXd z = eta + ((y - mu).array() / s.array()).matrix();
    Eigen::VectorXd ww = (w.array() * s.array()).matrix();
    Eigen::VectorXd next = detail::solve_wls(x, z, ww, f.kept, f.term_powers);
    double delta = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    if (delta < 1e-8) {
      f.converged = true;
      break;
    }
  }
  f.coefficients.assign(beta.data(), beta.data() + beta.size());
  return f;
}

namespace detail
{

inline double linear_predictor(const FittedModel & f, const std::map<VertexId, double> & row)
{
  std::vector<double> xs(f.kept.size());
  for (std::size_t k = 0; k < f.kept.size(); ++k) {
    auto it = row.find(f.kept[k]);
    if (it == row.end()) { throw input_error("row is missing conditioning column '" + f.kept[k] + "'"); }
    xs[k] = it->second;
  }
  double eta = f.coefficients[0];
  for (std::size_t j = 0; j < f.term_powers.size(); ++j) {
    eta += f.coefficients[1 + j] * eval_term(f.term_powers[j], xs);
  }
  return eta;
}

}  // namespace detail

/// Fitted conditional mean of the target given the row.
inline double mean(const FittedModel & f, const std::map<VertexId, double> & row)
{
  double eta = detail::linear_predictor(f, row);
  if (f.spec.family == Family::binary_logistic) { return 1.0 / (1.0 + std::exp(-eta)); }
  return eta;
}

/// Fitted conditional density of the row's observed target value.  Binary
/// probabilities are clipped to [eps, 1-eps]; continuous targets use a
/// Gaussian density at the fitted mean and residual variance.
inline double cond_density(const FittedModel & f, const std::map<VertexId, double> & row)
{
  auto it = row.find(f.spec.target);
  if (it == row.end()) { throw input_error("row is missing target column '" + f.spec.target + "'"); }
  double yv = it->second;
  if (f.spec.family == Family::binary_logistic) {
    double p1 = mean(f, row);
    double p = yv == 1.0 ? p1 : 1.0 - p1;
    return std::min(std::max(p, f.clip_eps), 1.0 - f.clip_eps);
  }
  double mu = detail::linear_predictor(f, row);
  double v = f.residual_variance;
  return std::exp(-(yv - mu) * (yv - mu) / (2.0 * v)) / std::sqrt(2.0 * std::numbers::pi * v);
}

/// Density ratio with one conditioning variable clamped in the numerator:
/// f(target | ..., clamp_var = clamp_val) / f(target | observed row).
inline double density_ratio(const FittedModel & f, const std::map<VertexId, double> & row,
  const VertexId & clamp_var, double clamp_val)
{
  if (!contains(f.spec.conditioning, clamp_var)) {
    throw input_error("clamp variable '" + clamp_var + "' is not in the conditioning set of '"
      + f.spec.target + "'");
  }
  std::map<VertexId, double> clamped = row;
  clamped[clamp_var] = clamp_val;
  return cond_density(f, clamped) / cond_density(f, row);
}

/// Gaussian regression of a per-sample score vector onto a polynomial basis
/// of the conditioning set; the projection step of the augmented estimators.
inline FittedModel regress_beta(const Dataset & d, const std::vector<double> & beta_hat,
  const VertexSet & conditioning, int basis = 1)
{
  if (beta_hat.size() != d.n) { throw input_error("score vector length must equal the sample count"); }
  Dataset tmp = d;
  const VertexId score = "__score";
  tmp.add_column(score, beta_hat);
  tmp.binary.erase(score);
  ModelSpec spec;
  spec.target = score;
  spec.conditioning = conditioning;
  spec.family = Family::gaussian_linear;
  spec.basis = basis;
  return fit(tmp, spec);
}

}  // namespace arid
