#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "arid/nuisance.hpp"

using namespace arid;

namespace
{

Dataset linear_data(std::size_t n, std::uint64_t seed, double noise = 0.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = nd(rng);
    y[i] = 1.0 + 2.0 * x[i] + noise * nd(rng);
  }
  Dataset d;
  d.add_column("X", x);
  d.add_column("Y", y);
  return d;
}

}  // namespace

TEST_CASE("CSV parsing and schema override")
{
  Dataset d = parse_csv("A,B\n0,1.5\n1,2.5\n1,3.5\n");
  CHECK(d.n == 3);
  CHECK(d.names == std::vector<VertexId>{"A", "B"});
  CHECK(contains(d.binary, "A"));
  CHECK_FALSE(contains(d.binary, "B"));

  Dataset d2 = parse_csv("A,B\n0,1.5\n1,2.5\n", R"({"columns": {"A": "continuous"}})");
  CHECK_FALSE(contains(d2.binary, "A"));

  CHECK_THROWS_AS(parse_csv(""), input_error);
  CHECK_THROWS_AS(parse_csv("A,B\n1\n"), input_error);
  CHECK_THROWS_AS(parse_csv("A\nfoo\n"), input_error);
  CHECK_THROWS_AS(parse_csv("A\n1\n", R"({"columns": {"Z": "binary"}})"), input_error);

  // round trip
  Dataset d3 = parse_csv(to_csv(d));
  CHECK(d3.col("B") == d.col("B"));
}

TEST_CASE("exact linear fit")
{
  Dataset d = linear_data(50, 1);
  ModelSpec spec{"Y", {"X"}, Family::gaussian_linear, {}, 1};
  FittedModel f = fit(d, spec);
  REQUIRE(f.coefficients.size() == 2);
  CHECK(f.coefficients[0] == Catch::Approx(1.0).margin(1e-10));
  CHECK(f.coefficients[1] == Catch::Approx(2.0).margin(1e-10));
  CHECK(f.residual_variance < 1e-9);

  // equal weights match the unweighted fit
  Dataset dw = d;
  dw.set_weights(std::vector<double>(d.n, 3.7));
  FittedModel fw = fit(dw, spec);
  CHECK(fw.coefficients[0] == Catch::Approx(f.coefficients[0]).margin(1e-12));
  CHECK(fw.coefficients[1] == Catch::Approx(f.coefficients[1]).margin(1e-12));
}

TEST_CASE("logistic recovery from known coefficients")
{
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 50000;
  std::vector<double> x(n), y(n);
  const double b0 = -0.5, b1 = 1.2;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = nd(rng);
    double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * x[i])));
    y[i] = u(rng) < p ? 1.0 : 0.0;
  }
  Dataset d;
  d.add_column("X", x);
  d.add_column("Y", y);
  FittedModel f = fit(d, ModelSpec{"Y", {"X"}, Family::binary_logistic, {}, 1});
  CHECK(f.converged);
  // 3 Monte-Carlo standard errors, se ~ sqrt(4/n) conservatively
  CHECK(f.coefficients[0] == Catch::Approx(b0).margin(3 * std::sqrt(8.0 / n)));
  CHECK(f.coefficients[1] == Catch::Approx(b1).margin(3 * std::sqrt(8.0 / n)));
}

TEST_CASE("integer weights equal duplicated rows")
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x, y, w;
  std::vector<double> xd, yd;
  for (int i = 0; i < 60; ++i) {
    double xv = u(rng);
    double yv = u(rng) < 1.0 / (1.0 + std::exp(-(0.3 - xv))) ? 1.0 : 0.0;
    int reps = 1 + int(u(rng) * 3);
    x.push_back(xv);
    y.push_back(yv);
    w.push_back(reps);
    for (int r = 0; r < reps; ++r) {
      xd.push_back(xv);
      yd.push_back(yv);
    }
  }
  Dataset dw, dd;
  dw.add_column("X", x);
  dw.add_column("Y", y);
  dw.set_weights(w);
  dd.add_column("X", xd);
  dd.add_column("Y", yd);
  ModelSpec spec{"Y", {"X"}, Family::binary_logistic, {}, 1};
  FittedModel fw = fit(dw, spec);
  FittedModel fd = fit(dd, spec);
  REQUIRE(fw.coefficients.size() == fd.coefficients.size());
  for (std::size_t k = 0; k < fw.coefficients.size(); ++k) {
    CHECK(fw.coefficients[k] == Catch::Approx(fd.coefficients[k]).margin(1e-8));
  }
}

TEST_CASE("error paths")
{
  Dataset d = linear_data(20, 5);
  // collinear column: X duplicated
  Dataset dc = d;
  dc.add_column("X2", d.col("X"));
  CHECK_THROWS_WITH(fit(dc, ModelSpec{"Y", {"X", "X2"}, Family::gaussian_linear, {}, 1}),
    Catch::Matchers::ContainsSubstring("singular"));

  // single-class logistic
  Dataset d1;
  d1.add_column("X", d.col("X"));
  d1.add_column("Y", std::vector<double>(d.n, 1.0));
  CHECK_THROWS_AS(fit(d1, ModelSpec{"Y", {"X"}, Family::binary_logistic, {}, 1}),
    precondition_error);

  // too few rows
  Dataset small = parse_csv("X,Y\n1,2\n2,4\n");
  CHECK_THROWS_AS(fit(small, ModelSpec{"Y", {"X"}, Family::gaussian_linear, {}, 1}),
    precondition_error);

  // invalid specs
  CHECK_THROWS_AS(fit(d, ModelSpec{"Y", {"Y"}, Family::gaussian_linear, {}, 1}), input_error);
  CHECK_THROWS_AS(fit(d, ModelSpec{"Y", {"X"}, Family::gaussian_linear, {"Z"}, 1}), input_error);
}

TEST_CASE("densities and means")
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x, y;
  for (int i = 0; i < 4000; ++i) {
    double xv = u(rng) < 0.5 ? 1.0 : 0.0;
    double p = 1.0 / (1.0 + std::exp(-(-0.3 + 0.9 * xv)));
    x.push_back(xv);
    y.push_back(u(rng) < p ? 1.0 : 0.0);
  }
  Dataset d;
  d.add_column("X", x);
  d.add_column("Y", y);
  FittedModel f = fit(d, ModelSpec{"Y", {"X"}, Family::binary_logistic, {}, 1});

  std::map<VertexId, double> r1{{"X", 1.0}, {"Y", 1.0}};
  std::map<VertexId, double> r0{{"X", 1.0}, {"Y", 0.0}};
  // Bernoulli densities of the two outcome values sum to one (pre-clipping,
  // and these are interior so clipping is inactive)
  CHECK(cond_density(f, r1) + cond_density(f, r0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(mean(f, r1) == Catch::Approx(cond_density(f, r1)).margin(1e-12));

  // clipping bounds
  FittedModel fc = f;
  fc.coefficients = {-10.0, 0.0};
  CHECK(cond_density(fc, r1) == Catch::Approx(0.01).margin(1e-15));
  CHECK(cond_density(fc, r0) == Catch::Approx(0.99).margin(1e-15));

  // Gaussian density at the fitted mean
  Dataset dl = linear_data(200, 2, 0.5);
  FittedModel g = fit(dl, ModelSpec{"Y", {"X"}, Family::gaussian_linear, {}, 1});
  std::map<VertexId, double> rg{{"X", 0.3}, {"Y", mean(g, {{"X", 0.3}})}};
  CHECK(cond_density(g, rg)
    == Catch::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi * g.residual_variance)).margin(1e-12));

  CHECK_THROWS_AS(mean(f, std::map<VertexId, double>{{"Y", 1.0}}), input_error);
  CHECK_THROWS_AS(cond_density(f, std::map<VertexId, double>{{"X", 1.0}}), input_error);
}

TEST_CASE("density ratios")
{
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> t, c, m;
  for (int i = 0; i < 5000; ++i) {
    double cv = u(rng) < 0.5 ? 1.0 : 0.0;
    double tv = u(rng) < 0.4 + 0.2 * cv ? 1.0 : 0.0;
    double p = 1.0 / (1.0 + std::exp(-(-0.2 + 0.7 * tv + 0.4 * cv)));
    t.push_back(tv);
    c.push_back(cv);
    m.push_back(u(rng) < p ? 1.0 : 0.0);
  }
  Dataset d;
  d.add_column("T", t);
  d.add_column("C", c);
  d.add_column("M", m);
  FittedModel f = fit(d, ModelSpec{"M", {"T", "C"}, Family::binary_logistic, {}, 1});

  std::map<VertexId, double> row{{"T", 1.0}, {"C", 0.0}, {"M", 1.0}};
  // clamp equal to the observed value -> 1
  CHECK(density_ratio(f, row, "T", 1.0) == Catch::Approx(1.0).margin(1e-15));
  // hand Bernoulli ratio from the fitted coefficients
  double b0 = f.coefficients[0];
  auto idx_of = [&](const VertexId & v) {
    for (std::size_t j = 0; j < f.term_powers.size(); ++j) {
      if (detail::term_name(f.kept, f.term_powers[j]) == v) { return j; }
    }
    FAIL("term not found");
    return std::size_t(0);
  };
  double bt = f.coefficients[1 + idx_of("T")];
  double p1 = 1.0 / (1.0 + std::exp(-(b0 + bt)));
  double p0 = 1.0 / (1.0 + std::exp(-b0));
  std::map<VertexId, double> row0{{"T", 0.0}, {"C", 0.0}, {"M", 1.0}};
  CHECK(density_ratio(f, row0, "T", 1.0) == Catch::Approx(p1 / p0).margin(1e-12));

  // independence: zero T coefficient -> ratio 1 everywhere
  FittedModel fi = f;
  fi.coefficients[1 + idx_of("T")] = 0.0;
  CHECK(density_ratio(fi, row0, "T", 1.0) == Catch::Approx(1.0).margin(1e-15));

  CHECK_THROWS_AS(density_ratio(f, row, "Q", 1.0), input_error);
}

TEST_CASE("score regressions")
{
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t n = 300;
  std::vector<double> x(n), beta_lin(n), beta_quad(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = nd(rng);
    beta_lin[i] = 3.0 - 0.5 * x[i];
    beta_quad[i] = 1.0 + 2.0 * x[i] - 1.5 * x[i] * x[i];
  }
  Dataset d;
  d.add_column("X", x);

  // empty conditioning set -> fitted constant = mean of the scores
  FittedModel f0 = regress_beta(d, beta_lin, {});
  double mu = 0.0;
  for (double b : beta_lin) { mu += b; }
  mu /= double(n);
  CHECK(f0.coefficients[0] == Catch::Approx(mu).margin(1e-12));

  // exactly linear scores -> zero residuals
  FittedModel f1 = regress_beta(d, beta_lin, {"X"});
  CHECK(f1.residual_variance < 1e-9);

  // degree-2 basis recovers a quadratic
  FittedModel f2 = regress_beta(d, beta_quad, {"X"}, 2);
  std::map<VertexId, double> row{{"X", 0.7}};
  CHECK(mean(f2, row) == Catch::Approx(1.0 + 2.0 * 0.7 - 1.5 * 0.49).margin(1e-8));

  CHECK_THROWS_AS(regress_beta(d, std::vector<double>(5, 0.0), {"X"}), input_error);
}

TEST_CASE("misspecification drops design columns")
{
  Dataset d = linear_data(100, 23, 0.1);
  std::vector<double> z(d.n);
  std::mt19937_64 rng(29);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto & v : z) { v = nd(rng); }
  d.add_column("Z", z);
  ModelSpec full{"Y", {"X", "Z"}, Family::gaussian_linear, {}, 1};
  ModelSpec dropped{"Y", {"X", "Z"}, Family::gaussian_linear, {"X"}, 1};
  FittedModel fd = fit(d, dropped);
  CHECK(fd.kept == std::vector<VertexId>{"Z"});
  // the dropped model cannot explain the X signal
  CHECK(fd.residual_variance > fit(d, full).residual_variance + 1.0);
  // rows no longer need the dropped column
  CHECK_NOTHROW(mean(fd, std::map<VertexId, double>{{"Z", 0.0}}));
}

TEST_CASE("fitting is deterministic")
{
  Dataset d = linear_data(200, 31, 0.3);
  ModelSpec spec{"Y", {"X"}, Family::gaussian_linear, {}, 2};
  FittedModel a = fit(d, spec);
  FittedModel b = fit(d, spec);
  CHECK(a.coefficients == b.coefficients);
  CHECK(a.residual_variance == b.residual_variance);
}
