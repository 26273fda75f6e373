#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "arid/identify.hpp"

using namespace arid;

namespace
{

std::string slurp(const std::string & name)
{
  std::ifstream in(std::string(ARID_FIXTURE_DIR) + "/" + name);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Admg fixture(const std::string & name) { return parse_graph(slurp(name)); }

}  // namespace

TEST_CASE("y_star")
{
  Admg g8 = fixture("fig8_nested.txt");
  CHECK(y_star(g8, "T", "Y") == VertexSet{"Y", "M", "C", "R1", "R2"});

  Admg g7a = fixture("fig7a_sequential.txt");
  CHECK(y_star(g7a, "T", "Y") == VertexSet{"Y", "C"});

  Admg bd = fixture("backdoor.txt");
  CHECK_THROWS_AS(y_star(bd, "T", "T"), input_error);
}

TEST_CASE("identify dispatch: adjustment")
{
  Admg g2 = fixture("fig2_adjustment.txt");
  auto f = identify(g2, "T", "Y");
  CHECK(f.kind == IdKind::adjustment);
  CHECK(markov_pillow(f.graph, f.tau, "T") == VertexSet{"Z1", "Z2", "C1", "C2"});
  // descendants of Y are dropped by the ancestral restriction
  CHECK_FALSE(f.graph.has_vertex("D1"));
  CHECK_FALSE(f.graph.has_vertex("D2"));
  CHECK(f.rendered.find("E[") != std::string::npos);

  auto fb = identify(fixture("backdoor.txt"), "T", "Y");
  CHECK(fb.kind == IdKind::adjustment);
  CHECK(fb.rendered.find("E[ E[Y | T=t, C] ]") != std::string::npos);
}

TEST_CASE("identify dispatch: primal district")
{
  for (const char * name : {"fig3a_primal.txt", "fig3b_primal.txt", "fig6_mb_shielded.txt",
         "frontdoor.txt"}) {
    auto f = identify(fixture(name), "T", "Y");
    INFO(name);
    CHECK(f.kind == IdKind::primal_district);
  }
  auto f = identify(fixture("fig3a_primal.txt"), "T", "Y");
  CHECK(f.partition.l_set == VertexSet{"T", "L", "Y"});
  CHECK(f.partition.m_set == VertexSet{"M"});
  // rendered functional carries the nested propensity ratio
  CHECK(f.rendered.find("sum_T") != std::string::npos);
  CHECK(f.rendered.find("p(T | C)") != std::string::npos);
  CHECK(f.rendered.find("I(T=t)") != std::string::npos);
}

TEST_CASE("identify dispatch: sequential front set")
{
  Admg g7a = fixture("fig7a_sequential.txt");
  auto f = identify(g7a, "T", "Y");
  CHECK(f.kind == IdKind::sequential_pfix);
  CHECK(set_minus(f.front, VertexSet{"Z1", "Z2"}).empty());
  CHECK_FALSE(f.front.empty());
  // replay: sequence must be valid and leave T p-fixable
  Admg cur = f.graph;
  for (const auto & step : f.front_sequence.steps) {
    CHECK(is_p_fixable(cur, step.vertex));
    cur.fix_vertex(step.vertex);
  }
  CHECK(is_p_fixable(cur, "T"));
}

TEST_CASE("identify dispatch: nested reweighting")
{
  Admg g8 = fixture("fig8_nested.txt");
  auto f = identify(g8, "T", "Y");
  CHECK(f.kind == IdKind::nested_ipw);
  REQUIRE(f.nested.has_value());
  const auto & plan = *f.nested;
  CHECK(plan.y_star == VertexSet{"Y", "M", "C", "R1", "R2"});
  REQUIRE(plan.d_star.size() == 2);
  CHECK(plan.d_star[0] == VertexSet{"R1"});
  CHECK(plan.d_star[1] == VertexSet{"R2"});
  // deterministic order; every y_star vertex follows its non-y_star
  // non-descendants (R2 <-> M swap relative to other valid orders is
  // immaterial: all Markov pillows below are identical)
  CHECK(plan.tau == TopoOrder{"Z", "C", "T", "R1", "M", "R2", "Y"});
  for (const auto & v : plan.y_star) {
    VertexSet nd = set_minus(g8.random(), descendants(g8, v));
    for (const auto & u : set_minus(nd, plan.y_star)) {
      CHECK(preceding(plan.tau, v).count(u) == 1);
    }
  }
  CHECK(plan.treatment_pillow == VertexSet{"Z", "C"});

  REQUIRE(plan.rho_specs.size() == 2);
  // rho_{R1} = q(R1 | T) / p(R1 | T, Z)
  CHECK(plan.rho_specs[0].numerator
    == std::vector<std::pair<VertexId, VertexSet>>{{"R1", {"T"}}});
  CHECK(plan.rho_specs[0].denominator
    == std::vector<std::pair<VertexId, VertexSet>>{{"R1", {"T", "Z"}}});
  // rho_{R2} = q(R2) / p(R2 | T, Z, C, R1)
  CHECK(plan.rho_specs[1].numerator
    == std::vector<std::pair<VertexId, VertexSet>>{{"R2", {}}});
  CHECK(plan.rho_specs[1].denominator
    == std::vector<std::pair<VertexId, VertexSet>>{{"R2", {"T", "Z", "C", "R1"}}});

  CHECK(f.rendered.find("rho_{R1}") != std::string::npos);
  CHECK(f.rendered.find("q(R1 | T) / p(R1 | Z,T)") != std::string::npos);
  CHECK(f.rendered.find("q(R2) / p(R2 | Z,C,T,R1)") != std::string::npos);
}

TEST_CASE("identify dispatch: not identifiable")
{
  Admg bow = fixture("bow.txt");
  auto f = identify(bow, "T", "Y");
  CHECK(f.kind == IdKind::not_identifiable);
  REQUIRE(f.fail_witness.has_value());
  CHECK(f.fail_witness == VertexSet{"Y"});
  CHECK(f.rendered.find("NOT IDENTIFIABLE") != std::string::npos);
}

TEST_CASE("nested plan on a plain back-door DAG")
{
  Admg bd = fixture("backdoor.txt");
  auto res = nested_ipw_plan(bd, "T", "Y");
  REQUIRE(res.plan.has_value());
  CHECK(res.plan->d_star.empty());  // T's district misses y_star entirely
  CHECK(res.plan->treatment_pillow == VertexSet{"C"});
}

TEST_CASE("trivial effect when outcome is not a descendant")
{
  Admg g = parse_graph("V T\nV Y\nV C\nC -> Y\nT <-> Y\n");
  auto f = identify(g, "T", "Y");
  // T is childless, hence adjustment-fixable; functional collapses to E[Y]
  CHECK(f.kind == IdKind::adjustment);
}

TEST_CASE("rendering is deterministic")
{
  Admg g8 = fixture("fig8_nested.txt");
  auto f1 = identify(g8, "T", "Y");
  auto f2 = identify(g8, "T", "Y");
  CHECK(f1.rendered == f2.rendered);
  CHECK_FALSE(f1.rendered.empty());
}
