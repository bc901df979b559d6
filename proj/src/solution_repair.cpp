#include "solution_repair.hpp"

#include <algorithm>
#include <cmath>

#include "lasrelay/evaluation.hpp"

namespace lasrelay::detail {

namespace {

void clamp_boxes(PowerSchedule& pw, const Scenario& sc) {
  const int n = pw.slots();
  for (int i = 0; i < n; ++i) {
    pw.p_s[i] = std::clamp(pw.p_s[i], 0.0, sc.p_max_s);
    pw.p_r[i] = std::clamp(pw.p_r[i], 0.0, sc.p_max_r);
    pw.P_s[i] = std::clamp(pw.P_s[i], sc.P_min_s, sc.P_max_s);
  }
  pw.p_s[n - 1] = 0.0;
  pw.p_r[0] = 0.0;
}

}  // namespace

bool repair_solution(Trajectory& traj, PowerSchedule& pw, const Scenario& sc, double tol) {
  traj.waypoints.front() = sc.q_init;
  traj.waypoints.back() = sc.q_final;
  clamp_boxes(pw, sc);

  // relay powers down until the causality prefix holds
  if (check_info_causality(traj, pw, sc) > tol) {
    const Eigen::VectorXd base = pw.p_r;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double beta = 0.5 * (lo + hi);
      pw.p_r = beta * base;
      (check_info_causality(traj, pw, sc) > tol * 0.5 ? hi : lo) = beta;
    }
    pw.p_r = lo * base;
  }

  // PB overage down until the battery cap holds
  auto over_cap = [&]() { return check_energy_causality(traj, pw, sc).second; };
  if (over_cap() > tol) {
    const Eigen::VectorXd excess = pw.P_s.array() - sc.P_min_s;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double beta = 0.5 * (lo + hi);
      pw.P_s = sc.P_min_s + beta * excess.array();
      (over_cap() > tol * 0.5 ? hi : lo) = beta;
    }
    pw.P_s = sc.P_min_s + lo * excess.array();
  }

  // battery floor: raise charging toward the cap if there is room
  auto under_floor = [&]() { return check_energy_causality(traj, pw, sc).first; };
  if (under_floor() > tol) {
    const Eigen::VectorXd headroom = sc.P_max_s - pw.P_s.array();
    double lo = 0.0, hi = 1.0;
    double best = under_floor();
    double best_beta = 0.0;
    for (int it = 0; it < 60; ++it) {
      const double beta = 0.5 * (lo + hi);
      pw.P_s = (sc.P_max_s - (1.0 - beta) * headroom.array()).min(sc.P_max_s);
      const double uf = under_floor();
      const double oc = over_cap();
      if (uf < best && oc <= tol * 0.5) {
        best = uf;
        best_beta = beta;
      }
      (uf > tol * 0.5 ? lo : hi) = beta;
    }
    pw.P_s = (sc.P_max_s - (1.0 - best_beta) * headroom.array()).min(sc.P_max_s);
  }

  return check_feasibility(traj, pw, sc, tol).feasible;
}

}  // namespace lasrelay::detail
