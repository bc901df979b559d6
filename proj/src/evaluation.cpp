#include "lasrelay/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "lasrelay/socp.hpp"

namespace lasrelay {

namespace {

double pos(double x) { return x > 0.0 ? x : 0.0; }

// Battery trace with a pluggable received-power model.
template <typename RecvFn>
std::vector<double> battery_trace_impl(const Trajectory& traj, const PowerSchedule& pw,
                                       const Scenario& sc, RecvFn recv) {
  const int n = traj.slots();
  std::vector<double> trace(static_cast<size_t>(n));
  double battery = sc.energy_budget_E;
  for (int m = 0; m < n; ++m) {
    if (m + 1 < n) battery -= flying_energy(traj.velocity(m, sc.delta_t), sc);
    battery += recv(pw.P_s[m], traj.waypoints[static_cast<size_t>(m)]) * sc.delta_t;
    trace[static_cast<size_t>(m)] = battery;
  }
  return trace;
}

template <typename RecvFn>
std::pair<double, double> energy_violations(const Trajectory& traj, const PowerSchedule& pw,
                                            const Scenario& sc, RecvFn recv) {
  double under = 0.0, over = 0.0;
  for (double b : battery_trace_impl(traj, pw, sc, recv)) {
    under = std::max(under, pos(sc.energy_floor_theta - b));
    over = std::max(over, pos(b - sc.energy_budget_E));
  }
  return {under, over};
}

}  // namespace

double FeasibilityReport::max_violation() const {
  double v = 0.0;
  for (double x : {mobility_speed, mobility_endpoint, info_causality, energy_under_floor,
                   energy_over_cap, power_bounds, rate_sum_shortfall})
    v = std::max(v, x);
  return v;
}

double check_info_causality(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc) {
  const int n = traj.slots();
  double src = 0.0, rel = 0.0, worst = 0.0;
  for (int m = 1; m < n; ++m) {
    src += rate_source_to_uav(pw.p_s[m - 1], traj.waypoints[static_cast<size_t>(m) - 1], sc);
    rel += rate_uav_to_dest(pw.p_r[m], traj.waypoints[static_cast<size_t>(m)], sc);
    worst = std::max(worst, pos(rel - src));
  }
  return worst;
}

std::pair<double, double> check_energy_causality(const Trajectory& traj, const PowerSchedule& pw,
                                                 const Scenario& sc) {
  return energy_violations(traj, pw, sc, [&](double P, const Vec2& q) {
    return received_laser_power_clamped(P, q, sc);
  });
}

std::pair<double, double> check_energy_causality_affine(const Trajectory& traj,
                                                        const PowerSchedule& pw,
                                                        const Scenario& sc) {
  return energy_violations(traj, pw, sc, [&](double P, const Vec2& q) {
    return received_laser_power(P, q, sc);
  });
}

MobilityViolation check_mobility(const Trajectory& traj, const Scenario& sc) {
  MobilityViolation mv;
  mv.endpoint_error = std::max((traj.waypoints.front() - sc.q_init).norm(),
                               (traj.waypoints.back() - sc.q_final).norm());
  for (int nidx = 0; nidx + 1 < traj.slots(); ++nidx)
    mv.speed_excess = std::max(mv.speed_excess, pos(traj.velocity(nidx, sc.delta_t).norm() - sc.v_max));
  return mv;
}

double check_power_bounds(const PowerSchedule& pw, const Scenario& sc) {
  const int n = pw.slots();
  double v = 0.0;
  for (int i = 0; i < n; ++i) {
    v = std::max(v, pos(-pw.p_s[i]));
    v = std::max(v, pos(-pw.p_r[i]));
    v = std::max(v, pos(pw.p_s[i] - sc.p_max_s));
    v = std::max(v, pos(pw.p_r[i] - sc.p_max_r));
    v = std::max(v, pos(sc.P_min_s - pw.P_s[i]));
    v = std::max(v, pos(pw.P_s[i] - sc.P_max_s));
  }
  v = std::max(v, std::abs(pw.p_s[n - 1]));  // source silent in last slot
  v = std::max(v, std::abs(pw.p_r[0]));      // relay silent in first slot
  return v;
}

FeasibilityReport check_feasibility(const Trajectory& traj, const PowerSchedule& pw,
                                    const Scenario& sc, double tolerance) {
  FeasibilityReport rep;
  rep.tolerance = tolerance;
  const MobilityViolation mv = check_mobility(traj, sc);
  rep.mobility_speed = mv.speed_excess;
  rep.mobility_endpoint = mv.endpoint_error;
  rep.info_causality = check_info_causality(traj, pw, sc);
  std::tie(rep.energy_under_floor, rep.energy_over_cap) = check_energy_causality(traj, pw, sc);
  std::tie(rep.energy_under_floor_affine, rep.energy_over_cap_affine) =
      check_energy_causality_affine(traj, pw, sc);
  rep.power_bounds = check_power_bounds(pw, sc);
  double sum_rate = 0.0;
  for (int i = 1; i < traj.slots(); ++i)
    sum_rate += rate_uav_to_dest(pw.p_r[i], traj.waypoints[static_cast<size_t>(i)], sc);
  rep.rate_sum_shortfall = pos(sc.R_sum - sum_rate);
  rep.feasible = rep.max_violation() <= tolerance;
  return rep;
}

SolutionMetrics objective(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc) {
  SolutionMetrics m;
  m.f_ee = f_EE(traj, pw, sc);
  m.f_pe = f_PE(traj, pw, sc);
  m.weighted_objective = m.f_ee + sc.gamma_weight * m.f_pe;
  m.sum_rate = 0.0;
  for (int i = 1; i < traj.slots(); ++i)
    m.sum_rate += rate_uav_to_dest(pw.p_r[i], traj.waypoints[static_cast<size_t>(i)], sc);
  m.battery_trace = battery_trace_impl(traj, pw, sc, [&](double P, const Vec2& q) {
    return received_laser_power_clamped(P, q, sc);
  });
  m.final_battery = m.battery_trace.back();
  return m;
}

namespace {

// Decision vector for stationarity: interior waypoints, then the free power
// entries. Box-bound coordinates are handled as active constraints.
struct FlatPoint {
  Eigen::VectorXd z;
  int n = 0;

  static FlatPoint pack(const Trajectory& traj, const PowerSchedule& pw) {
    FlatPoint fp;
    fp.n = traj.slots();
    const int n = fp.n;
    fp.z.resize(2 * (n - 2) + (n - 1) + (n - 1) + n);
    int k = 0;
    for (int i = 1; i + 1 < n; ++i) {
      fp.z[k++] = traj.waypoints[static_cast<size_t>(i)].x();
      fp.z[k++] = traj.waypoints[static_cast<size_t>(i)].y();
    }
    for (int i = 0; i + 1 < n; ++i) fp.z[k++] = pw.p_s[i];
    for (int i = 1; i < n; ++i) fp.z[k++] = pw.p_r[i];
    for (int i = 0; i < n; ++i) fp.z[k++] = pw.P_s[i];
    return fp;
  }

  void unpack(const Scenario& sc, Trajectory& traj, PowerSchedule& pw) const {
    traj = Trajectory(n);
    pw = PowerSchedule(n);
    traj.waypoints.front() = sc.q_init;
    traj.waypoints.back() = sc.q_final;
    int k = 0;
    for (int i = 1; i + 1 < n; ++i) {
      traj.waypoints[static_cast<size_t>(i)].x() = z[k++];
      traj.waypoints[static_cast<size_t>(i)].y() = z[k++];
    }
    for (int i = 0; i + 1 < n; ++i) pw.p_s[i] = z[k++];
    for (int i = 1; i < n; ++i) pw.p_r[i] = z[k++];
    for (int i = 0; i < n; ++i) pw.P_s[i] = z[k++];
  }
};

double weighted_objective_of(const Eigen::VectorXd& z, int n, const Scenario& sc) {
  FlatPoint fp;
  fp.z = z;
  fp.n = n;
  Trajectory traj;
  PowerSchedule pw;
  fp.unpack(sc, traj, pw);
  return f_EE(traj, pw, sc) + sc.gamma_weight * f_PE(traj, pw, sc);
}

}  // namespace

double stationarity_residual(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc,
                             double feas_tol) {
  FeasibilityReport rep = check_feasibility(traj, pw, sc, feas_tol);
  if (!rep.feasible)
    throw std::invalid_argument("stationarity_residual: point infeasible beyond tolerance");

  FlatPoint fp = FlatPoint::pack(traj, pw);
  const int dim = static_cast<int>(fp.z.size());
  const int n = traj.slots();

  // Central finite differences of the smooth weighted objective.
  Eigen::VectorXd g(dim);
  for (int i = 0; i < dim; ++i) {
    const double h = 1e-5 * (1.0 + std::abs(fp.z[i]));
    Eigen::VectorXd zp = fp.z, zm = fp.z;
    zp[i] += h;
    zm[i] -= h;
    g[i] = (weighted_objective_of(zp, n, sc) - weighted_objective_of(zm, n, sc)) / (2.0 * h);
  }

  // Active inequality constraints, linearized: rows such that moving along d
  // with row * d > 0 would increase the violated quantity.
  const double act_tol = 10.0 * feas_tol;
  std::vector<Eigen::VectorXd> active;  // feasible directions satisfy a^T d <= 0
  auto add_active = [&](const Eigen::VectorXd& a) { active.push_back(a); };

  auto fd_row = [&](auto&& fn) {
    Eigen::VectorXd a(dim);
    for (int i = 0; i < dim; ++i) {
      const double h = 1e-6 * (1.0 + std::abs(fp.z[i]));
      Eigen::VectorXd zp = fp.z, zm = fp.z;
      zp[i] += h;
      zm[i] -= h;
      a[i] = (fn(zp) - fn(zm)) / (2.0 * h);
    }
    return a;
  };

  auto eval_with = [&](const Eigen::VectorXd& z, auto&& fn) {
    FlatPoint q;
    q.z = z;
    q.n = n;
    Trajectory t2;
    PowerSchedule p2;
    q.unpack(sc, t2, p2);
    return fn(t2, p2);
  };

  // Box bounds (p_s in [0,p_max], p_r, P_s box): active coordinate bounds.
  {
    int k = 2 * (n - 2);
    for (int i = 0; i + 1 < n; ++i, ++k) {
      if (fp.z[k] <= act_tol) add_active(-Eigen::VectorXd::Unit(dim, k));
      if (fp.z[k] >= sc.p_max_s - act_tol) add_active(Eigen::VectorXd::Unit(dim, k));
    }
    for (int i = 1; i < n; ++i, ++k) {
      if (fp.z[k] <= act_tol) add_active(-Eigen::VectorXd::Unit(dim, k));
      if (fp.z[k] >= sc.p_max_r - act_tol) add_active(Eigen::VectorXd::Unit(dim, k));
    }
    for (int i = 0; i < n; ++i, ++k) {
      if (fp.z[k] <= sc.P_min_s + act_tol * (1.0 + sc.P_min_s)) add_active(-Eigen::VectorXd::Unit(dim, k));
      if (fp.z[k] >= sc.P_max_s - act_tol * (1.0 + sc.P_max_s)) add_active(Eigen::VectorXd::Unit(dim, k));
    }
  }

  // Mobility speed constraints.
  for (int hop = 0; hop + 1 < n; ++hop) {
    const double speed = traj.velocity(hop, sc.delta_t).norm();
    if (speed >= sc.v_max - act_tol * (1.0 + sc.v_max)) {
      add_active(fd_row([&](const Eigen::VectorXd& z) {
        return eval_with(z, [&](const Trajectory& t2, const PowerSchedule&) {
          return t2.velocity(hop, sc.delta_t).norm();
        });
      }));
    }
  }

  // Info-causality prefixes and rate-sum.
  {
    double src = 0.0, rel = 0.0;
    for (int m = 1; m < n; ++m) {
      src += rate_source_to_uav(pw.p_s[m - 1], traj.waypoints[static_cast<size_t>(m) - 1], sc);
      rel += rate_uav_to_dest(pw.p_r[m], traj.waypoints[static_cast<size_t>(m)], sc);
      if (rel - src >= -act_tol * (1.0 + std::abs(src))) {
        const int mm = m;
        add_active(fd_row([&](const Eigen::VectorXd& z) {
          return eval_with(z, [&](const Trajectory& t2, const PowerSchedule& p2) {
            double s = 0.0, r = 0.0;
            for (int j = 1; j <= mm; ++j) {
              s += rate_source_to_uav(p2.p_s[j - 1], t2.waypoints[static_cast<size_t>(j) - 1], sc);
              r += rate_uav_to_dest(p2.p_r[j], t2.waypoints[static_cast<size_t>(j)], sc);
            }
            return r - s;
          });
        }));
      }
    }
    double sum_rate = 0.0;
    for (int i = 1; i < n; ++i)
      sum_rate += rate_uav_to_dest(pw.p_r[i], traj.waypoints[static_cast<size_t>(i)], sc);
    if (sum_rate - sc.R_sum <= act_tol * (1.0 + sc.R_sum)) {
      add_active(fd_row([&](const Eigen::VectorXd& z) {
        return eval_with(z, [&](const Trajectory& t2, const PowerSchedule& p2) {
          double r = 0.0;
          for (int i = 1; i < n; ++i)
            r += rate_uav_to_dest(p2.p_r[i], t2.waypoints[static_cast<size_t>(i)], sc);
          return sc.R_sum - r;
        });
      }));
    }
  }

  // Battery floor/cap prefixes.
  {
    SolutionMetrics m = objective(traj, pw, sc);
    for (int mm = 0; mm < n; ++mm) {
      const double b = m.battery_trace[static_cast<size_t>(mm)];
      const bool floor_active = b - sc.energy_floor_theta <= act_tol * (1.0 + sc.energy_floor_theta);
      const bool cap_active = sc.energy_budget_E - b <= act_tol * (1.0 + sc.energy_budget_E);
      if (!floor_active && !cap_active) continue;
      auto battery_at = [&](const Eigen::VectorXd& z) {
        return eval_with(z, [&](const Trajectory& t2, const PowerSchedule& p2) {
          return objective(t2, p2, sc).battery_trace[static_cast<size_t>(mm)];
        });
      };
      if (floor_active) add_active(fd_row([&](const Eigen::VectorXd& z) { return -battery_at(z); }));
      if (cap_active) add_active(fd_row([&](const Eigen::VectorXd& z) { return battery_at(z); }));
    }
  }

  // Projected-gradient norm = max g^T d over ||d|| <= 1, A_act d <= 0,
  // posed as a small SOCP.
  socp::ConicProgram cp;
  cp.num_vars = dim;
  cp.objective = g;
  cp.lb = Eigen::VectorXd::Constant(dim, -2.0);
  cp.ub = Eigen::VectorXd::Constant(dim, 2.0);
  for (const auto& a : active) {
    socp::LinearRow row;
    row.a = a;
    row.rhs = 0.0;
    row.sense = socp::RowSense::LE;
    cp.rows.push_back(std::move(row));
  }
  socp::SocConstraint ball;
  ball.A = Eigen::MatrixXd::Zero(dim + 1, dim);
  ball.A.bottomRows(dim) = Eigen::MatrixXd::Identity(dim, dim);
  ball.b = Eigen::VectorXd::Zero(dim + 1);
  ball.b[0] = 1.0;
  cp.socs.push_back(std::move(ball));

  socp::ConicSolution sol = socp::solve(cp, {1e-9, 200});
  const double best = (sol.status == socp::SolveStatus::Optimal || sol.status == socp::SolveStatus::IterLimit)
                          ? std::max(0.0, sol.obj)
                          : g.norm();
  const double scale = 1.0 + std::abs(weighted_objective_of(fp.z, n, sc));
  return best / scale;
}

}  // namespace lasrelay
