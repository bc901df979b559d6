#include "lasrelay/cccp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "solution_repair.hpp"

namespace lasrelay::cccp {

namespace {

constexpr double kLn2 = 0.6931471805599453;

double log2p1(double s) { return std::log2(1.0 + s); }

// affine expression over subproblem variables
struct Lin {
  std::vector<std::pair<int, double>> terms;
  double c = 0.0;
  Lin& add(const VarRef& v, double coef) {
    if (v.idx >= 0)
      terms.emplace_back(v.idx, coef);
    else
      c += coef * v.val;
    return *this;
  }
  Lin& add_const(double k) {
    c += k;
    return *this;
  }
  Lin& scale(double f) {
    for (auto& [j, a] : terms) a *= f;
    c *= f;
    return *this;
  }
};

struct Bounds {
  double s_ub_s = 0, s_ub_r = 0, ell_ub_s = 0, ell_ub_r = 0;
  double t_lb = 0, t_ub = 0;
  Vec2 q_lo, q_hi;
  double dS_ub = 0, dD_ub = 0;
};

Bounds derive_bounds(const Scenario& sc) {
  Bounds b;
  b.s_ub_s = sc.p_max_s * sc.gamma0 / (sc.altitude_H * sc.altitude_H);
  b.s_ub_r = sc.p_max_r * sc.gamma0 / (sc.altitude_H * sc.altitude_H);
  b.ell_ub_s = log2p1(b.s_ub_s);
  b.ell_ub_r = log2p1(b.s_ub_r);
  const double margin = sc.v_max * sc.T_total;
  Vec2 lo = sc.q_init.cwiseMin(sc.q_final).cwiseMin(sc.source_pos).cwiseMin(sc.dest_pos).cwiseMin(sc.pb_pos);
  Vec2 hi = sc.q_init.cwiseMax(sc.q_final).cwiseMax(sc.source_pos).cwiseMax(sc.dest_pos).cwiseMax(sc.pb_pos);
  b.q_lo = lo.array() - margin;
  b.q_hi = hi.array() + margin;
  auto corner_max_sq = [&](const Vec2& a) {
    double m = 0.0;
    for (double x : {b.q_lo.x(), b.q_hi.x()})
      for (double y : {b.q_lo.y(), b.q_hi.y()}) m = std::max(m, (Vec2(x, y) - a).squaredNorm());
    return m;
  };
  const double H2 = sc.altitude_H * sc.altitude_H;
  b.dS_ub = H2 + corner_max_sq(sc.source_pos);
  b.dD_ub = H2 + corner_max_sq(sc.dest_pos);
  const double alpha = attenuation_alpha(sc.laser);
  b.t_lb = std::exp(-alpha * std::sqrt(H2 + corner_max_sq(sc.pb_pos)));
  b.t_ub = std::exp(-alpha * sc.altitude_H);
  return b;
}

class Builder {
 public:
  Builder(const CccpState& st, const Scenario& sc, const BuildOptions& opts)
      : st_(st), sc_(sc), opts_(opts), n_(sc.N), bounds_(derive_bounds(sc)) {}

  SubproblemBuild run() {
    allocate();
    build_constraints();
    finish();
    return std::move(out_);
  }

 private:
  const CccpState& st_;
  const Scenario& sc_;
  const BuildOptions& opts_;
  const int n_;
  Bounds bounds_;
  SubproblemBuild out_;
  std::vector<double> lb_, ub_;

  VarRef make_var(double lo, double hi) {
    VarRef v;
    v.idx = static_cast<int>(lb_.size());
    lb_.push_back(lo);
    ub_.push_back(hi);
    return v;
  }
  static VarRef fixed(double val) {
    VarRef v;
    v.val = val;
    return v;
  }

  void allocate() {
    Layout& L = out_.layout;
    const auto& fz = opts_.freeze;
    L.qx.resize(n_);
    L.qy.resize(n_);
    for (int i = 0; i < n_; ++i) {
      const Vec2 q = st_.traj.waypoints[static_cast<size_t>(i)];
      if (i == 0 || i == n_ - 1 || fz.traj) {
        const Vec2 fix = i == 0 ? sc_.q_init : (i == n_ - 1 ? sc_.q_final : q);
        L.qx[i] = fixed(fix.x());
        L.qy[i] = fixed(fix.y());
      } else {
        L.qx[i] = make_var(bounds_.q_lo.x(), bounds_.q_hi.x());
        L.qy[i] = make_var(bounds_.q_lo.y(), bounds_.q_hi.y());
      }
    }
    auto slot_array = [&](auto fill) {
      std::vector<VarRef> v(static_cast<size_t>(n_));
      for (int i = 0; i < n_; ++i) v[static_cast<size_t>(i)] = fill(i);
      return v;
    };
    L.p_s = slot_array([&](int i) {
      if (i == n_ - 1) return fixed(0.0);
      return fz.comm_powers ? fixed(st_.pw.p_s[i]) : make_var(0.0, sc_.p_max_s);
    });
    L.p_r = slot_array([&](int i) {
      if (i == 0) return fixed(0.0);
      return fz.comm_powers ? fixed(st_.pw.p_r[i]) : make_var(0.0, sc_.p_max_r);
    });
    L.P_s = slot_array([&](int i) {
      return fz.pb ? fixed(st_.pw.P_s[i]) : make_var(sc_.P_min_s, sc_.P_max_s);
    });
    L.s_s = slot_array([&](int i) {
      return i == n_ - 1 ? fixed(0.0) : make_var(0.0, bounds_.s_ub_s);
    });
    L.s_r = slot_array([&](int i) { return i == 0 ? fixed(0.0) : make_var(0.0, bounds_.s_ub_r); });
    L.ell_s = slot_array([&](int i) {
      return i == n_ - 1 ? fixed(0.0) : make_var(0.0, bounds_.ell_ub_s);
    });
    L.ell_r = slot_array([&](int i) { return i == 0 ? fixed(0.0) : make_var(0.0, bounds_.ell_ub_r); });
    const double H2 = sc_.altitude_H * sc_.altitude_H;
    L.d_S = slot_array([&](int i) {
      if (i == n_ - 1) return fixed(H2 + (st_.traj.waypoints.back() - sc_.source_pos).squaredNorm());
      return make_var(H2, bounds_.dS_ub);
    });
    L.d_D = slot_array([&](int i) {
      if (i == 0) return fixed(H2 + (st_.traj.waypoints.front() - sc_.dest_pos).squaredNorm());
      return make_var(H2, bounds_.dD_ub);
    });
    L.t = slot_array([&](int i) {
      return fz.pb ? fixed(st_.t[i]) : make_var(bounds_.t_lb, bounds_.t_ub);
    });
    L.t_hat = slot_array([&](int i) {
      return fz.pb ? fixed(st_.t_hat[i]) : make_var(0.0, bounds_.t_ub * sc_.P_max_s);
    });
    const double ei_ub = n_ * bounds_.ell_ub_r / (n_ * sc_.P_on);
    const LaserParams& lp = sc_.laser;
    const double recv_hi = lp.a1 * lp.a2 * bounds_.t_ub * sc_.P_max_s + lp.a2 * lp.b1 * bounds_.t_lb + lp.b2;
    const double recv_lo = lp.a2 * lp.b1 * bounds_.t_ub + lp.b2;
    const double ee_mag = (std::abs(recv_hi) + std::abs(recv_lo) + 1.0) / sc_.P_min_s;
    L.E_i = make_var(0.0, ei_ub);
    L.E_e = make_var(-ee_mag, ee_mag);
    L.p_tilde = make_var(n_ * sc_.P_on,
                         n_ * sc_.P_on + (sc_.upsilon_s * sc_.p_max_s + sc_.upsilon_r * sc_.p_max_r) * n_);
    L.P_tilde = make_var(n_ * sc_.P_min_s, n_ * sc_.P_max_s);
    L.t_tilde = make_var(n_ * recv_lo - 1.0, n_ * recv_hi + 1.0);
    if (opts_.rsum_slack) L.slack = make_var(0.0, sc_.R_sum + 1.0);
    L.num_vars = static_cast<int>(lb_.size());
  }

  // --- constraint materialization helpers ---------------------------------

  void add_row(const Lin& e, socp::RowSense sense, double rhs) {
    socp::LinearRow row;
    row.a = Eigen::VectorXd::Zero(out_.layout.num_vars);
    for (const auto& [j, a] : e.terms) row.a[j] += a;
    row.rhs = rhs - e.c;
    row.sense = sense;
    if (row.a.isZero(0.0)) return;  // fully frozen family member
    out_.program.rows.push_back(std::move(row));
  }

  // ||(u_1..u_k)|| <= t with affine entries
  void add_cone(const std::vector<Lin>& u, const Lin& t) {
    socp::SocConstraint soc;
    const int dim = static_cast<int>(u.size()) + 1;
    soc.A = Eigen::MatrixXd::Zero(dim, out_.layout.num_vars);
    soc.b = Eigen::VectorXd::Zero(dim);
    auto put = [&](int r, const Lin& e) {
      for (const auto& [j, a] : e.terms) soc.A(r, j) += a;
      soc.b[r] = e.c;
    };
    put(0, t);
    bool any = !t.terms.empty();
    for (size_t i = 0; i < u.size(); ++i) {
      put(static_cast<int>(i) + 1, u[i]);
      any = any || !u[i].terms.empty();
    }
    if (!any) return;  // fully frozen
    out_.program.socs.push_back(std::move(soc));
  }

  // sum of squares of affine entries <= affine z
  void add_sq_le(std::vector<Lin> w, const Lin& z) {
    Lin t = z, zm = z;
    t.scale(0.5).add_const(0.5);
    zm.scale(0.5).add_const(-0.5);
    w.push_back(zm);
    add_cone(w, t);
  }

  Lin qx(int i) { return Lin{}.add(out_.layout.qx[i], 1.0); }
  Lin qy(int i) { return Lin{}.add(out_.layout.qy[i], 1.0); }

  void build_constraints() {
    const Layout& L = out_.layout;
    ConstraintCensus& cs = out_.census;
    const LaserParams& lp = sc_.laser;
    const double H = sc_.altitude_H;
    const double alpha = attenuation_alpha(lp);
    const double omega = sc_.omega();
    const double dt = sc_.delta_t;

    // box families (variable bounds; tallied as the paper's linear bucket)
    cs.linear += (n_ - 1) + (n_ - 1) + n_;

    // amplifier-plus-on power epigraph
    {
      Lin e;
      for (int i = 0; i + 1 < n_; ++i) e.add(L.p_s[i], sc_.upsilon_s);
      for (int i = 1; i < n_; ++i) e.add(L.p_r[i], sc_.upsilon_r);
      e.add(L.p_tilde, -1.0);
      add_row(e, socp::RowSense::LE, -n_ * sc_.P_on);
      cs.linear += 1;
    }
    // PB supply epigraph
    {
      Lin e;
      for (int i = 0; i < n_; ++i) e.add(L.P_s[i], 1.0);
      e.add(L.P_tilde, -1.0);
      add_row(e, socp::RowSense::LE, 0.0);
      cs.linear += 1;
    }
    // received-power hypograph
    {
      Lin e;
      for (int i = 0; i < n_; ++i) {
        e.add(L.t_hat[i], lp.a1 * lp.a2);
        e.add(L.t[i], lp.a2 * lp.b1);
      }
      e.add(L.t_tilde, -1.0);
      add_row(e, socp::RowSense::GE, -n_ * lp.b2);
      cs.linear += 1;
    }
    // minimum sum rate (with optional restoration slack)
    {
      Lin e;
      for (int i = 0; i < n_; ++i) e.add(L.ell_r[i], 1.0);
      if (opts_.rsum_slack) e.add(L.slack, 1.0);
      add_row(e, socp::RowSense::GE, sc_.R_sum);
      cs.linear += 1;
    }
    // information causality, relay side tangent-linearized
    for (int m = 1; m < n_; ++m) {
      Lin e;
      for (int i = 1; i <= m; ++i) {
        const double sh = st_.s_r[i];
        e.add(L.s_r[i], 1.0 / ((1.0 + sh) * kLn2));
        e.add_const(log2p1(sh) - sh / ((1.0 + sh) * kLn2));
      }
      for (int i = 0; i < m; ++i) e.add(L.ell_s[i], -1.0);
      add_row(e, socp::RowSense::LE, 0.0);
      cs.linear += 1;
    }
    // battery floor: prefix flying energy below the charge-adjusted budget
    for (int m = 0; m < n_; ++m) {
      std::vector<Lin> w;
      const int hops = std::min(m, n_ - 2);
      for (int i = 0; i <= hops; ++i) {
        const double f = std::sqrt(omega) / dt;
        w.push_back(Lin{}.add(L.qx[i + 1], f).add(L.qx[i], -f));
        w.push_back(Lin{}.add(L.qy[i + 1], f).add(L.qy[i], -f));
      }
      Lin z;
      z.add_const(sc_.energy_budget_E - sc_.energy_floor_theta);
      for (int i = 0; i <= m; ++i) {
        z.add(L.t_hat[i], lp.a1 * lp.a2 * dt);
        z.add(L.t[i], lp.a2 * lp.b1 * dt);
        z.add_const(lp.b2 * dt);
      }
      add_sq_le(std::move(w), z);
      cs.linear += 1;  // paper tally: energy prefix constraints
    }
    // battery cap: received prefix below linearized flying prefix
    for (int m = 0; m < n_; ++m) {
      Lin e;
      const int hops = std::min(m, n_ - 2);
      for (int i = 0; i <= hops; ++i) {
        const Vec2 dq = st_.traj.waypoints[static_cast<size_t>(i) + 1] -
                        st_.traj.waypoints[static_cast<size_t>(i)];
        const double f = omega / (dt * dt);
        e.add(L.qx[i + 1], 2.0 * f * dq.x());
        e.add(L.qx[i], -2.0 * f * dq.x());
        e.add(L.qy[i + 1], 2.0 * f * dq.y());
        e.add(L.qy[i], -2.0 * f * dq.y());
        e.add_const(-f * dq.squaredNorm());
      }
      for (int i = 0; i <= m; ++i) {
        e.add(L.t_hat[i], -lp.a1 * lp.a2 * dt);
        e.add(L.t[i], -lp.a2 * lp.b1 * dt);
        e.add_const(-lp.b2 * dt);
      }
      add_row(e, socp::RowSense::GE, 0.0);
      cs.linear += 1;
    }
    // laser product: t_hat <= t * P, majorized at the current point
    for (int i = 0; i < n_; ++i) {
      const double u = st_.t[i] + st_.pw.P_s[i];
      Lin z;
      z.add(L.t[i], 2.0 * u).add(L.P_s[i], 2.0 * u).add(L.t_hat[i], -2.0).add_const(-u * u);
      add_sq_le({Lin{}.add(L.t[i], 1.0), Lin{}.add(L.P_s[i], 1.0)}, z);
      cs.linear += 1;  // paper tally folds the product family into the linear count
    }

    // mobility speed cones
    for (int i = 0; i + 1 < n_; ++i) {
      Lin t;
      t.add_const(sc_.v_max * dt);
      add_cone({Lin{}.add(L.qx[i + 1], 1.0).add(L.qx[i], -1.0),
                Lin{}.add(L.qy[i + 1], 1.0).add(L.qy[i], -1.0)},
               t);
      cs.soc_dim3 += 1;
    }
    // SNR-distance products (source / relay side), DC-majorized
    auto snr_product = [&](const VarRef& s, const VarRef& d, const VarRef& p, double sh, double dh) {
      Lin z;
      z.add(p, 2.0 * sc_.gamma0).add(s, 2.0 * sh).add(d, 2.0 * dh).add_const(-sh * sh - dh * dh);
      add_sq_le({Lin{}.add(s, 1.0).add(d, 1.0)}, z);
      cs.soc_dim3 += 1;
    };
    for (int i = 0; i + 1 < n_; ++i) snr_product(L.s_s[i], L.d_S[i], L.p_s[i], st_.s_s[i], st_.d_S[i]);
    for (int i = 1; i < n_; ++i) snr_product(L.s_r[i], L.d_D[i], L.p_r[i], st_.s_r[i], st_.d_D[i]);
    // efficiency products (numerator >= denominator * efficiency), majorized
    {
      Lin z;
      for (int i = 0; i < n_; ++i) z.add(L.ell_r[i], 2.0);
      z.add(L.p_tilde, 2.0 * st_.p_tilde).add(L.E_i, 2.0 * st_.E_i);
      z.add_const(-st_.p_tilde * st_.p_tilde - st_.E_i * st_.E_i);
      add_sq_le({Lin{}.add(L.p_tilde, 1.0).add(L.E_i, 1.0)}, z);
      cs.soc_dim3 += 1;
    }
    {
      Lin z;
      z.add(L.t_tilde, 2.0);
      z.add(L.P_tilde, 2.0 * st_.P_tilde).add(L.E_e, 2.0 * st_.E_e);
      z.add_const(-st_.P_tilde * st_.P_tilde - st_.E_e * st_.E_e);
      add_sq_le({Lin{}.add(L.P_tilde, 1.0).add(L.E_e, 1.0)}, z);
      cs.soc_dim3 += 1;
    }
    // per-slot rate hypographs: quadratic minorant of log2(1+s) around the point
    auto rate_hypo = [&](const VarRef& ell, const VarRef& s, double sh) {
      Lin z;
      z.add(ell, -2.0 * kLn2);
      z.add(s, 2.0 * kLn2 / ((1.0 + sh) * kLn2));
      z.add_const(2.0 * kLn2 * (log2p1(sh) - sh / ((1.0 + sh) * kLn2)));
      add_sq_le({Lin{}.add(s, 1.0).add_const(-sh)}, z);
      cs.soc_dim3 += 1;
    };
    for (int i = 0; i < n_; ++i) rate_hypo(L.ell_s[i], L.s_s[i], st_.s_s[i]);
    for (int i = 0; i < n_; ++i) rate_hypo(L.ell_r[i], L.s_r[i], st_.s_r[i]);

    // squared-distance epigraph cones (source, destination)
    const double H2 = H * H;
    auto dist_cone = [&](int i, const Vec2& anchor, const VarRef& d) {
      Lin z;
      z.add(d, 1.0).add_const(-H2);
      Lin t = z, zm = z;
      t.scale(0.5).add_const(0.5);
      zm.scale(0.5).add_const(-0.5);
      add_cone({qx(i).add_const(-anchor.x()), qy(i).add_const(-anchor.y()), zm}, t);
      cs.soc_dim4 += 1;
    };
    for (int i = 0; i + 1 < n_; ++i) dist_cone(i, sc_.source_pos, L.d_S[i]);
    for (int i = 1; i < n_; ++i) dist_cone(i, sc_.dest_pos, L.d_D[i]);
    // laser-efficiency cones with the log term tangent-linearized
    for (int i = 0; i < n_; ++i) {
      const double tl = std::clamp(st_.t[i], bounds_.t_lb, bounds_.t_ub);
      Lin rhs;
      rhs.add_const(-std::log(tl) / alpha + 1.0 / alpha);
      rhs.add(L.t[i], -1.0 / (alpha * tl));
      add_cone({qx(i).add_const(-sc_.pb_pos.x()), qy(i).add_const(-sc_.pb_pos.y()), Lin{}.add_const(H)},
               rhs);
      cs.soc_dim4 += 1;
    }
  }

  void finish() {
    Layout& L = out_.layout;
    socp::ConicProgram& cp = out_.program;
    cp.num_vars = L.num_vars;
    cp.lb = Eigen::Map<Eigen::VectorXd>(lb_.data(), static_cast<Eigen::Index>(lb_.size()));
    cp.ub = Eigen::Map<Eigen::VectorXd>(ub_.data(), static_cast<Eigen::Index>(ub_.size()));
    cp.objective = Eigen::VectorXd::Zero(L.num_vars);
    if (opts_.rsum_slack) {
      cp.objective[L.slack.idx] = -1.0;
    } else {
      if (L.E_i.idx >= 0) cp.objective[L.E_i.idx] = 1.0;
      if (L.E_e.idx >= 0) cp.objective[L.E_e.idx] = sc_.gamma_weight;
    }
  }
};

CccpState extract(const Layout& L, const Eigen::VectorXd& x, const CccpState& prev,
                  const Scenario& sc) {
  const int n = sc.N;
  CccpState st = prev;
  st.traj = Trajectory(n);
  st.pw = PowerSchedule(n);
  st.s_s.resize(n);
  st.s_r.resize(n);
  st.ell_s.resize(n);
  st.ell_r.resize(n);
  st.d_S.resize(n);
  st.d_D.resize(n);
  st.t.resize(n);
  st.t_hat.resize(n);
  const Bounds b = derive_bounds(sc);
  for (int i = 0; i < n; ++i) {
    st.traj.waypoints[static_cast<size_t>(i)] = Vec2(L.value(L.qx[i], x), L.value(L.qy[i], x));
    st.pw.p_s[i] = std::max(0.0, L.value(L.p_s[i], x));
    st.pw.p_r[i] = std::max(0.0, L.value(L.p_r[i], x));
    st.pw.P_s[i] = std::clamp(L.value(L.P_s[i], x), sc.P_min_s, sc.P_max_s);
    st.s_s[i] = std::max(0.0, L.value(L.s_s[i], x));
    st.s_r[i] = std::max(0.0, L.value(L.s_r[i], x));
    st.ell_s[i] = std::max(0.0, L.value(L.ell_s[i], x));
    st.ell_r[i] = std::max(0.0, L.value(L.ell_r[i], x));
    st.d_S[i] = L.value(L.d_S[i], x);
    st.d_D[i] = L.value(L.d_D[i], x);
    st.t[i] = std::clamp(L.value(L.t[i], x), b.t_lb, b.t_ub);
    st.t_hat[i] = L.value(L.t_hat[i], x);
  }
  st.E_i = L.value(L.E_i, x);
  st.E_e = L.value(L.E_e, x);
  st.p_tilde = L.value(L.p_tilde, x);
  st.P_tilde = L.value(L.P_tilde, x);
  st.t_tilde = L.value(L.t_tilde, x);
  return st;
}

// Auxiliaries set to make every transformed constraint tight at the physical
// point (the transformed problem's natural lift).
void tighten(CccpState& st, const Scenario& sc) {
  const int n = sc.N;
  const double H2 = sc.altitude_H * sc.altitude_H;
  const double alpha = attenuation_alpha(sc.laser);
  const LaserParams& lp = sc.laser;
  st.s_s.setZero(n);
  st.s_r.setZero(n);
  st.ell_s.setZero(n);
  st.ell_r.setZero(n);
  st.d_S.resize(n);
  st.d_D.resize(n);
  st.t.resize(n);
  st.t_hat.resize(n);
  double denom = n * sc.P_on;
  for (int i = 0; i < n; ++i) {
    const Vec2 q = st.traj.waypoints[static_cast<size_t>(i)];
    st.d_S[i] = H2 + (q - sc.source_pos).squaredNorm();
    st.d_D[i] = H2 + (q - sc.dest_pos).squaredNorm();
    if (i + 1 < n) {
      st.s_s[i] = st.pw.p_s[i] * sc.gamma0 / st.d_S[i];
      st.ell_s[i] = log2p1(st.s_s[i]);
      denom += sc.upsilon_s * st.pw.p_s[i];
    }
    if (i > 0) {
      st.s_r[i] = st.pw.p_r[i] * sc.gamma0 / st.d_D[i];
      st.ell_r[i] = log2p1(st.s_r[i]);
      denom += sc.upsilon_r * st.pw.p_r[i];
    }
    st.t[i] = std::exp(-alpha * std::sqrt(H2 + (q - sc.pb_pos).squaredNorm()));
    st.t_hat[i] = st.t[i] * st.pw.P_s[i];
  }
  st.p_tilde = denom;
  st.E_i = st.ell_r.sum() / st.p_tilde;
  st.P_tilde = st.pw.P_s.sum();
  double recv = 0.0;
  for (int i = 0; i < n; ++i) recv += lp.a1 * lp.a2 * st.t_hat[i] + lp.a2 * lp.b1 * st.t[i] + lp.b2;
  st.t_tilde = recv;
  st.E_e = st.t_tilde / st.P_tilde;
}

socp::ConicSolution solve_checked(const socp::ConicProgram& cp, const CccpOptions& opts,
                                  const char* what) {
  socp::ConicSolution sol = socp::solve(cp, {opts.solver_tol, opts.solver_max_iters});
  if (sol.status == socp::SolveStatus::Optimal) return sol;
  const double worst = std::max({sol.primal_residual, sol.dual_residual, sol.gap});
  if (sol.status == socp::SolveStatus::IterLimit && worst <= 1e-6) return sol;
  std::ostringstream msg;
  msg << what << ": conic solver returned " << socp::to_string(sol.status)
      << " (primal " << sol.primal_residual << ", dual " << sol.dual_residual << ", gap " << sol.gap
      << ", iters " << sol.iterations << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace

SubproblemBuild build_subproblem(const CccpState& state, const Scenario& sc,
                                 const BuildOptions& opts) {
  Builder b(state, sc, opts);
  return b.run();
}

namespace {

// The battery starts at capacity, so every prefix must burn at least what it
// receives; a seed that moves too slowly violates the cap. Weave the interior
// waypoints laterally until each slot spends enough.
bool restore_energy_cap(Trajectory& traj, const PowerSchedule& pw, const Scenario& sc) {
  if (check_energy_causality(traj, pw, sc).second <= 1e-9) return true;
  const int n = traj.slots();
  Vec2 dir = sc.q_final - sc.q_init;
  Vec2 normal = dir.norm() > 1e-9 ? Vec2(-dir.y(), dir.x()).normalized() : Vec2(0.0, 1.0);
  const Trajectory base = traj;
  double base_speed = 0.0;
  for (int i = 0; i + 1 < n; ++i)
    base_speed = std::max(base_speed, base.velocity(i, sc.delta_t).norm());
  const double a_max = 0.45 * sc.delta_t * (sc.v_max - base_speed);
  if (a_max <= 0.0) return false;
  auto apply = [&](double a) {
    traj = base;
    for (int i = 1; i + 1 < n; ++i)
      traj.waypoints[static_cast<size_t>(i)] += (i % 2 ? a : -a) * normal;
  };
  double lo = 0.0, hi = a_max;
  apply(hi);
  if (check_energy_causality(traj, pw, sc).second > 1e-9) return false;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    apply(mid);
    (check_energy_causality(traj, pw, sc).second > 1e-9 ? lo : hi) = mid;
  }
  apply(hi);
  return check_energy_causality(traj, pw, sc).second <= 1e-9 &&
         check_mobility(traj, sc).speed_excess <= 0.0;
}

}  // namespace

CccpState initialize_from(const Scenario& sc, const Trajectory& traj, const PowerSchedule& pw,
                          const CccpOptions& opts) {
  sc.validate();
  CccpState st;
  st.traj = traj;
  st.pw = pw;
  st.pw.p_s[sc.N - 1] = 0.0;
  st.pw.p_r[0] = 0.0;
  if (!restore_energy_cap(st.traj, st.pw, sc))
    throw std::invalid_argument("cccp: cannot burn the mandatory charge within the speed limit");
  tighten(st, sc);

  FeasibilityReport rep = check_feasibility(st.traj, st.pw, sc);
  const double hard = std::max({rep.mobility_speed, rep.mobility_endpoint, rep.info_causality,
                                rep.energy_under_floor, rep.energy_over_cap, rep.power_bounds});
  if (hard > rep.tolerance)
    throw std::invalid_argument("cccp: seed point violates hard constraints beyond tolerance");

  if (rep.rate_sum_shortfall > rep.tolerance) {
    // restoration: minimize the 8d slack over the same feasible set
    BuildOptions bo;
    bo.rsum_slack = true;
    bool restored = false;
    for (int k = 0; k < 20; ++k) {
      SubproblemBuild build = build_subproblem(st, sc, bo);
      socp::ConicSolution sol = solve_checked(build.program, opts, "cccp restoration");
      const double slack = build.layout.value(build.layout.slack, sol.x);
      st = extract(build.layout, sol.x, st, sc);
      if (slack <= 1e-9) {
        restored = true;
        break;
      }
    }
    if (!restored)
      throw std::invalid_argument("cccp: no feasible start found (sum-rate unattainable)");
  }
  return st;
}

CccpState initialize(const Scenario& sc, const CccpOptions& opts) {
  sc.validate();
  const int n = sc.N;
  Trajectory traj(n);
  for (int i = 0; i < n; ++i)
    traj.waypoints[static_cast<size_t>(i)] =
        sc.q_init + (sc.q_final - sc.q_init) * (double(i) / double(n - 1));
  PowerSchedule pw(n);
  for (int i = 0; i < n; ++i) pw.P_s[i] = sc.P_min_s;
  for (int i = 0; i + 1 < n; ++i) pw.p_s[i] = sc.p_max_s;
  // causal relay fill: forward what has arrived, capped by the relay box
  double backlog = 0.0;
  for (int m = 1; m < n; ++m) {
    backlog += rate_source_to_uav(pw.p_s[m - 1], traj.waypoints[static_cast<size_t>(m) - 1], sc);
    const Vec2 q = traj.waypoints[static_cast<size_t>(m)];
    const double cap = rate_uav_to_dest(sc.p_max_r, q, sc);
    const double target = std::min(cap, backlog);
    const double d2 = sc.altitude_H * sc.altitude_H + (q - sc.dest_pos).squaredNorm();
    pw.p_r[m] = std::min(sc.p_max_r, (std::pow(2.0, target) - 1.0) * d2 / sc.gamma0);
    backlog -= target;
  }
  return initialize_from(sc, traj, pw, opts);
}

CccpState iterate(const CccpState& state, const Scenario& sc, const CccpOptions& opts) {
  SubproblemBuild build = build_subproblem(state, sc, {});
  socp::ConicSolution sol = solve_checked(build.program, opts, "cccp iterate");
  CccpState next = extract(build.layout, sol.x, state, sc);
  next.iteration = state.iteration + 1;
  return next;
}

void to_solution(const CccpState& state, const Scenario& sc, Trajectory& traj, PowerSchedule& pw) {
  const int n = sc.N;
  const double H2 = sc.altitude_H * sc.altitude_H;
  const LaserParams& lp = sc.laser;
  traj = state.traj;
  traj.waypoints.front() = sc.q_init;
  traj.waypoints.back() = sc.q_final;
  pw = state.pw;
  for (int i = 0; i < n; ++i) {
    const Vec2 q = traj.waypoints[static_cast<size_t>(i)];
    if (i > 0) {
      const double d2 = H2 + (q - sc.dest_pos).squaredNorm();
      pw.p_r[i] = std::min(pw.p_r[i], state.s_r[i] * d2 / sc.gamma0);
    }
    // PB power realizing exactly the modeled received power
    const double eta = laser_transmission_eff(q, sc);
    const double model = lp.a1 * lp.a2 * state.t_hat[i] + lp.a2 * lp.b1 * state.t[i] + lp.b2;
    const double match = (lp.a1 * lp.a2 * state.t_hat[i] + lp.a2 * lp.b1 * (state.t[i] - eta)) /
                         (lp.a1 * lp.a2 * eta);
    (void)model;
    pw.P_s[i] = std::clamp(match, sc.P_min_s, std::min(sc.P_max_s, pw.P_s[i]));
  }
  pw.p_s[n - 1] = 0.0;
  pw.p_r[0] = 0.0;
  detail::repair_solution(traj, pw, sc, 1e-6);
}

SolveResult solve_from(const Scenario& sc, const CccpState& start, const CccpOptions& opts) {
  SolveResult out;
  CccpState st = start;
  int stall = 0;
  double prev_obj = st.surrogate_objective(sc);
  auto record = [&](const CccpState& s) {
    IterRecord rec;
    rec.iteration = s.iteration;
    rec.surrogate = s.surrogate_objective(sc);
    Trajectory traj;
    PowerSchedule pw;
    to_solution(s, sc, traj, pw);
    rec.report = check_feasibility(traj, pw, sc);
    rec.max_violation = rec.report.max_violation();
    rec.objective = objective(traj, pw, sc).weighted_objective;
    out.history.push_back(rec);
  };
  record(st);
  out.converged = false;
  for (int k = 0; k < opts.max_iters; ++k) {
    CccpState next;
    try {
      next = iterate(st, sc, opts);
    } catch (const std::runtime_error& e) {
      out.message = e.what();
      break;
    }
    st = next;
    record(st);
    const double obj = st.surrogate_objective(sc);
    const double imp = (obj - prev_obj) / std::max(1.0, std::abs(obj));
    prev_obj = obj;
    if (imp < opts.tol) {
      if (++stall >= opts.stall_iters) {
        out.converged = true;
        break;
      }
    } else {
      stall = 0;
    }
  }
  out.iterations = st.iteration;
  to_solution(st, sc, out.traj, out.pw);
  out.metrics = objective(out.traj, out.pw, sc);
  return out;
}

SolveResult solve(const Scenario& sc, const CccpOptions& opts) {
  return solve_from(sc, initialize(sc, opts), opts);
}

}  // namespace lasrelay::cccp
