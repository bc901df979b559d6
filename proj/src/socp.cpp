#include "lasrelay/socp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <functional>
#include <sstream>
#include <cstdio>

namespace lasrelay::socp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// --- internal conic form -------------------------------------------------
//
// minimize c'x  s.t.  A x = b,  G x + s = h,  s in K,
// K = R+^p x SOC(d1) x ... x SOC(dk).  Rows 0..p-1 of G are the nonnegative
// block; each SOC block stores (t, u) rows consecutively with t first.

struct SocBlockRef {
  int offset = 0;  // first row in G
  int dim = 0;
};

struct Internal {
  int n = 0;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;  // meq x n (usually tiny or empty)
  Eigen::VectorXd b;
  std::vector<std::vector<std::pair<int, double>>> Grows;  // sparse rows
  Eigen::VectorXd h;
  int p = 0;
  std::vector<SocBlockRef> socs;
  int mG = 0;

  void add_row(const std::vector<std::pair<int, double>>& a, double rhs) {
    Grows.push_back(a);
    hvals.push_back(rhs);
  }
  std::vector<double> hvals;
  void finalize() {
    mG = static_cast<int>(Grows.size());
    h = Eigen::Map<Eigen::VectorXd>(hvals.data(), mG);
  }

  Eigen::VectorXd G_mul(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(mG);
    for (int i = 0; i < mG; ++i) {
      double v = 0.0;
      for (const auto& [j, a] : Grows[static_cast<size_t>(i)]) v += a * x[j];
      y[i] = v;
    }
    return y;
  }
  Eigen::VectorXd Gt_mul(const Eigen::VectorXd& y) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < mG; ++i)
      for (const auto& [j, a] : Grows[static_cast<size_t>(i)]) x[j] += a * y[i];
    return x;
  }
};

// --- Jordan algebra helpers ----------------------------------------------

double soc_res(const Eigen::VectorXd& u) {  // u0^2 - ||u1||^2
  return u[0] * u[0] - u.tail(u.size() - 1).squaredNorm();
}

Eigen::VectorXd jmul(const Eigen::VectorXd& u) {  // J u = (u0, -u1)
  Eigen::VectorXd v = -u;
  v[0] = u[0];
  return v;
}

Eigen::VectorXd jordan_prod(const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
  Eigen::VectorXd r(u.size());
  r[0] = u.dot(w);
  r.tail(r.size() - 1) = u[0] * w.tail(w.size() - 1) + w[0] * u.tail(u.size() - 1);
  return r;
}

// Solve lam o x = d for x.
Eigen::VectorXd jordan_div(const Eigen::VectorXd& lam, const Eigen::VectorXd& d) {
  const double a = soc_res(lam);
  Eigen::VectorXd x(lam.size());
  x[0] = (lam[0] * d[0] - lam.tail(lam.size() - 1).dot(d.tail(d.size() - 1))) / a;
  x.tail(x.size() - 1) = (d.tail(d.size() - 1) - x[0] * lam.tail(lam.size() - 1)) / lam[0];
  return x;
}

// Nesterov-Todd scaling state.
struct NTState {
  Eigen::VectorXd dnn;  // per nonneg row: w_i = sqrt(s_i / z_i)
  struct SocScale {
    double beta = 1.0;
    Eigen::VectorXd v;     // W = beta (2 v v' - J)
    Eigen::VectorXd jv;    // J v
    Eigen::VectorXd wbar;  // v o v
    Eigen::VectorXd jwbar;
  };
  std::vector<SocScale> socs;
  Eigen::VectorXd lambda;  // scaled point, lambda = W z = W^{-1} s
};

NTState compute_scaling(const Internal& in, const Eigen::VectorXd& s, const Eigen::VectorXd& z) {
  NTState nt;
  nt.dnn.resize(in.p);
  nt.lambda.resize(in.mG);
  for (int i = 0; i < in.p; ++i) {
    nt.dnn[i] = std::sqrt(s[i] / z[i]);
    nt.lambda[i] = std::sqrt(s[i] * z[i]);
  }
  nt.socs.reserve(in.socs.size());
  for (const auto& blk : in.socs) {
    const auto sseg = s.segment(blk.offset, blk.dim);
    const auto zseg = z.segment(blk.offset, blk.dim);
    const double sn = std::sqrt(std::max(soc_res(sseg), 1e-300));
    const double zn = std::sqrt(std::max(soc_res(zseg), 1e-300));
    Eigen::VectorXd sb = sseg / sn, zb = zseg / zn;
    const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
    Eigen::VectorXd wbar = (sb + jmul(zb)) / (2.0 * gamma);
    NTState::SocScale sc;
    sc.beta = std::sqrt(sn / zn);
    sc.v = (wbar + Eigen::VectorXd::Unit(blk.dim, 0)) / std::sqrt(2.0 * (wbar[0] + 1.0));
    sc.jv = jmul(sc.v);
    sc.wbar = wbar;
    sc.jwbar = jmul(wbar);
    // lambda = W z = beta (2 v (v'z) - J z)
    const Eigen::VectorXd zcopy = zseg;
    nt.lambda.segment(blk.offset, blk.dim) =
        sc.beta * (2.0 * sc.v * sc.v.dot(zcopy) - jmul(zcopy));
    nt.socs.push_back(std::move(sc));
  }
  return nt;
}

// y = W x, W^{-1} x, W^{-2} x, W^2 x applied blockwise.
enum class WOp { W, Winv, Winv2, W2 };

Eigen::VectorXd apply_W(const Internal& in, const NTState& nt, const Eigen::VectorXd& x, WOp op) {
  Eigen::VectorXd y(in.mG);
  for (int i = 0; i < in.p; ++i) {
    const double w = nt.dnn[i];
    switch (op) {
      case WOp::W: y[i] = w * x[i]; break;
      case WOp::Winv: y[i] = x[i] / w; break;
      case WOp::Winv2: y[i] = x[i] / (w * w); break;
      case WOp::W2: y[i] = x[i] * w * w; break;
    }
  }
  for (size_t k = 0; k < in.socs.size(); ++k) {
    const auto& blk = in.socs[k];
    const auto& sc = nt.socs[k];
    const auto seg = x.segment(blk.offset, blk.dim);
    Eigen::VectorXd r;
    switch (op) {
      case WOp::W:
        r = sc.beta * (2.0 * sc.v * sc.v.dot(seg) - jmul(seg));
        break;
      case WOp::Winv:
        r = (2.0 * sc.jv * sc.jv.dot(seg) - jmul(seg)) / sc.beta;
        break;
      case WOp::Winv2:
        r = (2.0 * sc.jwbar * sc.jwbar.dot(seg) - jmul(seg)) / (sc.beta * sc.beta);
        break;
      case WOp::W2:
        r = (sc.beta * sc.beta) * (2.0 * sc.wbar * sc.wbar.dot(seg) - jmul(seg));
        break;
    }
    y.segment(blk.offset, blk.dim) = r;
  }
  return y;
}

// Max step alpha such that u + alpha d stays in the cone (u strictly inside).
double max_step_nonneg(const Eigen::VectorXd& u, const Eigen::VectorXd& d, int begin, int end) {
  double alpha = kInf;
  for (int i = begin; i < end; ++i)
    if (d[i] < 0.0) alpha = std::min(alpha, -u[i] / d[i]);
  return alpha;
}

double max_step_soc(const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
  // smallest alpha > 0 with (u0+a d0)^2 = ||u1+a d1||^2 or t-row hitting 0
  const double a = soc_res(d);
  const double b = 2.0 * (u[0] * d[0] - u.tail(u.size() - 1).dot(d.tail(d.size() - 1)));
  const double cc = soc_res(u);
  double alpha = kInf;
  if (std::abs(a) < 1e-300) {
    if (b < 0.0) alpha = -cc / b;
  } else {
    const double disc = b * b - 4.0 * a * cc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double r : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)})
        if (r > 0.0) alpha = std::min(alpha, r);
    }
  }
  if (d[0] < 0.0) alpha = std::min(alpha, -u[0] / d[0]);
  return alpha;
}

double max_step(const Internal& in, const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
  double alpha = max_step_nonneg(u, d, 0, in.p);
  for (const auto& blk : in.socs)
    alpha = std::min(alpha, max_step_soc(u.segment(blk.offset, blk.dim), d.segment(blk.offset, blk.dim)));
  return alpha;
}

// --- KKT factorization ----------------------------------------------------
//
// Solves [0 A' G'; A 0 0; G 0 -W^2] (ux,uy,uz) = (bx,by,bz) via the normal
// matrix M = G' W^{-2} G (+ reg) and a small Schur complement for A.

struct KktFactor {
  const Internal* in = nullptr;
  const NTState* nt = nullptr;
  Eigen::LDLT<Eigen::MatrixXd> lltM;
  Eigen::MatrixXd Minv_At;
  Eigen::LDLT<Eigen::MatrixXd> lltS;
  bool ok = false;

  void factor(const Internal& inref, const NTState& ntref) {
    in = &inref;
    nt = &ntref;
    const int n = in->n;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    // nonneg rows: sum w^{-2} a a'
    for (int i = 0; i < in->p; ++i) {
      const double wi2 = 1.0 / (nt->dnn[i] * nt->dnn[i]);
      const auto& row = in->Grows[static_cast<size_t>(i)];
      for (const auto& [j1, a1] : row)
        for (const auto& [j2, a2] : row) M(j1, j2) += wi2 * a1 * a2;
    }
    // SOC blocks: G_b' W^{-2} G_b with W^{-2} = (1/b^2)(2 jw jw' - J)
    for (size_t k = 0; k < in->socs.size(); ++k) {
      const auto& blk = in->socs[k];
      const auto& sc = nt->socs[k];
      const double ib2 = 1.0 / (sc.beta * sc.beta);
      // r = G_b' jwbar, q0 = row0 of G_b (the J-part needs G' J G)
      Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
      for (int d = 0; d < blk.dim; ++d)
        for (const auto& [j, a] : in->Grows[static_cast<size_t>(blk.offset + d)])
          r[j] += sc.jwbar[d] * a;
      // M += ib2 * (2 r r' - G_b' J G_b); G'JG = g0 g0' - sum_{d>0} gd gd'
      for (int d = 0; d < blk.dim; ++d) {
        const double sgn = (d == 0) ? -1.0 : 1.0;  // -(+g0 g0') + gd gd'
        const auto& row = in->Grows[static_cast<size_t>(blk.offset + d)];
        for (const auto& [j1, a1] : row)
          for (const auto& [j2, a2] : row) M(j1, j2) += ib2 * sgn * a1 * a2;
      }
      // dense rank-1 on the support of r (r can be dense; just do outer)
      M.noalias() += (2.0 * ib2) * (r * r.transpose());
    }
    M.diagonal().array() += 1e-13 * (1.0 + M.diagonal().array().abs());
    lltM.compute(M);
    ok = lltM.info() == Eigen::Success;
    if (!ok) return;
    if (in->A.rows() > 0) {
      Minv_At = lltM.solve(in->A.transpose());
      Eigen::MatrixXd S = in->A * Minv_At;
      S.diagonal().array() += 1e-13 * (1.0 + S.diagonal().array().abs());
      lltS.compute(S);
      ok = lltS.info() == Eigen::Success;
    }
  }

  void solve_raw(const Eigen::VectorXd& bx, const Eigen::VectorXd& by, const Eigen::VectorXd& bz,
                 Eigen::VectorXd& ux, Eigen::VectorXd& uy, Eigen::VectorXd& uz) const {
    const Eigen::VectorXd r1 = bx + in->Gt_mul(apply_W(*in, *nt, bz, WOp::Winv2));
    if (in->A.rows() == 0) {
      ux = lltM.solve(r1);
      uy.resize(0);
    } else {
      const Eigen::VectorXd Minv_r1 = lltM.solve(r1);
      uy = lltS.solve(in->A * Minv_r1 - by);
      ux = Minv_r1 - Minv_At * uy;
    }
    uz = apply_W(*in, *nt, in->G_mul(ux) - bz, WOp::Winv2);
  }

  // returns (ux, uy, uz), with iterative refinement on the 3-block system
  void solve(const Eigen::VectorXd& bx, const Eigen::VectorXd& by, const Eigen::VectorXd& bz,
             Eigen::VectorXd& ux, Eigen::VectorXd& uy, Eigen::VectorXd& uz) const {
    solve_raw(bx, by, bz, ux, uy, uz);
    const int meq = static_cast<int>(in->A.rows());
    const double rhs_scale = std::max({bx.norm(), by.norm(), bz.norm(), 1e-300});
    for (int round = 0; round < 4; ++round) {
      Eigen::VectorXd ex = bx - in->Gt_mul(uz) -
                           (meq ? Eigen::VectorXd(in->A.transpose() * uy) : Eigen::VectorXd::Zero(in->n));
      Eigen::VectorXd ey = meq ? Eigen::VectorXd(by - in->A * ux) : Eigen::VectorXd(0);
      Eigen::VectorXd ez = bz - in->G_mul(ux) + apply_W(*in, *nt, uz, WOp::W2);
      const double err = std::max({ex.norm(), ey.norm(), ez.norm()});
      if (err <= 1e-14 * rhs_scale) break;
      Eigen::VectorXd cx, cy, cz;
      solve_raw(ex, ey, ez, cx, cy, cz);
      ux += cx;
      if (meq) uy += cy;
      uz += cz;
    }
  }
};

Eigen::VectorXd cone_identity(const Internal& in) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(in.mG);
  e.head(in.p).setOnes();
  for (const auto& blk : in.socs) e[blk.offset] = 1.0;
  return e;
}

NTState identity_scaling(const Internal& in) {
  NTState nt;
  nt.dnn = Eigen::VectorXd::Ones(in.p);
  for (const auto& blk : in.socs) {
    NTState::SocScale sc;
    sc.beta = 1.0;
    sc.v = Eigen::VectorXd::Unit(blk.dim, 0);
    sc.jv = sc.v;
    sc.wbar = sc.v;
    sc.jwbar = sc.v;
    nt.socs.push_back(std::move(sc));
  }
  nt.lambda = cone_identity(in);
  return nt;
}

// Smallest cone-eigenvalue of u (negative when outside the cone).
double min_eig(const Internal& in, const Eigen::VectorXd& u) {
  double m = kInf;
  for (int i = 0; i < in.p; ++i) m = std::min(m, u[i]);
  for (const auto& blk : in.socs) {
    const auto seg = u.segment(blk.offset, blk.dim);
    m = std::min(m, seg[0] - seg.tail(blk.dim - 1).norm());
  }
  return m;
}

void shift_into_cone(const Internal& in, Eigen::VectorXd& u) {
  const double a = -min_eig(in, u);
  if (a >= 0.0) {
    Eigen::VectorXd e = cone_identity(in);
    u += (1.0 + a) * e;
  }
}

struct HsdResult {
  SolveStatus status = SolveStatus::IterLimit;
  Eigen::VectorXd x, y, z, s;
  int iterations = 0;
  double pres = kInf, dres = kInf, relgap = kInf;
};

// `accept` sees the scaled-back candidate whenever the internal residuals meet
// the current target; returning false tightens the target and keeps iterating
// (the internal normalization can differ from the caller's KKT norms).
HsdResult solve_hsd(const Internal& in, const SolveOptions& opts,
                    const std::function<bool(const HsdResult&)>& accept) {
  HsdResult out;
  const int n = in.n;
  const int meq = static_cast<int>(in.A.rows());
  const double deg = static_cast<double>(in.p + static_cast<int>(in.socs.size()));

  // least-squares initialization on the identity scaling
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(meq);
  Eigen::VectorXd s = cone_identity(in);
  Eigen::VectorXd z = s;
  {
    NTState nt0 = identity_scaling(in);
    KktFactor kkt0;
    kkt0.factor(in, nt0);
    if (kkt0.ok) {
      Eigen::VectorXd ux, uy, uz;
      kkt0.solve(Eigen::VectorXd::Zero(n), in.b, in.h, ux, uy, uz);
      x = ux;
      s = -(in.G_mul(ux) - in.h);  // residual of the primal least squares
      shift_into_cone(in, s);
      kkt0.solve(-in.c, Eigen::VectorXd::Zero(meq), Eigen::VectorXd::Zero(in.mG), ux, uy, uz);
      y = uy;
      z = uz;
      shift_into_cone(in, z);
    }
  }
  double tau = 1.0, kappa = 1.0;

  const double cnorm = std::max(1.0, in.c.norm());
  const double bnorm = std::max(1.0, in.b.norm());
  const double hnorm = std::max(1.0, in.h.norm());

  double best_score = kInf;
  Eigen::VectorXd bx_ = x, by_ = y, bz_ = z, bs_ = s;
  double btau = 1.0;
  double target = opts.tol;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    out.iterations = iter;
    // residuals of the HSD system
    Eigen::VectorXd rx = (meq ? Eigen::VectorXd(in.A.transpose() * y) : Eigen::VectorXd::Zero(n)) +
                         in.Gt_mul(z) + in.c * tau;
    Eigen::VectorXd ry = (meq ? Eigen::VectorXd(in.A * x) : Eigen::VectorXd::Zero(0)) - in.b * tau;
    Eigen::VectorXd rz = in.G_mul(x) + s - in.h * tau;
    const double rtau = in.c.dot(x) + (meq ? in.b.dot(y) : 0.0) + in.h.dot(z) + kappa;

    // convergence of the scaled-back candidate
    const double pres = std::max(meq ? ry.norm() / tau / bnorm : 0.0, rz.norm() / tau / hnorm);
    const double dres = rx.norm() / tau / cnorm;
    const double pcost = in.c.dot(x) / tau;
    const double dcost = -(meq ? in.b.dot(y) : 0.0) / tau - in.h.dot(z) / tau;
    const double gap = s.dot(z) / (tau * tau);
    const double relgap = gap / std::max({1.0, std::abs(pcost), std::abs(dcost)});
    if (!std::isfinite(pres) || !std::isfinite(dres) || !std::isfinite(relgap)) break;
    const double score = std::max({pres, dres, relgap});
    if (score < best_score) {
      best_score = score;
      bx_ = x;
      by_ = y;
      bz_ = z;
      bs_ = s;
      btau = tau;
      out.pres = pres;
      out.dres = dres;
      out.relgap = relgap;
    }
    if (pres <= target && dres <= target && relgap <= target) {
      HsdResult cand;
      cand.status = SolveStatus::Optimal;
      cand.x = x / tau;
      cand.y = y / tau;
      cand.z = z / tau;
      cand.s = s / tau;
      cand.iterations = iter;
      cand.pres = pres;
      cand.dres = dres;
      cand.relgap = relgap;
      if (!accept || accept(cand)) return cand;
      target *= 0.05;  // caller wants more accuracy than the internal norms show
    }

    // infeasibility certificates
    const double hb = (meq ? in.b.dot(y) : 0.0) + in.h.dot(z);
    if (hb < -1e-12) {
      const double certres = ((meq ? Eigen::VectorXd(in.A.transpose() * y) : Eigen::VectorXd::Zero(n)) +
                              in.Gt_mul(z))
                                 .norm() /
                             (-hb) / cnorm;
      if (certres <= opts.tol && kappa / std::max(tau, 1e-300) > 1e8) {
        out.status = SolveStatus::Infeasible;
        out.x = x;
        out.y = y / (-hb);
        out.z = z / (-hb);
        out.s = s;
        return out;
      }
    }
    const double cx = in.c.dot(x);
    if (cx < -1e-12) {
      const double certres = (std::max((meq ? Eigen::VectorXd(in.A * x) : Eigen::VectorXd::Zero(0)).norm(),
                                       (in.G_mul(x) + s).norm())) /
                             (-cx) / std::max(hnorm, bnorm);
      if (certres <= opts.tol && kappa / std::max(tau, 1e-300) > 1e8) {
        out.status = SolveStatus::Unbounded;
        out.x = x / (-cx);
        out.y = y;
        out.z = z;
        out.s = s / (-cx);
        return out;
      }
    }

    const double mu = (s.dot(z) + tau * kappa) / (deg + 1.0);
#ifdef LR_SOCP_TRACE
    std::fprintf(stderr, "it %d pres %.3e dres %.3e relgap %.3e mu %.3e tau %.3e kappa %.3e\n", iter,
                 pres, dres, relgap, mu, tau, kappa);
#endif
    NTState nt = compute_scaling(in, s, z);
    KktFactor kkt;
    kkt.factor(in, nt);
    if (!kkt.ok) break;

    Eigen::VectorXd vx, vy, vz;
    kkt.solve(-in.c, in.b, in.h, vx, vy, vz);

    auto direction = [&](const Eigen::VectorXd& dsz, double bkappa, double eta, Eigen::VectorXd& dx,
                         Eigen::VectorXd& dy, Eigen::VectorXd& dz, Eigen::VectorXd& ds, double& dtau,
                         double& dkappa) {
      // rhs of the linear part is -eta * residuals
      Eigen::VectorXd ux, uy, uz;
      kkt.solve(-eta * rx, -eta * ry, -eta * rz - apply_W(in, nt, dsz, WOp::W), ux, uy, uz);
      const double denom = in.c.dot(vx) + (meq ? in.b.dot(vy) : 0.0) + in.h.dot(vz) - kappa / tau;
      double num = -eta * rtau - bkappa / tau -
                   (in.c.dot(ux) + (meq ? in.b.dot(uy) : 0.0) + in.h.dot(uz));
      dtau = num / (denom != 0.0 ? denom : -1e-12);
      dx = ux + dtau * vx;
      dy = meq ? Eigen::VectorXd(uy + dtau * vy) : Eigen::VectorXd(0);
      dz = uz + dtau * vz;
      ds = -eta * rz + in.h * dtau - in.G_mul(dx);
      dkappa = (bkappa - kappa * dtau) / tau;
    };

    // affine direction
    Eigen::VectorXd lam = nt.lambda;
    Eigen::VectorXd comp_aff(in.mG);
    comp_aff.head(in.p) = -lam.head(in.p).array().square();
    for (const auto& blk : in.socs) {
      const auto lseg = lam.segment(blk.offset, blk.dim);
      comp_aff.segment(blk.offset, blk.dim) = -jordan_prod(lseg, lseg);
    }
    Eigen::VectorXd dsz_aff(in.mG);
    dsz_aff.head(in.p) = comp_aff.head(in.p).array() / lam.head(in.p).array();
    for (const auto& blk : in.socs)
      dsz_aff.segment(blk.offset, blk.dim) =
          jordan_div(lam.segment(blk.offset, blk.dim), comp_aff.segment(blk.offset, blk.dim));

    Eigen::VectorXd dx_a, dy_a, dz_a, ds_a;
    double dtau_a, dkappa_a;
    direction(dsz_aff, -tau * kappa, 1.0, dx_a, dy_a, dz_a, ds_a, dtau_a, dkappa_a);

    // step to boundary in the scaled space
    Eigen::VectorXd dsb = apply_W(in, nt, ds_a, WOp::Winv);
    Eigen::VectorXd dzb = apply_W(in, nt, dz_a, WOp::W);
    double alpha_a = std::min({max_step(in, lam, dsb), max_step(in, lam, dzb),
                               dtau_a < 0.0 ? -tau / dtau_a : kInf,
                               dkappa_a < 0.0 ? -kappa / dkappa_a : kInf});
    alpha_a = std::min(1.0, alpha_a);
    const double mu_aff = ((s + alpha_a * ds_a).dot(z + alpha_a * dz_a) +
                           (tau + alpha_a * dtau_a) * (kappa + alpha_a * dkappa_a)) /
                          (deg + 1.0);
    double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0);

    // combined direction with Mehrotra correction
    Eigen::VectorXd comp = comp_aff;
    comp.head(in.p).array() -= (dsb.head(in.p).array() * dzb.head(in.p).array()) - sigma * mu;
    for (const auto& blk : in.socs) {
      const auto a = dsb.segment(blk.offset, blk.dim);
      const auto bseg = dzb.segment(blk.offset, blk.dim);
      Eigen::VectorXd corr = jordan_prod(a, bseg);
      comp.segment(blk.offset, blk.dim) -= corr;
      comp[blk.offset] += sigma * mu;
    }
    Eigen::VectorXd dsz(in.mG);
    dsz.head(in.p) = comp.head(in.p).array() / lam.head(in.p).array();
    for (const auto& blk : in.socs)
      dsz.segment(blk.offset, blk.dim) =
          jordan_div(lam.segment(blk.offset, blk.dim), comp.segment(blk.offset, blk.dim));

    Eigen::VectorXd dx, dy, dz, ds;
    double dtau, dkappa;
    direction(dsz, -tau * kappa - dtau_a * dkappa_a + sigma * mu, 1.0 - sigma, dx, dy, dz, ds, dtau, dkappa);

    dsb = apply_W(in, nt, ds, WOp::Winv);
    dzb = apply_W(in, nt, dz, WOp::W);
    double alpha = std::min({max_step(in, lam, dsb), max_step(in, lam, dzb),
                             dtau < 0.0 ? -tau / dtau : kInf, dkappa < 0.0 ? -kappa / dkappa : kInf});
    alpha = std::min(1.0, 0.99 * alpha);
#ifdef LR_SOCP_TRACE
    std::fprintf(stderr, "   alpha_aff %.3e sigma %.3e alpha %.3e\n", alpha_a, sigma, alpha);
#endif
    if (!std::isfinite(alpha) || alpha <= 0.0) break;

    x += alpha * dx;
    if (meq) y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
  }

  out.status = SolveStatus::IterLimit;
  out.x = bx_ / btau;
  out.y = by_ / btau;
  out.z = bz_ / btau;
  out.s = bs_ / btau;
  return out;
}

// --- user-form <-> internal-form translation ------------------------------

struct Translation {
  std::vector<int> var_map;        // user var -> internal var or -1 (fixed)
  Eigen::VectorXd fixed_value;     // per user var, valid where var_map == -1
  Eigen::VectorXd col_scale;       // internal var j: x_user = col_scale * x_int
  double obj_scale = 1.0;
  // provenance of internal G rows
  struct RowSrc {
    enum Kind { UserRowLE, UserRowGEFlip, BoundLo, BoundHi, SocRow } kind;
    int index = 0;  // user row / var / soc id
    double scale = 1.0;
  };
  std::vector<RowSrc> row_src;
  std::vector<int> eq_src;             // internal eq row -> user row
  std::vector<double> eq_scale;
  std::vector<int> soc_offset;         // user soc -> internal row offset or -1 (dropped)
  std::vector<double> soc_scale;
  int n_int = 0;
};

struct BuildOutcome {
  bool infeasible_const = false;  // a constant constraint is violated
  Internal in;
  Translation tr;
};

BuildOutcome to_internal(const ConicProgram& cp) {
  BuildOutcome out;
  Translation& tr = out.tr;
  const int nu = cp.num_vars;
  tr.var_map.assign(static_cast<size_t>(nu), -1);
  tr.fixed_value = Eigen::VectorXd::Zero(nu);

  int n = 0;
  for (int j = 0; j < nu; ++j) {
    const double lo = cp.lb.size() ? cp.lb[j] : -kInf;
    const double hi = cp.ub.size() ? cp.ub[j] : kInf;
    if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 1e-14 * (1.0 + std::abs(lo))) {
      tr.fixed_value[j] = 0.5 * (lo + hi);
    } else {
      tr.var_map[static_cast<size_t>(j)] = n++;
    }
  }
  tr.n_int = n;

  // column scaling from the largest coefficient magnitude per variable
  Eigen::VectorXd colmax = Eigen::VectorXd::Zero(n);
  auto see = [&](int uj, double a) {
    const int j = tr.var_map[static_cast<size_t>(uj)];
    if (j >= 0) colmax[j] = std::max(colmax[j], std::abs(a));
  };
  for (int j = 0; j < nu; ++j)
    if (tr.var_map[static_cast<size_t>(j)] >= 0) see(j, cp.objective[j]);
  for (const auto& row : cp.rows)
    for (int j = 0; j < nu; ++j)
      if (row.a[j] != 0.0) see(j, row.a[j]);
  for (const auto& soc : cp.socs)
    for (int r = 0; r < soc.dim(); ++r)
      for (int j = 0; j < nu; ++j)
        if (soc.A(r, j) != 0.0) see(j, soc.A(r, j));
  tr.col_scale.resize(n);
  for (int j = 0; j < n; ++j)
    tr.col_scale[j] = colmax[j] > 0.0 ? std::clamp(1.0 / std::sqrt(colmax[j]), 1e-6, 1e6) : 1.0;

  Internal& in = out.in;
  in.n = n;

  // objective (internal minimizes)
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < nu; ++j) {
    const int jj = tr.var_map[static_cast<size_t>(j)];
    if (jj >= 0) c[jj] = -cp.objective[j] * tr.col_scale[jj];
  }
  tr.obj_scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  in.c = c / tr.obj_scale;

  std::vector<Eigen::VectorXd> eq_rows;
  std::vector<double> eq_rhs;

  auto reduce_row = [&](const Eigen::VectorXd& a, double rhs) {
    std::vector<std::pair<int, double>> entries;
    double r = rhs;
    for (int j = 0; j < nu; ++j) {
      if (a[j] == 0.0) continue;
      const int jj = tr.var_map[static_cast<size_t>(j)];
      if (jj < 0)
        r -= a[j] * tr.fixed_value[j];
      else
        entries.emplace_back(jj, a[j] * tr.col_scale[jj]);
    }
    return std::make_pair(entries, r);
  };

  // linear rows -> nonneg block (LE form), equalities -> A
  for (size_t i = 0; i < cp.rows.size(); ++i) {
    const auto& row = cp.rows[i];
    const double flip = row.sense == RowSense::GE ? -1.0 : 1.0;
    auto [entries, rhs] = reduce_row(flip * row.a, flip * row.rhs);
    double scale = 1e-300;
    for (const auto& [j, a] : entries) scale = std::max(scale, std::abs(a));
    if (entries.empty()) {
      const bool bad = row.sense == RowSense::EQ ? std::abs(rhs) > 1e-9 * (1.0 + std::abs(row.rhs))
                                                 : rhs < -1e-9 * (1.0 + std::abs(row.rhs));
      if (bad) out.infeasible_const = true;
      continue;
    }
    if (row.sense == RowSense::EQ) {
      Eigen::VectorXd ar = Eigen::VectorXd::Zero(n);
      for (const auto& [j, a] : entries) ar[j] = a / scale;
      eq_rows.push_back(ar);
      eq_rhs.push_back(rhs / scale);
      tr.eq_src.push_back(static_cast<int>(i));
      tr.eq_scale.push_back(scale);
      continue;
    }
    for (auto& [j, a] : entries) a /= scale;
    in.add_row(entries, rhs / scale);
    tr.row_src.push_back({row.sense == RowSense::GE ? Translation::RowSrc::UserRowGEFlip
                                                    : Translation::RowSrc::UserRowLE,
                          static_cast<int>(i), scale});
  }

  // bounds -> nonneg rows
  for (int j = 0; j < nu; ++j) {
    const int jj = tr.var_map[static_cast<size_t>(j)];
    if (jj < 0) continue;
    const double cs = tr.col_scale[jj];
    if (cp.ub.size() && std::isfinite(cp.ub[j])) {
      in.add_row({{jj, cs}}, cp.ub[j]);
      tr.row_src.push_back({Translation::RowSrc::BoundHi, j, 1.0});
    }
    if (cp.lb.size() && std::isfinite(cp.lb[j])) {
      in.add_row({{jj, -cs}}, -cp.lb[j]);
      tr.row_src.push_back({Translation::RowSrc::BoundLo, j, 1.0});
    }
  }
  in.p = static_cast<int>(in.Grows.size());

  // SOC blocks: s = A x + b in K  =>  G = -A, h = b
  for (size_t k = 0; k < cp.socs.size(); ++k) {
    const auto& soc = cp.socs[k];
    const int dim = soc.dim();
    std::vector<std::vector<std::pair<int, double>>> rows(static_cast<size_t>(dim));
    Eigen::VectorXd rhs(dim);
    double scale = 1e-300;
    bool any_var = false;
    for (int r = 0; r < dim; ++r) {
      auto [entries, rr] = reduce_row(-soc.A.row(r).transpose(), soc.b[r]);
      rows[static_cast<size_t>(r)] = std::move(entries);
      rhs[r] = rr;
      for (const auto& [j, a] : rows[static_cast<size_t>(r)]) scale = std::max(scale, std::abs(a));
      any_var = any_var || !rows[static_cast<size_t>(r)].empty();
    }
    if (!any_var) {
      // constant cone: verify ||u|| <= t
      if (rhs.tail(dim - 1).norm() > rhs[0] + 1e-9 * (1.0 + std::abs(rhs[0])))
        out.infeasible_const = true;
      tr.soc_offset.push_back(-1);
      tr.soc_scale.push_back(1.0);
      continue;
    }
    scale = std::max(scale, rhs.cwiseAbs().maxCoeff() * 1e-6);
    tr.soc_offset.push_back(static_cast<int>(in.Grows.size()));
    tr.soc_scale.push_back(scale);
    SocBlockRef blk;
    blk.offset = static_cast<int>(in.Grows.size());
    blk.dim = dim;
    for (int r = 0; r < dim; ++r) {
      auto row = rows[static_cast<size_t>(r)];
      for (auto& [j, a] : row) a /= scale;
      in.add_row(row, rhs[r] / scale);
    }
    in.socs.push_back(blk);
  }
  in.finalize();

  in.A.resize(static_cast<Eigen::Index>(eq_rows.size()), n);
  in.b.resize(static_cast<Eigen::Index>(eq_rows.size()));
  for (size_t i = 0; i < eq_rows.size(); ++i) {
    in.A.row(static_cast<Eigen::Index>(i)) = eq_rows[i];
    in.b[static_cast<Eigen::Index>(i)] = eq_rhs[i];
  }
  return out;
}

}  // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::IterLimit: return "iter_limit";
  }
  return "?";
}

void ConicProgram::validate() const {
  if (num_vars <= 0) throw std::invalid_argument("conic program: no variables");
  if (objective.size() != num_vars) throw std::invalid_argument("conic program: objective size");
  if (lb.size() && lb.size() != num_vars) throw std::invalid_argument("conic program: lb size");
  if (ub.size() && ub.size() != num_vars) throw std::invalid_argument("conic program: ub size");
  for (int j = 0; j < num_vars; ++j)
    if (lb.size() && ub.size() && lb[j] > ub[j] + 1e-15)
      throw std::invalid_argument("conic program: lb > ub");
  for (const auto& row : rows)
    if (row.a.size() != num_vars) throw std::invalid_argument("conic program: row size");
  for (const auto& soc : socs) {
    if (soc.dim() < 2) throw std::invalid_argument("conic program: SOC dimension < 2");
    if (soc.A.cols() != num_vars || soc.b.size() != soc.A.rows())
      throw std::invalid_argument("conic program: SOC shape");
  }
}

ConicSolution solve(const ConicProgram& cp, const SolveOptions& opts) {
  cp.validate();
  BuildOutcome bo = to_internal(cp);
  ConicSolution sol;
  const int nu = cp.num_vars;
  sol.x = Eigen::VectorXd::Zero(nu);
  sol.row_duals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cp.rows.size()));
  sol.bound_duals_lo = Eigen::VectorXd::Zero(nu);
  sol.bound_duals_hi = Eigen::VectorXd::Zero(nu);
  sol.soc_duals.assign(cp.socs.size(), Eigen::VectorXd());
  for (size_t k = 0; k < cp.socs.size(); ++k)
    sol.soc_duals[k] = Eigen::VectorXd::Zero(cp.socs[k].dim());

  if (bo.infeasible_const) {
    sol.status = SolveStatus::Infeasible;
    return sol;
  }

  if (bo.tr.n_int == 0) {
    // everything fixed by bounds
    for (int j = 0; j < nu; ++j) sol.x[j] = bo.tr.fixed_value[j];
    sol.obj = cp.objective.dot(sol.x);
    sol.status = SolveStatus::Optimal;
    const KktResiduals kr = kkt_residuals(cp, sol);
    sol.primal_residual = kr.primal;
    sol.dual_residual = kr.dual;
    sol.gap = kr.gap;
    return sol;
  }

  auto map_back = [&](const HsdResult& hr, ConicSolution& out) {
    for (int j = 0; j < nu; ++j) {
      const int jj = bo.tr.var_map[static_cast<size_t>(j)];
      out.x[j] = jj < 0 ? bo.tr.fixed_value[j] : hr.x[jj] * bo.tr.col_scale[jj];
    }
    out.obj = cp.objective.dot(out.x);
    // internal stationarity c_int + A'y + G'z = 0 with c_int = -D c / obj_scale,
    // so the user-space multiplier is z * obj_scale / row_scale.
    const double os = bo.tr.obj_scale;
    for (size_t i = 0; i < bo.tr.row_src.size(); ++i) {
      const auto& srcrow = bo.tr.row_src[i];
      const double zval = hr.z[static_cast<Eigen::Index>(i)] * os / srcrow.scale;
      switch (srcrow.kind) {
        case Translation::RowSrc::UserRowLE:
        case Translation::RowSrc::UserRowGEFlip:
          out.row_duals[srcrow.index] = zval;
          break;
        case Translation::RowSrc::BoundHi:
          out.bound_duals_hi[srcrow.index] = zval;
          break;
        case Translation::RowSrc::BoundLo:
          out.bound_duals_lo[srcrow.index] = zval;
          break;
        case Translation::RowSrc::SocRow:
          break;
      }
    }
    for (size_t i = 0; i < bo.tr.eq_src.size(); ++i)
      out.row_duals[bo.tr.eq_src[i]] = hr.y[static_cast<Eigen::Index>(i)] * os / bo.tr.eq_scale[i];
    for (size_t k = 0; k < cp.socs.size(); ++k) {
      const int off = bo.tr.soc_offset[k];
      if (off < 0) continue;
      const int dim = cp.socs[k].dim();
      out.soc_duals[k] = hr.z.segment(off, dim) * os / bo.tr.soc_scale[k];
    }
  };

  auto accept = [&](const HsdResult& hr) {
    ConicSolution cand = sol;
    map_back(hr, cand);
    const KktResiduals kr = kkt_residuals(cp, cand);
    return kr.primal <= opts.tol && kr.dual <= opts.tol && kr.gap <= opts.tol;
  };

  HsdResult hr = solve_hsd(bo.in, opts, accept);
  sol.status = hr.status;
  sol.iterations = hr.iterations;
  map_back(hr, sol);

  const KktResiduals kr = kkt_residuals(cp, sol);
  sol.primal_residual = kr.primal;
  sol.dual_residual = kr.dual;
  sol.gap = kr.gap;
  if (sol.status == SolveStatus::Optimal &&
      !(kr.primal <= opts.tol && kr.dual <= opts.tol && kr.gap <= opts.tol))
    sol.status = SolveStatus::IterLimit;
  return sol;
}

KktResiduals kkt_residuals(const ConicProgram& cp, const ConicSolution& sol) {
  KktResiduals kr;
  const int nu = cp.num_vars;
  const Eigen::VectorXd& x = sol.x;

  double pviol = 0.0;
  for (const auto& row : cp.rows) {
    const double v = row.a.dot(x) - row.rhs;
    const double scale = 1.0 + std::abs(row.rhs);
    if (row.sense == RowSense::LE) pviol = std::max(pviol, v / scale);
    if (row.sense == RowSense::GE) pviol = std::max(pviol, -v / scale);
    if (row.sense == RowSense::EQ) pviol = std::max(pviol, std::abs(v) / scale);
  }
  for (const auto& soc : cp.socs) {
    Eigen::VectorXd su = soc.A * x + soc.b;
    pviol = std::max(pviol, (su.tail(su.size() - 1).norm() - su[0]) / (1.0 + std::abs(su[0])));
  }
  for (int j = 0; j < nu; ++j) {
    if (cp.lb.size() && std::isfinite(cp.lb[j]))
      pviol = std::max(pviol, (cp.lb[j] - x[j]) / (1.0 + std::abs(cp.lb[j])));
    if (cp.ub.size() && std::isfinite(cp.ub[j]))
      pviol = std::max(pviol, (x[j] - cp.ub[j]) / (1.0 + std::abs(cp.ub[j])));
  }
  kr.primal = std::max(0.0, pviol);

  // stationarity: c = sum_LE mu a - sum_GE mu a + sum_EQ mu a - sum A_k' y_k
  //               - nu_lo + nu_hi   (maximize form)
  Eigen::VectorXd grad = cp.objective;
  double dual_obj = 0.0;
  for (size_t i = 0; i < cp.rows.size(); ++i) {
    const auto& row = cp.rows[i];
    const double mu = sol.row_duals.size() ? sol.row_duals[static_cast<Eigen::Index>(i)] : 0.0;
    const double sgn = row.sense == RowSense::GE ? -1.0 : 1.0;
    grad -= sgn * mu * row.a;
    dual_obj += sgn * mu * row.rhs;
  }
  for (size_t k = 0; k < cp.socs.size(); ++k) {
    if (!sol.soc_duals[k].size()) continue;
    grad += cp.socs[k].A.transpose() * sol.soc_duals[k];
    dual_obj += sol.soc_duals[k].dot(cp.socs[k].b);
  }
  for (int j = 0; j < nu; ++j) {
    const double nlo = sol.bound_duals_lo.size() ? sol.bound_duals_lo[j] : 0.0;
    const double nhi = sol.bound_duals_hi.size() ? sol.bound_duals_hi[j] : 0.0;
    grad += nlo * Eigen::VectorXd::Unit(nu, j);
    grad -= nhi * Eigen::VectorXd::Unit(nu, j);
    if (nlo != 0.0) dual_obj -= nlo * cp.lb[j];
    if (nhi != 0.0) dual_obj += nhi * cp.ub[j];
  }
  kr.dual = grad.norm() / (1.0 + cp.objective.norm());
  kr.gap = std::abs(sol.obj - dual_obj) / (1.0 + std::abs(sol.obj));
  return kr;
}

void write_conic_text(const ConicProgram& cp, std::ostream& os) {
  os.precision(17);
  os << "conicprogram 1\n";
  os << "vars " << cp.num_vars << "\n";
  os << "objective";
  for (int j = 0; j < cp.num_vars; ++j) os << " " << cp.objective[j];
  os << "\nbounds\n";
  for (int j = 0; j < cp.num_vars; ++j) {
    const double lo = cp.lb.size() ? cp.lb[j] : -kInf;
    const double hi = cp.ub.size() ? cp.ub[j] : kInf;
    os << lo << " " << hi << "\n";
  }
  os << "rows " << cp.rows.size() << "\n";
  for (const auto& row : cp.rows) {
    os << (row.sense == RowSense::LE ? "<=" : row.sense == RowSense::GE ? ">=" : "==") << " "
       << row.rhs;
    int nnz = 0;
    for (int j = 0; j < cp.num_vars; ++j)
      if (row.a[j] != 0.0) ++nnz;
    os << " " << nnz;
    for (int j = 0; j < cp.num_vars; ++j)
      if (row.a[j] != 0.0) os << " " << j << " " << row.a[j];
    os << "\n";
  }
  os << "socs " << cp.socs.size() << "\n";
  for (const auto& soc : cp.socs) {
    os << soc.dim() << "\n";
    for (int r = 0; r < soc.dim(); ++r) {
      os << soc.b[r];
      int nnz = 0;
      for (int j = 0; j < cp.num_vars; ++j)
        if (soc.A(r, j) != 0.0) ++nnz;
      os << " " << nnz;
      for (int j = 0; j < cp.num_vars; ++j)
        if (soc.A(r, j) != 0.0) os << " " << j << " " << soc.A(r, j);
      os << "\n";
    }
  }
}

ConicProgram read_conic_text(std::istream& is) {
  ConicProgram cp;
  std::string tok;
  int version = 0;
  is >> tok >> version;
  if (tok != "conicprogram") throw std::invalid_argument("conic text: bad header");
  is >> tok >> cp.num_vars;
  cp.objective.resize(cp.num_vars);
  is >> tok;
  for (int j = 0; j < cp.num_vars; ++j) is >> cp.objective[j];
  is >> tok;  // bounds
  cp.lb.resize(cp.num_vars);
  cp.ub.resize(cp.num_vars);
  for (int j = 0; j < cp.num_vars; ++j) is >> cp.lb[j] >> cp.ub[j];
  size_t nrows = 0;
  is >> tok >> nrows;
  for (size_t i = 0; i < nrows; ++i) {
    LinearRow row;
    row.a = Eigen::VectorXd::Zero(cp.num_vars);
    std::string sense;
    int nnz = 0;
    is >> sense >> row.rhs >> nnz;
    row.sense = sense == "<=" ? RowSense::LE : sense == ">=" ? RowSense::GE : RowSense::EQ;
    for (int k = 0; k < nnz; ++k) {
      int j;
      double a;
      is >> j >> a;
      row.a[j] = a;
    }
    cp.rows.push_back(std::move(row));
  }
  size_t nsocs = 0;
  is >> tok >> nsocs;
  for (size_t i = 0; i < nsocs; ++i) {
    int dim = 0;
    is >> dim;
    SocConstraint soc;
    soc.A = Eigen::MatrixXd::Zero(dim, cp.num_vars);
    soc.b = Eigen::VectorXd::Zero(dim);
    for (int r = 0; r < dim; ++r) {
      int nnz = 0;
      is >> soc.b[r] >> nnz;
      for (int k = 0; k < nnz; ++k) {
        int j;
        double a;
        is >> j >> a;
        soc.A(r, j) = a;
      }
    }
    cp.socs.push_back(std::move(soc));
  }
  return cp;
}

}  // namespace lasrelay::socp
