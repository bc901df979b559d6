#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lasrelay/scenario.hpp"

using namespace lasrelay;

namespace {
Scenario nominal() {
  Scenario sc;
  sc.validate();
  return sc;
}
}  // namespace

TEST_CASE("table presets round-trip every cell") {
  struct Row {
    Weather w;
    double eps, chi, kappa, varrho;
  };
  const Row rows[] = {
      {Weather::ClearAir, 3.92, 550.0, 10.0, 1.3},
      {Weather::Haze, 3.92, 550.0, 3.0, 0.16 * 3.0 + 0.34},
      {Weather::Fog, 3.92, 550.0, 0.4, 0.0},
  };
  struct Fit {
    double wl, a1, b1, a2, b2;
  };
  const Fit fits[] = {
      {810.0, 0.445, -0.75, 0.5414, -0.2313},
      {1550.0, 0.34, -1.1, 0.4979, -0.2989},
  };
  for (const auto& r : rows) {
    for (const auto& f : fits) {
      LaserParams lp = LaserParams::preset(f.wl, r.w);
      CHECK(lp.epsilon == r.eps);
      CHECK(lp.chi_nm == r.chi);
      CHECK(lp.kappa_visibility_km == r.kappa);
      CHECK(lp.varrho == r.varrho);
      CHECK(lp.a1 == f.a1);
      CHECK(lp.b1 == f.b1);
      CHECK(lp.a2 == f.a2);
      CHECK(lp.b2 == f.b2);
    }
  }
  CHECK_THROWS_AS(LaserParams::preset(999.0, Weather::Fog), std::invalid_argument);
}

TEST_CASE("rate_source_to_uav") {
  Scenario sc = nominal();
  CHECK(rate_source_to_uav(0.0, Vec2(123.0, -44.0), sc) == 0.0);

  // p = 0.1 W at the source ground point: SNR = 0.1 * 1e8 / 100^2 = 1000
  const double r = rate_source_to_uav(0.1, Vec2(0.0, 0.0), sc);
  CHECK(r == doctest::Approx(std::log2(1.0 + 1000.0)).epsilon(1e-12));
  CHECK(r == doctest::Approx(9.96722).epsilon(1e-5));

  // doubling the 3D distance at high SNR costs about 2 bps/Hz
  const double r1 = rate_source_to_uav(0.1, Vec2(0.0, 100.0 * std::sqrt(3.0)), sc);  // d = 200
  CHECK(r - r1 == doctest::Approx(std::log2(1001.0 / 251.0)).epsilon(1e-12));
  CHECK(r - r1 == doctest::Approx(2.0).epsilon(5e-3));
}

TEST_CASE("rate_uav_to_dest mirrors the source link") {
  Scenario sc = nominal();
  CHECK(rate_uav_to_dest(0.0, Vec2(1.0, 2.0), sc) == 0.0);
  // symmetric geometry: equidistant point, equal powers -> equal rates
  const Vec2 mid(500.0, 77.0);
  CHECK(rate_source_to_uav(0.05, mid, sc) == doctest::Approx(rate_uav_to_dest(0.05, mid, sc)).epsilon(1e-14));
  // ||q - q_D||^2 + H^2 = 1e4
  CHECK(rate_uav_to_dest(0.1, sc.dest_pos, sc) == doctest::Approx(9.96722).epsilon(1e-5));
}

TEST_CASE("attenuation coefficient") {
  LaserParams clear = LaserParams::preset(810.0, Weather::ClearAir);
  const double want = (3.92 / 10.0) * std::pow(810.0 / 550.0, -1.3) / 1000.0;
  CHECK(attenuation_alpha(clear) == doctest::Approx(want).epsilon(1e-14));
  CHECK(attenuation_alpha(clear) == doctest::Approx(2.37e-4).epsilon(2e-3));

  // Fog: varrho = 0, wavelength drops out
  LaserParams fog810 = LaserParams::preset(810.0, Weather::Fog);
  LaserParams fog1550 = LaserParams::preset(1550.0, Weather::Fog);
  CHECK(attenuation_alpha(fog810) == doctest::Approx(3.92 / 0.4 / 1000.0).epsilon(1e-14));
  CHECK(attenuation_alpha(fog810) == doctest::Approx(attenuation_alpha(fog1550)).epsilon(1e-14));

  // strictly decreasing in visibility
  LaserParams a = clear, b = clear;
  a.kappa_visibility_km = 5.0;
  b.kappa_visibility_km = 8.0;
  CHECK(attenuation_alpha(a) > attenuation_alpha(b));
}

TEST_CASE("received laser power") {
  Scenario sc = nominal();
  // below activation threshold
  CHECK(received_laser_power(5.0, sc.pb_pos, sc) == 0.0);

  // 100 W at slant distance 500 m
  Vec2 q = sc.pb_pos + Vec2(std::sqrt(500.0 * 500.0 - 100.0 * 100.0), 0.0);
  const double alpha = attenuation_alpha(sc.laser);
  const double eta = std::exp(-alpha * 500.0);
  const double want = 0.445 * 0.5414 * eta * 100.0 + 0.5414 * (-0.75) * eta + (-0.2313);
  CHECK(received_laser_power(100.0, q, sc) == doctest::Approx(want).epsilon(1e-12));
  CHECK(received_laser_power(100.0, q, sc) == doctest::Approx(20.8).epsilon(1e-3));

  // decreasing in distance at fixed supply power
  Vec2 nearer = sc.pb_pos + Vec2(100.0, 0.0);
  Vec2 farther = sc.pb_pos + Vec2(400.0, 0.0);
  CHECK(received_laser_power(50.0, nearer, sc) > received_laser_power(50.0, farther, sc));

  SUBCASE("piecewise jump at P_min equals the affine value there") {
    const double below = received_laser_power(sc.P_min_s - 1e-9, q, sc);
    const double at = received_laser_power(sc.P_min_s, q, sc);
    CHECK(below == 0.0);
    const double lp = sc.laser.a1 * sc.laser.a2 * eta * sc.P_min_s + sc.laser.a2 * sc.laser.b1 * eta +
                      sc.laser.b2;
    CHECK(at == doctest::Approx(lp).epsilon(1e-12));
  }

  SUBCASE("continuity in q and P on the active branch") {
    const double base = received_laser_power(60.0, q, sc);
    CHECK(received_laser_power(60.0 + 1e-7, q + Vec2(1e-7, -1e-7), sc) ==
          doctest::Approx(base).epsilon(1e-6));
  }

  SUBCASE("clamped form is never negative") {
    Vec2 far_away = sc.pb_pos + Vec2(2e5, 0.0);
    CHECK(received_laser_power(sc.P_min_s, far_away, sc) < 0.0);
    CHECK(received_laser_power_clamped(sc.P_min_s, far_away, sc) == 0.0);
  }
}

TEST_CASE("flying energy") {
  Scenario sc = nominal();
  CHECK(flying_energy(Vec2::Zero(), sc) == 0.0);
  // omega = 0.5 * 9.7 * 4 = 19.4; |v| = 15 -> 4365 J
  CHECK(flying_energy(Vec2(15.0, 0.0), sc) == doctest::Approx(4365.0).epsilon(1e-12));
  // straight flight 1000 m in 120 s
  const Vec2 v(1000.0 / 120.0, 0.0);
  CHECK(flying_energy(v, sc) == doctest::Approx(19.4 * (1000.0 / 120.0) * (1000.0 / 120.0)).epsilon(1e-12));
  CHECK(flying_energy(v, sc) == doctest::Approx(1347.0).epsilon(1e-3));
  // quadratic scaling
  const Vec2 w(3.0, -4.0);
  CHECK(flying_energy(2.0 * w, sc) == doctest::Approx(4.0 * flying_energy(w, sc)).epsilon(1e-14));
}

TEST_CASE("rate concave increasing in power (finite differences)") {
  Scenario sc = nominal();
  const Vec2 q(300.0, 200.0);
  const double h = 1e-4;
  for (double p : {0.01, 0.05, 0.09}) {
    const double f0 = rate_source_to_uav(p - h, q, sc);
    const double f1 = rate_source_to_uav(p, q, sc);
    const double f2 = rate_source_to_uav(p + h, q, sc);
    CHECK(f2 > f1);          // increasing
    CHECK(f2 - 2 * f1 + f0 < 0.0);  // concave
  }
}

TEST_CASE("f_EE and f_PE") {
  Scenario sc = nominal();
  const int n = sc.N;
  Trajectory traj(n);
  for (int i = 0; i < n; ++i)
    traj.waypoints[static_cast<size_t>(i)] =
        sc.q_init + (sc.q_final - sc.q_init) * (double(i) / double(n - 1));
  PowerSchedule pw(n);
  for (int i = 0; i < n; ++i) pw.P_s[i] = 100.0;

  SUBCASE("all relay powers zero gives zero efficiency") { CHECK(f_EE(traj, pw, sc) == 0.0); }

  SUBCASE("nominal near-max rates give order 5-10") {
    // rates near their maximum log2(1 + 1e3): relay hovers over the destination
    Trajectory over_dest(n);
    for (auto& w : over_dest.waypoints) w = sc.dest_pos;
    for (int i = 0; i + 1 < n; ++i) pw.p_s[i] = sc.p_max_s;
    for (int i = 1; i < n; ++i) pw.p_r[i] = sc.p_max_r;
    const double v = f_EE(over_dest, pw, sc);
    CHECK(v > 5.0);
    CHECK(v < 10.0);
  }

  SUBCASE("raising P_on strictly lowers f_EE") {
    for (int i = 1; i < n; ++i) pw.p_r[i] = 0.05;
    Scenario hi = sc;
    hi.P_on = 2.0 * sc.P_on;
    CHECK(f_EE(traj, pw, hi) < f_EE(traj, pw, sc));
  }

  SUBCASE("f_PE at 500 m from the PB") {
    Trajectory hover(n);
    const Vec2 q = sc.pb_pos + Vec2(std::sqrt(500.0 * 500.0 - 100.0 * 100.0), 0.0);
    for (auto& w : hover.waypoints) w = q;
    CHECK(f_PE(hover, pw, sc) == doctest::Approx(0.208).epsilon(2e-3));
  }

  SUBCASE("f_PE far from the PB clamps to zero") {
    Trajectory hover(n);
    for (auto& w : hover.waypoints) w = sc.pb_pos + Vec2(2e5, 0.0);
    CHECK(f_PE(hover, pw, sc) == 0.0);
  }

  SUBCASE("f_PE invariant to slot reindexing") {
    PowerSchedule pw2 = pw;
    std::reverse(traj.waypoints.begin(), traj.waypoints.end());
    CHECK(f_PE(traj, pw2, sc) == doctest::Approx(f_PE(traj, pw, sc)).epsilon(1e-14));
  }

  SUBCASE("f_PE rejects an all-off PB schedule") {
    PowerSchedule off(n);
    CHECK_THROWS_AS(f_PE(traj, off, sc), std::domain_error);
  }
}

TEST_CASE("scenario validation") {
  Scenario sc = nominal();
  CHECK_NOTHROW(sc.validate());
  Scenario bad = sc;
  bad.v_max = 1.0;  // cannot reach q_final in time
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = sc;
  bad.N = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = sc;
  bad.energy_floor_theta = bad.energy_budget_E;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = sc;
  bad.delta_t = 3.0;  // N * delta_t != T
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
