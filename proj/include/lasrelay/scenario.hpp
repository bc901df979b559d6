#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace lasrelay {

using Vec2 = Eigen::Vector2d;

enum class Weather { ClearAir, Haze, Fog };

const char* to_string(Weather w);
Weather weather_from_string(const std::string& s);

/// Laser power-transmission constants (attenuation model + transceiver fit).
struct LaserParams {
  double wavelength_nm = 810.0;
  double a1 = 0.445;
  double b1 = -0.75;
  double a2 = 0.5414;
  double b2 = -0.2313;
  double epsilon = 3.92;
  double chi_nm = 550.0;
  double kappa_visibility_km = 10.0;
  double varrho = 1.3;
  Weather weather = Weather::ClearAir;

  // Preset table rows; wavelength must be 810 or 1550 nm.
  static LaserParams preset(double wavelength_nm, Weather w);
};

/// Immutable problem configuration. All values SI (m, s, W, J); gamma0 linear.
struct Scenario {
  Vec2 source_pos{0.0, 0.0};
  Vec2 dest_pos{1000.0, 0.0};
  Vec2 pb_pos{500.0, 800.0};
  double altitude_H = 100.0;
  Vec2 q_init{0.0, 500.0};
  Vec2 q_final{1000.0, 500.0};
  double T_total = 120.0;
  double delta_t = 4.0;
  int N = 30;
  double v_max = 15.0;
  double gamma0 = 1e8;          // 80 dB reference SNR
  double p_max_s = 0.1;         // 20 dBm
  double p_max_r = 0.1;
  double P_min_s = 10.0;
  double P_max_s = 100.0;
  LaserParams laser = LaserParams::preset(810.0, Weather::ClearAir);
  double mass_M = 9.7;
  double energy_budget_E = 1e5;
  double energy_floor_theta = 1e3;
  double upsilon_s = 5.0;
  double upsilon_r = 5.0;
  double P_on = 0.37;
  double R_sum = 100.0;
  double gamma_weight = 1.0;

  double omega() const { return 0.5 * mass_M * delta_t; }

  /// Throws std::invalid_argument when the configuration admits no feasible
  /// trajectory or violates basic positivity/size requirements.
  void validate() const;
};

/// N waypoints in the horizontal plane at fixed altitude.
struct Trajectory {
  std::vector<Vec2> waypoints;

  Trajectory() = default;
  explicit Trajectory(int n) : waypoints(static_cast<size_t>(n), Vec2::Zero()) {}

  int slots() const { return static_cast<int>(waypoints.size()); }

  // Velocity over hop n -> n+1; defined for n in [0, N-2].
  Vec2 velocity(int n, double delta_t) const {
    return (waypoints[static_cast<size_t>(n) + 1] - waypoints[static_cast<size_t>(n)]) / delta_t;
  }
};

/// Per-slot source power, UAV relay power, PB laser power.
/// Conventions: p_s[N-1] = 0 (source silent in last slot), p_r[0] = 0.
struct PowerSchedule {
  Eigen::VectorXd p_s;
  Eigen::VectorXd p_r;
  Eigen::VectorXd P_s;

  PowerSchedule() = default;
  explicit PowerSchedule(int n)
      : p_s(Eigen::VectorXd::Zero(n)), p_r(Eigen::VectorXd::Zero(n)), P_s(Eigen::VectorXd::Zero(n)) {}

  int slots() const { return static_cast<int>(p_s.size()); }
};

// --- physics -----------------------------------------------------------

/// log2(1 + p*gamma0 / (H^2 + ||q - q_S||^2)), bps/Hz.
double rate_source_to_uav(double p_s, const Vec2& q, const Scenario& sc);

/// log2(1 + p*gamma0 / (H^2 + ||q - q_D||^2)), bps/Hz.
double rate_uav_to_dest(double p_r, const Vec2& q, const Scenario& sc);

/// Attenuation coefficient alpha = (eps/kappa) * (lambda/chi)^(-varrho), in 1/m.
double attenuation_alpha(const LaserParams& lp);

/// Laser transmission efficiency exp(-alpha * sqrt(H^2 + ||q - q_P||^2)).
double laser_transmission_eff(const Vec2& q, const Scenario& sc);

/// Received power at the UAV: 0 below P_min_s, otherwise the affine model
/// a1*a2*eta*P + a2*b1*eta + b2 (may be negative for tiny eta; callers clamp
/// when reporting physical energy).
double received_laser_power(double P_s, const Vec2& q, const Scenario& sc);

/// max(0, received_laser_power): physical energy bookkeeping form.
double received_laser_power_clamped(double P_s, const Vec2& q, const Scenario& sc);

/// omega * ||v||^2 with omega = 0.5 * M * delta_t.
double flying_energy(const Vec2& v, const Scenario& sc);

/// Information-transmission energy efficiency (weighted sum numerator over
/// amplifier + constant-on power). Rates use slots 2..N, source powers 1..N-1.
double f_EE(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc);

/// Laser power-transfer efficiency sum P_r / sum P_s (clamped received power).
/// Throws std::domain_error when sum P_s <= 0.
double f_PE(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc);

}  // namespace lasrelay
