#include "lasrelay/scenario.hpp"

#include <cmath>
#include <string>

namespace lasrelay {

const char* to_string(Weather w) {
  switch (w) {
    case Weather::ClearAir: return "clear_air";
    case Weather::Haze: return "haze";
    case Weather::Fog: return "fog";
  }
  return "?";
}

Weather weather_from_string(const std::string& s) {
  if (s == "clear_air" || s == "clear" || s == "ClearAir") return Weather::ClearAir;
  if (s == "haze" || s == "Haze") return Weather::Haze;
  if (s == "fog" || s == "Fog") return Weather::Fog;
  throw std::invalid_argument("unknown weather: " + s);
}

LaserParams LaserParams::preset(double wavelength_nm, Weather w) {
  LaserParams lp;
  lp.wavelength_nm = wavelength_nm;
  lp.weather = w;
  lp.epsilon = 3.92;
  lp.chi_nm = 550.0;
  switch (w) {
    case Weather::ClearAir:
      lp.kappa_visibility_km = 10.0;
      lp.varrho = 1.3;
      break;
    case Weather::Haze:
      lp.kappa_visibility_km = 3.0;
      lp.varrho = 0.16 * 3.0 + 0.34;
      break;
    case Weather::Fog:
      lp.kappa_visibility_km = 0.4;
      lp.varrho = 0.0;
      break;
  }
  if (wavelength_nm == 810.0) {
    lp.a1 = 0.445;
    lp.b1 = -0.75;
    lp.a2 = 0.5414;
    lp.b2 = -0.2313;
  } else if (wavelength_nm == 1550.0) {
    lp.a1 = 0.34;
    lp.b1 = -1.1;
    lp.a2 = 0.4979;
    lp.b2 = -0.2989;
  } else {
    throw std::invalid_argument("no laser preset for wavelength " + std::to_string(wavelength_nm) + " nm");
  }
  return lp;
}

void Scenario::validate() const {
  if (N < 2) throw std::invalid_argument("scenario: N must be >= 2");
  if (delta_t <= 0.0 || T_total <= 0.0) throw std::invalid_argument("scenario: nonpositive time");
  if (std::abs(N * delta_t - T_total) > 1e-9 * T_total)
    throw std::invalid_argument("scenario: N * delta_t != T_total");
  if (v_max * T_total < (q_final - q_init).norm() - 1e-9)
    throw std::invalid_argument("scenario: v_max too small, no feasible trajectory (Eq. 1)");
  if (gamma0 <= 0.0) throw std::invalid_argument("scenario: gamma0 must be positive");
  if (p_max_s <= 0.0 || p_max_r <= 0.0) throw std::invalid_argument("scenario: nonpositive comm power cap");
  if (P_min_s <= 0.0 || P_max_s < P_min_s) throw std::invalid_argument("scenario: bad PB power range");
  if (mass_M <= 0.0) throw std::invalid_argument("scenario: nonpositive mass");
  if (energy_budget_E <= 0.0 || energy_floor_theta < 0.0 || energy_floor_theta >= energy_budget_E)
    throw std::invalid_argument("scenario: require 0 <= theta < E");
  if (upsilon_s < 1.0 || upsilon_r < 1.0) throw std::invalid_argument("scenario: amplifier inefficiency < 1");
  if (P_on <= 0.0) throw std::invalid_argument("scenario: P_on must be positive");
  if (R_sum < 0.0) throw std::invalid_argument("scenario: negative R_sum");
  if (gamma_weight < 0.0) throw std::invalid_argument("scenario: negative gamma weight");
  if (altitude_H <= 0.0) throw std::invalid_argument("scenario: nonpositive altitude");
}

double rate_source_to_uav(double p_s, const Vec2& q, const Scenario& sc) {
  const double d2 = sc.altitude_H * sc.altitude_H + (q - sc.source_pos).squaredNorm();
  return std::log2(1.0 + p_s * sc.gamma0 / d2);
}

double rate_uav_to_dest(double p_r, const Vec2& q, const Scenario& sc) {
  const double d2 = sc.altitude_H * sc.altitude_H + (q - sc.dest_pos).squaredNorm();
  return std::log2(1.0 + p_r * sc.gamma0 / d2);
}

double attenuation_alpha(const LaserParams& lp) {
  const double per_km = (lp.epsilon / lp.kappa_visibility_km) *
                        std::pow(lp.wavelength_nm / lp.chi_nm, -lp.varrho);
  return per_km / 1000.0;
}

double laser_transmission_eff(const Vec2& q, const Scenario& sc) {
  const double d = std::sqrt(sc.altitude_H * sc.altitude_H + (q - sc.pb_pos).squaredNorm());
  return std::exp(-attenuation_alpha(sc.laser) * d);
}

double received_laser_power(double P_s, const Vec2& q, const Scenario& sc) {
  if (P_s < sc.P_min_s) return 0.0;
  const double eta = laser_transmission_eff(q, sc);
  const LaserParams& lp = sc.laser;
  return lp.a1 * lp.a2 * eta * P_s + lp.a2 * lp.b1 * eta + lp.b2;
}

double received_laser_power_clamped(double P_s, const Vec2& q, const Scenario& sc) {
  return std::max(0.0, received_laser_power(P_s, q, sc));
}

double flying_energy(const Vec2& v, const Scenario& sc) {
  return sc.omega() * v.squaredNorm();
}

double f_EE(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc) {
  const int n = traj.slots();
  double num = 0.0;
  for (int i = 1; i < n; ++i) num += rate_uav_to_dest(pw.p_r[i], traj.waypoints[static_cast<size_t>(i)], sc);
  double den = static_cast<double>(n) * sc.P_on;
  for (int i = 0; i + 1 < n; ++i) den += sc.upsilon_s * pw.p_s[i];
  for (int i = 1; i < n; ++i) den += sc.upsilon_r * pw.p_r[i];
  return num / den;
}

double f_PE(const Trajectory& traj, const PowerSchedule& pw, const Scenario& sc) {
  const int n = traj.slots();
  double supplied = pw.P_s.sum();
  if (supplied <= 0.0) throw std::domain_error("f_PE: total PB supply power is zero");
  double received = 0.0;
  for (int i = 0; i < n; ++i)
    received += received_laser_power_clamped(pw.P_s[i], traj.waypoints[static_cast<size_t>(i)], sc);
  return received / supplied;
}

}  // namespace lasrelay
