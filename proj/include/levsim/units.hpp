// Physical constants and unit helpers used across the library.
//
// Convention: all internal quantities are SI (m, s, kg, N, V, W, rad/s).
// Oscillator frequencies quoted in Hz in configuration files denote
// cycle frequencies f and are converted to angular frequencies
// omega = 2*pi*f at the configuration boundary.
#pragma once

namespace levsim {

inline constexpr double k_boltzmann_J_K = 1.380649e-23;  // exact SI value
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 6.28318530717958647692;

/// Cycle frequency [Hz] -> angular frequency [rad/s].
inline constexpr double angular(double f_hz) { return two_pi * f_hz; }

/// Angular frequency [rad/s] -> cycle frequency [Hz].
inline constexpr double cycles(double omega_rad_s) { return omega_rad_s / two_pi; }

}  // namespace levsim
