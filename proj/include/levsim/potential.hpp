// Optical potential of two superimposed beams and its one-dimensional
// double-well reduction.
//
// A fundamental Gaussian beam (attractive well centered on delta0) and a
// first-order Hermite-Gaussian beam (node on its axis at delta1, attractive
// side lobes) are superimposed along a common optical axis z.  For a
// particle polarizable above the surrounding medium both beams attract, and
// along x their superposition forms a double well whose central stationary
// point -- the "apex" -- is an unstable intensity minimum when the
// side-lobe beam is strong enough.
//
// Sign convention: alpha_scale and beta_scale are the (negative) potential
// depth scales of the two beams at their reference powers; depths scale
// linearly with the configured beam powers.
#pragma once

#include <array>

namespace levsim {

struct PotentialParams {
  // Beam powers [W]; alpha/beta scales are defined at the reference powers.
  double p00_W = 0.0;
  double p01_W = 0.0;
  double p00_ref_W = 0.0;
  double p01_ref_W = 0.0;

  // Potential depth scales at reference power [J]; both negative for an
  // attractive (high-field-seeking) particle.
  double alpha_scale_J = 0.0;
  double beta_scale_J = 0.0;

  // Focal waists [m] and Rayleigh lengths [m] per beam.
  double w00x_m = 0.0;
  double w00y_m = 0.0;
  double w01x_m = 0.0;
  double w01y_m = 0.0;
  double z00_m = 0.0;
  double z01_m = 0.0;

  // Transverse beam-axis offsets along x [m].
  double delta0_m = 0.0;
  double delta1_m = 0.0;
};

/// Potential depth of the fundamental beam at the configured power [J] (<= 0).
double alpha_J(const PotentialParams& p);
/// Potential depth scale of the side-lobe beam at the configured power [J] (<= 0).
double beta_J(const PotentialParams& p);

/// Physical beam intensities [W/m^2] at a point (x, y, z).
struct Intensity {
  double i00_W_m2 = 0.0;
  double i01_W_m2 = 0.0;
};
Intensity intensity_profile(const std::array<double, 3>& q_m,
                            const PotentialParams& p);

/// Total optical potential energy [J] at a point.  Tends to 0 far away.
double potential_energy(const std::array<double, 3>& q_m,
                        const PotentialParams& p);

/// Analytic -grad(U) [N].  Matches potential_energy to rounding error.
std::array<double, 3> optical_force(const std::array<double, 3>& q_m,
                                    const PotentialParams& p);

/// One-dimensional reduction U_x(x) = U(x, 0, 0) in closed form, plus its
/// first and second derivatives.  Identical to potential_energy on the
/// x-axis by construction.
double double_well_1d(double x_m, const PotentialParams& p);
double double_well_1d_d1(double x_m, const PotentialParams& p);
double double_well_1d_d2(double x_m, const PotentialParams& p);

/// Central unstable stationary point ("apex") of U_x.
struct ApexInfo {
  double delta_apex_m = 0.0;  // apex position
  double k_apex_N_m = 0.0;    // curvature U_x'' at the apex (< 0 when valid)
  double u_apex_J = 0.0;      // potential energy at the apex
  bool valid = false;         // false when no interior maximum exists
};
ApexInfo find_apex(const PotentialParams& p);

/// The two well minima flanking the apex.
struct WellInfo {
  double x_left_m = 0.0;
  double x_right_m = 0.0;
  double omega_left_rad_s = 0.0;   // sqrt(U''/m) at the left minimum
  double omega_right_rad_s = 0.0;  // sqrt(U''/m) at the right minimum
  double barrier_J = 0.0;          // U(apex) - U(deeper well)
  bool valid = false;
};
WellInfo well_characteristics(const PotentialParams& p, double mass_kg);

/// Max |U_quad - U_x| / barrier over [apex - half_range, apex + half_range],
/// where U_quad is the second-order expansion of U_x about the apex.
/// Throws std::domain_error when the potential has no apex or wells.
double quadratic_fit_error(const PotentialParams& p, double half_range_m,
                           int n_grid = 2001);

/// Double-well parameters calibrated so that, at reference powers and
/// aligned beams, sqrt(|k_apex|/m) = 2*pi*50 kHz, the well oscillation
/// frequency is 2*pi*65 kHz, the apex curvature magnitude drops by 8% at
/// delta1 = 30 nm, and the transverse/axial confinement of the fundamental
/// beam alone gives 2*pi*159 kHz (y) and 2*pi*46 kHz (z) for the default
/// particle mass.
PotentialParams calibrated_double_well();

}  // namespace levsim
