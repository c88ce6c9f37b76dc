#include "levsim/potential.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace levsim {

namespace {

// Per-beam geometry evaluated at axial position z.
struct BeamAtZ {
  double lorentz;    // zR^2 / (z^2 + zR^2), axial intensity falloff
  double wx2, wy2;   // squared waists at z
  double wx02, wy02; // squared focal waists
  double zr2;        // squared Rayleigh length
};

BeamAtZ beam_at(double z, double wx0, double wy0, double zr) {
  BeamAtZ b;
  b.wx02 = wx0 * wx0;
  b.wy02 = wy0 * wy0;
  b.zr2 = zr * zr;
  const double f = 1.0 + z * z / b.zr2;
  b.lorentz = 1.0 / f;
  b.wx2 = b.wx02 * f;
  b.wy2 = b.wy02 * f;
  return b;
}

double power_scale(double p_W, double ref_W) {
  return ref_W > 0.0 ? p_W / ref_W : 1.0;
}

}  // namespace

double alpha_J(const PotentialParams& p) {
  return p.alpha_scale_J * power_scale(p.p00_W, p.p00_ref_W);
}

double beta_J(const PotentialParams& p) {
  return p.beta_scale_J * power_scale(p.p01_W, p.p01_ref_W);
}

Intensity intensity_profile(const std::array<double, 3>& q_m,
                            const PotentialParams& p) {
  const double x = q_m[0], y = q_m[1], z = q_m[2];
  const BeamAtZ b0 = beam_at(z, p.w00x_m, p.w00y_m, p.z00_m);
  const BeamAtZ b1 = beam_at(z, p.w01x_m, p.w01y_m, p.z01_m);
  const double u0 = x - p.delta0_m;
  const double u1 = x - p.delta1_m;
  const double pi = 3.14159265358979323846;

  Intensity out;
  // Fundamental beam: peak intensity 2P / (pi wx wy) at the axis.
  out.i00_W_m2 = 2.0 * p.p00_W / (pi * std::sqrt(b0.wx2 * b0.wy2)) *
                 std::exp(-2.0 * u0 * u0 / b0.wx2 - 2.0 * y * y / b0.wy2);
  // First-order beam: node on the axis, lobe maxima carry the factor 8.
  out.i01_W_m2 = p.p01_W / (pi * std::sqrt(b1.wx2 * b1.wy2)) *
                 (8.0 * u1 * u1 / b1.wx2) *
                 std::exp(-2.0 * u1 * u1 / b1.wx2 - 2.0 * y * y / b1.wy2);
  return out;
}

double potential_energy(const std::array<double, 3>& q_m,
                        const PotentialParams& p) {
  const double x = q_m[0], y = q_m[1], z = q_m[2];
  const BeamAtZ b0 = beam_at(z, p.w00x_m, p.w00y_m, p.z00_m);
  const BeamAtZ b1 = beam_at(z, p.w01x_m, p.w01y_m, p.z01_m);
  const double u0 = x - p.delta0_m;
  const double u1 = x - p.delta1_m;
  // The lobe-shape normalization factor 8 of the first-order beam is
  // absorbed into beta_scale_J.
  const double s00 = b0.lorentz *
      std::exp(-2.0 * u0 * u0 / b0.wx2 - 2.0 * y * y / b0.wy2);
  const double s01 = b1.lorentz * (u1 * u1 / b1.wx2) *
      std::exp(-2.0 * u1 * u1 / b1.wx2 - 2.0 * y * y / b1.wy2);
  return alpha_J(p) * s00 + beta_J(p) * s01;
}

std::array<double, 3> optical_force(const std::array<double, 3>& q_m,
                                    const PotentialParams& p) {
  const double x = q_m[0], y = q_m[1], z = q_m[2];
  const BeamAtZ b0 = beam_at(z, p.w00x_m, p.w00y_m, p.z00_m);
  const BeamAtZ b1 = beam_at(z, p.w01x_m, p.w01y_m, p.z01_m);
  const double u0 = x - p.delta0_m;
  const double u1 = x - p.delta1_m;
  const double a = alpha_J(p);
  const double b = beta_J(p);

  const double e0 = std::exp(-2.0 * u0 * u0 / b0.wx2 - 2.0 * y * y / b0.wy2);
  const double e1 = std::exp(-2.0 * u1 * u1 / b1.wx2 - 2.0 * y * y / b1.wy2);
  const double s00 = b0.lorentz * e0;
  const double shape1 = u1 * u1 / b1.wx2;
  const double s01 = b1.lorentz * shape1 * e1;

  // dU/dx
  const double dx00 = s00 * (-4.0 * u0 / b0.wx2);
  const double dx01 =
      b1.lorentz * e1 * (2.0 * u1 / b1.wx2) * (1.0 - 2.0 * u1 * u1 / b1.wx2);
  // dU/dy
  const double dy00 = s00 * (-4.0 * y / b0.wy2);
  const double dy01 = s01 * (-4.0 * y / b1.wy2);
  // dU/dz: axial falloff, waist growth of the envelope, and (for the
  // first-order beam) waist growth of the lobe-shape prefactor.
  const double dz00 = s00 * (-2.0 * z / (z * z + b0.zr2) +
                             4.0 * z / b0.zr2 *
                                 (y * y * b0.wy02 / (b0.wy2 * b0.wy2) +
                                  u0 * u0 * b0.wx02 / (b0.wx2 * b0.wx2)));
  const double dz01 = s01 * (-2.0 * z / (z * z + b1.zr2) -
                             2.0 * z * b1.wx02 / (b1.zr2 * b1.wx2) +
                             4.0 * z / b1.zr2 *
                                 (y * y * b1.wy02 / (b1.wy2 * b1.wy2) +
                                  u1 * u1 * b1.wx02 / (b1.wx2 * b1.wx2)));

  return {-(a * dx00 + b * dx01),
          -(a * dy00 + b * dy01),
          -(a * dz00 + b * dz01)};
}

double double_well_1d(double x_m, const PotentialParams& p) {
  const double u0 = x_m - p.delta0_m;
  const double u1 = x_m - p.delta1_m;
  const double w02 = p.w00x_m * p.w00x_m;
  const double w12 = p.w01x_m * p.w01x_m;
  return alpha_J(p) * std::exp(-2.0 * u0 * u0 / w02) +
         beta_J(p) * (u1 * u1 / w12) * std::exp(-2.0 * u1 * u1 / w12);
}

double double_well_1d_d1(double x_m, const PotentialParams& p) {
  const double u0 = x_m - p.delta0_m;
  const double u1 = x_m - p.delta1_m;
  const double w02 = p.w00x_m * p.w00x_m;
  const double w12 = p.w01x_m * p.w01x_m;
  const double e0 = std::exp(-2.0 * u0 * u0 / w02);
  const double e1 = std::exp(-2.0 * u1 * u1 / w12);
  return alpha_J(p) * e0 * (-4.0 * u0 / w02) +
         beta_J(p) * e1 * (2.0 * u1 / w12) * (1.0 - 2.0 * u1 * u1 / w12);
}

double double_well_1d_d2(double x_m, const PotentialParams& p) {
  const double u0 = x_m - p.delta0_m;
  const double u1 = x_m - p.delta1_m;
  const double w02 = p.w00x_m * p.w00x_m;
  const double w12 = p.w01x_m * p.w01x_m;
  const double e0 = std::exp(-2.0 * u0 * u0 / w02);
  const double e1 = std::exp(-2.0 * u1 * u1 / w12);
  const double s1 = u1 * u1 / w12;
  return alpha_J(p) * e0 * (4.0 / w02) * (4.0 * u0 * u0 / w02 - 1.0) +
         beta_J(p) * e1 * (2.0 / w12) * (1.0 - 10.0 * s1 + 8.0 * s1 * s1);
}

namespace {

// Refine a stationary point of U_x bracketed by [lo, hi] where the first
// derivative changes sign, then polish with Newton steps.
double refine_stationary(const PotentialParams& p, double lo, double hi) {
  double flo = double_well_1d_d1(lo, p);
  for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = double_well_1d_d1(mid, p);
    if ((flo > 0.0) == (fm > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 3; ++i) {
    const double d1 = double_well_1d_d1(x, p);
    const double d2 = double_well_1d_d2(x, p);
    if (std::abs(d2) < 1e-300) break;
    const double step = d1 / d2;
    if (!std::isfinite(step) || std::abs(step) > (hi - lo) + 1e-12) break;
    x -= step;
  }
  return x;
}

struct LandscapeScan {
  std::vector<double> minima;  // refined minima positions, ascending
  std::vector<double> maxima;  // refined interior maxima positions, ascending
};

LandscapeScan scan_landscape(const PotentialParams& p) {
  LandscapeScan out;
  const double wmax = std::max(p.w00x_m, p.w01x_m);
  if (!(wmax > 0.0)) return out;
  const double lo = std::min(p.delta0_m, p.delta1_m) - 1.6 * wmax;
  const double hi = std::max(p.delta0_m, p.delta1_m) + 1.6 * wmax;
  const int n = 4001;
  const double dx = (hi - lo) / (n - 1);

  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) u[i] = double_well_1d(lo + i * dx, p);

  for (int i = 1; i + 1 < n; ++i) {
    const double xl = lo + (i - 1) * dx;
    const double xr = lo + (i + 1) * dx;
    if (u[i] < u[i - 1] && u[i] < u[i + 1]) {
      out.minima.push_back(refine_stationary(p, xl, xr));
    } else if (u[i] > u[i - 1] && u[i] > u[i + 1]) {
      out.maxima.push_back(refine_stationary(p, xl, xr));
    }
  }
  return out;
}

}  // namespace

ApexInfo find_apex(const PotentialParams& p) {
  ApexInfo info;
  const LandscapeScan scan = scan_landscape(p);
  if (scan.minima.size() < 2) return info;

  // The apex is the interior maximum between the two deepest minima.
  std::vector<double> mins = scan.minima;
  std::sort(mins.begin(), mins.end(), [&](double l, double r) {
    return double_well_1d(l, p) < double_well_1d(r, p);
  });
  const double m_lo = std::min(mins[0], mins[1]);
  const double m_hi = std::max(mins[0], mins[1]);
  for (double x : scan.maxima) {
    if (x <= m_lo || x >= m_hi) continue;
    const double k = double_well_1d_d2(x, p);
    if (k >= 0.0) continue;
    if (!info.valid || double_well_1d(x, p) > info.u_apex_J) {
      info.delta_apex_m = x;
      info.k_apex_N_m = k;
      info.u_apex_J = double_well_1d(x, p);
      info.valid = true;
    }
  }
  return info;
}

WellInfo well_characteristics(const PotentialParams& p, double mass_kg) {
  WellInfo info;
  if (!(mass_kg > 0.0)) throw std::invalid_argument("mass must be positive");
  const ApexInfo apex = find_apex(p);
  if (!apex.valid) return info;

  const LandscapeScan scan = scan_landscape(p);
  // Nearest minima on either side of the apex.
  double best_l = 0.0, best_r = 0.0;
  bool has_l = false, has_r = false;
  for (double x : scan.minima) {
    if (x < apex.delta_apex_m && (!has_l || x > best_l)) {
      best_l = x;
      has_l = true;
    }
    if (x > apex.delta_apex_m && (!has_r || x < best_r)) {
      best_r = x;
      has_r = true;
    }
  }
  if (!has_l || !has_r) return info;

  const double kl = double_well_1d_d2(best_l, p);
  const double kr = double_well_1d_d2(best_r, p);
  if (kl <= 0.0 || kr <= 0.0) return info;
  info.x_left_m = best_l;
  info.x_right_m = best_r;
  info.omega_left_rad_s = std::sqrt(kl / mass_kg);
  info.omega_right_rad_s = std::sqrt(kr / mass_kg);
  // Barrier height measured from the deeper of the two wells.
  info.barrier_J = apex.u_apex_J -
      std::min(double_well_1d(best_l, p), double_well_1d(best_r, p));
  info.valid = true;
  return info;
}

double quadratic_fit_error(const PotentialParams& p, double half_range_m,
                           int n_grid) {
  if (!(half_range_m > 0.0)) {
    throw std::invalid_argument("half_range_m must be positive");
  }
  if (n_grid < 3) throw std::invalid_argument("n_grid must be >= 3");
  const ApexInfo apex = find_apex(p);
  if (!apex.valid) {
    throw std::domain_error("potential has no apex between two wells");
  }
  const WellInfo wells = well_characteristics(p, 1.0);
  if (!wells.valid || !(wells.barrier_J > 0.0)) {
    throw std::domain_error("potential has no usable barrier");
  }

  double max_err = 0.0;
  for (int i = 0; i < n_grid; ++i) {
    const double x = apex.delta_apex_m - half_range_m +
        2.0 * half_range_m * i / (n_grid - 1);
    const double dq = x - apex.delta_apex_m;
    const double u_quad = apex.u_apex_J + 0.5 * apex.k_apex_N_m * dq * dq;
    max_err = std::max(max_err, std::abs(u_quad - double_well_1d(x, p)));
  }
  return max_err / wells.barrier_J;
}

PotentialParams calibrated_double_well() {
  // Constants solved from the calibration anchors (see header): the depth
  // ratio follows from the well/apex frequency ratio, the waist from the
  // 8%-per-30-nm curvature sensitivity, the depth scale from the apex
  // curvature, and the fundamental beam's y-waist and Rayleigh length from
  // the single-beam transverse and axial frequencies.
  PotentialParams p;
  p.p00_W = p.p00_ref_W = 0.080;
  p.p01_W = p.p01_ref_W = 0.135;
  p.alpha_scale_J = -1.0541793949541207e-17;
  p.beta_scale_J = -2.5353608447665513e-17;
  p.w00x_m = 2.8480034690363202e-06;
  p.w01x_m = 2.8480034690363202e-06;
  p.w00y_m = 1.9900806222542806e-06;
  p.w01y_m = 1.9900806222542806e-06;
  p.z00_m = 4.864015673772335e-06;
  p.z01_m = 4.864015673772335e-06;
  p.delta0_m = 0.0;
  p.delta1_m = 0.0;
  return p;
}

}  // namespace levsim
