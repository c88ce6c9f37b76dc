// Double-well potential: geometry, derivatives, apex/well finding, and the
// frozen calibration constants.  Reference numbers below were produced by an
// independent numerical solve of the calibration anchors (dimensionless well
// shape + bisection apex finder, implemented separately from the library).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>

#include "levsim/potential.hpp"
#include "levsim/units.hpp"

using levsim::PotentialParams;

namespace {

constexpr double kOracleMass = 1.0667906173794858e-17;  // 210 nm silica [kg]

PotentialParams calib() { return levsim::calibrated_double_well(); }

double num_d1(double x, const PotentialParams& p, double h) {
  return (levsim::double_well_1d(x + h, p) - levsim::double_well_1d(x - h, p)) /
         (2.0 * h);
}

double num_d2(double x, const PotentialParams& p, double h) {
  return (levsim::double_well_1d(x + h, p) - 2.0 * levsim::double_well_1d(x, p) +
          levsim::double_well_1d(x - h, p)) /
         (h * h);
}

}  // namespace

TEST_CASE("1-d reduction equals the full potential on the x-axis") {
  PotentialParams p = calib();
  p.delta0_m = 3e-9;
  p.delta1_m = -20e-9;
  for (double x : {-1.5e-6, -0.3e-6, 0.0, 42e-9, 0.8e-6, 2.1e-6}) {
    const double u3 = levsim::potential_energy({x, 0.0, 0.0}, p);
    const double u1 = levsim::double_well_1d(x, p);
    CHECK(u1 == doctest::Approx(u3).epsilon(1e-14));
  }
}

TEST_CASE("closed-form derivatives match finite differences") {
  PotentialParams p = calib();
  p.delta1_m = 25e-9;
  const double h = 1e-10;
  for (double x : {-0.9e-6, -0.2e-6, 0.1e-6, 0.5e-6, 1.2e-6}) {
    CHECK(levsim::double_well_1d_d1(x, p) ==
          doctest::Approx(num_d1(x, p, h)).epsilon(1e-6));
    CHECK(levsim::double_well_1d_d2(x, p) ==
          doctest::Approx(num_d2(x, p, h)).epsilon(1e-4));
  }
}

TEST_CASE("analytic force equals the negative potential gradient in 3-d") {
  PotentialParams p = calib();
  p.delta0_m = -5e-9;
  p.delta1_m = 40e-9;
  const double h = 1e-10;
  const std::array<std::array<double, 3>, 4> points = {{
      {0.3e-6, 0.2e-6, 1.0e-6},
      {-0.8e-6, -0.5e-6, -2.0e-6},
      {0.05e-6, 0.9e-6, 4.0e-6},
      {1.1e-6, -0.1e-6, 0.3e-6},
  }};
  for (const auto& q : points) {
    const auto f = levsim::optical_force(q, p);
    for (int axis = 0; axis < 3; ++axis) {
      auto qp = q, qm = q;
      qp[axis] += h;
      qm[axis] -= h;
      const double grad = (levsim::potential_energy(qp, p) -
                           levsim::potential_energy(qm, p)) /
                          (2.0 * h);
      CHECK(f[axis] == doctest::Approx(-grad).epsilon(2e-5));
    }
  }
}

TEST_CASE("beam intensities integrate to the beam powers") {
  const PotentialParams p = calib();
  // 2-d trapezoid integral of each intensity over a transverse plane.
  for (double z : {0.0, p.z00_m}) {
    const double lx = 6.0 * p.w00x_m, ly = 6.0 * p.w00y_m;
    const int n = 801;
    double p00 = 0.0, p01 = 0.0;
    const double dx = 2.0 * lx / (n - 1), dy = 2.0 * ly / (n - 1);
    for (int i = 0; i < n; ++i) {
      const double x = -lx + i * dx;
      const double wx = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      for (int j = 0; j < n; ++j) {
        const double y = -ly + j * dy;
        const double wy = (j == 0 || j == n - 1) ? 0.5 : 1.0;
        const auto inten = levsim::intensity_profile({x, y, z}, p);
        p00 += wx * wy * inten.i00_W_m2 * dx * dy;
        p01 += wx * wy * inten.i01_W_m2 * dx * dy;
      }
    }
    CHECK(p00 == doctest::Approx(p.p00_W).epsilon(1e-6));
    CHECK(p01 == doctest::Approx(p.p01_W).epsilon(1e-6));
  }
}

TEST_CASE("axial falloff is Lorentzian with the configured focal scale") {
  const PotentialParams p = calib();
  const double u0 = levsim::potential_energy({0.0, 0.0, 0.0}, p);
  const double uz = levsim::potential_energy({0.0, 0.0, p.z00_m}, p);
  CHECK(uz == doctest::Approx(0.5 * u0).epsilon(1e-12));
}

TEST_CASE("beam powers scale the two wells independently and linearly") {
  PotentialParams p = calib();
  const double x = 0.4e-6;
  const double u_base = levsim::double_well_1d(x, p);
  PotentialParams p2 = p;
  p2.p00_W *= 2.0;
  PotentialParams p3 = p;
  p3.p01_W = 0.0;
  const double term00 = levsim::double_well_1d(x, p2) - u_base;  // one alpha
  const double term01 = u_base - levsim::double_well_1d(x, p3);  // one beta
  CHECK(u_base == doctest::Approx(term00 + term01).epsilon(1e-12));
  CHECK(levsim::alpha_J(p2) == doctest::Approx(2.0 * levsim::alpha_J(p)));
}

TEST_CASE("calibrated potential hits the frequency anchors") {
  const PotentialParams p = calib();
  const auto apex = levsim::find_apex(p);
  REQUIRE(apex.valid);
  CHECK(std::abs(apex.delta_apex_m) < 1e-12);
  CHECK(apex.k_apex_N_m < 0.0);
  const double f_apex =
      levsim::cycles(std::sqrt(-apex.k_apex_N_m / kOracleMass));
  CHECK(f_apex == doctest::Approx(50e3).epsilon(1e-9));

  const auto wells = levsim::well_characteristics(p, kOracleMass);
  REQUIRE(wells.valid);
  // Oracle: wells at +-826.4576597631 nm, both at 65 kHz, barrier
  // 1.70105619597e-19 J (42.05 kT at 293 K).
  CHECK(wells.x_left_m == doctest::Approx(-8.264576597631183e-07).epsilon(1e-9));
  CHECK(wells.x_right_m == doctest::Approx(8.264576597631183e-07).epsilon(1e-9));
  CHECK(levsim::cycles(wells.omega_left_rad_s) ==
        doctest::Approx(65e3).epsilon(1e-9));
  CHECK(levsim::cycles(wells.omega_right_rad_s) ==
        doctest::Approx(65e3).epsilon(1e-9));
  CHECK(wells.barrier_J ==
        doctest::Approx(1.7010561959747303e-19).epsilon(1e-9));

  // Transverse (y) and axial (z) curvature of the fundamental beam alone.
  PotentialParams tem00 = p;
  tem00.p01_W = 0.0;
  const double h = 1e-10;
  const double ky = (levsim::potential_energy({0, h, 0}, tem00) -
                     2.0 * levsim::potential_energy({0, 0, 0}, tem00) +
                     levsim::potential_energy({0, -h, 0}, tem00)) /
                    (h * h);
  const double hz = 1e-9;
  const double kz = (levsim::potential_energy({0, 0, hz}, tem00) -
                     2.0 * levsim::potential_energy({0, 0, 0}, tem00) +
                     levsim::potential_energy({0, 0, -hz}, tem00)) /
                    (hz * hz);
  CHECK(levsim::cycles(std::sqrt(ky / kOracleMass)) ==
        doctest::Approx(159e3).epsilon(1e-5));
  CHECK(levsim::cycles(std::sqrt(kz / kOracleMass)) ==
        doctest::Approx(46e3).epsilon(1e-5));
}

TEST_CASE("apex position and curvature under side-lobe beam offset") {
  PotentialParams p = calib();
  const auto k0 = levsim::find_apex(p).k_apex_N_m;

  // Oracle values from the independent solve.
  p.delta1_m = 10e-9;
  auto apex = levsim::find_apex(p);
  REQUIRE(apex.valid);
  CHECK(apex.delta_apex_m ==
        doctest::Approx(5.9474263635478734e-08).epsilon(1e-6));
  CHECK(apex.k_apex_N_m / k0 ==
        doctest::Approx(0.9914247486074412).epsilon(1e-6));

  p.delta1_m = 30e-9;
  apex = levsim::find_apex(p);
  REQUIRE(apex.valid);
  CHECK(apex.delta_apex_m ==
        doctest::Approx(1.8097415101445447e-07).epsilon(1e-6));
  CHECK(apex.k_apex_N_m / k0 == doctest::Approx(0.92).epsilon(1e-6));

  // Small-offset slope of the apex position is 1/(1 - 2 r) where the depth
  // ratio r solves 2 e^{2r-1} = (65/50)^2.
  const double r = 0.5 * (1.0 + std::log(0.5 * 1.69));
  const double slope_expect = 1.0 / (1.0 - 2.0 * r);
  p.delta1_m = 1e-9;
  const double apex_pos = levsim::find_apex(p).delta_apex_m;
  p.delta1_m = -1e-9;
  const double apex_neg = levsim::find_apex(p).delta_apex_m;
  CHECK((apex_pos - apex_neg) / 2e-9 ==
        doctest::Approx(slope_expect).epsilon(1e-4));

  // Symmetry: offsetting the fundamental beam instead moves the apex the
  // complementary way; equal offsets translate the whole landscape.
  PotentialParams both = calib();
  both.delta0_m = 17e-9;
  both.delta1_m = 17e-9;
  const auto at = levsim::find_apex(both);
  CHECK(at.delta_apex_m == doctest::Approx(17e-9).epsilon(1e-6));
  CHECK(at.k_apex_N_m == doctest::Approx(k0).epsilon(1e-9));
}

TEST_CASE("apex annihilates at large offsets") {
  PotentialParams p = calib();
  p.delta1_m = 74e-9;
  CHECK(levsim::find_apex(p).valid);
  p.delta1_m = 80e-9;
  CHECK_FALSE(levsim::find_apex(p).valid);
  p.delta1_m = 300e-9;
  CHECK_FALSE(levsim::find_apex(p).valid);
}

TEST_CASE("single-beam landscape has no apex and the trap frequency of the "
          "side-lobe-free configuration matches the oracle") {
  PotentialParams p = calib();
  p.p01_W = 0.0;
  CHECK_FALSE(levsim::find_apex(p).valid);
  CHECK_FALSE(levsim::well_characteristics(p, kOracleMass).valid);
  // With only the fundamental beam the x-axis curvature is 4|alpha|/w0^2:
  // oracle frequency 111.1034 kHz.
  const double k = levsim::double_well_1d_d2(0.0, p);
  CHECK(levsim::cycles(std::sqrt(k / kOracleMass)) ==
        doctest::Approx(111103.4).epsilon(1e-6));
}

TEST_CASE("quadratic expansion about the apex stays within a fraction of "
          "the barrier") {
  const PotentialParams p = calib();
  // Oracle: 0.00220110 of the barrier at +-170 nm.
  CHECK(levsim::quadratic_fit_error(p, 170e-9) ==
        doctest::Approx(0.0022010985931927456).epsilon(1e-4));
  CHECK(levsim::quadratic_fit_error(p, 20e-9) < 1e-5);
}

TEST_CASE("degenerate inputs are rejected") {
  PotentialParams p = calib();
  CHECK_THROWS_AS(levsim::well_characteristics(p, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(levsim::quadratic_fit_error(p, 0.0), std::invalid_argument);
  p.p01_W = 0.0;
  CHECK_THROWS_AS(levsim::quadratic_fit_error(p, 100e-9), std::domain_error);
}
