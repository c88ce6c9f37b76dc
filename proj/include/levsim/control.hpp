// Controller synthesis for apex stabilization: small-signal model
// extraction, LQR state feedback on the apex-referenced error, Kalman
// estimation with an optional apex-position random-walk state, exact
// discretization, loop-delay bookkeeping, estimate projection, fixed-point
// scaling, and a text artifact format for deployment.
#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "levsim/dynamics.hpp"

namespace levsim {

enum class ControllerVariant { none, non_adaptive_1d, adaptive_1d, adaptive_2d };

const char* variant_name(ControllerVariant v);
ControllerVariant variant_from_name(std::string_view name);  // throws

struct ControlConfig {
  ControllerVariant variant = ControllerVariant::adaptive_2d;
  double sample_rate_hz = 31.25e6;
  // LQR: state weight diag(Omega_x/2, Omega_x/2 [, q_z Omega_z/2,
  // q_z Omega_z/2]) on the error coordinates, scalar effort weight r_lqr.
  double r_lqr = 400.0;
  double q_z = 1.0;
  // Intensity of the apex-position random walk assumed by the estimator.
  // Sets the adaptation speed; the default yields a ~0.6 ms apex-estimate
  // time constant at the default detection noise.
  double sigma_w_apex_m2_s = 2e-15;
  // Half-width of the apex-estimate projection interval, expressed as a
  // detector voltage (divided by cxx to get meters).
  double apex_max_V = 0.1;
  // Total loop latency in controller samples (actuation lags measurement).
  int delay_samples = 13;
  // Compensate the latency by forward-predicting the estimate over the
  // not-yet-applied commands before computing the new command.
  bool forward_predict = false;
};

ControlConfig default_control();

/// Small-signal quantities extracted at the operating point (the apex of
/// the configured potential).
struct CalibratedModel {
  double mass_kg = 0.0;
  double big_gamma_s = 0.0;   // gamma / m
  double k_apex_N_m = 0.0;    // apex curvature, negative
  double omega_z_rad_s = 0.0; // axial trap frequency at the apex
  double cfx_N_V = 0.0, cfz_N_V = 0.0;
  double cxx_V_m = 0.0, cxz_V_m = 0.0, czx_V_m = 0.0, czz_V_m = 0.0;
  double thermal_intensity_N2_s = 0.0;  // 2 gamma kB T (two-sided)
  double meas_x_V2_s = 0.0;             // sigma_x^2 / 2 (two-sided)
  double meas_z_V2_s = 0.0;
  double apex_max_m = 0.0;
};

/// Extracts the design model.  Throws SynthesisError when the potential has
/// no apex or the loop is structurally broken (zero force or signal gain).
CalibratedModel build_calibrated_model(const PotentialParams& pot,
                                       const ParticleParams& particle,
                                       const DetectionParams& detection,
                                       const ControlConfig& config);

struct StateSpace {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::MatrixXd c;   // measurement rows (empty for the error model)
  Eigen::MatrixXd g;   // process-noise input matrix
  Eigen::MatrixXd qw;  // process-noise intensities (diagonal)
  Eigen::MatrixXd r;   // measurement-noise intensities
  std::vector<std::string> state_names;
  int apex_index = -1;
};

/// Regulator design plant on the error coordinates:
/// (x - apex, vx [, z, vz]).  No apex state.
StateSpace build_error_model(const CalibratedModel& m, ControllerVariant v);

/// Estimator design plant: error model states plus, for adaptive variants,
/// the apex position modeled as a random walk (intensity sigma_w_apex_m2_s)
/// entering the x acceleration.  The intensity must be positive for the
/// adaptive variants and is ignored otherwise.
StateSpace build_augmented_model(const CalibratedModel& m, ControllerVariant v,
                                 double sigma_w_apex_m2_s);

/// Returns k such that u = k' xi minimizes the LQR cost and A + b k' is
/// Hurwitz (k = -R^-1 b' P).
Eigen::VectorXd lqr_gain(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                         const Eigen::MatrixXd& q, double r);

struct KalmanDesign {
  Eigen::MatrixXd l;  // continuous innovation gain, n x m
  Eigen::MatrixXd p;  // steady-state estimation covariance
};

/// Continuous Kalman-Bucy design: qw_total = G Qw G', r = measurement
/// intensities.  A - L C is Hurwitz on success.
KalmanDesign kalman_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                         const Eigen::MatrixXd& qw_total,
                         const Eigen::MatrixXd& r);

/// Everything the sampled controller needs at run time.
struct ControllerRealization {
  ControllerVariant variant = ControllerVariant::none;
  double sample_rate_hz = 0.0;
  int delay_samples = 0;
  bool forward_predict = false;
  double apex_max_m = 0.0;
  int apex_index = -1;
  Eigen::MatrixXd ad;  // discrete state transition
  Eigen::VectorXd bd;  // discrete input column
  Eigen::MatrixXd cd;  // measurement rows
  Eigen::MatrixXd m;   // discrete measurement-update gain
  Eigen::VectorXd k;   // feedback gain on the updated estimate
  std::vector<std::string> state_names;
};

struct LqgDesign {
  ControllerVariant variant = ControllerVariant::none;
  ControlConfig config;
  CalibratedModel model;
  StateSpace aug;                 // continuous augmented model
  Eigen::VectorXd k_error;        // regulator gain on error coordinates
  Eigen::MatrixXd l_cont;         // continuous estimator gain
  Eigen::MatrixXd p_est;          // continuous estimation covariance
  Eigen::VectorXcd reg_eigs;      // closed-loop regulator eigenvalues
  Eigen::VectorXcd est_eigs;      // continuous estimator eigenvalues
  double tau_apex_s = 0.0;        // slowest estimator time constant (adaptive)
  double est_spectral_radius = 0.0;  // rho((I - M C) Ad) < 1
  Eigen::MatrixXd qd;             // discrete process covariance
  // Stationary covariance of the regulated estimate in error coordinates
  // (x - apex, vx [, z, vz]), from the joint estimator/regulator loop.
  // Predicted physical variance = sigma_reg + estimation error from p_est.
  Eigen::MatrixXd sigma_reg;
  Eigen::VectorXd state_scale;    // per-state scaling for fixed-point use
  double u_scale = 0.0;
  std::vector<int> unit_scale_fallback;  // states whose scale defaulted to 1
  ControllerRealization realization;
};

/// Full synthesis pipeline.  Throws SynthesisError when any stage fails
/// (no apex, non-stabilizable/detectable design, unstable discrete filter).
LqgDesign design_controller(const CalibratedModel& m, const ControlConfig& c);

/// Realization in scaled coordinates xi' = diag(1/state_scale) xi,
/// u' = u / u_scale, y' = y / y_scale (innovation standard deviations).
struct ScaledSystem {
  Eigen::MatrixXd ad, cd, m;
  Eigen::VectorXd bd, k;
  Eigen::VectorXd state_scale, y_scale;
  double u_scale = 0.0;
};
ScaledSystem normalize_model(const LqgDesign& d);

/// Effect of rounding the scaled coefficients to a signed fixed-point grid
/// with the given total bit width.
struct QuantizationReport {
  int bits = 0;
  // Worst per-coefficient relative rounding error; a coefficient smaller
  // than the grid of its matrix rounds to zero and contributes 1.0.
  double max_coeff_rel_err = 0.0;
  double est_radius = 0.0;  // rho((I - M C) Ad) after rounding
  // Spectral radius of the discretized error-coordinate plant closed with
  // the rounded feedback gain (the apex disturbance state is exogenous and
  // excluded from regulation).
  double reg_radius = 0.0;
  bool stable = false;
};
QuantizationReport quantization_report(const LqgDesign& d, int bits);

/// Sampled LQG controller: predict with the last applied command, measure
/// update, apex-estimate projection (clamping overwrites the stored state),
/// command computation, and a FIFO modeling the loop latency.
class DiscreteLqgController : public IController {
 public:
  explicit DiscreteLqgController(const ControllerRealization& r);
  ControllerOutputs step(const Measurement& meas) override;
  void reset() override;
  const Eigen::VectorXd& state() const { return xhat_; }

 private:
  ControllerRealization r_;
  Eigen::VectorXd xhat_;
  std::deque<double> pending_u_;
  double last_applied_V_ = 0.0;
};

/// Text artifact round-trip for deployment on embedded hardware.
std::string controller_to_text(const ControllerRealization& r);
ControllerRealization controller_from_text(const std::string& text);

}  // namespace levsim
