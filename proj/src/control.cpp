#include "levsim/control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "levsim/linalg.hpp"
#include "levsim/units.hpp"

namespace levsim {

namespace {

int state_count(ControllerVariant v) {
  switch (v) {
    case ControllerVariant::non_adaptive_1d: return 2;
    case ControllerVariant::adaptive_1d: return 3;
    case ControllerVariant::adaptive_2d: return 5;
    case ControllerVariant::none: break;
  }
  throw std::invalid_argument("variant 'none' has no controller");
}

bool is_adaptive(ControllerVariant v) {
  return v == ControllerVariant::adaptive_1d ||
         v == ControllerVariant::adaptive_2d;
}

}  // namespace

const char* variant_name(ControllerVariant v) {
  switch (v) {
    case ControllerVariant::none: return "none";
    case ControllerVariant::non_adaptive_1d: return "non_adaptive_1d";
    case ControllerVariant::adaptive_1d: return "adaptive_1d";
    case ControllerVariant::adaptive_2d: return "adaptive_2d";
  }
  return "unknown";
}

ControllerVariant variant_from_name(std::string_view name) {
  if (name == "none") return ControllerVariant::none;
  if (name == "non_adaptive_1d") return ControllerVariant::non_adaptive_1d;
  if (name == "adaptive_1d") return ControllerVariant::adaptive_1d;
  if (name == "adaptive_2d") return ControllerVariant::adaptive_2d;
  throw std::invalid_argument("unknown controller variant: " +
                              std::string(name));
}

ControlConfig default_control() { return {}; }

CalibratedModel build_calibrated_model(const PotentialParams& pot,
                                       const ParticleParams& particle,
                                       const DetectionParams& detection,
                                       const ControlConfig& config) {
  if (!(particle.mass_kg > 0.0)) {
    throw std::invalid_argument("model: mass must be positive");
  }
  const ApexInfo apex = find_apex(pot);
  if (!apex.valid || !(apex.k_apex_N_m < 0.0)) {
    throw SynthesisError(
        "model: potential has no unstable apex to stabilize");
  }
  if (particle.cf_N_V[0] == 0.0) {
    throw SynthesisError("model: zero electrode gain on x (uncontrollable)");
  }
  if (detection.cxx_V_m == 0.0) {
    throw SynthesisError("model: zero detector gain on x (unobservable)");
  }

  CalibratedModel m;
  m.mass_kg = particle.mass_kg;
  m.big_gamma_s = particle.gamma_kg_s / particle.mass_kg;
  m.k_apex_N_m = apex.k_apex_N_m;

  // Axial curvature of the full potential at the apex.
  const double h = 1e-9;
  const double x0 = apex.delta_apex_m;
  const double kz =
      (potential_energy({x0, 0.0, h}, pot) -
       2.0 * potential_energy({x0, 0.0, 0.0}, pot) +
       potential_energy({x0, 0.0, -h}, pot)) /
      (h * h);
  if (!(kz > 0.0)) {
    throw SynthesisError("model: no axial confinement at the apex");
  }
  m.omega_z_rad_s = std::sqrt(kz / m.mass_kg);

  m.cfx_N_V = particle.cf_N_V[0];
  m.cfz_N_V = particle.cf_N_V[2];
  m.cxx_V_m = detection.cxx_V_m;
  m.cxz_V_m = detection.cxz_V_m;
  m.czx_V_m = detection.czx_V_m;
  m.czz_V_m = detection.czz_V_m;
  m.thermal_intensity_N2_s = 2.0 * particle.gamma_kg_s * k_boltzmann_J_K *
                             particle.temperature_K;
  m.meas_x_V2_s = 0.5 * detection.sigma_x_V_rtHz * detection.sigma_x_V_rtHz;
  m.meas_z_V2_s = 0.5 * detection.sigma_z_V_rtHz * detection.sigma_z_V_rtHz;
  m.apex_max_m = config.apex_max_V / detection.cxx_V_m;
  return m;
}

StateSpace build_error_model(const CalibratedModel& m, ControllerVariant v) {
  const bool two_axis = (v == ControllerVariant::adaptive_2d);
  const int n = two_axis ? 4 : 2;
  state_count(v);  // rejects 'none'

  StateSpace s;
  s.a = Eigen::MatrixXd::Zero(n, n);
  s.b = Eigen::VectorXd::Zero(n);
  const double kappa = -m.k_apex_N_m / m.mass_kg;  // positive, = Omega_x^2
  s.a(0, 1) = 1.0;
  s.a(1, 0) = kappa;
  s.a(1, 1) = -m.big_gamma_s;
  s.b(1) = m.cfx_N_V / m.mass_kg;
  s.state_names = {"ex", "vx"};
  if (two_axis) {
    s.a(2, 3) = 1.0;
    s.a(3, 2) = -m.omega_z_rad_s * m.omega_z_rad_s;
    s.a(3, 3) = -m.big_gamma_s;
    s.b(3) = m.cfz_N_V / m.mass_kg;
    s.state_names.push_back("z");
    s.state_names.push_back("vz");
  }
  return s;
}

StateSpace build_augmented_model(const CalibratedModel& m, ControllerVariant v,
                                 double sigma_w_apex_m2_s) {
  const int n = state_count(v);
  const bool adaptive = is_adaptive(v);
  if (adaptive && !(sigma_w_apex_m2_s > 0.0)) {
    throw std::invalid_argument(
        "augmented model: apex random-walk intensity must be positive");
  }
  const bool two_axis = (v == ControllerVariant::adaptive_2d);
  const int n_meas = two_axis ? 2 : 1;
  const int n_noise = 1 + (adaptive ? 1 : 0) + (two_axis ? 1 : 0);

  StateSpace s;
  s.a = Eigen::MatrixXd::Zero(n, n);
  s.b = Eigen::VectorXd::Zero(n);
  s.c = Eigen::MatrixXd::Zero(n_meas, n);
  s.g = Eigen::MatrixXd::Zero(n, n_noise);
  s.qw = Eigen::MatrixXd::Zero(n_noise, n_noise);
  s.r = Eigen::MatrixXd::Zero(n_meas, n_meas);

  const double kappa = -m.k_apex_N_m / m.mass_kg;
  const int iz = adaptive ? 3 : 2;  // base index of the z block

  // x block: acceleration kappa (x - apex).
  s.a(0, 1) = 1.0;
  s.a(1, 0) = kappa;
  s.a(1, 1) = -m.big_gamma_s;
  s.b(1) = m.cfx_N_V / m.mass_kg;
  s.c(0, 0) = m.cxx_V_m;
  s.g(1, 0) = 1.0 / m.mass_kg;
  s.qw(0, 0) = m.thermal_intensity_N2_s;
  s.r(0, 0) = m.meas_x_V2_s;
  s.state_names = {"x", "vx"};

  if (adaptive) {
    s.a(1, 2) = -kappa;  // apex state: random walk, enters x acceleration
    s.g(2, 1) = 1.0;
    s.qw(1, 1) = sigma_w_apex_m2_s;
    s.state_names.push_back("apex");
    s.apex_index = 2;
  }
  if (two_axis) {
    s.a(iz, iz + 1) = 1.0;
    s.a(iz + 1, iz) = -m.omega_z_rad_s * m.omega_z_rad_s;
    s.a(iz + 1, iz + 1) = -m.big_gamma_s;
    s.b(iz + 1) = m.cfz_N_V / m.mass_kg;
    s.c(0, iz) = m.cxz_V_m;
    s.c(1, 0) = m.czx_V_m;
    s.c(1, iz) = m.czz_V_m;
    s.g(iz + 1, n_noise - 1) = 1.0 / m.mass_kg;
    s.qw(n_noise - 1, n_noise - 1) = m.thermal_intensity_N2_s;
    s.r(1, 1) = m.meas_z_V2_s;
    s.state_names.push_back("z");
    s.state_names.push_back("vz");
  }
  return s;
}

Eigen::VectorXd lqr_gain(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                         const Eigen::MatrixXd& q, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("lqr: r must be positive");
  Eigen::MatrixXd rm(1, 1);
  rm(0, 0) = r;
  const Eigen::MatrixXd p = solve_care(a, b, q, rm);
  const Eigen::VectorXd k = -(b.transpose() * p).transpose() / r;
  if (!is_hurwitz(a + b * k.transpose())) {
    throw SynthesisError("lqr: closed loop is not Hurwitz");
  }
  return k;
}

KalmanDesign kalman_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                         const Eigen::MatrixXd& qw_total,
                         const Eigen::MatrixXd& r) {
  KalmanDesign d;
  d.p = solve_care(a.transpose(), c.transpose(), qw_total, r);
  d.l = r.transpose().llt().solve(c * d.p).transpose();
  if (!is_hurwitz(a - d.l * c)) {
    throw SynthesisError("kalman: estimator is not Hurwitz");
  }
  return d;
}

LqgDesign design_controller(const CalibratedModel& m, const ControlConfig& c) {
  const int n = state_count(c.variant);
  if (!(c.sample_rate_hz > 0.0)) {
    throw std::invalid_argument("design: sample rate must be positive");
  }
  if (c.delay_samples < 0) {
    throw std::invalid_argument("design: delay must be non-negative");
  }

  LqgDesign d;
  d.variant = c.variant;
  d.config = c;
  d.model = m;

  // ---------------------------------------------------------- regulator
  const StateSpace err = build_error_model(m, c.variant);
  const double omega_x = std::sqrt(-m.k_apex_N_m / m.mass_kg);
  Eigen::MatrixXd q_lqr =
      Eigen::MatrixXd::Identity(err.a.rows(), err.a.rows()) * (0.5 * omega_x);
  if (c.variant == ControllerVariant::adaptive_2d) {
    q_lqr(2, 2) = q_lqr(3, 3) = 0.5 * c.q_z * m.omega_z_rad_s;
  }
  d.k_error = lqr_gain(err.a, err.b, q_lqr, c.r_lqr);
  d.reg_eigs =
      Eigen::EigenSolver<Eigen::MatrixXd>(
          err.a + err.b * d.k_error.transpose(), false)
          .eigenvalues();

  // ---------------------------------------------------------- estimator
  const StateSpace aug =
      build_augmented_model(m, c.variant, c.sigma_w_apex_m2_s);
  const Eigen::MatrixXd qw_total = aug.g * aug.qw * aug.g.transpose();
  const KalmanDesign kal = kalman_gain(aug.a, aug.c, qw_total, aug.r);
  d.aug = aug;
  d.l_cont = kal.l;
  d.p_est = kal.p;
  const Eigen::MatrixXd a_est = aug.a - kal.l * aug.c;
  d.est_eigs = Eigen::EigenSolver<Eigen::MatrixXd>(a_est, false).eigenvalues();
  if (is_adaptive(c.variant)) {
    double slowest = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < d.est_eigs.size(); ++i) {
      slowest = std::max(slowest, d.est_eigs(i).real());
    }
    d.tau_apex_s = slowest < 0.0 ? -1.0 / slowest : 0.0;
  }

  // ------------------------------------------------------ discretization
  const double dt = 1.0 / c.sample_rate_hz;
  const Discretized disc = discretize_van_loan(aug.a, aug.b, qw_total, dt);
  d.qd = disc.qd;
  const Eigen::MatrixXd rd = aug.r / dt;
  const Eigen::MatrixXd p_pred = solve_dare(
      disc.ad.transpose(), aug.c.transpose(), disc.qd, rd);
  const Eigen::MatrixXd innov_cov =
      aug.c * p_pred * aug.c.transpose() + rd;
  const Eigen::MatrixXd m_gain =
      innov_cov.llt().solve(aug.c * p_pred).transpose();
  const Eigen::MatrixXd closed =
      (Eigen::MatrixXd::Identity(n, n) - m_gain * aug.c) * disc.ad;
  d.est_spectral_radius = spectral_radius(closed);
  if (!(d.est_spectral_radius < 1.0)) {
    throw SynthesisError("design: discrete estimator is not Schur stable");
  }

  // ------------------------------------------------- equivalent gain map
  Eigen::VectorXd k_aug = Eigen::VectorXd::Zero(n);
  k_aug(0) = d.k_error(0);
  k_aug(1) = d.k_error(1);
  if (is_adaptive(c.variant)) {
    k_aug(aug.apex_index) = -d.k_error(0);
  }
  if (c.variant == ControllerVariant::adaptive_2d) {
    k_aug(3) = d.k_error(2);
    k_aug(4) = d.k_error(3);
  }

  // ------------------------------------------------------------- scaling
  // Stationary closed-loop covariance of the joint linear system
  // (estimation error e, regulated estimate in error coordinates).  The
  // estimate is driven by innovation noise through the filter gain, which
  // dominates the thermal drive at these detection noise levels.
  const int ne = static_cast<int>(err.a.rows());
  Eigen::MatrixXd t_err = Eigen::MatrixXd::Zero(ne, n);
  t_err(0, 0) = 1.0;
  t_err(1, 1) = 1.0;
  if (aug.apex_index >= 0) t_err(0, aug.apex_index) = -1.0;
  if (ne == 4) {
    t_err(2, 3) = 1.0;
    t_err(3, 4) = 1.0;
  }
  const Eigen::MatrixXd tl = t_err * kal.l;
  Eigen::MatrixXd a_joint = Eigen::MatrixXd::Zero(n + ne, n + ne);
  a_joint.topLeftCorner(n, n) = a_est;
  a_joint.bottomLeftCorner(ne, n) = tl * aug.c;
  a_joint.bottomRightCorner(ne, ne) =
      err.a + err.b * d.k_error.transpose();
  Eigen::MatrixXd q_joint(n + ne, n + ne);
  q_joint.topLeftCorner(n, n) =
      qw_total + kal.l * aug.r * kal.l.transpose();
  q_joint.topRightCorner(n, ne) = -kal.l * aug.r * tl.transpose();
  q_joint.bottomLeftCorner(ne, n) =
      q_joint.topRightCorner(n, ne).transpose();
  q_joint.bottomRightCorner(ne, ne) = tl * aug.r * tl.transpose();

  // Solved in discrete time: the doubling recursion sums positive terms
  // and stays accurate across the ~12 decades separating the covariance
  // entries, where a dense continuous-time solve loses them to rounding.
  Eigen::MatrixXd sigma_cl = Eigen::MatrixXd::Zero(ne, ne);
  bool scale_ok = false;
  try {
    const Discretized djoint = discretize_van_loan(
        a_joint, Eigen::MatrixXd::Zero(n + ne, 1), q_joint, dt);
    const Eigen::MatrixXd sigma_joint =
        solve_lyapunov_discrete(djoint.ad, djoint.qd);
    sigma_cl = sigma_joint.bottomRightCorner(ne, ne);
    scale_ok = sigma_cl.diagonal().minCoeff() > 0.0;
  } catch (const SynthesisError&) {
  }
  d.sigma_reg = sigma_cl;

  d.state_scale = Eigen::VectorXd::Ones(n);
  const double apex2 = m.apex_max_m * m.apex_max_m;
  auto scale_from = [&](int aug_i, int err_i, double extra_var) {
    const double var =
        (scale_ok ? sigma_cl(err_i, err_i) : 0.0) + extra_var;
    if (var > 0.0) {
      d.state_scale(aug_i) = std::sqrt(var);
    } else {
      d.unit_scale_fallback.push_back(aug_i);
    }
  };
  // The absolute position estimate rides on the apex estimate, so its
  // excursions include the projection half-width.
  scale_from(0, 0, apex2);
  scale_from(1, 1, 0.0);
  if (is_adaptive(c.variant)) {
    if (m.apex_max_m > 0.0) {
      d.state_scale(aug.apex_index) = m.apex_max_m;
    } else {
      d.unit_scale_fallback.push_back(aug.apex_index);
    }
  }
  if (c.variant == ControllerVariant::adaptive_2d) {
    scale_from(3, 2, 0.0);
    scale_from(4, 3, 0.0);
  }
  const double u_var =
      scale_ok ? (d.k_error.transpose() * sigma_cl * d.k_error).value()
               : 0.0;
  if (u_var > 0.0) {
    d.u_scale = std::sqrt(u_var);
  } else {
    d.u_scale = 1.0;
    d.unit_scale_fallback.push_back(-1);  // -1 marks the command channel
  }

  // ---------------------------------------------------------- realization
  d.realization.variant = c.variant;
  d.realization.sample_rate_hz = c.sample_rate_hz;
  d.realization.delay_samples = c.delay_samples;
  d.realization.forward_predict = c.forward_predict;
  d.realization.apex_max_m = m.apex_max_m;
  d.realization.apex_index = aug.apex_index;
  d.realization.ad = disc.ad;
  d.realization.bd = disc.bd;
  d.realization.cd = aug.c;
  d.realization.m = m_gain;
  d.realization.k = k_aug;
  d.realization.state_names = aug.state_names;
  return d;
}

ScaledSystem normalize_model(const LqgDesign& d) {
  const int n = static_cast<int>(d.realization.ad.rows());
  const int ny = static_cast<int>(d.realization.cd.rows());
  ScaledSystem s;
  s.state_scale = d.state_scale;
  s.u_scale = d.u_scale;
  s.y_scale = Eigen::VectorXd::Ones(ny);
  // Output scales: innovation standard deviations.
  const Eigen::MatrixXd innov_cov =
      d.realization.cd *
          (d.state_scale.asDiagonal() * Eigen::MatrixXd::Identity(n, n) *
           d.state_scale.asDiagonal()) *
          d.realization.cd.transpose() +
      d.aug.r * d.config.sample_rate_hz;
  for (int j = 0; j < ny; ++j) {
    const double v = innov_cov(j, j);
    s.y_scale(j) = v > 0.0 ? std::sqrt(v) : 1.0;
  }

  const Eigen::VectorXd inv_s = d.state_scale.cwiseInverse();
  s.ad = inv_s.asDiagonal() * d.realization.ad * d.state_scale.asDiagonal();
  s.bd = inv_s.asDiagonal() * d.realization.bd * s.u_scale;
  s.cd = s.y_scale.cwiseInverse().asDiagonal() * d.realization.cd *
         d.state_scale.asDiagonal();
  s.m = inv_s.asDiagonal() * d.realization.m * s.y_scale.asDiagonal();
  s.k = d.state_scale.asDiagonal() * d.realization.k / s.u_scale;
  return s;
}

namespace {

Eigen::MatrixXd quantize(const Eigen::MatrixXd& x, int bits, double* max_rel) {
  const double amax = x.cwiseAbs().maxCoeff();
  if (amax == 0.0) return x;
  const double step = std::exp2(std::ceil(std::log2(amax)) - (bits - 1));
  Eigen::MatrixXd q = (x / step).array().round().matrix() * step;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    if (xi != 0.0) {
      *max_rel = std::max(*max_rel, std::abs(q(i) - xi) / std::abs(xi));
    }
  }
  return q;
}

}  // namespace

QuantizationReport quantization_report(const LqgDesign& d, int bits) {
  if (bits < 4 || bits > 52) {
    throw std::invalid_argument("quantization: bits must be in [4, 52]");
  }
  const ScaledSystem s = normalize_model(d);
  QuantizationReport rep;
  rep.bits = bits;
  const Eigen::MatrixXd ad = quantize(s.ad, bits, &rep.max_coeff_rel_err);
  const Eigen::MatrixXd cd = quantize(s.cd, bits, &rep.max_coeff_rel_err);
  const Eigen::MatrixXd m = quantize(s.m, bits, &rep.max_coeff_rel_err);
  const Eigen::MatrixXd k = quantize(s.k, bits, &rep.max_coeff_rel_err);
  quantize(s.bd, bits, &rep.max_coeff_rel_err);

  const int n = static_cast<int>(ad.rows());
  rep.est_radius =
      spectral_radius((Eigen::MatrixXd::Identity(n, n) - m * cd) * ad);

  // Regulator check on the error coordinates (the apex state is an
  // exogenous disturbance model, not regulated): discretized error plant
  // driven by the rounded gain mapped back to engineering units.
  const StateSpace err = build_error_model(d.model, d.variant);
  const int ne = static_cast<int>(err.a.rows());
  const Discretized derr = discretize_van_loan(
      err.a, err.b, Eigen::MatrixXd::Zero(ne, ne),
      1.0 / d.config.sample_rate_hz);
  Eigen::VectorXd kq_err(ne);
  auto unscaled = [&](int i) {
    return k(i) * s.u_scale / d.state_scale(i);
  };
  kq_err(0) = unscaled(0);
  kq_err(1) = unscaled(1);
  if (ne == 4) {
    kq_err(2) = unscaled(3);
    kq_err(3) = unscaled(4);
  }
  rep.reg_radius = spectral_radius(derr.ad + derr.bd * kq_err.transpose());
  rep.stable = rep.est_radius < 1.0 && rep.reg_radius < 1.0;
  return rep;
}

// ------------------------------------------------------------- controller

DiscreteLqgController::DiscreteLqgController(const ControllerRealization& r)
    : r_(r) {
  const auto n = r_.ad.rows();
  if (r_.ad.cols() != n || r_.bd.size() != n || r_.cd.cols() != n ||
      r_.m.rows() != n || r_.m.cols() != r_.cd.rows() || r_.k.size() != n) {
    throw std::invalid_argument("controller: inconsistent realization");
  }
  if (r_.delay_samples < 0) {
    throw std::invalid_argument("controller: negative delay");
  }
  reset();
}

void DiscreteLqgController::reset() {
  xhat_ = Eigen::VectorXd::Zero(r_.ad.rows());
  pending_u_.assign(static_cast<std::size_t>(r_.delay_samples), 0.0);
  last_applied_V_ = 0.0;
}

ControllerOutputs DiscreteLqgController::step(const Measurement& meas) {
  const int ny = static_cast<int>(r_.cd.rows());
  Eigen::VectorXd y(ny);
  y(0) = meas.chi_x_V;
  if (ny > 1) y(1) = meas.chi_z_V;

  // Predict with the command that actually drove the plant, then update.
  xhat_ = r_.ad * xhat_ + r_.bd * last_applied_V_;
  xhat_ += r_.m * (y - r_.cd * xhat_);

  double raw_apex = 0.0;
  if (r_.apex_index >= 0) {
    raw_apex = xhat_(r_.apex_index);
    xhat_(r_.apex_index) =
        std::clamp(raw_apex, -r_.apex_max_m, r_.apex_max_m);
  }

  double u_out;
  const bool delayed = !pending_u_.empty();
  if (delayed) {
    u_out = pending_u_.front();
    pending_u_.pop_front();
  } else {
    u_out = 0.0;  // replaced below
  }

  Eigen::VectorXd base = xhat_;
  if (r_.forward_predict && delayed) {
    base = r_.ad * base + r_.bd * u_out;
    for (double u_pending : pending_u_) {
      base = r_.ad * base + r_.bd * u_pending;
    }
  }
  const double u_cmd = r_.k.dot(base);
  if (delayed) {
    pending_u_.push_back(u_cmd);
  } else {
    u_out = u_cmd;
  }
  last_applied_V_ = u_out;

  ControllerOutputs out;
  out.u_V = u_out;
  out.xhat_m = xhat_(0);
  if (xhat_.size() > 1) out.vxhat_mps = xhat_(1);
  if (r_.apex_index >= 0) {
    out.apexhat_m = xhat_(r_.apex_index);
    out.apexhat_raw_m = raw_apex;
  }
  if (r_.variant == ControllerVariant::adaptive_2d && xhat_.size() >= 5) {
    out.zhat_m = xhat_(3);
    out.vzhat_mps = xhat_(4);
  }
  return out;
}

// ---------------------------------------------------------------- artifact

namespace {

void write_matrix(std::ostream& os, const char* name,
                  const Eigen::MatrixXd& m) {
  os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      os << buf << (j + 1 < m.cols() ? " " : "");
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& is, const std::string& expect_name) {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> name >> rows >> cols) || name != expect_name || rows < 0 ||
      cols < 0 || rows > 64 || cols > 64) {
    throw std::invalid_argument("controller artifact: bad matrix header for " +
                                expect_name);
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(is >> m(i, j))) {
        throw std::invalid_argument("controller artifact: truncated matrix " +
                                    expect_name);
      }
    }
  }
  return m;
}

}  // namespace

std::string controller_to_text(const ControllerRealization& r) {
  std::ostringstream os;
  os << "levsim-controller v1\n";
  os << "variant " << variant_name(r.variant) << '\n';
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", r.sample_rate_hz);
  os << "sample_rate_hz " << buf << '\n';
  os << "delay_samples " << r.delay_samples << '\n';
  os << "forward_predict " << (r.forward_predict ? 1 : 0) << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", r.apex_max_m);
  os << "apex_max_m " << buf << '\n';
  os << "apex_index " << r.apex_index << '\n';
  os << "states";
  for (const auto& s : r.state_names) os << ' ' << s;
  os << '\n';
  write_matrix(os, "Ad", r.ad);
  write_matrix(os, "bd", r.bd);
  write_matrix(os, "Cd", r.cd);
  write_matrix(os, "M", r.m);
  write_matrix(os, "k", r.k);
  os << "end\n";
  return os.str();
}

ControllerRealization controller_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string tok;
  ControllerRealization r;

  std::string magic, version;
  if (!(is >> magic >> version) || magic != "levsim-controller" ||
      version != "v1") {
    throw std::invalid_argument("controller artifact: bad header");
  }
  auto expect_key = [&](const char* key) {
    if (!(is >> tok) || tok != key) {
      throw std::invalid_argument(
          std::string("controller artifact: expected key ") + key);
    }
  };
  expect_key("variant");
  std::string vname;
  is >> vname;
  r.variant = variant_from_name(vname);
  expect_key("sample_rate_hz");
  if (!(is >> r.sample_rate_hz) || !(r.sample_rate_hz > 0.0)) {
    throw std::invalid_argument("controller artifact: bad sample rate");
  }
  expect_key("delay_samples");
  if (!(is >> r.delay_samples) || r.delay_samples < 0 ||
      r.delay_samples > 1000000) {
    throw std::invalid_argument("controller artifact: bad delay");
  }
  expect_key("forward_predict");
  int fp = 0;
  if (!(is >> fp) || (fp != 0 && fp != 1)) {
    throw std::invalid_argument("controller artifact: bad forward_predict");
  }
  r.forward_predict = fp == 1;
  expect_key("apex_max_m");
  if (!(is >> r.apex_max_m) || r.apex_max_m < 0.0) {
    throw std::invalid_argument("controller artifact: bad apex_max_m");
  }
  expect_key("apex_index");
  if (!(is >> r.apex_index) || r.apex_index < -1) {
    throw std::invalid_argument("controller artifact: bad apex_index");
  }
  expect_key("states");
  {
    std::string line;
    std::getline(is, line);
    std::istringstream ls(line);
    std::string s;
    while (ls >> s) r.state_names.push_back(s);
  }
  r.ad = read_matrix(is, "Ad");
  r.bd = Eigen::VectorXd(read_matrix(is, "bd"));
  r.cd = read_matrix(is, "Cd");
  r.m = read_matrix(is, "M");
  r.k = Eigen::VectorXd(read_matrix(is, "k"));
  if (!(is >> tok) || tok != "end") {
    throw std::invalid_argument("controller artifact: missing end marker");
  }

  const auto n = r.ad.rows();
  if (r.ad.cols() != n || r.bd.size() != n || r.cd.cols() != n ||
      r.m.rows() != n || r.m.cols() != r.cd.rows() || r.k.size() != n ||
      r.apex_index >= n ||
      r.state_names.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("controller artifact: inconsistent shapes");
  }
  return r;
}

}  // namespace levsim
