#include "levsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "levsim/units.hpp"

namespace levsim {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double quartic_range_gain(double x_m, double x_nl_m) {
  if (!(x_nl_m > 0.0)) return 1.0;
  const double s = x_m / x_nl_m;
  const double s2 = s * s;
  return std::exp(-s2 * s2);
}

}  // namespace

ParticleParams default_particle() {
  ParticleParams p;
  p.mass_kg = 1.0667906173794858e-17;  // 210 nm silica sphere, 2200 kg/m^3
  p.gamma_kg_s = p.mass_kg * angular(660.0);  // Gamma/2pi = 660 Hz
  p.temperature_K = 293.0;
  p.cf_N_V = {5.1e-13, 0.0, 1.4e-13};
  return p;
}

DetectionParams default_detection() {
  DetectionParams d;
  d.cxx_V_m = 2.7e6;
  d.cxy_V_m = 0.0;
  // z-motion leaking into the x channel; large enough that a controller
  // ignoring z visibly pollutes its apex estimate.
  d.cxz_V_m = 1.0e6;
  d.czx_V_m = 7.7e4;
  d.czy_V_m = 0.0;
  d.czz_V_m = 1.1e6;
  d.x_nl_m = 0.631508e-6;
  // Noise floors place the default closed-loop x residual near 50 nm rms.
  d.sigma_x_V_rtHz = 7.0e-5;
  d.sigma_z_V_rtHz = 5.0e-5;
  d.drift_rate_max_V_s = 1e-4;
  return d;
}

Measurement measure_clean(const std::array<double, 3>& q_m,
                          const DetectionParams& det, double dchi_x_V) {
  Measurement m;
  const double linear_x =
      det.cxx_V_m * q_m[0] + det.cxy_V_m * q_m[1] + det.cxz_V_m * q_m[2];
  m.chi_x_V = quartic_range_gain(q_m[0], det.x_nl_m) * linear_x + dchi_x_V;
  m.chi_z_V =
      det.czx_V_m * q_m[0] + det.czy_V_m * q_m[1] + det.czz_V_m * q_m[2];
  return m;
}

Measurement measure(const std::array<double, 3>& q_m,
                    const DetectionParams& det, double dchi_x_V,
                    double sample_rate_hz, GaussianRng& noise_x,
                    GaussianRng& noise_z) {
  if (!(sample_rate_hz > 0.0)) {
    throw std::invalid_argument("measure: sample rate must be positive");
  }
  Measurement m = measure_clean(q_m, det, dchi_x_V);
  // sigma is sqrt(one-sided PSD); the white band extends to Nyquist.
  const double scale = std::sqrt(0.5 * sample_rate_hz);
  m.chi_x_V += det.sigma_x_V_rtHz * scale * noise_x.normal();
  m.chi_z_V += det.sigma_z_V_rtHz * scale * noise_z.normal();
  return m;
}

// ------------------------------------------------------------------- drift

double ramp_value(const Ramp& r, double t_s) {
  if (t_s <= r.start_s) return r.initial;
  if (r.duration_s <= 0.0 || t_s >= r.start_s + r.duration_s) return r.target;
  const double frac = (t_s - r.start_s) / r.duration_s;
  return r.initial + frac * (r.target - r.initial);
}

DriftSampler::DriftSampler(const DriftModel& model, std::uint64_t seed,
                           double duration_s, double drift_rate_max_V_s)
    : model_(model) {
  switch (model_.kind) {
    case DriftKind::constant:
      break;
    case DriftKind::ramp: {
      const Ramp& r = model_.dchi_x_V;
      if (r.target != r.initial) {
        if (r.duration_s <= 0.0) {
          throw std::invalid_argument(
              "drift: detector-offset step violates the slew-rate bound");
        }
        const double rate = std::abs(r.target - r.initial) / r.duration_s;
        if (rate > drift_rate_max_V_s * (1.0 + 1e-12)) {
          throw std::invalid_argument(
              "drift: detector-offset ramp rate exceeds drift_rate_max_V_s");
        }
      }
      break;
    }
    case DriftKind::random_walk: {
      if (!(model_.walk_timescale_s > 0.0)) {
        throw std::invalid_argument("drift: walk timescale must be positive");
      }
      grid_dt_s_ = model_.walk_timescale_s / 64.0;
      const std::size_t n =
          static_cast<std::size_t>(std::ceil(std::max(duration_s, 0.0) /
                                             grid_dt_s_)) + 2;
      GaussianRng rng(seed, NoiseStream::drift);
      DriftValue v{model_.delta0_m.initial, model_.delta1_m.initial,
                   model_.dchi_x_V.initial};
      walk_path_.reserve(n);
      walk_path_.push_back(v);
      const double step_frac = std::sqrt(grid_dt_s_ / model_.walk_timescale_s);
      const double dchi_cap = drift_rate_max_V_s * grid_dt_s_;
      for (std::size_t i = 1; i < n; ++i) {
        v.delta0_m += model_.walk_rms_delta0_m * step_frac * rng.normal();
        v.delta1_m += model_.walk_rms_delta1_m * step_frac * rng.normal();
        const double inc = std::clamp(
            model_.walk_rms_dchi_x_V * step_frac * rng.normal(), -dchi_cap,
            dchi_cap);
        v.dchi_x_V += inc;
        walk_path_.push_back(v);
      }
      break;
    }
    case DriftKind::replay: {
      const auto& t = model_.replay_t_s;
      if (t.size() != model_.replay_values.size() || t.empty()) {
        throw std::invalid_argument("drift: malformed replay table");
      }
      for (std::size_t i = 1; i < t.size(); ++i) {
        if (!(t[i] > t[i - 1])) {
          throw std::invalid_argument(
              "drift: replay times must be strictly increasing");
        }
      }
      break;
    }
  }
}

DriftValue DriftSampler::at(double t_s) const {
  switch (model_.kind) {
    case DriftKind::constant:
      return {model_.delta0_m.initial, model_.delta1_m.initial,
              model_.dchi_x_V.initial};
    case DriftKind::ramp:
      return {ramp_value(model_.delta0_m, t_s), ramp_value(model_.delta1_m, t_s),
              ramp_value(model_.dchi_x_V, t_s)};
    case DriftKind::random_walk: {
      const double pos = std::max(t_s, 0.0) / grid_dt_s_;
      const std::size_t i = std::min(
          static_cast<std::size_t>(pos), walk_path_.size() - 2);
      const double frac = std::min(pos - static_cast<double>(i), 1.0);
      const DriftValue& a = walk_path_[i];
      const DriftValue& b = walk_path_[i + 1];
      return {a.delta0_m + frac * (b.delta0_m - a.delta0_m),
              a.delta1_m + frac * (b.delta1_m - a.delta1_m),
              a.dchi_x_V + frac * (b.dchi_x_V - a.dchi_x_V)};
    }
    case DriftKind::replay: {
      const auto& t = model_.replay_t_s;
      const double eps = 1e-12;
      if (t_s < t.front() - eps || t_s > t.back() + eps) {
        throw std::out_of_range("drift: replay query outside table range");
      }
      if (t.size() == 1) {
        const auto& v = model_.replay_values.front();
        return {v[0], v[1], v[2]};
      }
      const auto it = std::upper_bound(t.begin(), t.end(), t_s);
      const std::size_t hi =
          std::clamp<std::size_t>(static_cast<std::size_t>(it - t.begin()), 1,
                                  t.size() - 1);
      const std::size_t lo = hi - 1;
      const double frac =
          std::clamp((t_s - t[lo]) / (t[hi] - t[lo]), 0.0, 1.0);
      const auto& a = model_.replay_values[lo];
      const auto& b = model_.replay_values[hi];
      return {a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1]),
              a[2] + frac * (b[2] - a[2])};
    }
  }
  return {};
}

// -------------------------------------------------------------- integrator

LangevinStepper::LangevinStepper(const ParticleParams& particle)
    : particle_(particle) {
  if (!(particle_.mass_kg > 0.0)) {
    throw std::invalid_argument("stepper: mass must be positive");
  }
  if (particle_.gamma_kg_s < 0.0 || particle_.temperature_K < 0.0) {
    throw std::invalid_argument(
        "stepper: drag and temperature must be non-negative");
  }
}

void LangevinStepper::set_potential(const PotentialParams& p) {
  potential_ = p;
  force_valid_ = false;
}

void LangevinStepper::set_control(double u_V) {
  if (u_V != u_V_) {
    u_V_ = u_V;
    force_valid_ = false;
  }
}

std::array<double, 3> LangevinStepper::total_force(
    const std::array<double, 3>& q_m) const {
  std::array<double, 3> f = optical_force(q_m, potential_);
  for (int i = 0; i < 3; ++i) f[i] += particle_.cf_N_V[i] * u_V_;
  return f;
}

void LangevinStepper::step(std::array<double, 3>& q_m,
                           std::array<double, 3>& v_mps, double h_s,
                           GaussianRng& thermal_x, GaussianRng& thermal_y,
                           GaussianRng& thermal_z) {
  if (!(h_s > 0.0)) throw std::invalid_argument("stepper: h must be positive");
  const double m = particle_.mass_kg;
  if (h_s != cached_h_s_) {
    const double big_gamma = particle_.gamma_kg_s / m;
    ou_decay_ = std::exp(-big_gamma * h_s);
    ou_kick_mps_ = std::sqrt((1.0 - ou_decay_ * ou_decay_) *
                             k_boltzmann_J_K * particle_.temperature_K / m);
    cached_h_s_ = h_s;
  }
  if (!force_valid_) {
    force_N_ = total_force(q_m);
    force_valid_ = true;
  }

  const double half_h = 0.5 * h_s;
  for (int i = 0; i < 3; ++i) v_mps[i] += half_h * force_N_[i] / m;
  for (int i = 0; i < 3; ++i) q_m[i] += half_h * v_mps[i];
  v_mps[0] = ou_decay_ * v_mps[0] + ou_kick_mps_ * thermal_x.normal();
  v_mps[1] = ou_decay_ * v_mps[1] + ou_kick_mps_ * thermal_y.normal();
  v_mps[2] = ou_decay_ * v_mps[2] + ou_kick_mps_ * thermal_z.normal();
  for (int i = 0; i < 3; ++i) q_m[i] += half_h * v_mps[i];
  force_N_ = total_force(q_m);
  for (int i = 0; i < 3; ++i) v_mps[i] += half_h * force_N_[i] / m;
}

// ------------------------------------------------------------- closed loop

namespace {

// Tracks the true apex of a slowly changing potential: Newton continuation
// from the previous position with a full landscape rescan as fallback.
class ApexTracker {
 public:
  double at(const PotentialParams& p) {
    if (std::isfinite(prev_)) {
      double x = prev_;
      double step = 0.0;
      bool converged = false;
      for (int it = 0; it < 12; ++it) {
        const double d2 = double_well_1d_d2(x, p);
        if (!(d2 < 0.0)) break;
        step = double_well_1d_d1(x, p) / d2;
        x -= step;
        if (std::abs(x - prev_) > 0.25 * p.w01x_m) break;
        if (std::abs(step) < 1e-13) {
          converged = true;
          break;
        }
      }
      if (converged && double_well_1d_d2(x, p) < 0.0) {
        prev_ = x;
        return x;
      }
    }
    const ApexInfo info = find_apex(p);
    prev_ = info.valid ? info.delta_apex_m : kNan;
    return prev_;
  }

 private:
  double prev_ = kNan;
};

}  // namespace

RunRecord run_closed_loop(const RunInputs& in, IController& controller) {
  if (!(in.sample_rate_hz > 0.0)) {
    throw std::invalid_argument("run: sample rate must be positive");
  }
  if (in.duration_s < 0.0) {
    throw std::invalid_argument("run: duration must be non-negative");
  }
  if (in.substeps < 1) {
    throw std::invalid_argument("run: substeps must be >= 1");
  }
  if (in.decimation < 1) {
    throw std::invalid_argument("run: decimation must be >= 1");
  }
  if (!(in.escape_radius_m > 0.0)) {
    throw std::invalid_argument("run: escape radius must be positive");
  }

  const double dt = 1.0 / in.sample_rate_hz;
  const double h = dt / in.substeps;
  const long long n_samples = std::llround(in.duration_s * in.sample_rate_hz);

  DriftSampler drift(in.drift, in.seed, in.duration_s,
                     in.detection.drift_rate_max_V_s);
  GaussianRng thermal_x(in.seed, NoiseStream::thermal_x);
  GaussianRng thermal_y(in.seed, NoiseStream::thermal_y);
  GaussianRng thermal_z(in.seed, NoiseStream::thermal_z);
  GaussianRng noise_x(in.seed, NoiseStream::measurement_x);
  GaussianRng noise_z(in.seed, NoiseStream::measurement_z);

  LangevinStepper stepper(in.particle);
  PotentialParams pot = in.potential;
  {
    const DriftValue d0 = drift.at(0.0);
    pot.delta0_m = d0.delta0_m;
    pot.delta1_m = d0.delta1_m;
  }
  stepper.set_potential(pot);

  RunRecord rec;
  rec.sample_rate_hz = in.sample_rate_hz;
  rec.decimation = in.decimation;
  rec.record_rate_hz = in.sample_rate_hz / in.decimation;
  rec.averaged = in.average_decimation;
  rec.seed = in.seed;
  rec.scenario_hash = in.scenario_hash;
  const std::size_t n_rows =
      static_cast<std::size_t>(n_samples / in.decimation);
  auto reserve_all = [&](std::size_t n) {
    for (auto* col :
         {&rec.t_s, &rec.x_m, &rec.y_m, &rec.z_m, &rec.vx_mps, &rec.vy_mps,
          &rec.vz_mps, &rec.chi_x_V, &rec.chi_z_V, &rec.u_V, &rec.xhat_m,
          &rec.vxhat_mps, &rec.apexhat_m, &rec.apexhat_raw_m, &rec.zhat_m,
          &rec.vzhat_mps, &rec.delta0_m, &rec.delta1_m, &rec.dchi_x_V,
          &rec.delta_apex_m}) {
      col->reserve(n);
    }
  };
  reserve_all(n_rows);

  ApexTracker apex;
  const bool drift_is_constant = (in.drift.kind == DriftKind::constant);
  double const_apex = kNan;
  bool const_apex_ready = false;

  std::array<double, 3> q = in.q0_m;
  std::array<double, 3> v = in.v0_mps;
  double u_applied = 0.0;

  // Block accumulators for averaged decimation.
  double sx = 0, sy = 0, sz = 0, svx = 0, svy = 0, svz = 0;
  double schix = 0, schiz = 0, su = 0;
  int in_block = 0;

  for (long long n = 0; n < n_samples; ++n) {
    const double t_n = static_cast<double>(n) * dt;
    const DriftValue d = drift.at(t_n);
    if (d.delta0_m != pot.delta0_m || d.delta1_m != pot.delta1_m) {
      pot.delta0_m = d.delta0_m;
      pot.delta1_m = d.delta1_m;
      stepper.set_potential(pot);
    }

    double u_total = u_applied;
    for (const DriveTone& tone : in.drive_tones) {
      u_total += tone.amp_V *
                 std::sin(two_pi * tone.freq_hz * t_n + tone.phase_rad);
    }
    stepper.set_control(u_total);

    for (int s = 0; s < in.substeps; ++s) {
      stepper.step(q, v, h, thermal_x, thermal_y, thermal_z);
    }
    const double t_next = static_cast<double>(n + 1) * dt;

    if (std::abs(q[0]) > in.escape_radius_m ||
        std::abs(q[1]) > in.escape_radius_m ||
        std::abs(q[2]) > in.escape_radius_m) {
      rec.status = RunStatus::particle_lost;
      rec.lost_at_s = t_next;
      break;
    }

    const Measurement meas =
        measure(q, in.detection, d.dchi_x_V, in.sample_rate_hz, noise_x,
                noise_z);
    const ControllerOutputs out = controller.step(meas);
    u_applied = out.u_V;

    sx += q[0];
    sy += q[1];
    sz += q[2];
    svx += v[0];
    svy += v[1];
    svz += v[2];
    schix += meas.chi_x_V;
    schiz += meas.chi_z_V;
    su += out.u_V;
    ++in_block;

    if (in_block == in.decimation) {
      const double inv = 1.0 / in_block;
      if (in.average_decimation) {
        rec.x_m.push_back(sx * inv);
        rec.y_m.push_back(sy * inv);
        rec.z_m.push_back(sz * inv);
        rec.vx_mps.push_back(svx * inv);
        rec.vy_mps.push_back(svy * inv);
        rec.vz_mps.push_back(svz * inv);
        rec.chi_x_V.push_back(schix * inv);
        rec.chi_z_V.push_back(schiz * inv);
        rec.u_V.push_back(su * inv);
      } else {
        rec.x_m.push_back(q[0]);
        rec.y_m.push_back(q[1]);
        rec.z_m.push_back(q[2]);
        rec.vx_mps.push_back(v[0]);
        rec.vy_mps.push_back(v[1]);
        rec.vz_mps.push_back(v[2]);
        rec.chi_x_V.push_back(meas.chi_x_V);
        rec.chi_z_V.push_back(meas.chi_z_V);
        rec.u_V.push_back(out.u_V);
      }
      rec.t_s.push_back(t_next);
      rec.xhat_m.push_back(out.xhat_m);
      rec.vxhat_mps.push_back(out.vxhat_mps);
      rec.apexhat_m.push_back(out.apexhat_m);
      rec.apexhat_raw_m.push_back(out.apexhat_raw_m);
      rec.zhat_m.push_back(out.zhat_m);
      rec.vzhat_mps.push_back(out.vzhat_mps);
      rec.delta0_m.push_back(d.delta0_m);
      rec.delta1_m.push_back(d.delta1_m);
      rec.dchi_x_V.push_back(d.dchi_x_V);
      if (drift_is_constant) {
        if (!const_apex_ready) {
          const_apex = apex.at(pot);
          const_apex_ready = true;
        }
        rec.delta_apex_m.push_back(const_apex);
      } else {
        rec.delta_apex_m.push_back(apex.at(pot));
      }

      sx = sy = sz = svx = svy = svz = schix = schiz = su = 0.0;
      in_block = 0;
    }
  }

  return rec;
}

}  // namespace levsim
