// Stochastic particle dynamics in the optical potential, the detection
// model, slow drift of beam alignment and detector offset, and the sampled
// closed-loop simulation driver.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "levsim/potential.hpp"
#include "levsim/rng.hpp"

namespace levsim {

struct ParticleParams {
  double mass_kg = 0.0;
  double gamma_kg_s = 0.0;     // linear drag coefficient [kg/s]
  double temperature_K = 0.0;  // bath temperature
  // Electrode force per commanded volt on each axis [N/V].
  std::array<double, 3> cf_N_V = {0.0, 0.0, 0.0};
};

/// 210 nm silica sphere in the calibrated trap: Gamma/2pi = 660 Hz at 293 K.
ParticleParams default_particle();

struct DetectionParams {
  // Linear position-to-voltage couplings of the two detector channels.
  double cxx_V_m = 0.0, cxy_V_m = 0.0, cxz_V_m = 0.0;
  double czx_V_m = 0.0, czy_V_m = 0.0, czz_V_m = 0.0;
  // Range scale of the x channel: the whole x row is multiplied by
  // g(x) = exp(-(x/x_nl)^4), so the channel output peaks near 0.71 x_nl.
  double x_nl_m = 0.0;
  // Detector noise as sqrt(one-sided voltage PSD); per-sample variance at
  // sample rate fs is sigma^2 fs / 2.
  double sigma_x_V_rtHz = 0.0;
  double sigma_z_V_rtHz = 0.0;
  // Bound on the slew rate of the x-channel offset drift [V/s].
  double drift_rate_max_V_s = 0.0;
};

DetectionParams default_detection();

struct Measurement {
  double chi_x_V = 0.0;
  double chi_z_V = 0.0;
};

/// Noise-free detector outputs for particle position q and offset drift.
Measurement measure_clean(const std::array<double, 3>& q_m,
                          const DetectionParams& det, double dchi_x_V);

/// Detector outputs with additive white noise at sample rate fs.
Measurement measure(const std::array<double, 3>& q_m,
                    const DetectionParams& det, double dchi_x_V,
                    double sample_rate_hz, GaussianRng& noise_x,
                    GaussianRng& noise_z);

// ---------------------------------------------------------------- drift

enum class DriftKind { constant, ramp, random_walk, replay };

/// Piecewise-linear schedule: `initial` before `start_s`, linear to `target`
/// over `duration_s`, then held at `target`.
struct Ramp {
  double initial = 0.0;
  double target = 0.0;
  double start_s = 0.0;
  double duration_s = 0.0;
};

double ramp_value(const Ramp& r, double t_s);

struct DriftModel {
  DriftKind kind = DriftKind::constant;
  // For `constant` only the .initial fields are used; for `ramp` the full
  // schedules; for `random_walk` the .initial fields seed the walk start.
  Ramp delta0_m;
  Ramp delta1_m;
  Ramp dchi_x_V;
  // Random-walk spread over one timescale, per channel.
  double walk_rms_delta0_m = 0.0;
  double walk_rms_delta1_m = 0.0;
  double walk_rms_dchi_x_V = 0.0;
  double walk_timescale_s = 0.1;
  // Replay: piecewise-linear table of (t, delta0, delta1, dchi_x).
  std::vector<double> replay_t_s;
  std::vector<std::array<double, 3>> replay_values;
};

struct DriftValue {
  double delta0_m = 0.0;
  double delta1_m = 0.0;
  double dchi_x_V = 0.0;
};

/// Deterministic drift trajectory sampler.  Random walks are pre-generated
/// from the seed's drift stream, so the same seed always yields the same
/// trajectory.  The detector-offset channel obeys drift_rate_max_V_s: ramps
/// exceeding it are rejected, walk increments are clamped to it.
class DriftSampler {
 public:
  DriftSampler(const DriftModel& model, std::uint64_t seed, double duration_s,
               double drift_rate_max_V_s);
  DriftValue at(double t_s) const;

 private:
  DriftModel model_;
  double grid_dt_s_ = 0.0;
  std::vector<DriftValue> walk_path_;
};

// ------------------------------------------------------------- integrator

/// Langevin integrator (BAOAB splitting: half-kick, half-drift, exact
/// Ornstein-Uhlenbeck velocity update, half-drift, half-kick).  The force
/// at the end of one step is reused at the start of the next while the
/// potential and control input stay unchanged, so a step costs one force
/// evaluation.  Positions must not be modified externally between steps.
class LangevinStepper {
 public:
  explicit LangevinStepper(const ParticleParams& particle);

  void set_potential(const PotentialParams& p);
  void set_control(double u_V);  // commanded voltage on the electrodes
  const PotentialParams& potential() const { return potential_; }

  void step(std::array<double, 3>& q_m, std::array<double, 3>& v_mps,
            double h_s, GaussianRng& thermal_x, GaussianRng& thermal_y,
            GaussianRng& thermal_z);

 private:
  std::array<double, 3> total_force(const std::array<double, 3>& q_m) const;

  ParticleParams particle_;
  PotentialParams potential_;
  double u_V_ = 0.0;
  bool force_valid_ = false;
  std::array<double, 3> force_N_ = {0.0, 0.0, 0.0};
  double cached_h_s_ = -1.0;
  double ou_decay_ = 0.0;
  double ou_kick_mps_ = 0.0;
};

// ------------------------------------------------------------ controllers

struct ControllerOutputs {
  double u_V = 0.0;
  double xhat_m = 0.0;
  double vxhat_mps = 0.0;
  double apexhat_m = 0.0;      // apex-position estimate after projection
  double apexhat_raw_m = 0.0;  // apex-position estimate before projection
  double zhat_m = 0.0;
  double vzhat_mps = 0.0;
};

class IController {
 public:
  virtual ~IController() = default;
  virtual ControllerOutputs step(const Measurement& m) = 0;
  virtual void reset() {}
};

/// No feedback; estimator outputs all zero.  Used for free-evolution runs.
class ZeroController : public IController {
 public:
  ControllerOutputs step(const Measurement&) override { return {}; }
};

// ---------------------------------------------------------------- records

struct DriveTone {
  double freq_hz = 0.0;
  double amp_V = 0.0;
  double phase_rad = 0.0;
};

enum class RunStatus { completed, particle_lost };

/// Time series produced by a closed-loop run, decimated to the record rate.
/// In averaged mode the fast columns (positions, velocities, detector
/// signals, command voltage) are block means; estimator and drift columns
/// are snapshots at the block end, whose time stamps the row.
struct RunRecord {
  std::vector<double> t_s;
  std::vector<double> x_m, y_m, z_m;
  std::vector<double> vx_mps, vy_mps, vz_mps;
  std::vector<double> chi_x_V, chi_z_V;
  std::vector<double> u_V;
  std::vector<double> xhat_m, vxhat_mps;
  std::vector<double> apexhat_m, apexhat_raw_m;
  std::vector<double> zhat_m, vzhat_mps;
  std::vector<double> delta0_m, delta1_m, dchi_x_V;
  // True apex position of the instantaneous potential (NaN when no apex).
  std::vector<double> delta_apex_m;

  double sample_rate_hz = 0.0;
  double record_rate_hz = 0.0;
  int decimation = 1;
  bool averaged = true;
  std::uint64_t seed = 0;
  std::uint64_t scenario_hash = 0;
  RunStatus status = RunStatus::completed;
  double lost_at_s = -1.0;

  std::size_t size() const { return t_s.size(); }
};

struct RunInputs {
  PotentialParams potential;
  ParticleParams particle;
  DetectionParams detection;
  DriftModel drift;
  std::vector<DriveTone> drive_tones;  // open-loop voltage added to u

  double duration_s = 0.0;
  double sample_rate_hz = 0.0;  // controller/detector rate
  int substeps = 1;             // physics steps per sample
  int decimation = 1;           // samples per record row
  bool average_decimation = true;
  double escape_radius_m = 2e-6;  // per-axis loss boundary

  std::uint64_t seed = 0;
  std::uint64_t scenario_hash = 0;
  std::array<double, 3> q0_m = {0.0, 0.0, 0.0};
  std::array<double, 3> v0_mps = {0.0, 0.0, 0.0};
};

/// Run the sampled feedback loop: advance physics over one sample period
/// with the currently applied voltage held (zero-order hold), measure, let
/// the controller produce the next voltage, record.  Terminates early with
/// RunStatus::particle_lost when any |coordinate| exceeds escape_radius_m.
RunRecord run_closed_loop(const RunInputs& in, IController& controller);

}  // namespace levsim
