// Trace analysis: spectral estimation, windowed position statistics, the
// stabilization criteria used to judge closed-loop runs, and the model fits
// used to calibrate the experiment (damped-oscillator spectra, double-well
// Boltzmann statistics, force-coupling extraction from drive tones).
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "levsim/dynamics.hpp"
#include "levsim/potential.hpp"

namespace levsim {

// ---------------------------------------------------------------------------
// Power spectral densities
// ---------------------------------------------------------------------------

/// One-sided power spectral density on a uniform frequency grid.
struct Psd {
  std::vector<double> freq_hz;    // DC .. Nyquist inclusive
  std::vector<double> power;      // [units^2 / Hz]
  double sample_rate_hz = 0.0;
  std::size_t segment_length = 0;
  std::size_t segment_count = 0;  // number of averaged segments
};

/// Welch-averaged one-sided PSD: Hann-windowed segments with fractional
/// `overlap` (default 50%), per-segment mean removal, normalized so that the
/// trapezoidal integral of `power` over `freq_hz` equals the mean-removed
/// signal variance (Parseval).  Requires series.size() >= segment_length and
/// segment_length >= 8; throws std::invalid_argument otherwise.
Psd welch_psd(const std::vector<double>& series, double sample_rate_hz,
              std::size_t segment_length, double overlap = 0.5);

/// Trapezoidal integral of the PSD over [f_lo_hz, f_hi_hz].
double band_power(const Psd& psd, double f_lo_hz, double f_hi_hz);

/// Mean PSD level over [f_lo_hz, f_hi_hz] (band power / band width covered).
double band_level(const Psd& psd, double f_lo_hz, double f_hi_hz);

// ---------------------------------------------------------------------------
// Windowed position statistics
// ---------------------------------------------------------------------------

/// Histogram plus moments of one averaging window of a sampled series.
struct WindowStats {
  double t_start_s = 0.0;
  std::size_t count = 0;             // samples in the window; histogram mass
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> counts;        // per-bin sample counts
  int modes = 0;                     // local maxima of the smoothed histogram
  bool unimodal = false;             // modes == 1
};

/// Sequence of per-window histograms of one series on a shared bin grid.
struct PdfEvolution {
  double t_avg_s = 0.0;              // window length actually used
  std::vector<double> bin_edges;     // shared grid, size bins + 1
  std::vector<WindowStats> windows;
};

/// Parameters of the histogram mode counter: the histogram is convolved with
/// a Gaussian kernel of width `smooth_sigma_bins` bins, and local maxima
/// count as modes only when their topographic prominence (height above the
/// higher of the two surrounding valleys) exceeds `prominence` times the
/// tallest smoothed bin.
struct ModeCountConfig {
  double smooth_sigma_bins = 2.0;
  double prominence = 0.05;
};

/// Number of local maxima of the smoothed histogram (see ModeCountConfig).
int count_modes(const std::vector<double>& counts,
                const ModeCountConfig& cfg = {});

/// Splits a uniformly sampled series into consecutive non-overlapping windows
/// of t_avg_s (default 3 ms) and histograms each window on a shared bin grid
/// spanning the full series range.  Throws std::invalid_argument when the
/// series is shorter than one window or inputs are degenerate.
PdfEvolution windowed_pdf(const std::vector<double>& series,
                          double sample_rate_hz, double t_avg_s = 3e-3,
                          int bins = 101, const ModeCountConfig& mode_cfg = {});

// ---------------------------------------------------------------------------
// Stabilization criteria
// ---------------------------------------------------------------------------

/// Configuration of the three per-window stabilization criteria evaluated on
/// a closed-loop run: (1) the position-signal histogram is unimodal, (2) the
/// feedback force has zero mean within one standard deviation, and (3) the
/// position spectrum shows no peak at the well oscillation frequency.
struct CriteriaConfig {
  double t_avg_s = 3e-3;            // window length
  int bins = 101;                   // histogram bins (criterion 1)
  ModeCountConfig mode_cfg{};       // histogram mode counter (criterion 1)
  double well_freq_hz = 65e3;       // center of the forbidden band (3)
  double band_delta = 0.1;          // band half-width as fraction of center
  double baseline_factor = 3.0;     // band level vs flanking median (3)
  std::size_t psd_segment = 256;    // per-window Welch segment length (3)
};

/// Criteria verdicts and the statistics behind them for one window.
struct WindowCriteria {
  double t_start_s = 0.0;
  bool unimodal = false;         // criterion 1
  bool zero_mean_force = false;  // criterion 2: |mean(u)| <= std(u)
  bool no_well_peak = false;     // criterion 3
  bool stabilized = false;       // all three
  int modes = 0;
  double chi_mean_V = 0.0;       // position signal mean / std in the window
  double chi_std_V = 0.0;
  double u_mean_V = 0.0;         // feedback voltage mean / std in the window
  double u_std_V = 0.0;
  double well_band_ratio = 0.0;  // band level / flanking median level
};

/// Per-window criteria plus whole-run fractions.
struct CriteriaReport {
  CriteriaConfig config{};
  std::vector<WindowCriteria> windows;
  double unimodal_fraction = 0.0;
  double zero_mean_force_fraction = 0.0;
  double no_well_peak_fraction = 0.0;
  double stabilized_fraction = 0.0;  // fraction with all three
};

/// Evaluates the stabilization criteria on the recorded position signal
/// chi_x and feedback voltage u of a run.  Throws std::invalid_argument when
/// the record is shorter than one window.
CriteriaReport evaluate_criteria(const RunRecord& rec,
                                 const CriteriaConfig& cfg = {});

/// Same evaluation for plain series sampled at sample_rate_hz (chi used for
/// criteria 1 and 3, u for criterion 2).
CriteriaReport evaluate_criteria_series(const std::vector<double>& chi,
                                        const std::vector<double>& u,
                                        double sample_rate_hz,
                                        const CriteriaConfig& cfg = {});

// ---------------------------------------------------------------------------
// Damped-oscillator spectrum fit
// ---------------------------------------------------------------------------

/// Parameters of a thermally driven damped harmonic oscillator observed
/// through a linear detector, fitted to a one-sided PSD in V^2/Hz:
///
///   S(f) = gain^2 * 4 Gamma kB T / (m ((W^2 - w^2)^2 + Gamma^2 w^2)) + floor
///
/// with w = 2 pi f, W the resonance [rad/s], Gamma the momentum damping rate
/// [1/s], and gain the detector sensitivity [V/m].
struct HarmonicFit {
  double omega_rad_s = 0.0;        // W
  double gamma_rad_s = 0.0;        // Gamma (angular damping rate, 1/s)
  double gain_V_m = 0.0;           // detector sensitivity
  double floor_V2_Hz = 0.0;        // additive noise floor
  double rel_residual = 0.0;       // rms of log(model/data) over the band
  int iterations = 0;
  bool converged = false;
};

/// Fits the damped-oscillator model to psd over [f_lo_hz, f_hi_hz] by
/// damped least squares on log-residuals.  mass_kg and temperature_K pin the
/// fluctuation-dissipation amplitude so the detector gain is identifiable.
/// Non-convergence is reported via converged/rel_residual/iterations rather
/// than thrown; throws std::invalid_argument when the band holds < 8 bins.
HarmonicFit fit_harmonic_psd(const Psd& psd, double f_lo_hz, double f_hi_hz,
                             double mass_kg, double temperature_K);

// ---------------------------------------------------------------------------
// Double-well Boltzmann fit
// ---------------------------------------------------------------------------

/// Double-well potential parameters inferred from a position histogram of a
/// freely diffusing (ergodic) particle via the Boltzmann relation
/// rho(x) ~ exp(-U(x)/kB T).
struct DoubleWellFit {
  double alpha_J = 0.0;       // fundamental-beam depth (< 0)
  double beta_J = 0.0;        // side-lobe-beam depth scale (< 0)
  double delta1_m = 0.0;      // side-lobe beam offset
  double k_apex_N_m = 0.0;    // curvature at the fitted apex
  double delta_apex_m = 0.0;  // fitted apex position
  double rel_residual = 0.0;  // rms relative density misfit over kept bins
};

/// Fits (alpha, beta, delta1) of the closed-form double well to a position
/// histogram: for each candidate delta1 the log-density is linear in
/// (alpha, beta, normalization) and solved by weighted least squares; delta1
/// is refined by golden-section search.  `shape` supplies the fixed beam
/// geometry (waists, Rayleigh lengths); its depth scales are ignored.
/// Throws std::invalid_argument on degenerate input and std::runtime_error
/// ("non-ergodic sample") when the histogram does not populate two lobes.
DoubleWellFit fit_double_well_pdf(const std::vector<double>& bin_edges,
                                  const std::vector<double>& counts,
                                  double temperature_K,
                                  const PotentialParams& shape);

// ---------------------------------------------------------------------------
// Force calibration from drive tones
// ---------------------------------------------------------------------------

/// Force couplings recovered from sinusoidal drive tones applied to a
/// harmonically trapped particle.
struct ForceCalibration {
  double cfx_N_V = 0.0;
  double cfz_N_V = 0.0;
  std::vector<double> tone_snr;  // per-tone amplitude / noise estimate
  double rel_residual = 0.0;     // relative LS misfit of the tone responses
};

/// Harmonic response model used to invert drive-tone responses.
struct CalibrationModel {
  double mass_kg = 0.0;
  double gamma_rad_s = 0.0;     // momentum damping rate [1/s]
  double omega_x_rad_s = 0.0;   // x trap resonance
  double omega_z_rad_s = 0.0;   // z trap resonance
  double cxx_V_m = 0.0;         // detector gains
  double cxz_V_m = 0.0;
  double czx_V_m = 0.0;
  double czz_V_m = 0.0;
  double min_snr = 3.0;         // tone acceptance threshold
};

/// Extracts the complex response of chi_x and chi_z at each drive tone by
/// least-squares projection onto the tone quadratures (nominal amplitude and
/// phase from `tones`), then inverts the known harmonic transfer functions
/// and detector gains for the two force couplings.  Meant for records taken
/// without decimation averaging, which would attenuate the tones.  Throws
/// std::runtime_error ("tone not found") when any tone response is below
/// model.min_snr times the broadband noise estimate, and
/// std::invalid_argument when tones is empty or the record is unusable.
ForceCalibration force_calibration(const RunRecord& rec,
                                   const std::vector<DriveTone>& tones,
                                   const CalibrationModel& model);

// ---------------------------------------------------------------------------
// CSV / text export
// ---------------------------------------------------------------------------

/// Writes "freq_Hz,power_per_Hz" rows.  Throws std::runtime_error on I/O
/// failure.
void write_psd_csv(const std::string& path, const Psd& psd);

/// Writes one row per bin: "bin_center,window_0,window_1,..." counts.
void write_pdf_csv(const std::string& path, const PdfEvolution& pdf);

/// Writes the per-window criteria table with a header row.
void write_criteria_csv(const std::string& path, const CriteriaReport& rep);

/// Short human-readable multi-line summary of a criteria report.
std::string criteria_summary(const CriteriaReport& rep);

}  // namespace levsim
