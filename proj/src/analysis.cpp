#include "levsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "levsim/units.hpp"

namespace levsim {

namespace {

double vec_mean(const double* v, std::size_t n) {
  return n ? std::accumulate(v, v + n, 0.0) / static_cast<double>(n) : 0.0;
}

double vec_std(const double* v, std::size_t n, double mean) {
  if (n < 2) return 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = v[i] - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(n));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    m = 0.5 * (m + lo);
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Welch PSD
// ---------------------------------------------------------------------------

Psd welch_psd(const std::vector<double>& series, double sample_rate_hz,
              std::size_t segment_length, double overlap) {
  if (segment_length < 8)
    throw std::invalid_argument("welch_psd: segment_length must be >= 8");
  if (series.size() < segment_length)
    throw std::invalid_argument(
        "welch_psd: series shorter than one segment (" +
        std::to_string(series.size()) + " < " +
        std::to_string(segment_length) + ")");
  if (!(sample_rate_hz > 0.0))
    throw std::invalid_argument("welch_psd: sample_rate_hz must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0))
    throw std::invalid_argument("welch_psd: overlap must be in [0, 1)");

  const std::size_t n = segment_length;
  std::size_t hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * (1.0 - overlap)));
  hop = std::max<std::size_t>(1, std::min(hop, n));

  // Periodic Hann window and its power, which normalizes the PSD so that the
  // integral over frequency reproduces the mean-removed signal variance.
  std::vector<double> window(n);
  double window_power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(two_pi * static_cast<double>(i) /
                                      static_cast<double>(n)));
    window_power += window[i] * window[i];
  }

  const std::size_t n_half = n / 2 + 1;
  Psd out;
  out.sample_rate_hz = sample_rate_hz;
  out.segment_length = n;
  out.freq_hz.resize(n_half);
  out.power.assign(n_half, 0.0);
  for (std::size_t k = 0; k < n_half; ++k)
    out.freq_hz[k] =
        static_cast<double>(k) * sample_rate_hz / static_cast<double>(n);

  Eigen::FFT<double> fft;
  std::vector<double> seg(n);
  std::vector<std::complex<double>> spec;
  std::size_t count = 0;
  for (std::size_t start = 0; start + n <= series.size(); start += hop) {
    const double mean = vec_mean(series.data() + start, n);
    for (std::size_t i = 0; i < n; ++i)
      seg[i] = (series[start + i] - mean) * window[i];
    fft.fwd(spec, seg);
    for (std::size_t k = 0; k < n_half; ++k) {
      const double two_sided = std::norm(spec[k]);
      const bool edge = (k == 0) || (2 * k == n);
      out.power[k] += (edge ? 1.0 : 2.0) * two_sided;
    }
    ++count;
  }
  const double norm = 1.0 / (sample_rate_hz * window_power *
                             static_cast<double>(count));
  for (double& p : out.power) p *= norm;
  out.segment_count = count;
  return out;
}

double band_power(const Psd& psd, double f_lo_hz, double f_hi_hz) {
  if (psd.freq_hz.size() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < psd.freq_hz.size(); ++k) {
    const double a = std::max(psd.freq_hz[k], f_lo_hz);
    const double b = std::min(psd.freq_hz[k + 1], f_hi_hz);
    if (b <= a) continue;
    const double df = psd.freq_hz[k + 1] - psd.freq_hz[k];
    // Trapezoid on the overlap of [a, b] with this grid interval.
    const double pa = psd.power[k] +
                      (psd.power[k + 1] - psd.power[k]) *
                          (a - psd.freq_hz[k]) / df;
    const double pb = psd.power[k] +
                      (psd.power[k + 1] - psd.power[k]) *
                          (b - psd.freq_hz[k]) / df;
    acc += 0.5 * (pa + pb) * (b - a);
  }
  return acc;
}

double band_level(const Psd& psd, double f_lo_hz, double f_hi_hz) {
  const double width = f_hi_hz - f_lo_hz;
  if (!(width > 0.0)) return 0.0;
  const double lo = std::max(f_lo_hz, psd.freq_hz.front());
  const double hi = std::min(f_hi_hz, psd.freq_hz.back());
  if (!(hi > lo)) return 0.0;
  return band_power(psd, lo, hi) / (hi - lo);
}

// ---------------------------------------------------------------------------
// Histogram mode counting and windowed PDFs
// ---------------------------------------------------------------------------

int count_modes(const std::vector<double>& counts, const ModeCountConfig& cfg) {
  const std::size_t n = counts.size();
  if (n == 0) return 0;
  const double sigma = std::max(cfg.smooth_sigma_bins, 1e-9);
  const int reach = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> smooth(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = -reach; j <= reach; ++j) {
      const long long k = static_cast<long long>(i) + j;
      if (k < 0 || k >= static_cast<long long>(n)) continue;
      const double w =
          std::exp(-0.5 * static_cast<double>(j) * static_cast<double>(j) /
                   (sigma * sigma));
      acc += counts[static_cast<std::size_t>(k)] * w;
    }
    smooth[i] = acc;
  }
  const double peak = *std::max_element(smooth.begin(), smooth.end());
  if (!(peak > 0.0)) return 0;
  const double floor = cfg.prominence * peak;

  // Candidate modes: maximal runs of equal smoothed values whose neighbors
  // on both sides are strictly lower (or absent).
  std::vector<std::size_t> peaks;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && smooth[j + 1] == smooth[i]) ++j;
    const bool left_ok = (i == 0) || (smooth[i - 1] < smooth[i]);
    const bool right_ok = (j + 1 == n) || (smooth[j + 1] < smooth[j]);
    if (left_ok && right_ok) peaks.push_back(i);
    i = j + 1;
  }

  // Count peaks by topographic prominence: height above the higher of the
  // two bases, where each base is the minimum between the peak and the
  // nearest higher value (or the histogram edge).  Statistical ripples on
  // the flank of a taller peak have tiny prominence and are ignored; a
  // genuine second lobe is separated by a deep valley and survives.
  int modes = 0;
  for (const std::size_t p : peaks) {
    const double h = smooth[p];
    double left_base = h;
    for (std::size_t k = p; k-- > 0;) {
      if (smooth[k] > h) break;
      left_base = std::min(left_base, smooth[k]);
    }
    double right_base = h;
    for (std::size_t k = p + 1; k < n; ++k) {
      if (smooth[k] > h) break;
      right_base = std::min(right_base, smooth[k]);
    }
    if (h - std::max(left_base, right_base) > floor) ++modes;
  }
  return modes;
}

PdfEvolution windowed_pdf(const std::vector<double>& series,
                          double sample_rate_hz, double t_avg_s, int bins,
                          const ModeCountConfig& mode_cfg) {
  if (!(sample_rate_hz > 0.0))
    throw std::invalid_argument("windowed_pdf: sample_rate_hz must be positive");
  if (!(t_avg_s > 0.0))
    throw std::invalid_argument("windowed_pdf: t_avg_s must be positive");
  if (bins < 2) throw std::invalid_argument("windowed_pdf: bins must be >= 2");
  // Floor, so a window never covers more than t_avg and a record of duration
  // T yields at least floor(T / t_avg) windows.
  const std::size_t wlen =
      static_cast<std::size_t>(std::floor(t_avg_s * sample_rate_hz));
  if (wlen < 2)
    throw std::invalid_argument(
        "windowed_pdf: window shorter than two samples");
  if (series.size() < wlen)
    throw std::invalid_argument(
        "windowed_pdf: series shorter than one averaging window (" +
        std::to_string(series.size()) + " samples < " +
        std::to_string(wlen) + ")");
  for (double v : series)
    if (!std::isfinite(v))
      throw std::invalid_argument(
          "windowed_pdf: series contains non-finite values");

  double lo = *std::min_element(series.begin(), series.end());
  double hi = *std::max_element(series.begin(), series.end());
  if (hi <= lo) {
    const double pad = std::max(std::abs(lo) * 1e-6, 1e-12);
    lo -= pad;
    hi += pad;
  }
  const double width = (hi - lo) / bins;

  PdfEvolution out;
  out.t_avg_s = static_cast<double>(wlen) / sample_rate_hz;
  out.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) out.bin_edges[static_cast<std::size_t>(b)] = lo + width * b;

  const std::size_t n_windows = series.size() / wlen;
  out.windows.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    const double* data = series.data() + w * wlen;
    WindowStats ws;
    ws.t_start_s = static_cast<double>(w * wlen) / sample_rate_hz;
    ws.count = wlen;
    ws.mean = vec_mean(data, wlen);
    ws.std = vec_std(data, wlen, ws.mean);
    ws.counts.assign(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t i = 0; i < wlen; ++i) {
      int b = static_cast<int>((data[i] - lo) / width);
      b = std::clamp(b, 0, bins - 1);
      ws.counts[static_cast<std::size_t>(b)] += 1.0;
    }
    ws.modes = count_modes(ws.counts, mode_cfg);
    ws.unimodal = (ws.modes == 1);
    out.windows.push_back(std::move(ws));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stabilization criteria
// ---------------------------------------------------------------------------

CriteriaReport evaluate_criteria_series(const std::vector<double>& chi,
                                        const std::vector<double>& u,
                                        double sample_rate_hz,
                                        const CriteriaConfig& cfg) {
  if (chi.size() != u.size())
    throw std::invalid_argument(
        "evaluate_criteria: position and force series differ in length");
  const double f_hi = cfg.well_freq_hz * (1.0 + 2.0 * cfg.band_delta);
  if (sample_rate_hz < 2.0 * f_hi)
    throw std::invalid_argument(
        "evaluate_criteria: record rate too low to resolve the well "
        "frequency band (need >= " +
        std::to_string(2.0 * f_hi) + " Hz)");

  const PdfEvolution pdf =
      windowed_pdf(chi, sample_rate_hz, cfg.t_avg_s, cfg.bins, cfg.mode_cfg);
  const std::size_t wlen = pdf.windows.empty()
                               ? 0
                               : pdf.windows.front().count;

  CriteriaReport rep;
  rep.config = cfg;
  rep.windows.reserve(pdf.windows.size());

  std::size_t seg = cfg.psd_segment;
  while (seg > wlen) seg /= 2;
  seg = std::max<std::size_t>(seg, 8);

  const double c_lo = cfg.well_freq_hz * (1.0 - cfg.band_delta);
  const double c_hi = cfg.well_freq_hz * (1.0 + cfg.band_delta);
  const double fl_lo = cfg.well_freq_hz * (1.0 - 2.0 * cfg.band_delta);
  const double fr_hi = cfg.well_freq_hz * (1.0 + 2.0 * cfg.band_delta);

  std::size_t n_uni = 0, n_zero = 0, n_nopeak = 0, n_stab = 0;
  for (std::size_t w = 0; w < pdf.windows.size(); ++w) {
    const WindowStats& ws = pdf.windows[w];
    WindowCriteria wc;
    wc.t_start_s = ws.t_start_s;
    wc.modes = ws.modes;
    wc.unimodal = ws.unimodal;
    wc.chi_mean_V = ws.mean;
    wc.chi_std_V = ws.std;

    const double* uw = u.data() + w * wlen;
    wc.u_mean_V = vec_mean(uw, wlen);
    wc.u_std_V = vec_std(uw, wlen, wc.u_mean_V);
    wc.zero_mean_force = std::abs(wc.u_mean_V) <= wc.u_std_V;

    const std::vector<double> chi_w(chi.begin() + static_cast<long>(w * wlen),
                                    chi.begin() +
                                        static_cast<long>((w + 1) * wlen));
    const Psd psd = welch_psd(chi_w, sample_rate_hz, seg);
    const double center = band_level(psd, c_lo, c_hi);
    std::vector<double> flank;
    for (std::size_t k = 0; k < psd.freq_hz.size(); ++k) {
      const double f = psd.freq_hz[k];
      if ((f >= fl_lo && f < c_lo) || (f > c_hi && f <= fr_hi))
        flank.push_back(psd.power[k]);
    }
    const double base = median_of(flank);
    if (base > 0.0) {
      wc.well_band_ratio = center / base;
      wc.no_well_peak = wc.well_band_ratio <= cfg.baseline_factor;
    } else {
      wc.well_band_ratio = center > 0.0
                               ? std::numeric_limits<double>::infinity()
                               : 1.0;
      wc.no_well_peak = !(center > 0.0);
    }

    wc.stabilized = wc.unimodal && wc.zero_mean_force && wc.no_well_peak;
    n_uni += wc.unimodal;
    n_zero += wc.zero_mean_force;
    n_nopeak += wc.no_well_peak;
    n_stab += wc.stabilized;
    rep.windows.push_back(std::move(wc));
  }
  const double nw = static_cast<double>(rep.windows.size());
  if (nw > 0) {
    rep.unimodal_fraction = static_cast<double>(n_uni) / nw;
    rep.zero_mean_force_fraction = static_cast<double>(n_zero) / nw;
    rep.no_well_peak_fraction = static_cast<double>(n_nopeak) / nw;
    rep.stabilized_fraction = static_cast<double>(n_stab) / nw;
  }
  return rep;
}

CriteriaReport evaluate_criteria(const RunRecord& rec,
                                 const CriteriaConfig& cfg) {
  return evaluate_criteria_series(rec.chi_x_V, rec.u_V, rec.record_rate_hz,
                                  cfg);
}

// ---------------------------------------------------------------------------
// Damped-oscillator spectrum fit
// ---------------------------------------------------------------------------

namespace {

// Model in log-parameters theta = (log A, log W, log G, log F):
//   S(w) = A / ((W^2 - w^2)^2 + G^2 w^2) + F
struct HarmonicModel {
  // Returns model value and the gradient of log(model) w.r.t. theta.
  static double eval(const Eigen::Vector4d& theta, double w,
                     Eigen::Vector4d* grad) {
    const double A = std::exp(theta[0]);
    const double W = std::exp(theta[1]);
    const double G = std::exp(theta[2]);
    const double F = std::exp(theta[3]);
    const double d = (W * W - w * w);
    const double denom = d * d + G * G * w * w;
    const double lorentz = A / denom;
    const double m = lorentz + F;
    if (grad) {
      (*grad)[0] = lorentz / m;
      (*grad)[1] = -lorentz / m * (4.0 * W * W * d) / denom;
      (*grad)[2] = -lorentz / m * (2.0 * G * G * w * w) / denom;
      (*grad)[3] = F / m;
    }
    return m;
  }
};

}  // namespace

HarmonicFit fit_harmonic_psd(const Psd& psd, double f_lo_hz, double f_hi_hz,
                             double mass_kg, double temperature_K) {
  if (!(mass_kg > 0.0) || !(temperature_K > 0.0))
    throw std::invalid_argument(
        "fit_harmonic_psd: mass and temperature must be positive");
  std::vector<double> w_i, s_i;
  double peak = 0.0, f_peak = 0.0, s_min = std::numeric_limits<double>::max();
  for (std::size_t k = 0; k < psd.freq_hz.size(); ++k) {
    const double f = psd.freq_hz[k];
    if (f < f_lo_hz || f > f_hi_hz || f <= 0.0) continue;
    if (!(psd.power[k] > 0.0)) continue;
    w_i.push_back(two_pi * f);
    s_i.push_back(psd.power[k]);
    if (psd.power[k] > peak) {
      peak = psd.power[k];
      f_peak = f;
    }
    s_min = std::min(s_min, psd.power[k]);
  }
  if (w_i.size() < 8)
    throw std::invalid_argument(
        "fit_harmonic_psd: fewer than 8 positive PSD bins in the fit band");

  // Initial guesses: resonance at the peak bin, damping from the half-power
  // width around it, amplitude from the peak height, floor from the minimum.
  const double W0 = two_pi * f_peak;
  double f_left = f_lo_hz, f_right = f_hi_hz;
  for (std::size_t k = 0; k < w_i.size(); ++k) {
    const double f = w_i[k] / two_pi;
    if (s_i[k] >= 0.5 * peak) continue;
    if (f < f_peak) f_left = std::max(f_left, f);
    if (f > f_peak) f_right = std::min(f_right, f);
  }
  double G0 = two_pi * (f_right - f_left);
  if (!(G0 > 0.0) || G0 > W0) G0 = W0 / 20.0;
  const double F0 = std::max(0.5 * s_min, 1e-12 * peak);
  const double A0 = std::max(peak - F0, 0.1 * peak) * (G0 * G0 * W0 * W0);

  Eigen::Vector4d theta(std::log(A0), std::log(W0), std::log(G0),
                        std::log(F0));
  const std::size_t n = w_i.size();
  auto cost_of = [&](const Eigen::Vector4d& th) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = HarmonicModel::eval(th, w_i[i], nullptr);
      const double r = std::log(s_i[i] / m);
      c += r * r;
    }
    return c;
  };

  HarmonicFit fit;
  double lambda = 1e-3;
  double cost = cost_of(theta);
  Eigen::Matrix4d jtj;
  Eigen::Vector4d jtr, grad;
  int it = 0;
  for (; it < 500; ++it) {
    jtj.setZero();
    jtr.setZero();
    for (std::size_t i = 0; i < n; ++i) {
      const double m = HarmonicModel::eval(theta, w_i[i], &grad);
      const double r = std::log(s_i[i] / m);
      jtj += grad * grad.transpose();
      jtr += grad * r;
    }
    bool stepped = false;
    for (int tries = 0; tries < 24; ++tries) {
      Eigen::Matrix4d damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Vector4d step = damped.ldlt().solve(jtr);
      const Eigen::Vector4d cand = theta + step;
      const double c = cost_of(cand);
      if (std::isfinite(c) && c <= cost) {
        const double drop = cost - c;
        theta = cand;
        cost = c;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (step.cwiseAbs().maxCoeff() < 1e-12 || drop < 1e-15 * (1.0 + cost))
          fit.converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) {
      // No downhill step found at any damping: stationary point.
      fit.converged = true;
      break;
    }
    if (fit.converged) break;
  }

  const double A = std::exp(theta[0]);
  fit.omega_rad_s = std::exp(theta[1]);
  fit.gamma_rad_s = std::exp(theta[2]);
  fit.floor_V2_Hz = std::exp(theta[3]);
  fit.gain_V_m = std::sqrt(A * mass_kg /
                           (4.0 * fit.gamma_rad_s * k_boltzmann_J_K *
                            temperature_K));
  fit.rel_residual = std::sqrt(cost / static_cast<double>(n));
  fit.iterations = it + 1;
  if (fit.omega_rad_s < two_pi * f_lo_hz || fit.omega_rad_s > two_pi * f_hi_hz)
    fit.converged = false;
  return fit;
}

// ---------------------------------------------------------------------------
// Double-well Boltzmann fit
// ---------------------------------------------------------------------------

namespace {

struct BoltzmannLsq {
  const std::vector<double>& x;        // kept bin centers
  const std::vector<double>& logn;     // log counts
  const std::vector<double>& weight;   // counts
  const PotentialParams& shape;
  double kbt;

  // Weighted LS of log n_i = -(alpha fA(x_i) + beta fB(x_i; d1))/kbt + c
  // for fixed d1.  Returns the cost; outputs alpha, beta, c.
  double solve(double d1, double* alpha, double* beta, double* c) const {
    PotentialParams pa = shape;
    pa.p00_W = pa.p00_ref_W = 1.0;
    pa.p01_W = pa.p01_ref_W = 1.0;
    pa.alpha_scale_J = 1.0;
    pa.beta_scale_J = 0.0;
    PotentialParams pb = pa;
    pb.alpha_scale_J = 0.0;
    pb.beta_scale_J = 1.0;
    pb.delta1_m = d1;

    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    const std::size_t n = x.size();
    std::vector<double> fa(n), fb(n);
    for (std::size_t i = 0; i < n; ++i) {
      fa[i] = -double_well_1d(x[i], pa) / kbt;
      fb[i] = -double_well_1d(x[i], pb) / kbt;
      const Eigen::Vector3d row(fa[i], fb[i], 1.0);
      ata += weight[i] * row * row.transpose();
      atb += weight[i] * logn[i] * row;
    }
    const Eigen::Vector3d sol = ata.ldlt().solve(atb);
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = logn[i] - (sol[0] * fa[i] + sol[1] * fb[i] + sol[2]);
      cost += weight[i] * r * r;
    }
    if (alpha) *alpha = sol[0];
    if (beta) *beta = sol[1];
    if (c) *c = sol[2];
    return cost;
  }
};

}  // namespace

DoubleWellFit fit_double_well_pdf(const std::vector<double>& bin_edges,
                                  const std::vector<double>& counts,
                                  double temperature_K,
                                  const PotentialParams& shape) {
  if (bin_edges.size() != counts.size() + 1 || counts.size() < 8)
    throw std::invalid_argument(
        "fit_double_well_pdf: need bin_edges.size() == counts.size() + 1 and "
        ">= 8 bins");
  if (!(temperature_K > 0.0))
    throw std::invalid_argument(
        "fit_double_well_pdf: temperature must be positive");

  if (count_modes(counts) < 2)
    throw std::runtime_error(
        "non-ergodic sample: position histogram does not populate two lobes");

  std::vector<double> x, logn, weight;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!(counts[i] > 0.0)) continue;
    x.push_back(0.5 * (bin_edges[i] + bin_edges[i + 1]));
    logn.push_back(std::log(counts[i]));
    weight.push_back(counts[i]);
  }
  if (x.size() < 8)
    throw std::invalid_argument(
        "fit_double_well_pdf: fewer than 8 occupied bins");

  const double kbt = k_boltzmann_J_K * temperature_K;
  const BoltzmannLsq lsq{x, logn, weight, shape, kbt};

  // Coarse scan over the side-beam offset, then golden-section refinement.
  const double span = 0.25 * (bin_edges.back() - bin_edges.front());
  const int n_scan = 41;
  double best_d = 0.0, best_cost = std::numeric_limits<double>::max();
  for (int i = 0; i < n_scan; ++i) {
    const double d = -span + 2.0 * span * i / (n_scan - 1);
    const double c = lsq.solve(d, nullptr, nullptr, nullptr);
    if (c < best_cost) {
      best_cost = c;
      best_d = d;
    }
  }
  const double step = 2.0 * span / (n_scan - 1);
  double a = best_d - step, b = best_d + step;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double c1 = lsq.solve(x1, nullptr, nullptr, nullptr);
  double c2 = lsq.solve(x2, nullptr, nullptr, nullptr);
  for (int it = 0; it < 80 && (b - a) > 1e-12; ++it) {
    if (c1 < c2) {
      b = x2;
      x2 = x1;
      c2 = c1;
      x1 = b - gr * (b - a);
      c1 = lsq.solve(x1, nullptr, nullptr, nullptr);
    } else {
      a = x1;
      x1 = x2;
      c1 = c2;
      x2 = a + gr * (b - a);
      c2 = lsq.solve(x2, nullptr, nullptr, nullptr);
    }
  }
  const double d1 = 0.5 * (a + b);

  DoubleWellFit fit;
  double alpha = 0.0, beta = 0.0, c = 0.0;
  const double cost = lsq.solve(d1, &alpha, &beta, &c);
  fit.alpha_J = alpha;
  fit.beta_J = beta;
  fit.delta1_m = d1;
  const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
  fit.rel_residual = std::sqrt(cost / wsum);

  PotentialParams fitted = shape;
  fitted.p00_W = fitted.p00_ref_W = 1.0;
  fitted.p01_W = fitted.p01_ref_W = 1.0;
  fitted.alpha_scale_J = alpha;
  fitted.beta_scale_J = beta;
  fitted.delta1_m = d1;
  const ApexInfo apex = find_apex(fitted);
  if (!apex.valid)
    throw std::runtime_error(
        "fit_double_well_pdf: fitted potential has no central barrier");
  fit.k_apex_N_m = apex.k_apex_N_m;
  fit.delta_apex_m = apex.delta_apex_m;
  return fit;
}

// ---------------------------------------------------------------------------
// Force calibration from drive tones
// ---------------------------------------------------------------------------

namespace {

// Complex amplitude X of series ~ Re{X exp(i w t)} by LS projection onto
// cos/sin quadratures plus a constant offset.
std::complex<double> tone_amplitude(const std::vector<double>& t,
                                    const std::vector<double>& v,
                                    std::size_t start, double omega) {
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atb = Eigen::Vector3d::Zero();
  for (std::size_t i = start; i < t.size(); ++i) {
    const double ph = omega * t[i];
    const Eigen::Vector3d row(std::cos(ph), std::sin(ph), 1.0);
    ata += row * row.transpose();
    atb += v[i] * row;
  }
  const Eigen::Vector3d sol = ata.ldlt().solve(atb);
  // v = a cos(wt) + b sin(wt) = Re{(a - i b) exp(i w t)}
  return {sol[0], -sol[1]};
}

std::complex<double> harmonic_response(double mass_kg, double omega0,
                                       double gamma, double w) {
  return 1.0 / (mass_kg * std::complex<double>(omega0 * omega0 - w * w,
                                               gamma * w));
}

}  // namespace

ForceCalibration force_calibration(const RunRecord& rec,
                                   const std::vector<DriveTone>& tones,
                                   const CalibrationModel& model) {
  if (tones.empty())
    throw std::invalid_argument("force_calibration: no drive tones given");
  if (rec.size() < 64)
    throw std::invalid_argument("force_calibration: record too short");
  if (!(model.mass_kg > 0.0) || !(model.omega_x_rad_s > 0.0) ||
      !(model.omega_z_rad_s > 0.0))
    throw std::invalid_argument(
        "force_calibration: model mass and resonances must be positive");

  // Skip the leading quarter of the record so trap ring-in does not bias the
  // projections.
  const std::size_t start = rec.size() / 4;
  const std::size_t n_used = rec.size() - start;

  // Broadband noise level of each detector channel after removing all tones
  // and the mean; the per-quadrature estimation noise scales as
  // sqrt(2 / n_used).
  auto residual_std = [&](const std::vector<double>& v,
                          const std::vector<std::complex<double>>& amps) {
    double mean = vec_mean(v.data() + start, n_used);
    double ss = 0.0;
    for (std::size_t i = start; i < rec.size(); ++i) {
      double r = v[i] - mean;
      for (std::size_t j = 0; j < tones.size(); ++j) {
        const double ph = two_pi * tones[j].freq_hz * rec.t_s[i];
        r -= amps[j].real() * std::cos(ph) - amps[j].imag() * std::sin(ph);
      }
      ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(n_used));
  };

  std::vector<std::complex<double>> ax(tones.size()), az(tones.size()),
      au(tones.size());
  for (std::size_t j = 0; j < tones.size(); ++j) {
    const double w = two_pi * tones[j].freq_hz;
    ax[j] = tone_amplitude(rec.t_s, rec.chi_x_V, start, w);
    az[j] = tone_amplitude(rec.t_s, rec.chi_z_V, start, w);
    // Nominal drive phasor: amp sin(w t + phase) = Re{U exp(i w t)}.
    au[j] = std::polar(tones[j].amp_V, tones[j].phase_rad - 0.5 * pi);
  }
  const double noise_x = residual_std(rec.chi_x_V, ax);
  const double noise_z = residual_std(rec.chi_z_V, az);
  const double amp_noise =
      std::sqrt(2.0 / static_cast<double>(n_used));

  ForceCalibration cal;
  cal.tone_snr.resize(tones.size());
  for (std::size_t j = 0; j < tones.size(); ++j) {
    const double snr_x =
        noise_x > 0.0 ? std::abs(ax[j]) / (noise_x * amp_noise)
                      : (std::abs(ax[j]) > 0.0
                             ? std::numeric_limits<double>::infinity()
                             : 0.0);
    const double snr_z =
        noise_z > 0.0 ? std::abs(az[j]) / (noise_z * amp_noise)
                      : (std::abs(az[j]) > 0.0
                             ? std::numeric_limits<double>::infinity()
                             : 0.0);
    cal.tone_snr[j] = std::max(snr_x, snr_z);
    if (!(cal.tone_snr[j] >= model.min_snr)) {
      std::ostringstream msg;
      msg << "tone not found: no detector response at " << tones[j].freq_hz
          << " Hz (SNR " << cal.tone_snr[j] << " < " << model.min_snr << ")";
      throw std::runtime_error(msg.str());
    }
  }

  // Stack Re/Im of  chi_x = (cxx Hx cfx + cxz Hz cfz) u  and the analogous
  // chi_z relation for every tone; solve the 4T x 2 real LS system.
  Eigen::MatrixXd m(4 * tones.size(), 2);
  Eigen::VectorXd rhs(4 * tones.size());
  for (std::size_t j = 0; j < tones.size(); ++j) {
    const double w = two_pi * tones[j].freq_hz;
    const std::complex<double> hx =
        harmonic_response(model.mass_kg, model.omega_x_rad_s,
                          model.gamma_rad_s, w);
    const std::complex<double> hz =
        harmonic_response(model.mass_kg, model.omega_z_rad_s,
                          model.gamma_rad_s, w);
    const std::complex<double> txx = model.cxx_V_m * hx * au[j];
    const std::complex<double> txz = model.cxz_V_m * hz * au[j];
    const std::complex<double> tzx = model.czx_V_m * hx * au[j];
    const std::complex<double> tzz = model.czz_V_m * hz * au[j];
    const std::size_t r = 4 * j;
    m(r + 0, 0) = txx.real();
    m(r + 0, 1) = txz.real();
    m(r + 1, 0) = txx.imag();
    m(r + 1, 1) = txz.imag();
    m(r + 2, 0) = tzx.real();
    m(r + 2, 1) = tzz.real();
    m(r + 3, 0) = tzx.imag();
    m(r + 3, 1) = tzz.imag();
    rhs[r + 0] = ax[j].real();
    rhs[r + 1] = ax[j].imag();
    rhs[r + 2] = az[j].real();
    rhs[r + 3] = az[j].imag();
  }
  const Eigen::Vector2d sol =
      m.colPivHouseholderQr().solve(rhs);
  cal.cfx_N_V = sol[0];
  cal.cfz_N_V = sol[1];
  const double rhs_norm = rhs.norm();
  cal.rel_residual =
      rhs_norm > 0.0 ? (m * sol - rhs).norm() / rhs_norm : 0.0;
  return cal;
}

// ---------------------------------------------------------------------------
// CSV / text export
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.precision(12);
  return out;
}

}  // namespace

void write_psd_csv(const std::string& path, const Psd& psd) {
  std::ofstream out = open_csv(path);
  out << "freq_Hz,power_per_Hz\n";
  for (std::size_t k = 0; k < psd.freq_hz.size(); ++k)
    out << psd.freq_hz[k] << ',' << psd.power[k] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_pdf_csv(const std::string& path, const PdfEvolution& pdf) {
  std::ofstream out = open_csv(path);
  out << "bin_center";
  for (const WindowStats& w : pdf.windows) out << ",t" << w.t_start_s << "s";
  out << '\n';
  const std::size_t bins = pdf.bin_edges.size() - 1;
  for (std::size_t b = 0; b < bins; ++b) {
    out << 0.5 * (pdf.bin_edges[b] + pdf.bin_edges[b + 1]);
    for (const WindowStats& w : pdf.windows) out << ',' << w.counts[b];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_criteria_csv(const std::string& path, const CriteriaReport& rep) {
  std::ofstream out = open_csv(path);
  out << "t_start_s,unimodal,zero_mean_force,no_well_peak,stabilized,modes,"
         "chi_mean_V,chi_std_V,u_mean_V,u_std_V,well_band_ratio\n";
  for (const WindowCriteria& w : rep.windows) {
    out << w.t_start_s << ',' << w.unimodal << ',' << w.zero_mean_force << ','
        << w.no_well_peak << ',' << w.stabilized << ',' << w.modes << ','
        << w.chi_mean_V << ',' << w.chi_std_V << ',' << w.u_mean_V << ','
        << w.u_std_V << ',' << w.well_band_ratio << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string criteria_summary(const CriteriaReport& rep) {
  std::ostringstream os;
  os.precision(4);
  os << "windows: " << rep.windows.size() << " x " << rep.config.t_avg_s * 1e3
     << " ms\n"
     << "unimodal PDF:     " << rep.unimodal_fraction * 100.0 << "%\n"
     << "zero-mean force:  " << rep.zero_mean_force_fraction * 100.0 << "%\n"
     << "no well peak:     " << rep.no_well_peak_fraction * 100.0 << "%\n"
     << "all three:        " << rep.stabilized_fraction * 100.0 << "%\n";
  return os.str();
}

}  // namespace levsim
