#include "levsim/levsim.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include "levsim/analysis.hpp"
#include "levsim/control.hpp"
#include "levsim/dynamics.hpp"
#include "levsim/linalg.hpp"
#include "levsim/scenario.hpp"
#include "levsim/trace.hpp"
#include "levsim/units.hpp"

struct levsim_scenario {
  levsim::Scenario s;
};

struct levsim_record {
  levsim::RunRecord r;
};

struct levsim_psd {
  levsim::Psd p;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

levsim_status classify(const std::exception& e) {
  set_error(e.what());
  if (dynamic_cast<const levsim::ScenarioError*>(&e)) return LEVSIM_ERR_INVALID;
  if (dynamic_cast<const levsim::SynthesisError*>(&e))
    return LEVSIM_ERR_SYNTHESIS;
  if (dynamic_cast<const levsim::TraceError*>(&e)) return LEVSIM_ERR_IO;
  if (dynamic_cast<const std::invalid_argument*>(&e))
    return LEVSIM_ERR_INVALID;
  if (dynamic_cast<const std::runtime_error*>(&e)) return LEVSIM_ERR_INVALID;
  return LEVSIM_ERR_INTERNAL;
}

/* Runs fn inside the exception barrier shared by the whole C surface. */
template <typename Fn>
levsim_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return classify(e);
  } catch (...) {
    set_error("unknown failure");
    return LEVSIM_ERR_INTERNAL;
  }
}

levsim_status require(bool ok, const char* msg) {
  if (ok) return LEVSIM_OK;
  set_error(msg);
  return LEVSIM_ERR_INVALID;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string format_eigs(const Eigen::VectorXcd& eigs) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(4);
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    if (i) os << ", ";
    os << eigs[i].real();
    if (eigs[i].imag() != 0.0)
      os << (eigs[i].imag() < 0 ? " - " : " + ")
         << std::abs(eigs[i].imag()) << "i";
  }
  return os.str();
}

std::string render_design_report(const levsim::Scenario& sc,
                                 const levsim::LqgDesign& d) {
  using levsim::two_pi;
  const levsim::CalibratedModel& m = d.model;
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(6);

  os << "controller design report\n";
  os << "  scenario:            " << sc.name << "\n";
  os << "  variant:             " << levsim::variant_name(d.variant) << "\n";
  os << "  sample rate:         " << d.config.sample_rate_hz << " Hz\n";
  os << "  loop delay:          " << d.config.delay_samples << " samples ("
     << d.config.delay_samples / d.config.sample_rate_hz * 1e9 << " ns)\n";
  os << "  forward prediction:  "
     << (d.config.forward_predict ? "on" : "off") << "\n";
  os << "\noperating point (apex)\n";
  os << "  mass:                " << m.mass_kg << " kg\n";
  os << "  gamma/m:             " << m.big_gamma_s << " 1/s\n";
  os << "  apex curvature:      " << m.k_apex_N_m << " N/m\n";
  os << "  instability rate:    "
     << std::sqrt(-m.k_apex_N_m / m.mass_kg) / two_pi << " Hz\n";
  os << "  axial frequency:     " << m.omega_z_rad_s / two_pi << " Hz\n";
  os << "  force gains:         cfx " << m.cfx_N_V << " N/V, cfz "
     << m.cfz_N_V << " N/V\n";
  os << "  detection gains:     cxx " << m.cxx_V_m << ", cxz " << m.cxz_V_m
     << ", czx " << m.czx_V_m << ", czz " << m.czz_V_m << " V/m\n";
  os << "  apex estimate bound: +/- " << m.apex_max_m << " m\n";

  os << "\nfeedback gain (on updated estimate, V per state unit)\n";
  for (Eigen::Index i = 0; i < d.realization.k.size(); ++i)
    os << "  k[" << d.realization.state_names[static_cast<std::size_t>(i)]
       << "] = " << d.realization.k[i] << "\n";

  os << "\nregulator eigenvalues (continuous, 1/s)\n  "
     << format_eigs(d.reg_eigs) << "\n";
  os << "estimator eigenvalues (continuous, 1/s)\n  "
     << format_eigs(d.est_eigs) << "\n";
  os << "discrete estimator spectral radius: ";
  os.precision(9);
  os << d.est_spectral_radius << "\n";
  os.precision(6);
  if (d.tau_apex_s > 0.0) {
    os << "apex estimator time constant: " << d.tau_apex_s * 1e3 << " ms\n";
  }

  // Predicted closed-loop scale for quick sanity checks.
  if (d.sigma_reg.rows() > 0 && d.p_est.rows() > 0) {
    const double var_err =
        d.sigma_reg(0, 0) + d.p_est(0, 0);
    os << "predicted x-error std about the apex: " << std::sqrt(var_err)
       << " m\n";
  }
  return os.str();
}

levsim::LqgDesign design_for(const levsim::Scenario& s) {
  if (s.control.variant == levsim::ControllerVariant::none)
    throw levsim::ScenarioError(
        "scenario.control.variant is 'none': nothing to design");
  levsim::ControlConfig cc = s.control;
  const levsim::CalibratedModel model = levsim::build_calibrated_model(
      s.potential, s.particle, s.detection, cc);
  return levsim::design_controller(model, cc);
}

}  // namespace

/* ------------------------------------------------------------ lifecycle */

const char* levsim_last_error(void) { return g_last_error.c_str(); }

const char* levsim_version(void) { return "1.0.0"; }

void levsim_string_free(char* text) { delete[] text; }

/* ------------------------------------------------------------ scenarios */

levsim_status levsim_scenario_default(levsim_scenario** out) {
  if (levsim_status st = require(out != nullptr, "out is NULL"); st) return st;
  return guarded([&] {
    *out = new levsim_scenario{levsim::default_scenario()};
    return LEVSIM_OK;
  });
}

levsim_status levsim_scenario_bundled(const char* name, levsim_scenario** out) {
  if (levsim_status st =
          require(name != nullptr && out != nullptr, "name or out is NULL");
      st)
    return st;
  return guarded([&] {
    *out = new levsim_scenario{levsim::bundled_scenario(name)};
    return LEVSIM_OK;
  });
}

levsim_status levsim_scenario_parse(const char* json_text,
                                    levsim_scenario** out) {
  if (levsim_status st = require(json_text != nullptr && out != nullptr,
                                 "json_text or out is NULL");
      st)
    return st;
  return guarded([&] {
    *out = new levsim_scenario{levsim::parse_scenario(json_text)};
    return LEVSIM_OK;
  });
}

levsim_status levsim_scenario_load(const char* path, levsim_scenario** out) {
  if (levsim_status st =
          require(path != nullptr && out != nullptr, "path or out is NULL");
      st)
    return st;
  return guarded([&] {
    *out = new levsim_scenario{levsim::load_scenario(path)};
    return LEVSIM_OK;
  });
}

void levsim_scenario_free(levsim_scenario* s) { delete s; }

levsim_status levsim_scenario_serialize(const levsim_scenario* s,
                                        char** out_text) {
  if (levsim_status st = require(s != nullptr && out_text != nullptr,
                                 "scenario or out_text is NULL");
      st)
    return st;
  return guarded([&] {
    *out_text = dup_string(levsim::serialize_scenario(s->s));
    return LEVSIM_OK;
  });
}

const char* levsim_scenario_name(const levsim_scenario* s) {
  return s ? s->s.name.c_str() : nullptr;
}

const char* levsim_scenario_variant(const levsim_scenario* s) {
  return s ? levsim::variant_name(s->s.control.variant) : nullptr;
}

double levsim_scenario_duration_s(const levsim_scenario* s) {
  return s ? s->s.duration_s : 0.0;
}

uint64_t levsim_scenario_seed(const levsim_scenario* s) {
  return s ? s->s.seed : 0;
}

levsim_status levsim_scenario_set_seed(levsim_scenario* s, uint64_t seed) {
  if (levsim_status st = require(s != nullptr, "scenario is NULL"); st)
    return st;
  s->s.seed = seed;
  return LEVSIM_OK;
}

levsim_status levsim_scenario_set_variant(levsim_scenario* s,
                                          const char* variant) {
  if (levsim_status st = require(s != nullptr && variant != nullptr,
                                 "scenario or variant is NULL");
      st)
    return st;
  return guarded([&] {
    s->s.control.variant = levsim::variant_from_name(variant);
    return LEVSIM_OK;
  });
}

uint64_t levsim_scenario_hash(const levsim_scenario* s) {
  return s ? levsim::scenario_hash(s->s) : 0;
}

int levsim_bundled_count(void) {
  return static_cast<int>(levsim::bundled_scenario_names().size());
}

const char* levsim_bundled_name(int index) {
  static const std::vector<std::string> names =
      levsim::bundled_scenario_names();
  if (index < 0 || index >= static_cast<int>(names.size())) return nullptr;
  return names[static_cast<std::size_t>(index)].c_str();
}

/* --------------------------------------------------------------- design */

levsim_status levsim_design_report(const levsim_scenario* s,
                                   char** out_report) {
  if (levsim_status st = require(s != nullptr && out_report != nullptr,
                                 "scenario or out_report is NULL");
      st)
    return st;
  return guarded([&] {
    const levsim::LqgDesign d = design_for(s->s);
    *out_report = dup_string(render_design_report(s->s, d));
    return LEVSIM_OK;
  });
}

levsim_status levsim_design_artifact(const levsim_scenario* s,
                                     char** out_text) {
  if (levsim_status st = require(s != nullptr && out_text != nullptr,
                                 "scenario or out_text is NULL");
      st)
    return st;
  return guarded([&] {
    const levsim::LqgDesign d = design_for(s->s);
    *out_text = dup_string(levsim::controller_to_text(d.realization));
    return LEVSIM_OK;
  });
}

/* -------------------------------------------------------------- records */

levsim_status levsim_simulate(const levsim_scenario* s, levsim_record** out) {
  if (levsim_status st =
          require(s != nullptr && out != nullptr, "scenario or out is NULL");
      st)
    return st;
  *out = nullptr;
  return guarded([&]() -> levsim_status {
    const levsim::RunInputs in = levsim::to_run_inputs(s->s);
    levsim::RunRecord rec;
    if (s->s.control.variant == levsim::ControllerVariant::none) {
      levsim::ZeroController zero;
      rec = levsim::run_closed_loop(in, zero);
    } else {
      const levsim::LqgDesign d = design_for(s->s);
      levsim::DiscreteLqgController ctl(d.realization);
      rec = levsim::run_closed_loop(in, ctl);
    }
    const bool lost = rec.status == levsim::RunStatus::particle_lost;
    *out = new levsim_record{std::move(rec)};
    if (lost) {
      set_error("particle lost at t = " +
                std::to_string((*out)->r.lost_at_s) + " s");
      return LEVSIM_ERR_PARTICLE_LOST;
    }
    return LEVSIM_OK;
  });
}

void levsim_record_free(levsim_record* r) { delete r; }

uint64_t levsim_record_rows(const levsim_record* r) {
  return r ? r->r.size() : 0;
}

int levsim_record_column_count(const levsim_record* r) {
  return r ? static_cast<int>(levsim::record_column_names().size()) : 0;
}

const char* levsim_record_column_name(const levsim_record* r, int index) {
  if (!r) return nullptr;
  const auto& names = levsim::record_column_names();
  if (index < 0 || index >= static_cast<int>(names.size())) return nullptr;
  return names[static_cast<std::size_t>(index)].c_str();
}

const double* levsim_record_column(const levsim_record* r, const char* name) {
  if (!r || !name) return nullptr;
  const levsim::RunRecord& rec = r->r;
  const std::vector<const std::vector<double>*> cols = {
      &rec.t_s,       &rec.x_m,           &rec.y_m,      &rec.z_m,
      &rec.vx_mps,    &rec.vy_mps,        &rec.vz_mps,   &rec.chi_x_V,
      &rec.chi_z_V,   &rec.u_V,           &rec.xhat_m,   &rec.vxhat_mps,
      &rec.apexhat_m, &rec.apexhat_raw_m, &rec.zhat_m,   &rec.vzhat_mps,
      &rec.delta0_m,  &rec.delta1_m,      &rec.dchi_x_V, &rec.delta_apex_m};
  const auto& names = levsim::record_column_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return cols[i]->data();
  return nullptr;
}

double levsim_record_sample_rate_hz(const levsim_record* r) {
  return r ? r->r.sample_rate_hz : 0.0;
}

double levsim_record_record_rate_hz(const levsim_record* r) {
  return r ? r->r.record_rate_hz : 0.0;
}

int levsim_record_decimation(const levsim_record* r) {
  return r ? r->r.decimation : 0;
}

int levsim_record_averaged(const levsim_record* r) {
  return r ? (r->r.averaged ? 1 : 0) : 0;
}

int levsim_record_status(const levsim_record* r) {
  return r && r->r.status == levsim::RunStatus::particle_lost ? 1 : 0;
}

double levsim_record_lost_at_s(const levsim_record* r) {
  return r ? r->r.lost_at_s : -1.0;
}

uint64_t levsim_record_seed(const levsim_record* r) { return r ? r->r.seed : 0; }

uint64_t levsim_record_scenario_hash(const levsim_record* r) {
  return r ? r->r.scenario_hash : 0;
}

levsim_status levsim_record_write_csv(const levsim_record* r,
                                      const char* path) {
  if (levsim_status st =
          require(r != nullptr && path != nullptr, "record or path is NULL");
      st)
    return st;
  return guarded([&] {
    levsim::write_record_csv(r->r, path);
    return LEVSIM_OK;
  });
}

levsim_status levsim_record_write_bin(const levsim_record* r,
                                      const char* path) {
  if (levsim_status st =
          require(r != nullptr && path != nullptr, "record or path is NULL");
      st)
    return st;
  return guarded([&] {
    levsim::write_record_bin(r->r, path);
    return LEVSIM_OK;
  });
}

levsim_status levsim_record_read_csv(const char* path, levsim_record** out) {
  if (levsim_status st =
          require(path != nullptr && out != nullptr, "path or out is NULL");
      st)
    return st;
  return guarded([&] {
    *out = new levsim_record{levsim::read_record_csv(path)};
    return LEVSIM_OK;
  });
}

levsim_status levsim_record_read_bin(const char* path, levsim_record** out) {
  if (levsim_status st =
          require(path != nullptr && out != nullptr, "path or out is NULL");
      st)
    return st;
  return guarded([&] {
    *out = new levsim_record{levsim::read_record_bin(path)};
    return LEVSIM_OK;
  });
}

/* ------------------------------------------------------------- analysis */

levsim_status levsim_analyze_criteria(const levsim_record* r,
                                      levsim_criteria* out_fractions,
                                      const char* csv_path,
                                      char** out_summary) {
  if (levsim_status st = require(r != nullptr, "record is NULL"); st)
    return st;
  return guarded([&] {
    const levsim::CriteriaReport rep =
        levsim::evaluate_criteria(r->r, levsim::CriteriaConfig{});
    if (out_fractions) {
      out_fractions->window_count = rep.windows.size();
      out_fractions->unimodal_fraction = rep.unimodal_fraction;
      out_fractions->zero_mean_force_fraction = rep.zero_mean_force_fraction;
      out_fractions->no_well_peak_fraction = rep.no_well_peak_fraction;
      out_fractions->stabilized_fraction = rep.stabilized_fraction;
    }
    if (csv_path) levsim::write_criteria_csv(csv_path, rep);
    if (out_summary) *out_summary = dup_string(levsim::criteria_summary(rep));
    return LEVSIM_OK;
  });
}

levsim_status levsim_record_psd(const levsim_record* r, const char* column,
                                int segment_length, double t_start_s,
                                double t_stop_s, levsim_psd** out) {
  if (levsim_status st = require(r != nullptr && column != nullptr &&
                                     out != nullptr,
                                 "record, column, or out is NULL");
      st)
    return st;
  return guarded([&]() -> levsim_status {
    const double* data = levsim_record_column(r, column);
    if (!data) {
      set_error(std::string("unknown record column '") + column + "'");
      return LEVSIM_ERR_INVALID;
    }
    std::size_t lo = 0, hi = r->r.size();
    if (t_stop_s > t_start_s) {
      const std::vector<double>& t = r->r.t_s;
      while (lo < hi && t[lo] < t_start_s) ++lo;
      while (hi > lo && t[hi - 1] >= t_stop_s) --hi;
    }
    const std::vector<double> series(data + lo, data + hi);
    std::size_t seg = static_cast<std::size_t>(segment_length);
    if (segment_length <= 0) {
      seg = 64;
      while (seg * 8 <= series.size() && seg < 8192) seg *= 2;
    }
    *out = new levsim_psd{
        levsim::welch_psd(series, r->r.record_rate_hz, seg)};
    return LEVSIM_OK;
  });
}

void levsim_psd_free(levsim_psd* p) { delete p; }

uint64_t levsim_psd_bins(const levsim_psd* p) {
  return p ? p->p.freq_hz.size() : 0;
}

const double* levsim_psd_freq_hz(const levsim_psd* p) {
  return p ? p->p.freq_hz.data() : nullptr;
}

const double* levsim_psd_power(const levsim_psd* p) {
  return p ? p->p.power.data() : nullptr;
}

double levsim_psd_band_power(const levsim_psd* p, double f_lo, double f_hi) {
  if (!p) return 0.0;
  try {
    return levsim::band_power(p->p, f_lo, f_hi);
  } catch (const std::exception& e) {
    set_error(e.what());
    return 0.0;
  }
}

double levsim_psd_band_level(const levsim_psd* p, double f_lo, double f_hi) {
  if (!p) return 0.0;
  try {
    return levsim::band_level(p->p, f_lo, f_hi);
  } catch (const std::exception& e) {
    set_error(e.what());
    return 0.0;
  }
}

levsim_status levsim_psd_write_csv(const levsim_psd* p, const char* path) {
  if (levsim_status st =
          require(p != nullptr && path != nullptr, "psd or path is NULL");
      st)
    return st;
  return guarded([&] {
    levsim::write_psd_csv(path, p->p);
    return LEVSIM_OK;
  });
}

levsim_status levsim_analyze_pdf(const levsim_record* r, const char* column,
                                 double t_avg_s, int bins,
                                 const char* csv_path) {
  if (levsim_status st = require(r != nullptr && column != nullptr &&
                                     csv_path != nullptr,
                                 "record, column, or csv_path is NULL");
      st)
    return st;
  return guarded([&]() -> levsim_status {
    const double* data = levsim_record_column(r, column);
    if (!data) {
      set_error(std::string("unknown record column '") + column + "'");
      return LEVSIM_ERR_INVALID;
    }
    const std::vector<double> series(data, data + r->r.size());
    const levsim::PdfEvolution pdf = levsim::windowed_pdf(
        series, r->r.record_rate_hz, t_avg_s > 0.0 ? t_avg_s : 3e-3,
        bins > 0 ? bins : 101);
    levsim::write_pdf_csv(csv_path, pdf);
    return LEVSIM_OK;
  });
}
