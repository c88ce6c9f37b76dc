// Command-line front end: design controllers, run scenarios, analyze
// records, and reproduce the bundled three-variant comparison studies.
// All library functionality is reached through the C API (levsim.h).
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "levsim/levsim.h"

namespace fs = std::filesystem;

namespace {

// ----------------------------------------------------------- status plumbing

int exit_code(levsim_status st) {
  switch (st) {
    case LEVSIM_OK: return 0;
    case LEVSIM_ERR_INVALID: return 2;
    case LEVSIM_ERR_SYNTHESIS: return 3;
    case LEVSIM_ERR_PARTICLE_LOST: return 4;
    case LEVSIM_ERR_IO: return 2;
    default: return 1;
  }
}

int fail(levsim_status st) {
  std::cerr << "error: " << levsim_last_error() << "\n";
  return exit_code(st);
}

struct ScenarioGuard {
  levsim_scenario* s = nullptr;
  ~ScenarioGuard() { levsim_scenario_free(s); }
};

struct RecordGuard {
  levsim_record* r = nullptr;
  ~RecordGuard() { levsim_record_free(r); }
};

struct PsdGuard {
  levsim_psd* p = nullptr;
  ~PsdGuard() { levsim_psd_free(p); }
};

struct StringGuard {
  char* s = nullptr;
  ~StringGuard() { levsim_string_free(s); }
  std::string str() const { return s ? s : ""; }
};

// ------------------------------------------------------------- file helpers

levsim_status resolve_scenario(const std::string& spec, levsim_scenario** out) {
  for (int i = 0; i < levsim_bundled_count(); ++i)
    if (spec == levsim_bundled_name(i))
      return levsim_scenario_bundled(spec.c_str(), out);
  return levsim_scenario_load(spec.c_str(), out);
}

std::string sanitize_stem(const std::string& name) {
  std::string out = name.empty() ? std::string("run") : name;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
      c = '_';
  return out;
}

bool write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) {
    std::cerr << "error: cannot write " << path << "\n";
    return false;
  }
  return true;
}

bool ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory '" << out_dir
              << "': " << ec.message() << "\n";
    return false;
  }
  return true;
}

// Writes the resolved scenario (including any seed override) next to the
// run outputs so every result records its effective configuration.
bool write_effective_scenario(levsim_scenario* s, const fs::path& path) {
  StringGuard text;
  if (levsim_scenario_serialize(s, &text.s) != LEVSIM_OK) {
    std::cerr << "error: " << levsim_last_error() << "\n";
    return false;
  }
  return write_text_file(path, text.str());
}

// --------------------------------------------------------------- SVG plots

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

// Minimal static line plot: linear or log10 axes, legend, tick labels.
bool write_svg_plot(const fs::path& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<PlotSeries>& series, bool logx,
                    bool logy) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  const double width = 900, height = 560;
  const double ml = 80, mr = 24, mt = 48, mb = 64;

  auto tx = [&](double v) { return logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return logy ? std::log10(v) : v; };

  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  bool any = false;
  for (const PlotSeries& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if ((logx && s.x[i] <= 0.0) || (logy && s.y[i] <= 0.0)) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const double px = tx(s.x[i]), py = ty(s.y[i]);
      if (!any) {
        x_lo = x_hi = px;
        y_lo = y_hi = py;
        any = true;
      }
      x_lo = std::min(x_lo, px), x_hi = std::max(x_hi, px);
      y_lo = std::min(y_lo, py), y_hi = std::max(y_hi, py);
    }
  if (!any) return write_text_file(path, "<svg xmlns=\"http://www.w3.org/2000/svg\"/>\n");
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) y_hi = y_lo + 1;

  auto sx = [&](double v) {
    return ml + (tx(v) - x_lo) / (x_hi - x_lo) * (width - ml - mr);
  };
  auto sy = [&](double v) {
    return height - mb - (ty(v) - y_lo) / (y_hi - y_lo) * (height - mt - mb);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
     << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"16\">"
     << title << "</text>\n";

  // Frame and ticks.
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\""
     << width - ml - mr << "\" height=\"" << height - mt - mb
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  const int ticks = 5;
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os.precision(3);
  for (int i = 0; i <= ticks; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / ticks;
    const double fy = y_lo + (y_hi - y_lo) * i / ticks;
    const double px = ml + (width - ml - mr) * i / ticks;
    const double py = height - mb - (height - mt - mb) * i / ticks;
    const double vx = logx ? std::pow(10.0, fx) : fx;
    const double vy = logy ? std::pow(10.0, fy) : fy;
    os << "<line x1=\"" << px << "\" y1=\"" << height - mb << "\" x2=\"" << px
       << "\" y2=\"" << height - mb + 6 << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << px << "\" y=\"" << height - mb + 22
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << vx << "</text>\n";
    os << "<line x1=\"" << ml - 6 << "\" y1=\"" << py << "\" x2=\"" << ml
       << "\" y2=\"" << py << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << ml - 10 << "\" y=\"" << py + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << vy << "</text>\n";
  }
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 16
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"13\">"
     << xlabel << "</text>\n";
  os << "<text x=\"20\" y=\"" << height / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"13\" transform=\"rotate(-90 20 "
     << height / 2 << ")\">" << ylabel << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const PlotSeries& s = series[k];
    const char* color = kColors[k % (sizeof(kColors) / sizeof(kColors[0]))];
    // Stride long series down to a displayable polyline.
    const std::size_t stride = std::max<std::size_t>(1, s.x.size() / 4000);
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); i += stride) {
      if ((logx && s.x[i] <= 0.0) || (logy && s.y[i] <= 0.0)) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << width - mr - 8 << "\" y=\"" << mt + 18 + 18 * k
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" "
          "fill=\""
       << color << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return write_text_file(path, os.str());
}

std::vector<double> column_vector(const levsim_record* r, const char* name) {
  const double* p = levsim_record_column(r, name);
  const uint64_t n = levsim_record_rows(r);
  return p ? std::vector<double>(p, p + n) : std::vector<double>();
}

bool plot_psd_csvs(const fs::path& out,
                   const std::vector<std::pair<std::string, const levsim_psd*>>&
                       psds,
                   const std::string& title) {
  std::vector<PlotSeries> series;
  for (const auto& [label, psd] : psds) {
    PlotSeries s;
    s.label = label;
    const uint64_t n = levsim_psd_bins(psd);
    const double* f = levsim_psd_freq_hz(psd);
    const double* p = levsim_psd_power(psd);
    s.x.assign(f, f + n);
    s.y.assign(p, p + n);
    series.push_back(std::move(s));
  }
  return write_svg_plot(out, title, "frequency [Hz]", "PSD [V^2/Hz]", series,
                        true, true);
}

// --------------------------------------------------------- window statistics

struct WindowStat {
  double t_start = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

std::vector<WindowStat> window_stats(const std::vector<double>& t,
                                     const std::vector<double>& v,
                                     double t_window) {
  std::vector<WindowStat> out;
  if (t.empty()) return out;
  std::size_t begin = 0;
  double t0 = t.front();
  for (std::size_t i = 0; i <= t.size(); ++i) {
    if (i < t.size() && t[i] < t0 + t_window) continue;
    const std::size_t n = i - begin;
    if (n >= 8) {
      double mean = 0.0;
      for (std::size_t k = begin; k < i; ++k) mean += v[k];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t k = begin; k < i; ++k)
        var += (v[k] - mean) * (v[k] - mean);
      var /= static_cast<double>(n);
      out.push_back({t0, mean, std::sqrt(var)});
    }
    if (i == t.size()) break;
    begin = i;
    t0 = t[i];
  }
  return out;
}

double std_between(const std::vector<double>& t, const std::vector<double>& v,
                   double t_from, double t_to) {
  double mean = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= t_from && t[i] < t_to) {
      mean += v[i];
      ++n;
    }
  if (n < 2) return 0.0;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= t_from && t[i] < t_to) var += (v[i] - mean) * (v[i] - mean);
  return std::sqrt(var / static_cast<double>(n));
}

void print_check(const std::string& label, bool ok) {
  std::cout << (ok ? "[check PASS] " : "[check FAIL] ") << label << "\n";
}

// ------------------------------------------------------------------ design

int cmd_design(const std::string& scenario_spec, const std::string& out_dir,
               bool seed_given, uint64_t seed) {
  ScenarioGuard scn;
  if (levsim_status st = resolve_scenario(scenario_spec, &scn.s); st)
    return fail(st);
  if (seed_given) levsim_scenario_set_seed(scn.s, seed);

  StringGuard report;
  if (levsim_status st = levsim_design_report(scn.s, &report.s); st)
    return fail(st);
  std::cout << report.str();

  if (!out_dir.empty()) {
    if (!ensure_out_dir(out_dir)) return 2;
    const std::string stem = sanitize_stem(levsim_scenario_name(scn.s));
    StringGuard artifact;
    if (levsim_status st = levsim_design_artifact(scn.s, &artifact.s); st)
      return fail(st);
    const fs::path dir(out_dir);
    if (!write_text_file(dir / (stem + "_controller.txt"), artifact.str()))
      return 2;
    if (!write_text_file(dir / (stem + "_design.txt"), report.str()))
      return 2;
    if (!write_effective_scenario(scn.s, dir / (stem + "_scenario.json")))
      return 2;
    std::cout << "\nwrote " << (dir / (stem + "_controller.txt")).string()
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const std::string& scenario_spec, const std::string& out_dir,
                 bool seed_given, uint64_t seed, const std::string& format,
                 bool plots) {
  ScenarioGuard scn;
  if (levsim_status st = resolve_scenario(scenario_spec, &scn.s); st)
    return fail(st);
  if (seed_given) levsim_scenario_set_seed(scn.s, seed);

  RecordGuard rec;
  const levsim_status run_st = levsim_simulate(scn.s, &rec.r);
  if (run_st != LEVSIM_OK && run_st != LEVSIM_ERR_PARTICLE_LOST)
    return fail(run_st);

  if (!ensure_out_dir(out_dir)) return 2;
  const fs::path dir(out_dir);
  const std::string stem = sanitize_stem(levsim_scenario_name(scn.s));
  const bool bin = format == "bin";
  const fs::path trace = dir / (stem + (bin ? "_trace.bin" : "_trace.csv"));
  if (levsim_status st = bin ? levsim_record_write_bin(rec.r,
                                                       trace.string().c_str())
                             : levsim_record_write_csv(rec.r,
                                                       trace.string().c_str());
      st)
    return fail(st);
  if (!write_effective_scenario(scn.s, dir / (stem + "_scenario.json")))
    return 2;

  std::cout << "scenario:  " << levsim_scenario_name(scn.s) << "\n"
            << "seed:      " << levsim_record_seed(rec.r) << "\n"
            << "rows:      " << levsim_record_rows(rec.r) << "\n"
            << "trace:     " << trace.string() << "\n";

  if (plots && levsim_record_rows(rec.r) > 1) {
    PlotSeries s;
    s.label = "chi_x";
    s.x = column_vector(rec.r, "t_s");
    s.y = column_vector(rec.r, "chi_x_V");
    write_svg_plot(dir / (stem + "_chi_x.svg"),
                   "position signal — " + stem, "time [s]", "chi_x [V]",
                   {s}, false, false);
  }

  if (run_st == LEVSIM_ERR_PARTICLE_LOST) {
    std::cout << "status:    particle lost at "
              << levsim_record_lost_at_s(rec.r)
              << " s (truncated record written)\n";
    return exit_code(run_st);
  }
  std::cout << "status:    completed\n";
  return 0;
}

// ----------------------------------------------------------------- analyze

int analyze_one(const std::string& file, const fs::path& dir, bool plots) {
  // Sniff the trace format from the leading magic bytes.
  bool is_bin = false;
  {
    std::ifstream probe(file, std::ios::binary);
    if (!probe) {
      std::cerr << "error: cannot open record file: " << file << "\n";
      return 2;
    }
    char magic[8] = {};
    probe.read(magic, sizeof(magic));
    is_bin = probe.gcount() == 8 && std::memcmp(magic, "LEVTRC01", 8) == 0;
  }

  RecordGuard rec;
  if (levsim_status st = is_bin
                             ? levsim_record_read_bin(file.c_str(), &rec.r)
                             : levsim_record_read_csv(file.c_str(), &rec.r);
      st)
    return fail(st);

  const std::string stem = sanitize_stem(fs::path(file).stem().string());
  std::cout << "=== " << file << " ===\n"
            << "rows " << levsim_record_rows(rec.r) << ", seed "
            << levsim_record_seed(rec.r) << ", status "
            << (levsim_record_status(rec.r) ? "particle_lost" : "completed")
            << "\n";

  levsim_criteria fr{};
  StringGuard summary;
  const fs::path criteria_csv = dir / (stem + "_criteria.csv");
  if (levsim_status st = levsim_analyze_criteria(
          rec.r, &fr, criteria_csv.string().c_str(), &summary.s);
      st)
    return fail(st);
  std::cout << summary.str() << "\n";

  std::vector<std::pair<std::string, const levsim_psd*>> plotted;
  PsdGuard psd_chi, psd_u;
  if (levsim_status st =
          levsim_record_psd(rec.r, "chi_x_V", 0, 0.0, 0.0, &psd_chi.p);
      st)
    return fail(st);
  if (levsim_status st = levsim_psd_write_csv(
          psd_chi.p, (dir / (stem + "_psd_chi_x.csv")).string().c_str());
      st)
    return fail(st);
  if (levsim_record_psd(rec.r, "u_V", 0, 0.0, 0.0, &psd_u.p) == LEVSIM_OK)
    levsim_psd_write_csv(psd_u.p,
                         (dir / (stem + "_psd_u.csv")).string().c_str());

  if (levsim_status st = levsim_analyze_pdf(
          rec.r, "chi_x_V", 0.0, 0,
          (dir / (stem + "_pdf_chi_x.csv")).string().c_str());
      st)
    return fail(st);

  if (plots) {
    plotted.emplace_back("chi_x", psd_chi.p);
    if (psd_u.p) plotted.emplace_back("u", psd_u.p);
    plot_psd_csvs(dir / (stem + "_psd.svg"), plotted,
                  "power spectral density — " + stem);
  }
  std::cout << "wrote " << criteria_csv.string() << ", "
            << (dir / (stem + "_psd_chi_x.csv")).string() << ", "
            << (dir / (stem + "_pdf_chi_x.csv")).string() << "\n";
  return 0;
}

int cmd_analyze(const std::vector<std::string>& files,
                const std::string& out_dir, bool plots) {
  if (!ensure_out_dir(out_dir)) return 2;
  const fs::path dir(out_dir);
  for (const std::string& f : files)
    if (int rc = analyze_one(f, dir, plots); rc) return rc;
  return 0;
}

// --------------------------------------------------------------- reproduce

struct VariantRun {
  std::string variant;
  levsim_record* rec = nullptr;
  ~VariantRun() { levsim_record_free(rec); }
};

int cmd_reproduce(const std::string& figure, const std::string& out_dir,
                  bool seed_given, uint64_t seed, const std::string& format,
                  bool plots) {
  if (figure != "fig4" && figure != "fig5") {
    std::cerr << "error: unknown figure id '" << figure
              << "' (valid ids: fig4, fig5)\n";
    return 2;
  }
  if (!ensure_out_dir(out_dir)) return 2;
  const fs::path dir(out_dir);

  ScenarioGuard base;
  if (levsim_status st = levsim_scenario_bundled("drift_comparison", &base.s);
      st)
    return fail(st);
  if (seed_given) levsim_scenario_set_seed(base.s, seed);
  std::cout << "scenario: drift_comparison, shared seed "
            << levsim_scenario_seed(base.s) << ", duration "
            << levsim_scenario_duration_s(base.s) << " s\n\n";

  const std::array<const char*, 3> variants = {"non_adaptive_1d",
                                               "adaptive_1d", "adaptive_2d"};
  std::array<VariantRun, 3> runs;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    StringGuard text;
    if (levsim_status st = levsim_scenario_serialize(base.s, &text.s); st)
      return fail(st);
    ScenarioGuard scn;
    if (levsim_status st = levsim_scenario_parse(text.s, &scn.s); st)
      return fail(st);
    if (levsim_status st = levsim_scenario_set_variant(scn.s, variants[i]);
        st)
      return fail(st);

    runs[i].variant = variants[i];
    const levsim_status run_st = levsim_simulate(scn.s, &runs[i].rec);
    if (run_st != LEVSIM_OK && run_st != LEVSIM_ERR_PARTICLE_LOST)
      return fail(run_st);

    const std::string stem = figure + "_" + runs[i].variant;
    const bool bin = format == "bin";
    const fs::path trace =
        dir / (stem + (bin ? "_trace.bin" : "_trace.csv"));
    if (levsim_status st =
            bin ? levsim_record_write_bin(runs[i].rec,
                                          trace.string().c_str())
                : levsim_record_write_csv(runs[i].rec,
                                          trace.string().c_str());
        st)
      return fail(st);
    if (!write_effective_scenario(scn.s, dir / (stem + "_scenario.json")))
      return 2;
    std::cout << "ran " << runs[i].variant << " -> " << trace.string()
              << "\n";
    if (run_st == LEVSIM_ERR_PARTICLE_LOST) {
      std::cout << "status: particle lost at "
                << levsim_record_lost_at_s(runs[i].rec)
                << " s (truncated record written)\n";
      return exit_code(run_st);
    }
  }
  std::cout << "\n";

  // Shared run geometry: the side-lobe drift ramps from 10 ms to 60 ms and
  // then holds; everything past the onset is the sustained-misalignment
  // region.
  const double onset_s = 10e-3, window_s = 3e-3;

  if (figure == "fig4") {
    // Probability-density evolution tables (one per variant) plus the
    // criteria tables and the comparison checks.  The std comparison
    // measures each controller over its stabilized operation: the
    // non-adaptive over the pre-drift phase (it loses regulation once the
    // drift sets in), the adaptives over the whole run.  The first window
    // is skipped as startup transient.
    const double settle_s = window_s;
    double stds[3] = {0, 0, 0};
    double post_onset_zmf[3] = {0, 0, 0};
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string stem = figure + "_" + runs[i].variant;
      if (levsim_status st = levsim_analyze_pdf(
              runs[i].rec, "chi_x_V", 0.0, 0,
              (dir / (stem + "_pdf_chi_x.csv")).string().c_str());
          st)
        return fail(st);
      if (levsim_status st = levsim_analyze_criteria(
              runs[i].rec, nullptr,
              (dir / (stem + "_criteria.csv")).string().c_str(), nullptr);
          st)
        return fail(st);

      const std::vector<double> t = column_vector(runs[i].rec, "t_s");
      const std::vector<double> chi = column_vector(runs[i].rec, "chi_x_V");
      const std::vector<double> u = column_vector(runs[i].rec, "u_V");
      const bool adaptive = i > 0;
      stds[i] = std_between(t, chi, settle_s,
                            adaptive ? t.back() + 1.0 : onset_s);

      const std::vector<WindowStat> uw = window_stats(t, u, window_s);
      std::size_t n_post = 0, n_zmf = 0;
      for (const WindowStat& w : uw) {
        if (w.t_start < onset_s) continue;
        ++n_post;
        if (std::abs(w.mean) <= w.std) ++n_zmf;
      }
      post_onset_zmf[i] =
          n_post ? static_cast<double>(n_zmf) / static_cast<double>(n_post)
                 : 0.0;
      std::cout << runs[i].variant << ": std(chi_x) = " << stds[i] * 1e3
                << " mV over " << (adaptive ? "full run" : "pre-drift phase")
                << ", post-onset zero-mean-force fraction = "
                << post_onset_zmf[i] << "\n";
    }
    std::cout << "\n";
    print_check("non_adaptive_1d loses zero-mean force after drift onset",
                post_onset_zmf[0] < 1.0);
    print_check("adaptive_1d keeps zero-mean force", post_onset_zmf[1] == 1.0);
    print_check("adaptive_2d keeps zero-mean force", post_onset_zmf[2] == 1.0);
    print_check("std ordering adaptive_2d < non_adaptive_1d",
                stds[2] < stds[0]);
    print_check("std ordering non_adaptive_1d <= adaptive_1d",
                stds[0] <= stds[1]);
    const double ratio = stds[1] > 0 ? stds[2] / stds[1] : 0.0;
    std::ostringstream lbl;
    lbl << "adaptive_2d std within [40%, 80%] of adaptive_1d (ratio "
        << ratio * 100 << "%)";
    print_check(lbl.str(), ratio >= 0.40 && ratio <= 0.80);

    if (plots) {
      std::vector<PlotSeries> series;
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const std::vector<double> t = column_vector(runs[i].rec, "t_s");
        const std::vector<double> chi = column_vector(runs[i].rec, "chi_x_V");
        const std::vector<WindowStat> ws = window_stats(t, chi, window_s);
        PlotSeries s;
        s.label = runs[i].variant;
        for (const WindowStat& w : ws) {
          s.x.push_back(w.t_start * 1e3);
          s.y.push_back(w.std * 1e3);
        }
        series.push_back(std::move(s));
      }
      write_svg_plot(dir / "fig4_window_std.svg",
                     "windowed std of the position signal", "time [ms]",
                     "std(chi_x) [mV]", series, false, false);
    }
    return 0;
  }

  // fig5: post-onset PSDs per variant plus the spectral checks.  The
  // well-band measure matches the windowed-criteria definition: mean PSD
  // level inside +-10% of the well frequency against the median PSD bin of
  // the two equal-width flanking bands (the median keeps the baseline
  // robust to a peak skirt spilling into a flank).
  const double f_well = 65e3;
  const double band_lo = 0.9 * f_well, band_hi = 1.1 * f_well;
  const double flank_l_lo = 0.8 * f_well, flank_r_hi = 1.2 * f_well;
  std::array<PsdGuard, 3> psds;
  double ratios[3] = {0, 0, 0};
  double low_band[3] = {0, 0, 0};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string stem = figure + "_" + runs[i].variant;
    if (levsim_status st =
            levsim_record_psd(runs[i].rec, "chi_x_V", 4096, onset_s, 1.0,
                              &psds[i].p);
        st)
      return fail(st);
    if (levsim_status st = levsim_psd_write_csv(
            psds[i].p, (dir / (stem + "_psd_chi_x.csv")).string().c_str());
        st)
      return fail(st);
    const double band = levsim_psd_band_level(psds[i].p, band_lo, band_hi);
    const uint64_t n_bins = levsim_psd_bins(psds[i].p);
    const double* freq = levsim_psd_freq_hz(psds[i].p);
    const double* power = levsim_psd_power(psds[i].p);
    std::vector<double> flank_bins;
    for (uint64_t k = 0; k < n_bins; ++k) {
      const bool in_flank = (freq[k] >= flank_l_lo && freq[k] < band_lo) ||
                            (freq[k] >= band_hi && freq[k] < flank_r_hi);
      if (in_flank) flank_bins.push_back(power[k]);
    }
    double flank = 0.0;
    if (!flank_bins.empty()) {
      const std::size_t mid = flank_bins.size() / 2;
      std::nth_element(flank_bins.begin(), flank_bins.begin() + mid,
                       flank_bins.end());
      flank = flank_bins[mid];
    }
    ratios[i] = flank > 0 ? band / flank : 0.0;
    low_band[i] = levsim_psd_band_power(psds[i].p, 0.0, 10e3);
    std::cout << runs[i].variant << ": well-band/flank-median ratio = "
              << ratios[i] << ", sub-10 kHz power = " << low_band[i]
              << " V^2\n";
  }
  std::cout << "\n";
  print_check("non_adaptive_1d shows a well-frequency peak (ratio >= 3)",
              ratios[0] >= 3.0);
  print_check("adaptive_1d shows no well-frequency peak", ratios[1] < 3.0);
  print_check("adaptive_2d shows no well-frequency peak", ratios[2] < 3.0);
  print_check("adaptive_2d sub-10 kHz power below non_adaptive_1d",
              low_band[2] < low_band[0]);

  if (plots) {
    std::vector<std::pair<std::string, const levsim_psd*>> plotted;
    for (std::size_t i = 0; i < runs.size(); ++i)
      plotted.emplace_back(runs[i].variant, psds[i].p);
    plot_psd_csvs(dir / "fig5_psd.svg", plotted,
                  "position-signal PSD under sustained misalignment");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "levsim — simulation and control-design toolkit for feedback "
      "stabilization of a noise-driven particle at the unstable apex of an "
      "optical double-well potential.\n"
      "Exit codes: 0 ok, 2 invalid input, 3 synthesis failure, "
      "4 particle lost."};
  app.require_subcommand(1);

  std::string scenario_spec = "default";
  std::string out_dir = "levsim_out";
  std::string format = "csv";
  uint64_t seed = 0;
  bool plots = false;
  std::vector<std::string> record_files;
  std::string figure;

  const std::string scenario_help =
      "Scenario: bundled name or JSON file path";

  CLI::App* design = app.add_subcommand(
      "design", "Synthesize the controller and print the design report");
  design->add_option("--scenario", scenario_spec, scenario_help);
  design->add_option("--seed", seed, "Override the scenario seed");
  std::string design_out;
  design->add_option("--out-dir", design_out,
                     "Write controller artifact + report + scenario here");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "Run the closed loop and write the trace");
  simulate->add_option("--scenario", scenario_spec, scenario_help);
  simulate->add_option("--seed", seed, "Override the scenario seed");
  simulate->add_option("--out-dir", out_dir, "Output directory");
  simulate->add_option("--format", format, "Trace format: csv or bin")
      ->check(CLI::IsMember({"csv", "bin"}));
  simulate->add_flag("--plots", plots, "Also emit SVG plots");

  CLI::App* analyze = app.add_subcommand(
      "analyze", "Evaluate criteria and export PSD/PDF tables for records");
  analyze->add_option("records", record_files, "Trace files (csv or bin)")
      ->required();
  analyze->add_option("--out-dir", out_dir, "Output directory");
  analyze->add_flag("--plots", plots, "Also emit SVG plots");

  CLI::App* reproduce = app.add_subcommand(
      "reproduce",
      "Re-run a bundled comparison study (fig4: distributions and force "
      "criterion, fig5: spectra) across the three controller variants");
  reproduce->add_option("figure", figure, "Figure id: fig4 or fig5")
      ->required();
  reproduce->add_option("--seed", seed, "Override the shared seed");
  reproduce->add_option("--out-dir", out_dir, "Output directory");
  reproduce->add_option("--format", format, "Trace format: csv or bin")
      ->check(CLI::IsMember({"csv", "bin"}));
  reproduce->add_flag("--plots", plots, "Also emit SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*design)
    return cmd_design(scenario_spec, design_out,
                      design->count("--seed") > 0, seed);
  if (*simulate)
    return cmd_simulate(scenario_spec, out_dir,
                        simulate->count("--seed") > 0, seed, format, plots);
  if (*analyze) return cmd_analyze(record_files, out_dir, plots);
  if (*reproduce)
    return cmd_reproduce(figure, out_dir, reproduce->count("--seed") > 0,
                         seed, format, plots);
  return 2;
}
