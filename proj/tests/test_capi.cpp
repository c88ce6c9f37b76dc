// Exercises the C interface end to end: scenarios, design, simulation,
// trace persistence, and analysis, including status codes and the
// thread-local error message.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>

#include "levsim/levsim.h"

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
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
};

}  // namespace

TEST_CASE("version and error message are always available") {
  REQUIRE(levsim_version() != nullptr);
  CHECK(std::string(levsim_version()).find('.') != std::string::npos);
  REQUIRE(levsim_last_error() != nullptr);
}

TEST_CASE("NULL arguments are rejected, not dereferenced") {
  CHECK(levsim_scenario_default(nullptr) == LEVSIM_ERR_INVALID);
  CHECK(levsim_scenario_parse(nullptr, nullptr) == LEVSIM_ERR_INVALID);
  CHECK(levsim_simulate(nullptr, nullptr) == LEVSIM_ERR_INVALID);
  CHECK(levsim_record_write_csv(nullptr, "x") == LEVSIM_ERR_INVALID);
  CHECK(levsim_scenario_name(nullptr) == nullptr);
  CHECK(levsim_record_column(nullptr, "t_s") == nullptr);
  CHECK(levsim_psd_bins(nullptr) == 0);
  CHECK(std::string(levsim_last_error()).empty() == false);
  levsim_scenario_free(nullptr);  // must be no-ops
  levsim_record_free(nullptr);
  levsim_psd_free(nullptr);
  levsim_string_free(nullptr);
}

TEST_CASE("default scenario exposes its fields") {
  ScenarioGuard g;
  REQUIRE(levsim_scenario_default(&g.s) == LEVSIM_OK);
  CHECK(std::string(levsim_scenario_name(g.s)) == "default");
  CHECK(std::string(levsim_scenario_variant(g.s)) == "adaptive_2d");
  CHECK(levsim_scenario_duration_s(g.s) == doctest::Approx(20e-3));
  CHECK(levsim_scenario_seed(g.s) == 1);
  CHECK(levsim_scenario_hash(g.s) != 0);

  CHECK(levsim_scenario_set_seed(g.s, 99) == LEVSIM_OK);
  CHECK(levsim_scenario_seed(g.s) == 99);
  CHECK(levsim_scenario_set_variant(g.s, "adaptive_1d") == LEVSIM_OK);
  CHECK(std::string(levsim_scenario_variant(g.s)) == "adaptive_1d");
  CHECK(levsim_scenario_set_variant(g.s, "warp_drive") == LEVSIM_ERR_INVALID);
}

TEST_CASE("bundled scenario listing matches the constructor") {
  REQUIRE(levsim_bundled_count() >= 6);
  CHECK(levsim_bundled_name(-1) == nullptr);
  CHECK(levsim_bundled_name(levsim_bundled_count()) == nullptr);
  for (int i = 0; i < levsim_bundled_count(); ++i) {
    const char* name = levsim_bundled_name(i);
    REQUIRE(name != nullptr);
    ScenarioGuard g;
    REQUIRE(levsim_scenario_bundled(name, &g.s) == LEVSIM_OK);
    CHECK(std::string(levsim_scenario_name(g.s)) == name);
  }
  ScenarioGuard bad;
  CHECK(levsim_scenario_bundled("nope", &bad.s) == LEVSIM_ERR_INVALID);
  CHECK(std::string(levsim_last_error()).find("unknown bundled") !=
        std::string::npos);
}

TEST_CASE("parse, serialize, and hash round-trip through the C surface") {
  ScenarioGuard a;
  REQUIRE(levsim_scenario_parse(R"({"run": {"seed": 5}})", &a.s) == LEVSIM_OK);
  CHECK(levsim_scenario_seed(a.s) == 5);

  StringGuard text;
  REQUIRE(levsim_scenario_serialize(a.s, &text.s) == LEVSIM_OK);
  ScenarioGuard b;
  REQUIRE(levsim_scenario_parse(text.s, &b.s) == LEVSIM_OK);
  CHECK(levsim_scenario_hash(a.s) == levsim_scenario_hash(b.s));

  ScenarioGuard bad;
  CHECK(levsim_scenario_parse("{nope", &bad.s) == LEVSIM_ERR_INVALID);
  CHECK(std::string(levsim_last_error()).find("line") != std::string::npos);

  const std::string path = temp_path("capi_scn.json");
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    REQUIRE(f != nullptr);
    std::fputs(text.s, f);
    std::fclose(f);
  }
  ScenarioGuard c;
  REQUIRE(levsim_scenario_load(path.c_str(), &c.s) == LEVSIM_OK);
  CHECK(levsim_scenario_hash(c.s) == levsim_scenario_hash(a.s));
  ScenarioGuard missing;
  CHECK(levsim_scenario_load("/no/such/file.json", &missing.s) ==
        LEVSIM_ERR_INVALID);
}

TEST_CASE("design report covers gains, eigenvalues, and the estimator") {
  ScenarioGuard g;
  REQUIRE(levsim_scenario_default(&g.s) == LEVSIM_OK);
  StringGuard report;
  REQUIRE(levsim_design_report(g.s, &report.s) == LEVSIM_OK);
  const std::string text = report.s;
  CHECK(text.find("adaptive_2d") != std::string::npos);
  CHECK(text.find("feedback gain") != std::string::npos);
  CHECK(text.find("regulator eigenvalues") != std::string::npos);
  CHECK(text.find("estimator eigenvalues") != std::string::npos);
  CHECK(text.find("apex estimator time constant") != std::string::npos);

  StringGuard artifact;
  REQUIRE(levsim_design_artifact(g.s, &artifact.s) == LEVSIM_OK);
  CHECK(std::strlen(artifact.s) > 100);
}

TEST_CASE("design rejects scenarios without a controller") {
  ScenarioGuard g;
  REQUIRE(levsim_scenario_bundled("free_harmonic_z", &g.s) == LEVSIM_OK);
  StringGuard report;
  CHECK(levsim_design_report(g.s, &report.s) == LEVSIM_ERR_INVALID);
  CHECK(std::string(levsim_last_error()).find("none") != std::string::npos);
}

TEST_CASE("simulation produces an inspectable record") {
  ScenarioGuard g;
  REQUIRE(levsim_scenario_parse(R"({"run": {"duration_s": 0.002}})", &g.s) ==
          LEVSIM_OK);
  RecordGuard rec;
  REQUIRE(levsim_simulate(g.s, &rec.r) == LEVSIM_OK);
  const uint64_t rows = levsim_record_rows(rec.r);
  CHECK(rows > 100);
  CHECK(levsim_record_column_count(rec.r) == 20);
  CHECK(std::string(levsim_record_column_name(rec.r, 0)) == "t_s");
  CHECK(levsim_record_column_name(rec.r, 20) == nullptr);

  const double* t = levsim_record_column(rec.r, "t_s");
  const double* x = levsim_record_column(rec.r, "x_m");
  REQUIRE(t != nullptr);
  REQUIRE(x != nullptr);
  // Averaged decimation stamps each row with its block end time.
  CHECK(t[0] == doctest::Approx(64.0 / 31.25e6));
  CHECK(t[rows - 1] > t[0]);
  CHECK(levsim_record_column(rec.r, "warp_factor") == nullptr);

  CHECK(levsim_record_sample_rate_hz(rec.r) == doctest::Approx(31.25e6));
  CHECK(levsim_record_decimation(rec.r) == 64);
  CHECK(levsim_record_averaged(rec.r) == 1);
  CHECK(levsim_record_status(rec.r) == 0);
  CHECK(levsim_record_seed(rec.r) == 1);
  CHECK(levsim_record_scenario_hash(rec.r) == levsim_scenario_hash(g.s));
}

TEST_CASE("particle loss surfaces as its own status with a record") {
  ScenarioGuard g;
  REQUIRE(levsim_scenario_parse(
              R"({"run": {"duration_s": 0.001, "escape_radius_m": 1e-12}})",
              &g.s) == LEVSIM_OK);
  RecordGuard rec;
  CHECK(levsim_simulate(g.s, &rec.r) == LEVSIM_ERR_PARTICLE_LOST);
  REQUIRE(rec.r != nullptr);
  CHECK(levsim_record_status(rec.r) == 1);
  CHECK(levsim_record_lost_at_s(rec.r) >= 0.0);
  CHECK(std::string(levsim_last_error()).find("lost") != std::string::npos);
}

TEST_CASE("trace files round-trip through the C surface") {
  ScenarioGuard g;
  REQUIRE(levsim_scenario_parse(R"({"run": {"duration_s": 0.001}})", &g.s) ==
          LEVSIM_OK);
  RecordGuard rec;
  REQUIRE(levsim_simulate(g.s, &rec.r) == LEVSIM_OK);

  const std::string pb = temp_path("capi_trace.bin");
  const std::string pc = temp_path("capi_trace.csv");
  REQUIRE(levsim_record_write_bin(rec.r, pb.c_str()) == LEVSIM_OK);
  REQUIRE(levsim_record_write_csv(rec.r, pc.c_str()) == LEVSIM_OK);

  RecordGuard rb, rc;
  REQUIRE(levsim_record_read_bin(pb.c_str(), &rb.r) == LEVSIM_OK);
  REQUIRE(levsim_record_read_csv(pc.c_str(), &rc.r) == LEVSIM_OK);
  const uint64_t rows = levsim_record_rows(rec.r);
  REQUIRE(levsim_record_rows(rb.r) == rows);
  REQUIRE(levsim_record_rows(rc.r) == rows);
  const double* a = levsim_record_column(rec.r, "chi_x_V");
  const double* b = levsim_record_column(rb.r, "chi_x_V");
  const double* c = levsim_record_column(rc.r, "chi_x_V");
  for (uint64_t i = 0; i < rows; ++i) {
    CHECK(a[i] == b[i]);
    CHECK(a[i] == c[i]);
  }

  CHECK(levsim_record_write_bin(rec.r, "/no/such/dir/x.bin") ==
        LEVSIM_ERR_IO);
  RecordGuard bad;
  CHECK(levsim_record_read_bin("/no/such/file.bin", &bad.r) == LEVSIM_ERR_IO);
}

TEST_CASE("criteria, PSD, and PDF analysis work through the C surface") {
  ScenarioGuard g;
  REQUIRE(levsim_scenario_parse(
              R"({"run": {"duration_s": 0.015, "seed": 42}})", &g.s) ==
          LEVSIM_OK);
  RecordGuard rec;
  REQUIRE(levsim_simulate(g.s, &rec.r) == LEVSIM_OK);

  levsim_criteria fr{};
  StringGuard summary;
  const std::string criteria_csv = temp_path("capi_criteria.csv");
  REQUIRE(levsim_analyze_criteria(rec.r, &fr, criteria_csv.c_str(),
                                  &summary.s) == LEVSIM_OK);
  CHECK(fr.window_count >= 3);
  CHECK(fr.stabilized_fraction >= 0.0);
  CHECK(fr.stabilized_fraction <= 1.0);
  CHECK(fr.unimodal_fraction == 1.0);  // aligned stable run
  CHECK(std::string(summary.s).find("unimodal") != std::string::npos);
  CHECK(std::filesystem::file_size(criteria_csv) > 100);

  PsdGuard psd;
  REQUIRE(levsim_record_psd(rec.r, "chi_x_V", 0, 0.0, 0.0, &psd.p) ==
          LEVSIM_OK);
  const uint64_t bins = levsim_psd_bins(psd.p);
  CHECK(bins > 32);
  REQUIRE(levsim_psd_freq_hz(psd.p) != nullptr);
  REQUIRE(levsim_psd_power(psd.p) != nullptr);
  CHECK(levsim_psd_freq_hz(psd.p)[0] == 0.0);
  const double f_ny = levsim_psd_freq_hz(psd.p)[bins - 1];
  const double total = levsim_psd_band_power(psd.p, 0.0, f_ny);
  CHECK(total > 0.0);
  CHECK(levsim_psd_band_level(psd.p, 0.0, f_ny) > 0.0);
  const std::string psd_csv = temp_path("capi_psd.csv");
  REQUIRE(levsim_psd_write_csv(psd.p, psd_csv.c_str()) == LEVSIM_OK);
  CHECK(std::filesystem::file_size(psd_csv) > 100);

  // Restricting the time range shrinks the data and still yields a PSD.
  PsdGuard tail;
  REQUIRE(levsim_record_psd(rec.r, "chi_x_V", 256, 0.005, 0.015, &tail.p) ==
          LEVSIM_OK);
  CHECK(levsim_psd_bins(tail.p) == 129);

  PsdGuard bad;
  CHECK(levsim_record_psd(rec.r, "warp_factor", 0, 0.0, 0.0, &bad.p) ==
        LEVSIM_ERR_INVALID);

  const std::string pdf_csv = temp_path("capi_pdf.csv");
  REQUIRE(levsim_analyze_pdf(rec.r, "chi_x_V", 0.0, 0, pdf_csv.c_str()) ==
          LEVSIM_OK);
  CHECK(std::filesystem::file_size(pdf_csv) > 100);
}

TEST_CASE("zero-duration scenario yields an empty valid record") {
  ScenarioGuard g;
  REQUIRE(levsim_scenario_parse(R"({"run": {"duration_s": 0.0}})", &g.s) ==
          LEVSIM_OK);
  RecordGuard rec;
  REQUIRE(levsim_simulate(g.s, &rec.r) == LEVSIM_OK);
  CHECK(levsim_record_rows(rec.r) == 0);
  const std::string pb = temp_path("capi_empty.bin");
  REQUIRE(levsim_record_write_bin(rec.r, pb.c_str()) == LEVSIM_OK);
  RecordGuard back;
  REQUIRE(levsim_record_read_bin(pb.c_str(), &back.r) == LEVSIM_OK);
  CHECK(levsim_record_rows(back.r) == 0);
}
