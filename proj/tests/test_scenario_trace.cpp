// Scenario (JSON round trip, validation diagnostics, bundled presets) and
// trace persistence (CSV and binary round trips, determinism of the binary
// bytes for equal seeds).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "levsim/control.hpp"
#include "levsim/dynamics.hpp"
#include "levsim/scenario.hpp"
#include "levsim/trace.hpp"

using namespace levsim;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

// Two records are equal sample for sample (bitwise, including NaN slots).
void require_records_identical(const RunRecord& a, const RunRecord& b) {
  REQUIRE(a.size() == b.size());
  CHECK(a.sample_rate_hz == b.sample_rate_hz);
  CHECK(a.record_rate_hz == b.record_rate_hz);
  CHECK(a.decimation == b.decimation);
  CHECK(a.averaged == b.averaged);
  CHECK(a.seed == b.seed);
  CHECK(a.scenario_hash == b.scenario_hash);
  CHECK((a.status == b.status));
  CHECK(a.lost_at_s == b.lost_at_s);
  const std::vector<const std::vector<double>*> ca = {
      &a.t_s,       &a.x_m,           &a.y_m,      &a.z_m,     &a.vx_mps,
      &a.vy_mps,    &a.vz_mps,        &a.chi_x_V,  &a.chi_z_V, &a.u_V,
      &a.xhat_m,    &a.vxhat_mps,     &a.apexhat_m, &a.apexhat_raw_m,
      &a.zhat_m,    &a.vzhat_mps,     &a.delta0_m, &a.delta1_m,
      &a.dchi_x_V,  &a.delta_apex_m};
  const std::vector<const std::vector<double>*> cb = {
      &b.t_s,       &b.x_m,           &b.y_m,      &b.z_m,     &b.vx_mps,
      &b.vy_mps,    &b.vz_mps,        &b.chi_x_V,  &b.chi_z_V, &b.u_V,
      &b.xhat_m,    &b.vxhat_mps,     &b.apexhat_m, &b.apexhat_raw_m,
      &b.zhat_m,    &b.vzhat_mps,     &b.delta0_m, &b.delta1_m,
      &b.dchi_x_V,  &b.delta_apex_m};
  std::size_t mismatches = 0;
  for (std::size_t c = 0; c < ca.size(); ++c) {
    REQUIRE(ca[c]->size() == cb[c]->size());
    for (std::size_t i = 0; i < ca[c]->size(); ++i) {
      std::uint64_t ba = 0, bb = 0;
      static_assert(sizeof(double) == sizeof(std::uint64_t));
      std::memcpy(&ba, &(*ca[c])[i], sizeof(ba));
      std::memcpy(&bb, &(*cb[c])[i], sizeof(bb));
      if (ba != bb) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

RunRecord short_run(const Scenario& s) {
  RunInputs in = to_run_inputs(s);
  if (s.control.variant == ControllerVariant::none) {
    ZeroController zero;
    return run_closed_loop(in, zero);
  }
  ControlConfig cc = s.control;
  const CalibratedModel model =
      build_calibrated_model(in.potential, in.particle, in.detection, cc);
  const LqgDesign des = design_controller(model, cc);
  DiscreteLqgController ctl(des.realization);
  return run_closed_loop(in, ctl);
}

}  // namespace

// ---------------------------------------------------------------- scenarios

TEST_CASE("default scenario serializes and round-trips identically") {
  const Scenario s = default_scenario();
  const std::string text = serialize_scenario(s);
  const Scenario back = parse_scenario(text);
  CHECK(serialize_scenario(back) == text);
  CHECK(scenario_hash(back) == scenario_hash(s));
  // Spot-check resolved values survive the trip exactly.
  CHECK(back.potential.alpha_scale_J == s.potential.alpha_scale_J);
  CHECK(back.particle.mass_kg == s.particle.mass_kg);
  CHECK(back.detection.cxx_V_m == s.detection.cxx_V_m);
  CHECK(back.control.r_lqr == s.control.r_lqr);
  CHECK(back.seed == s.seed);
}

TEST_CASE("every bundled scenario round-trips and has a distinct hash") {
  std::vector<std::uint64_t> hashes;
  for (const std::string& name : bundled_scenario_names()) {
    const Scenario s = bundled_scenario(name);
    CHECK(s.name == name);
    const std::string text = serialize_scenario(s);
    const Scenario back = parse_scenario(text);
    CHECK(serialize_scenario(back) == text);
    hashes.push_back(scenario_hash(s));
  }
  std::sort(hashes.begin(), hashes.end());
  CHECK(std::adjacent_find(hashes.begin(), hashes.end()) == hashes.end());
}

TEST_CASE("empty document yields the default scenario") {
  const Scenario s = parse_scenario("{}");
  CHECK(serialize_scenario(s) == serialize_scenario(default_scenario()));
}

TEST_CASE("partial document overrides only the named fields") {
  const Scenario s = parse_scenario(R"({
    "name": "custom",
    "particle": {"temperature_K": 150.0},
    "run": {"duration_s": 0.005, "seed": 7}
  })");
  CHECK(s.name == "custom");
  CHECK(s.particle.temperature_K == doctest::Approx(150.0));
  CHECK(s.duration_s == doctest::Approx(0.005));
  CHECK(s.seed == 7);
  // Untouched values keep their defaults.
  const Scenario d = default_scenario();
  CHECK(s.particle.mass_kg == d.particle.mass_kg);
  CHECK(s.potential.p00_W == d.potential.p00_W);
  CHECK(s.decimation == d.decimation);
}

TEST_CASE("unknown fields are rejected with their JSON path") {
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"bogus": 1})"),
                       doctest::Contains("scenario: unknown field 'bogus'"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"particle": {"mass_g": 1.0}})"),
      doctest::Contains("scenario.particle: unknown field 'mass_g'"),
      ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"drift": {"delta1_m": {"end": 2.0}}})"),
      doctest::Contains("scenario.drift.delta1_m: unknown field 'end'"),
      ScenarioError);
}

TEST_CASE("type errors name the field path") {
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"name": 3})"),
                       doctest::Contains("scenario.name: expected a string"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"particle": {"cf_N_V": [1.0, 2.0]}})"),
      doctest::Contains("scenario.particle.cf_N_V"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"run": {"seed": -3}})"),
      doctest::Contains("scenario.run.seed"), ScenarioError);
}

TEST_CASE("syntax errors report the line number") {
  const std::string text = "{\n  \"name\": \"x\",\n  oops\n}\n";
  CHECK_THROWS_WITH_AS(parse_scenario(text), doctest::Contains("line 3"),
                       ScenarioError);
}

TEST_CASE("semantic validation rejects out-of-range values") {
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"run": {"duration_s": -1.0}})"),
                       doctest::Contains("duration_s"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"run": {"decimation": 0}})"),
                       doctest::Contains("decimation"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"run": {"substeps": 0}})"),
                       doctest::Contains("substeps"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"particle": {"mass_kg": 0.0}})"),
      doctest::Contains("mass_kg"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"drive_tones": [{"freq_hz": -5.0}]})"),
      doctest::Contains("drive_tones[0].freq_hz"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(R"({"control": {"variant": "psychic"}})"),
      doctest::Contains("scenario.control.variant"), ScenarioError);
  CHECK_THROWS_WITH_AS(
      parse_scenario(
          R"({"drift": {"kind": "replay", "replay_t_s": [0.0, 1.0],
              "replay_delta0_m": [0.0], "replay_delta1_m": [0.0, 0.0],
              "replay_dchi_x_V": [0.0, 0.0]}})"),
      doctest::Contains("equal lengths"), ScenarioError);
  CHECK_THROWS_WITH_AS(parse_scenario(R"({"schema_version": 9})"),
                       doctest::Contains("unsupported version 9"),
                       ScenarioError);
}

TEST_CASE("unknown bundled scenario lists the available names") {
  CHECK_THROWS_WITH_AS(bundled_scenario("nope"),
                       doctest::Contains("drift_comparison"), ScenarioError);
}

TEST_CASE("scenario hash tracks content, seed changes the hash") {
  Scenario a = default_scenario();
  Scenario b = default_scenario();
  CHECK(scenario_hash(a) == scenario_hash(b));
  b.seed = 2;
  CHECK(scenario_hash(a) != scenario_hash(b));
  b = default_scenario();
  b.potential.delta1_m = 1e-9;
  CHECK(scenario_hash(a) != scenario_hash(b));
}

TEST_CASE("load_scenario reads a file and reports open failures") {
  const std::string path = temp_path("levsim_scn.json");
  {
    std::ofstream os(path);
    os << serialize_scenario(bundled_scenario("free_harmonic_z"));
  }
  const Scenario s = load_scenario(path);
  CHECK(s.name == "free_harmonic_z");
  CHECK(s.potential.p01_W == 0.0);
  CHECK(s.control.variant == ControllerVariant::none);
  CHECK_THROWS_WITH_AS(load_scenario("/nonexistent/dir/x.json"),
                       doctest::Contains("cannot open"), ScenarioError);
}

TEST_CASE("to_run_inputs copies run settings and stamps the hash") {
  const Scenario s = bundled_scenario("force_calibration");
  const RunInputs in = to_run_inputs(s);
  CHECK(in.duration_s == s.duration_s);
  CHECK(in.sample_rate_hz == s.sample_rate_hz);
  CHECK(in.decimation == 8);
  CHECK(in.average_decimation == false);
  CHECK(in.seed == 99);
  CHECK(in.scenario_hash == scenario_hash(s));
  REQUIRE(in.drive_tones.size() == 2);
  CHECK(in.drive_tones[0].freq_hz == doctest::Approx(30e3));
  CHECK(in.drive_tones[1].phase_rad == doctest::Approx(1.0));
}

TEST_CASE("run sample rate drives the controller clock") {
  const Scenario s = parse_scenario(R"({"run": {"sample_rate_hz": 2.0e6}})");
  CHECK(s.sample_rate_hz == doctest::Approx(2.0e6));
  CHECK(s.control.sample_rate_hz == doctest::Approx(2.0e6));
}

// ------------------------------------------------------------------- traces

TEST_CASE("binary trace round-trips a real record bit-exactly") {
  Scenario s = default_scenario();
  s.duration_s = 2e-3;
  const RunRecord rec = short_run(s);
  REQUIRE(rec.size() > 100);

  const std::string path = temp_path("levsim_trace.bin");
  write_record_bin(rec, path);
  const RunRecord back = read_record_bin(path);
  require_records_identical(rec, back);
}

TEST_CASE("CSV trace round-trips a real record bit-exactly") {
  Scenario s = default_scenario();
  s.duration_s = 1e-3;
  const RunRecord rec = short_run(s);
  REQUIRE(rec.size() > 50);

  const std::string path = temp_path("levsim_trace.csv");
  write_record_csv(rec, path);
  const RunRecord back = read_record_csv(path);
  require_records_identical(rec, back);

  const std::string text = read_file(path);
  CHECK(text.rfind("# sample_rate_hz=", 0) == 0);
  CHECK(text.find("t_s,x_m,y_m,z_m") != std::string::npos);
}

TEST_CASE("trace headers carry the run metadata") {
  Scenario s = bundled_scenario("free_harmonic_z");
  s.duration_s = 1e-3;
  const RunRecord rec = short_run(s);
  const std::string path = temp_path("levsim_meta.bin");
  write_record_bin(rec, path);
  const RunRecord back = read_record_bin(path);
  CHECK(back.sample_rate_hz == doctest::Approx(31.25e6));
  CHECK(back.decimation == 64);
  CHECK(back.averaged == false);
  CHECK(back.seed == 5);
  CHECK(back.scenario_hash == scenario_hash(s));
  CHECK((back.status == RunStatus::completed));
}

TEST_CASE("NaN apex samples survive both formats") {
  // A well-parked particle has no apex between the wells for part of the
  // trajectory only in drifted cases; force NaN directly instead.
  RunRecord rec;
  rec.sample_rate_hz = 10.0;
  rec.record_rate_hz = 10.0;
  for (int i = 0; i < 5; ++i) {
    rec.t_s.push_back(0.1 * i);
    rec.x_m.push_back(1e-9 * i);
    rec.y_m.push_back(0.0);
    rec.z_m.push_back(0.0);
    rec.vx_mps.push_back(0.0);
    rec.vy_mps.push_back(0.0);
    rec.vz_mps.push_back(0.0);
    rec.chi_x_V.push_back(0.0);
    rec.chi_z_V.push_back(0.0);
    rec.u_V.push_back(0.0);
    rec.xhat_m.push_back(0.0);
    rec.vxhat_mps.push_back(0.0);
    rec.apexhat_m.push_back(0.0);
    rec.apexhat_raw_m.push_back(0.0);
    rec.zhat_m.push_back(0.0);
    rec.vzhat_mps.push_back(0.0);
    rec.delta0_m.push_back(0.0);
    rec.delta1_m.push_back(0.0);
    rec.dchi_x_V.push_back(0.0);
    rec.delta_apex_m.push_back(i == 2 ? std::nan("") : 1e-9);
  }
  const std::string pb = temp_path("levsim_nan.bin");
  const std::string pc = temp_path("levsim_nan.csv");
  write_record_bin(rec, pb);
  write_record_csv(rec, pc);
  const RunRecord rb = read_record_bin(pb);
  const RunRecord rc = read_record_csv(pc);
  CHECK(std::isnan(rb.delta_apex_m[2]));
  CHECK(std::isnan(rc.delta_apex_m[2]));
  CHECK(rb.delta_apex_m[3] == rec.delta_apex_m[3]);
  CHECK(rc.delta_apex_m[3] == rec.delta_apex_m[3]);
}

TEST_CASE("same seed produces byte-identical binary traces") {
  Scenario s = default_scenario();
  s.duration_s = 2e-3;
  const RunRecord r1 = short_run(s);
  const RunRecord r2 = short_run(s);
  const std::string p1 = temp_path("levsim_det1.bin");
  const std::string p2 = temp_path("levsim_det2.bin");
  write_record_bin(r1, p1);
  write_record_bin(r2, p2);
  CHECK(read_file(p1) == read_file(p2));

  // A different seed must give different bytes.
  Scenario s3 = s;
  s3.seed = 1234;
  const RunRecord r3 = short_run(s3);
  const std::string p3 = temp_path("levsim_det3.bin");
  write_record_bin(r3, p3);
  CHECK(read_file(p1) != read_file(p3));
}

TEST_CASE("trace readers reject malformed input") {
  const std::string path = temp_path("levsim_bad.bin");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTATRACE";
  }
  CHECK_THROWS_WITH_AS(read_record_bin(path), doctest::Contains("bad magic"),
                       TraceError);

  const std::string csv = temp_path("levsim_bad.csv");
  {
    std::ofstream os(csv);
    os << "t_s,x_m\n0.0,1.0\n";  // missing metadata line
  }
  CHECK_THROWS_WITH_AS(read_record_csv(csv),
                       doctest::Contains("missing metadata"), TraceError);
  {
    std::ofstream os(csv);
    os << "# sample_rate_hz=1 record_rate_hz=1 decimation=1 averaged=1 "
          "status=completed lost_at_s=-1 seed=0 scenario_hash=0\n";
    os << "t_s,x_m\n";
  }
  CHECK_THROWS_WITH_AS(read_record_csv(csv),
                       doctest::Contains("header has 2 columns"), TraceError);

  CHECK_THROWS_WITH_AS(read_record_bin("/nonexistent/x.bin"),
                       doctest::Contains("cannot open"), TraceError);
  RunRecord empty;
  CHECK_THROWS_WITH_AS(write_record_bin(empty, "/nonexistent/dir/y.bin"),
                       doctest::Contains("cannot open"), TraceError);
}

TEST_CASE("truncated binary trace is reported") {
  Scenario s = default_scenario();
  s.duration_s = 5e-4;
  const RunRecord rec = short_run(s);
  const std::string path = temp_path("levsim_trunc.bin");
  write_record_bin(rec, path);
  const std::string full = read_file(path);
  {
    std::ofstream os(path, std::ios::binary);
    os.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
  }
  CHECK_THROWS_WITH_AS(read_record_bin(path), doctest::Contains("truncated"),
                       TraceError);
}

TEST_CASE("zero-length record round-trips as an empty valid trace") {
  Scenario s = default_scenario();
  s.duration_s = 0.0;
  const RunRecord rec = short_run(s);
  CHECK(rec.size() == 0);
  const std::string pb = temp_path("levsim_empty.bin");
  const std::string pc = temp_path("levsim_empty.csv");
  write_record_bin(rec, pb);
  write_record_csv(rec, pc);
  const RunRecord rb = read_record_bin(pb);
  const RunRecord rc = read_record_csv(pc);
  CHECK(rb.size() == 0);
  CHECK(rc.size() == 0);
  CHECK(rb.sample_rate_hz == rec.sample_rate_hz);
  CHECK(rc.sample_rate_hz == rec.sample_rate_hz);
}
