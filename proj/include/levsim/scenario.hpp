// Declarative run configuration: a versioned JSON document with explicit
// unit-suffixed field names covering the trap, particle, detection, drift,
// drive, controller, and run settings.  Missing fields fall back to library
// defaults; unknown fields are rejected with their JSON path.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "levsim/control.hpp"
#include "levsim/dynamics.hpp"
#include "levsim/potential.hpp"

namespace levsim {

/// Raised on malformed scenario text or invalid field values; the message
/// names the offending field path (and the line for syntax errors).
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One fully resolved run configuration.
struct Scenario {
  int schema_version = 1;
  std::string name = "default";

  PotentialParams potential;   // defaults to calibrated_double_well()
  ParticleParams particle;     // defaults to default_particle()
  DetectionParams detection;   // defaults to default_detection()
  DriftModel drift;            // defaults to no drift
  std::vector<DriveTone> drive_tones;
  ControlConfig control;       // defaults to default_control()

  double duration_s = 20e-3;
  double sample_rate_hz = 31.25e6;
  int substeps = 1;
  int decimation = 64;
  bool average_decimation = true;
  double escape_radius_m = 2e-6;
  std::uint64_t seed = 1;
  std::array<double, 3> q0_m = {0.0, 0.0, 0.0};
  std::array<double, 3> v0_mps = {0.0, 0.0, 0.0};
};

/// Library defaults for every field (the "default" bundled scenario).
Scenario default_scenario();

/// Names of the scenarios shipped with the library.
std::vector<std::string> bundled_scenario_names();

/// Returns a bundled scenario by name; throws ScenarioError listing the
/// valid names otherwise.
Scenario bundled_scenario(const std::string& name);

/// Parses a scenario JSON document.  Missing fields default; unknown or
/// ill-typed fields raise ScenarioError naming the field path; syntax errors
/// report the line.
Scenario parse_scenario(const std::string& json_text);

/// Reads and parses a scenario file; throws ScenarioError on I/O failure.
Scenario load_scenario(const std::string& path);

/// Canonical JSON serialization (full document, fixed key order, exact
/// round-trip of all values).  parse(serialize(s)) reproduces s.
std::string serialize_scenario(const Scenario& s);

/// FNV-1a 64-bit hash of the canonical serialization; stable across
/// parse/serialize round trips.
std::uint64_t scenario_hash(const Scenario& s);

/// Assembles the simulation inputs (including the scenario hash).
RunInputs to_run_inputs(const Scenario& s);

}  // namespace levsim
