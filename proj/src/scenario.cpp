#include "levsim/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace levsim {

using ordered_json = nlohmann::ordered_json;

namespace {

// ------------------------------------------------------------- serialization

ordered_json ramp_to_json(const Ramp& r) {
  return ordered_json{{"initial", r.initial},
                      {"target", r.target},
                      {"start_s", r.start_s},
                      {"duration_s", r.duration_s}};
}

const char* drift_kind_name(DriftKind k) {
  switch (k) {
    case DriftKind::constant: return "constant";
    case DriftKind::ramp: return "ramp";
    case DriftKind::random_walk: return "random_walk";
    case DriftKind::replay: return "replay";
  }
  return "constant";
}

DriftKind drift_kind_from_name(const std::string& s, const std::string& path) {
  if (s == "constant") return DriftKind::constant;
  if (s == "ramp") return DriftKind::ramp;
  if (s == "random_walk") return DriftKind::random_walk;
  if (s == "replay") return DriftKind::replay;
  throw ScenarioError(path + ": unknown drift kind '" + s +
                      "' (expected constant, ramp, random_walk, or replay)");
}

ordered_json scenario_to_json(const Scenario& s) {
  ordered_json j;
  j["schema_version"] = s.schema_version;
  j["name"] = s.name;

  const PotentialParams& p = s.potential;
  j["potential"] = ordered_json{
      {"p00_W", p.p00_W},
      {"p01_W", p.p01_W},
      {"p00_ref_W", p.p00_ref_W},
      {"p01_ref_W", p.p01_ref_W},
      {"alpha_scale_J", p.alpha_scale_J},
      {"beta_scale_J", p.beta_scale_J},
      {"w00x_m", p.w00x_m},
      {"w00y_m", p.w00y_m},
      {"w01x_m", p.w01x_m},
      {"w01y_m", p.w01y_m},
      {"z00_m", p.z00_m},
      {"z01_m", p.z01_m},
      {"delta0_m", p.delta0_m},
      {"delta1_m", p.delta1_m}};

  const ParticleParams& q = s.particle;
  j["particle"] = ordered_json{{"mass_kg", q.mass_kg},
                               {"gamma_kg_s", q.gamma_kg_s},
                               {"temperature_K", q.temperature_K},
                               {"cf_N_V", q.cf_N_V}};

  const DetectionParams& d = s.detection;
  j["detection"] = ordered_json{{"cxx_V_m", d.cxx_V_m},
                                {"cxy_V_m", d.cxy_V_m},
                                {"cxz_V_m", d.cxz_V_m},
                                {"czx_V_m", d.czx_V_m},
                                {"czy_V_m", d.czy_V_m},
                                {"czz_V_m", d.czz_V_m},
                                {"x_nl_m", d.x_nl_m},
                                {"sigma_x_V_rtHz", d.sigma_x_V_rtHz},
                                {"sigma_z_V_rtHz", d.sigma_z_V_rtHz},
                                {"drift_rate_max_V_s", d.drift_rate_max_V_s}};

  const DriftModel& dr = s.drift;
  ordered_json jd;
  jd["kind"] = drift_kind_name(dr.kind);
  jd["delta0_m"] = ramp_to_json(dr.delta0_m);
  jd["delta1_m"] = ramp_to_json(dr.delta1_m);
  jd["dchi_x_V"] = ramp_to_json(dr.dchi_x_V);
  jd["walk_rms_delta0_m"] = dr.walk_rms_delta0_m;
  jd["walk_rms_delta1_m"] = dr.walk_rms_delta1_m;
  jd["walk_rms_dchi_x_V"] = dr.walk_rms_dchi_x_V;
  jd["walk_timescale_s"] = dr.walk_timescale_s;
  jd["replay_t_s"] = dr.replay_t_s;
  std::vector<double> r0, r1, rx;
  for (const auto& v : dr.replay_values) {
    r0.push_back(v[0]);
    r1.push_back(v[1]);
    rx.push_back(v[2]);
  }
  jd["replay_delta0_m"] = r0;
  jd["replay_delta1_m"] = r1;
  jd["replay_dchi_x_V"] = rx;
  j["drift"] = std::move(jd);

  ordered_json tones = ordered_json::array();
  for (const DriveTone& t : s.drive_tones)
    tones.push_back(ordered_json{{"freq_hz", t.freq_hz},
                                 {"amp_V", t.amp_V},
                                 {"phase_rad", t.phase_rad}});
  j["drive_tones"] = std::move(tones);

  // The controller runs on the loop clock; its rate is run.sample_rate_hz.
  const ControlConfig& c = s.control;
  j["control"] = ordered_json{{"variant", variant_name(c.variant)},
                              {"r_lqr", c.r_lqr},
                              {"q_z", c.q_z},
                              {"sigma_w_apex_m2_s", c.sigma_w_apex_m2_s},
                              {"apex_max_V", c.apex_max_V},
                              {"delay_samples", c.delay_samples},
                              {"forward_predict", c.forward_predict}};

  j["run"] = ordered_json{{"duration_s", s.duration_s},
                          {"sample_rate_hz", s.sample_rate_hz},
                          {"substeps", s.substeps},
                          {"decimation", s.decimation},
                          {"average_decimation", s.average_decimation},
                          {"escape_radius_m", s.escape_radius_m},
                          {"seed", s.seed},
                          {"q0_m", s.q0_m},
                          {"v0_mps", s.v0_mps}};
  return j;
}

// --------------------------------------------------------------- validation

[[noreturn]] void type_error(const std::string& path, const char* expected) {
  throw ScenarioError(path + ": expected " + expected);
}

class Reader {
 public:
  Reader(const ordered_json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) type_error(path_, "an object");
  }

  ~Reader() = default;

  // Every get_* marks the key as consumed; finish() rejects leftovers.
  void finish() const {
    for (const auto& item : j_.items()) {
      bool known = false;
      for (const std::string& k : seen_)
        if (k == item.key()) known = true;
      if (!known)
        throw ScenarioError(path_ + ": unknown field '" + item.key() + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get_number(const char* key, T& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_number()) type_error(path_ + "." + key, "a number");
    out = v->get<T>();
  }

  void get_uint64(const char* key, std::uint64_t& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_number_unsigned() && !v->is_number_integer())
      type_error(path_ + "." + key, "a non-negative integer");
    if (v->is_number_integer() && v->get<long long>() < 0)
      type_error(path_ + "." + key, "a non-negative integer");
    out = v->get<std::uint64_t>();
  }

  void get_int(const char* key, int& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_number_integer() && !v->is_number_unsigned())
      type_error(path_ + "." + key, "an integer");
    out = v->get<int>();
  }

  void get_bool(const char* key, bool& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_boolean()) type_error(path_ + "." + key, "a boolean");
    out = v->get<bool>();
  }

  void get_string(const char* key, std::string& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_string()) type_error(path_ + "." + key, "a string");
    out = v->get<std::string>();
  }

  void get_vec3(const char* key, std::array<double, 3>& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_array() || v->size() != 3)
      type_error(path_ + "." + key, "an array of 3 numbers");
    for (int i = 0; i < 3; ++i) {
      if (!(*v)[static_cast<std::size_t>(i)].is_number())
        type_error(path_ + "." + key, "an array of 3 numbers");
      out[static_cast<std::size_t>(i)] =
          (*v)[static_cast<std::size_t>(i)].get<double>();
    }
  }

  void get_double_list(const char* key, std::vector<double>& out) {
    const ordered_json* v = fetch(key);
    if (!v) return;
    if (!v->is_array()) type_error(path_ + "." + key, "an array of numbers");
    out.clear();
    for (const auto& e : *v) {
      if (!e.is_number()) type_error(path_ + "." + key, "an array of numbers");
      out.push_back(e.get<double>());
    }
  }

  const ordered_json* fetch(const char* key) {
    seen_.emplace_back(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const ordered_json& json() const { return j_; }
  const std::string& path() const { return path_; }

 private:
  const ordered_json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

Ramp parse_ramp(const ordered_json& j, const std::string& path,
                const Ramp& dflt) {
  Reader r(j, path);
  Ramp out = dflt;
  r.get_number("initial", out.initial);
  r.get_number("target", out.target);
  r.get_number("start_s", out.start_s);
  r.get_number("duration_s", out.duration_s);
  r.finish();
  return out;
}

Scenario from_json(const ordered_json& j) {
  Scenario s = default_scenario();
  Reader root(j, "scenario");

  root.get_int("schema_version", s.schema_version);
  if (s.schema_version != 1)
    throw ScenarioError("scenario.schema_version: unsupported version " +
                        std::to_string(s.schema_version) +
                        " (this build reads version 1)");
  root.get_string("name", s.name);

  if (const ordered_json* v = root.fetch("potential")) {
    Reader r(*v, "scenario.potential");
    PotentialParams& p = s.potential;
    r.get_number("p00_W", p.p00_W);
    r.get_number("p01_W", p.p01_W);
    r.get_number("p00_ref_W", p.p00_ref_W);
    r.get_number("p01_ref_W", p.p01_ref_W);
    r.get_number("alpha_scale_J", p.alpha_scale_J);
    r.get_number("beta_scale_J", p.beta_scale_J);
    r.get_number("w00x_m", p.w00x_m);
    r.get_number("w00y_m", p.w00y_m);
    r.get_number("w01x_m", p.w01x_m);
    r.get_number("w01y_m", p.w01y_m);
    r.get_number("z00_m", p.z00_m);
    r.get_number("z01_m", p.z01_m);
    r.get_number("delta0_m", p.delta0_m);
    r.get_number("delta1_m", p.delta1_m);
    r.finish();
  }

  if (const ordered_json* v = root.fetch("particle")) {
    Reader r(*v, "scenario.particle");
    ParticleParams& p = s.particle;
    r.get_number("mass_kg", p.mass_kg);
    r.get_number("gamma_kg_s", p.gamma_kg_s);
    r.get_number("temperature_K", p.temperature_K);
    r.get_vec3("cf_N_V", p.cf_N_V);
    r.finish();
    if (!(p.mass_kg > 0.0))
      throw ScenarioError("scenario.particle.mass_kg: must be positive");
  }

  if (const ordered_json* v = root.fetch("detection")) {
    Reader r(*v, "scenario.detection");
    DetectionParams& d = s.detection;
    r.get_number("cxx_V_m", d.cxx_V_m);
    r.get_number("cxy_V_m", d.cxy_V_m);
    r.get_number("cxz_V_m", d.cxz_V_m);
    r.get_number("czx_V_m", d.czx_V_m);
    r.get_number("czy_V_m", d.czy_V_m);
    r.get_number("czz_V_m", d.czz_V_m);
    r.get_number("x_nl_m", d.x_nl_m);
    r.get_number("sigma_x_V_rtHz", d.sigma_x_V_rtHz);
    r.get_number("sigma_z_V_rtHz", d.sigma_z_V_rtHz);
    r.get_number("drift_rate_max_V_s", d.drift_rate_max_V_s);
    r.finish();
  }

  if (const ordered_json* v = root.fetch("drift")) {
    Reader r(*v, "scenario.drift");
    DriftModel& d = s.drift;
    std::string kind = drift_kind_name(d.kind);
    r.get_string("kind", kind);
    d.kind = drift_kind_from_name(kind, "scenario.drift.kind");
    if (const ordered_json* rv = r.fetch("delta0_m"))
      d.delta0_m = parse_ramp(*rv, "scenario.drift.delta0_m", d.delta0_m);
    if (const ordered_json* rv = r.fetch("delta1_m"))
      d.delta1_m = parse_ramp(*rv, "scenario.drift.delta1_m", d.delta1_m);
    if (const ordered_json* rv = r.fetch("dchi_x_V"))
      d.dchi_x_V = parse_ramp(*rv, "scenario.drift.dchi_x_V", d.dchi_x_V);
    r.get_number("walk_rms_delta0_m", d.walk_rms_delta0_m);
    r.get_number("walk_rms_delta1_m", d.walk_rms_delta1_m);
    r.get_number("walk_rms_dchi_x_V", d.walk_rms_dchi_x_V);
    r.get_number("walk_timescale_s", d.walk_timescale_s);
    std::vector<double> t = d.replay_t_s, r0, r1, rx;
    for (const auto& val : d.replay_values) {
      r0.push_back(val[0]);
      r1.push_back(val[1]);
      rx.push_back(val[2]);
    }
    r.get_double_list("replay_t_s", t);
    r.get_double_list("replay_delta0_m", r0);
    r.get_double_list("replay_delta1_m", r1);
    r.get_double_list("replay_dchi_x_V", rx);
    r.finish();
    if (r0.size() != t.size() || r1.size() != t.size() || rx.size() != t.size())
      throw ScenarioError(
          "scenario.drift: replay_t_s, replay_delta0_m, replay_delta1_m, and "
          "replay_dchi_x_V must have equal lengths");
    if (d.kind == DriftKind::replay && t.size() < 2)
      throw ScenarioError(
          "scenario.drift.replay_t_s: replay drift needs at least 2 points");
    d.replay_t_s = std::move(t);
    d.replay_values.clear();
    for (std::size_t i = 0; i < r0.size(); ++i)
      d.replay_values.push_back({r0[i], r1[i], rx[i]});
  }

  if (const ordered_json* v = root.fetch("drive_tones")) {
    if (!v->is_array()) type_error("scenario.drive_tones", "an array");
    s.drive_tones.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      Reader r((*v)[i], "scenario.drive_tones[" + std::to_string(i) + "]");
      DriveTone t;
      r.get_number("freq_hz", t.freq_hz);
      r.get_number("amp_V", t.amp_V);
      r.get_number("phase_rad", t.phase_rad);
      r.finish();
      if (!(t.freq_hz > 0.0))
        throw ScenarioError("scenario.drive_tones[" + std::to_string(i) +
                            "].freq_hz: must be positive");
      s.drive_tones.push_back(t);
    }
  }

  if (const ordered_json* v = root.fetch("control")) {
    Reader r(*v, "scenario.control");
    ControlConfig& c = s.control;
    std::string variant = variant_name(c.variant);
    r.get_string("variant", variant);
    try {
      c.variant = variant_from_name(variant);
    } catch (const std::exception& e) {
      throw ScenarioError(std::string("scenario.control.variant: ") +
                          e.what());
    }
    r.get_number("r_lqr", c.r_lqr);
    r.get_number("q_z", c.q_z);
    r.get_number("sigma_w_apex_m2_s", c.sigma_w_apex_m2_s);
    r.get_number("apex_max_V", c.apex_max_V);
    r.get_int("delay_samples", c.delay_samples);
    r.get_bool("forward_predict", c.forward_predict);
    r.finish();
  }

  if (const ordered_json* v = root.fetch("run")) {
    Reader r(*v, "scenario.run");
    r.get_number("duration_s", s.duration_s);
    r.get_number("sample_rate_hz", s.sample_rate_hz);
    r.get_int("substeps", s.substeps);
    r.get_int("decimation", s.decimation);
    r.get_bool("average_decimation", s.average_decimation);
    r.get_number("escape_radius_m", s.escape_radius_m);
    r.get_uint64("seed", s.seed);
    r.get_vec3("q0_m", s.q0_m);
    r.get_vec3("v0_mps", s.v0_mps);
    r.finish();
    if (s.duration_s < 0.0)
      throw ScenarioError("scenario.run.duration_s: must be >= 0");
    if (!(s.sample_rate_hz > 0.0))
      throw ScenarioError("scenario.run.sample_rate_hz: must be positive");
    if (s.substeps < 1)
      throw ScenarioError("scenario.run.substeps: must be >= 1");
    if (s.decimation < 1)
      throw ScenarioError("scenario.run.decimation: must be >= 1");
    if (!(s.escape_radius_m > 0.0))
      throw ScenarioError("scenario.run.escape_radius_m: must be positive");
  }

  root.finish();
  // Keep the design model and the loop on the same clock.
  s.control.sample_rate_hz = s.sample_rate_hz;
  return s;
}

}  // namespace

// ----------------------------------------------------------- public surface

Scenario default_scenario() {
  Scenario s;
  s.potential = calibrated_double_well();
  s.particle = default_particle();
  s.detection = default_detection();
  s.control = default_control();
  return s;
}

std::vector<std::string> bundled_scenario_names() {
  return {"default",          "drift_comparison", "constraint_robustness",
          "free_double_well", "free_harmonic_z",  "force_calibration"};
}

Scenario bundled_scenario(const std::string& name) {
  Scenario s = default_scenario();
  s.name = name;
  if (name == "default") {
    return s;
  }
  if (name == "drift_comparison") {
    // Side-lobe beam drifts 12 nm between 10 ms and 60 ms, moving the apex
    // by ~71 nm; the estimate bound is lifted so adaptive controllers may
    // follow it all the way.  At this drift the fixed-reference controller
    // ends up letting the particle ring inside the displaced well, which is
    // the spectral signature the comparison is after; much larger drifts
    // push that motion into a detector-folded relaxation orbit instead.
    s.duration_s = 100e-3;
    s.drift.kind = DriftKind::ramp;
    s.drift.delta1_m = Ramp{0.0, 12e-9, 10e-3, 50e-3};
    s.control.apex_max_V = 2.0;
    return s;
  }
  if (name == "constraint_robustness") {
    // The apex leaves the +-apex_max estimate window (default 0.1 V = 37 nm)
    // and comes back; the controller must hold the particle throughout.
    s.duration_s = 80e-3;
    s.seed = 21;
    s.drift.kind = DriftKind::replay;
    s.drift.replay_t_s = {0.0, 10e-3, 30e-3, 45e-3, 65e-3, 80e-3};
    s.drift.replay_values = {{0.0, 0.0, 0.0},   {0.0, 0.0, 0.0},
                             {0.0, 15e-9, 0.0}, {0.0, 15e-9, 0.0},
                             {0.0, 0.0, 0.0},   {0.0, 0.0, 0.0}};
    return s;
  }
  if (name == "free_double_well") {
    // Both beams attenuated to a ~2.5 kT barrier: the free particle hops
    // between the wells, sampling the Boltzmann distribution.
    s.duration_s = 100e-3;
    s.seed = 11;
    s.potential.p00_W *= 0.062;
    s.potential.p01_W *= 0.062;
    s.control.variant = ControllerVariant::none;
    return s;
  }
  if (name == "free_harmonic_z") {
    // Side-lobe beam off: free thermal motion in the harmonic trap of the
    // fundamental beam, recorded without block averaging so spectral peaks
    // keep their height.
    s.duration_s = 400e-3;
    s.seed = 5;
    s.potential.p01_W = 0.0;
    s.control.variant = ControllerVariant::none;
    s.average_decimation = false;
    return s;
  }
  if (name == "force_calibration") {
    // Harmonic trap plus two drive tones for extracting the force couplings.
    s.duration_s = 20e-3;
    s.seed = 99;
    s.potential.p01_W = 0.0;
    s.control.variant = ControllerVariant::none;
    s.decimation = 8;
    s.average_decimation = false;
    s.drive_tones = {{30e3, 0.5, 0.0}, {80e3, 0.5, 1.0}};
    return s;
  }
  std::string names;
  for (const std::string& n : bundled_scenario_names())
    names += (names.empty() ? "" : ", ") + n;
  throw ScenarioError("unknown bundled scenario '" + name + "' (available: " +
                      names + ")");
}

Scenario parse_scenario(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    // Convert the byte offset into a line number for the diagnostic.
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < json_text.size(); ++i)
      if (json_text[i] == '\n') ++line;
    throw ScenarioError("scenario syntax error at line " +
                        std::to_string(line) + ": " + e.what());
  }
  return from_json(j);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

std::string serialize_scenario(const Scenario& s) {
  return scenario_to_json(s).dump(2) + "\n";
}

std::uint64_t scenario_hash(const Scenario& s) {
  const std::string text = serialize_scenario(s);
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64-bit offset basis
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;  // FNV-1a 64-bit prime
  }
  return h;
}

RunInputs to_run_inputs(const Scenario& s) {
  RunInputs in;
  in.potential = s.potential;
  in.particle = s.particle;
  in.detection = s.detection;
  in.drift = s.drift;
  in.drive_tones = s.drive_tones;
  in.duration_s = s.duration_s;
  in.sample_rate_hz = s.sample_rate_hz;
  in.substeps = s.substeps;
  in.decimation = s.decimation;
  in.average_decimation = s.average_decimation;
  in.escape_radius_m = s.escape_radius_m;
  in.seed = s.seed;
  in.scenario_hash = scenario_hash(s);
  in.q0_m = s.q0_m;
  in.v0_mps = s.v0_mps;
  return in;
}

}  // namespace levsim
