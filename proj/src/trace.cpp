#include "levsim/trace.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace levsim {

namespace {

constexpr char kMagic[8] = {'L', 'E', 'V', 'T', 'R', 'C', '0', '1'};
constexpr std::uint32_t kVersion = 1;

std::vector<const std::vector<double>*> columns_of(const RunRecord& r) {
  return {&r.t_s,       &r.x_m,           &r.y_m,        &r.z_m,
          &r.vx_mps,    &r.vy_mps,        &r.vz_mps,     &r.chi_x_V,
          &r.chi_z_V,   &r.u_V,           &r.xhat_m,     &r.vxhat_mps,
          &r.apexhat_m, &r.apexhat_raw_m, &r.zhat_m,     &r.vzhat_mps,
          &r.delta0_m,  &r.delta1_m,      &r.dchi_x_V,   &r.delta_apex_m};
}

std::vector<std::vector<double>*> columns_of(RunRecord& r) {
  return {&r.t_s,       &r.x_m,           &r.y_m,        &r.z_m,
          &r.vx_mps,    &r.vy_mps,        &r.vz_mps,     &r.chi_x_V,
          &r.chi_z_V,   &r.u_V,           &r.xhat_m,     &r.vxhat_mps,
          &r.apexhat_m, &r.apexhat_raw_m, &r.zhat_m,     &r.vzhat_mps,
          &r.delta0_m,  &r.delta1_m,      &r.dchi_x_V,   &r.delta_apex_m};
}

// ------------------------------------------------------ little-endian bytes

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> buf;
  std::memcpy(buf.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  }
  put_bytes(os, buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> buf;
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!is) throw TraceError("binary trace truncated");
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, buf.data(), sizeof(T));
  return value;
}

void put_f64_column(std::ostream& os, const std::vector<double>& col) {
  if constexpr (std::endian::native == std::endian::little) {
    put_bytes(os, col.data(), col.size() * sizeof(double));
  } else {
    for (double v : col) put_le(os, v);
  }
}

void get_f64_column(std::istream& is, std::vector<double>& col,
                    std::size_t n) {
  col.resize(n);
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(col.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw TraceError("binary trace truncated");
  } else {
    for (std::size_t i = 0; i < n; ++i) col[i] = get_le<double>(is);
  }
}

// -------------------------------------------------------------- CSV helpers

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw TraceError("line " + std::to_string(line_no) +
                     ": cannot parse number '" + s + "'");
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

const std::vector<std::string>& record_column_names() {
  static const std::vector<std::string> names = {
      "t_s",       "x_m",           "y_m",      "z_m",       "vx_mps",
      "vy_mps",    "vz_mps",        "chi_x_V",  "chi_z_V",   "u_V",
      "xhat_m",    "vxhat_mps",     "apexhat_m", "apexhat_raw_m",
      "zhat_m",    "vzhat_mps",     "delta0_m", "delta1_m",  "dchi_x_V",
      "delta_apex_m"};
  return names;
}

// ------------------------------------------------------------------- binary

void write_record_bin(const RunRecord& rec, const std::string& path) {
  const auto cols = columns_of(rec);
  const auto& names = record_column_names();
  const std::size_t rows = rec.size();
  for (const auto* c : cols)
    if (c->size() != rows)
      throw TraceError("record columns have inconsistent lengths");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw TraceError("cannot open for writing: " + path);

  put_bytes(os, kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cols.size()));
  put_le<std::uint64_t>(os, static_cast<std::uint64_t>(rows));
  put_le<double>(os, rec.sample_rate_hz);
  put_le<double>(os, rec.record_rate_hz);
  put_le<std::int32_t>(os, rec.decimation);
  put_le<std::uint8_t>(os, rec.averaged ? 1 : 0);
  put_le<std::uint8_t>(os, rec.status == RunStatus::particle_lost ? 1 : 0);
  put_le<std::uint16_t>(os, 0);  // reserved
  put_le<double>(os, rec.lost_at_s);
  put_le<std::uint64_t>(os, rec.seed);
  put_le<std::uint64_t>(os, rec.scenario_hash);

  for (const std::string& n : names) {
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(n.size()));
    put_bytes(os, n.data(), n.size());
  }
  for (const auto* c : cols) put_f64_column(os, *c);

  if (!os) throw TraceError("write failed: " + path);
}

RunRecord read_record_bin(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TraceError("cannot open for reading: " + path);

  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw TraceError("not a binary trace (bad magic): " + path);

  const auto version = get_le<std::uint32_t>(is);
  if (version != kVersion)
    throw TraceError("unsupported trace version " + std::to_string(version) +
                     " (this build reads version 1)");
  const auto n_cols = get_le<std::uint32_t>(is);
  const auto n_rows = get_le<std::uint64_t>(is);

  RunRecord rec;
  rec.sample_rate_hz = get_le<double>(is);
  rec.record_rate_hz = get_le<double>(is);
  rec.decimation = get_le<std::int32_t>(is);
  rec.averaged = get_le<std::uint8_t>(is) != 0;
  const auto status = get_le<std::uint8_t>(is);
  if (status > 1)
    throw TraceError("invalid status byte " + std::to_string(status));
  rec.status = status ? RunStatus::particle_lost : RunStatus::completed;
  (void)get_le<std::uint16_t>(is);  // reserved
  rec.lost_at_s = get_le<double>(is);
  rec.seed = get_le<std::uint64_t>(is);
  rec.scenario_hash = get_le<std::uint64_t>(is);

  const auto& names = record_column_names();
  if (n_cols != names.size())
    throw TraceError("unsupported column count " + std::to_string(n_cols));
  for (const std::string& expect : names) {
    const auto len = get_le<std::uint16_t>(is);
    std::string got(len, '\0');
    is.read(got.data(), len);
    if (!is) throw TraceError("binary trace truncated");
    if (got != expect)
      throw TraceError("unexpected column '" + got + "' (expected '" +
                       expect + "')");
  }

  auto cols = columns_of(rec);
  for (auto* c : cols) get_f64_column(is, *c, static_cast<std::size_t>(n_rows));
  return rec;
}

// ---------------------------------------------------------------------- CSV

void write_record_csv(const RunRecord& rec, const std::string& path) {
  const auto cols = columns_of(rec);
  const auto& names = record_column_names();
  const std::size_t rows = rec.size();
  for (const auto* c : cols)
    if (c->size() != rows)
      throw TraceError("record columns have inconsistent lengths");

  std::ofstream os(path);
  if (!os) throw TraceError("cannot open for writing: " + path);
  os << std::setprecision(std::numeric_limits<double>::max_digits10);

  os << "# sample_rate_hz=" << rec.sample_rate_hz
     << " record_rate_hz=" << rec.record_rate_hz
     << " decimation=" << rec.decimation
     << " averaged=" << (rec.averaged ? 1 : 0) << " status="
     << (rec.status == RunStatus::particle_lost ? "particle_lost"
                                                : "completed")
     << " lost_at_s=" << rec.lost_at_s << " seed=" << rec.seed
     << " scenario_hash=" << rec.scenario_hash << "\n";

  for (std::size_t i = 0; i < names.size(); ++i)
    os << (i ? "," : "") << names[i];
  os << "\n";

  for (std::size_t row = 0; row < rows; ++row) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      os << (i ? "," : "") << (*cols[i])[row];
    os << "\n";
  }
  if (!os) throw TraceError("write failed: " + path);
}

RunRecord read_record_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw TraceError("cannot open for reading: " + path);

  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(is, line) || line.rfind("# ", 0) != 0)
    throw TraceError(path + ": missing metadata comment line");
  ++line_no;

  RunRecord rec;
  try {
    std::istringstream meta(line.substr(2));
    std::string tok;
    while (meta >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw TraceError(path + ": malformed metadata token '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "sample_rate_hz") rec.sample_rate_hz = parse_double(val, 1);
      else if (key == "record_rate_hz") rec.record_rate_hz = parse_double(val, 1);
      else if (key == "decimation") rec.decimation = std::stoi(val);
      else if (key == "averaged") rec.averaged = val != "0";
      else if (key == "status") {
        if (val == "completed") rec.status = RunStatus::completed;
        else if (val == "particle_lost") rec.status = RunStatus::particle_lost;
        else throw TraceError(path + ": unknown status '" + val + "'");
      } else if (key == "lost_at_s") rec.lost_at_s = parse_double(val, 1);
      else if (key == "seed") rec.seed = std::stoull(val);
      else if (key == "scenario_hash") rec.scenario_hash = std::stoull(val);
      else throw TraceError(path + ": unknown metadata key '" + key + "'");
    }
  } catch (const TraceError&) {
    throw;
  } catch (const std::exception& e) {
    throw TraceError(path + ": malformed metadata (" + e.what() + ")");
  }

  if (!std::getline(is, line))
    throw TraceError(path + ": missing header row");
  ++line_no;
  const auto header = split_csv(line);
  const auto& names = record_column_names();
  if (header.size() != names.size())
    throw TraceError(path + ": header has " + std::to_string(header.size()) +
                     " columns, expected " + std::to_string(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i)
    if (header[i] != names[i])
      throw TraceError(path + ": unexpected column '" + header[i] +
                       "' (expected '" + names[i] + "')");

  auto cols = columns_of(rec);
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != cols.size())
      throw TraceError(path + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i)
      cols[i]->push_back(parse_double(fields[i], line_no));
  }
  return rec;
}

}  // namespace levsim
