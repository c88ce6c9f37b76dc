// Record persistence: CSV (human-readable, unit-suffixed header, metadata
// comment line) and a compact versioned binary trace.  Both formats
// round-trip every sample bit-exactly.
//
// Binary layout (magic "LEVTRC01", all multi-byte fields little-endian,
// all floating-point IEEE-754 binary64):
//   offset  size  field
//   0       8     magic "LEVTRC01"
//   8       4     u32  format version (1)
//   12      4     u32  column count
//   16      8     u64  row count
//   24      8     f64  sample_rate_hz
//   32      8     f64  record_rate_hz
//   40      4     i32  decimation
//   44      1     u8   averaged (0/1)
//   45      1     u8   status (0 = completed, 1 = particle lost)
//   46      2     u16  reserved (0)
//   48      8     f64  lost_at_s (-1 when not lost)
//   56      8     u64  seed
//   64      8     u64  scenario hash
//   72      ...   column name table: per column u16 length + bytes (UTF-8)
//   ...     ...   column-major f64 data (row count values per column)
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "levsim/dynamics.hpp"

namespace levsim {

/// Raised on I/O failure or malformed trace content.
class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Column names stored in both formats, in file order.  The names carry
/// their units as suffixes (t_s, x_m, u_V, ...).
const std::vector<std::string>& record_column_names();

/// Writes one row per record sample, preceded by a '#' metadata comment
/// line and a header row of column names.  Values use 17 significant
/// digits, enough to reproduce every double exactly.
void write_record_csv(const RunRecord& rec, const std::string& path);
RunRecord read_record_csv(const std::string& path);

/// Compact binary trace (layout above).
void write_record_bin(const RunRecord& rec, const std::string& path);
RunRecord read_record_bin(const std::string& path);

}  // namespace levsim
