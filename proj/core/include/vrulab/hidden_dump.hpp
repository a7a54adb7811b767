#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace vrulab::bridge {

// Hidden-state dump, little-endian:
//   "VRUH"                     4 bytes
//   version                    u32 (currently 1)
//   n_layers                   u32
//   d_model                    u32
//   row count                  u64
//   rows: layer u32, sample id i64, step index u32, d_model x f64
inline constexpr std::uint32_t kDumpVersion = 1;

struct DumpRow {
  std::uint32_t layer = 0;
  std::int64_t sample_id = 0;
  std::uint32_t step = 0;
  std::vector<double> values;
  friend bool operator==(const DumpRow&, const DumpRow&) = default;
};

struct HiddenDump {
  std::uint32_t n_layers = 0;
  std::uint32_t d_model = 0;
  std::vector<DumpRow> rows;
  friend bool operator==(const HiddenDump&, const HiddenDump&) = default;
};

void write_dump(std::ostream& out, const HiddenDump& dump);
// Validates the header against the rows (count, layer range, width).
HiddenDump read_dump(std::istream& in);

void save_dump(const std::string& path, const HiddenDump& dump);
HiddenDump load_dump(const std::string& path);

// Throws ValidationError if the dump disagrees with what the producer
// reported about its model.
void check_dump_matches(const HiddenDump& dump, std::uint32_t n_layers, std::uint32_t d_model);

}  // namespace vrulab::bridge
