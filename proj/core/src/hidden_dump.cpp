#include "vrulab/hidden_dump.hpp"

#include <fstream>

#include "vrulab/binary_io.hpp"

namespace vrulab::bridge {

void write_dump(std::ostream& out, const HiddenDump& dump) {
  out.write("VRUH", 4);
  io::write_le<std::uint32_t>(out, kDumpVersion);
  io::write_le<std::uint32_t>(out, dump.n_layers);
  io::write_le<std::uint32_t>(out, dump.d_model);
  io::write_le<std::uint64_t>(out, dump.rows.size());
  for (const auto& r : dump.rows) {
    if (r.values.size() != dump.d_model) {
      throw ValidationError("dump row width " + std::to_string(r.values.size()) +
                            " does not match d_model " + std::to_string(dump.d_model));
    }
    io::write_le<std::uint32_t>(out, r.layer);
    io::write_le<std::int64_t>(out, r.sample_id);
    io::write_le<std::uint32_t>(out, r.step);
    out.write(reinterpret_cast<const char*>(r.values.data()),
              static_cast<std::streamsize>(r.values.size() * sizeof(double)));
  }
}

HiddenDump read_dump(std::istream& in) {
  io::expect_magic(in, "VRUH");
  const auto version = io::read_le<std::uint32_t>(in, "version");
  if (version != kDumpVersion) throw ValidationError("unsupported dump version " + std::to_string(version));
  HiddenDump dump;
  dump.n_layers = io::read_le<std::uint32_t>(in, "n_layers");
  dump.d_model = io::read_le<std::uint32_t>(in, "d_model");
  const auto count = io::read_le<std::uint64_t>(in, "row count");
  dump.rows.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    DumpRow r;
    r.layer = io::read_le<std::uint32_t>(in, "row layer");
    if (r.layer >= dump.n_layers) {
      throw ValidationError("dump row " + std::to_string(i) + " has layer " + std::to_string(r.layer) +
                            " but header says " + std::to_string(dump.n_layers) + " layers");
    }
    r.sample_id = io::read_le<std::int64_t>(in, "row sample id");
    r.step = io::read_le<std::uint32_t>(in, "row step");
    r.values.resize(dump.d_model);
    if (!in.read(reinterpret_cast<char*>(r.values.data()),
                 static_cast<std::streamsize>(dump.d_model * sizeof(double)))) {
      throw ValidationError("dump truncated: header promises " + std::to_string(count) +
                            " rows, found " + std::to_string(i));
    }
    dump.rows.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ValidationError("dump has trailing data beyond its " + std::to_string(count) + " rows");
  }
  return dump;
}

void save_dump(const std::string& path, const HiddenDump& dump) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write dump '" + path + "'");
  write_dump(out, dump);
}

HiddenDump load_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dump '" + path + "'");
  return read_dump(in);
}

void check_dump_matches(const HiddenDump& dump, std::uint32_t n_layers, std::uint32_t d_model) {
  if (dump.d_model != d_model) {
    throw ValidationError("dump d_model " + std::to_string(dump.d_model) + " disagrees with model info d_model " +
                          std::to_string(d_model));
  }
  if (dump.n_layers != n_layers) {
    throw ValidationError("dump n_layers " + std::to_string(dump.n_layers) +
                          " disagrees with model info n_layers " + std::to_string(n_layers));
  }
}

}  // namespace vrulab::bridge
