#include "vrulab/checkpoint.hpp"

#include <fstream>

#include "vrulab/binary_io.hpp"

namespace vrulab::model {

void write_checkpoint(std::ostream& out, const Params& params) {
  const auto& c = params.config();
  out.write("VRUM", 4);
  io::write_le<std::uint32_t>(out, kCheckpointVersion);
  for (int v : {c.n_layers, c.n_heads, c.d_model, c.d_ff, c.max_len, c.vocab_size}) {
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  io::write_le<std::uint64_t>(out, c.init_seed);
  io::write_le<std::uint64_t>(out, params.data().size());
  out.write(reinterpret_cast<const char*>(params.data().data()),
            static_cast<std::streamsize>(params.data().size() * sizeof(double)));
}

Params read_checkpoint(std::istream& in) {
  io::expect_magic(in, "VRUM");
  const auto version = io::read_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.n_layers = static_cast<int>(io::read_le<std::uint32_t>(in, "n_layers"));
  c.n_heads = static_cast<int>(io::read_le<std::uint32_t>(in, "n_heads"));
  c.d_model = static_cast<int>(io::read_le<std::uint32_t>(in, "d_model"));
  c.d_ff = static_cast<int>(io::read_le<std::uint32_t>(in, "d_ff"));
  c.max_len = static_cast<int>(io::read_le<std::uint32_t>(in, "max_len"));
  c.vocab_size = static_cast<int>(io::read_le<std::uint32_t>(in, "vocab_size"));
  c.init_seed = io::read_le<std::uint64_t>(in, "init_seed");
  c.validate();
  Params p(c);
  const auto count = io::read_le<std::uint64_t>(in, "parameter count");
  if (count != p.data().size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                          std::to_string(p.data().size()));
  }
  if (!in.read(reinterpret_cast<char*>(p.data().data()),
               static_cast<std::streamsize>(count * sizeof(double)))) {
    throw ValidationError("truncated checkpoint parameters");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("checkpoint has trailing data");
  return p;
}

void save_checkpoint(const std::string& path, const Params& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, params);
  if (!out) throw RuntimeFailure("error writing checkpoint '" + path + "'");
}

Params load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace vrulab::model
