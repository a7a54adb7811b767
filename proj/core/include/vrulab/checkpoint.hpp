#pragma once

#include <iosfwd>
#include <string>

#include "vrulab/transformer.hpp"

namespace vrulab::model {

// Binary checkpoint, all integers and floats little-endian:
//   "VRUM"                         4 bytes
//   version                        u32 (currently 1)
//   n_layers, n_heads, d_model,
//   d_ff, max_len, vocab_size      6 x u32
//   init_seed                      u64
//   parameter count                u64
//   parameters                     f64 each, in Layout order
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Params& params);
Params read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Params& params);
Params load_checkpoint(const std::string& path);

}  // namespace vrulab::model
