#pragma once

#include <string>
#include <vector>

#include "vrulab/rotation_env.hpp"
#include "vrulab/transformer.hpp"
#include "vrulab/vocab.hpp"

namespace vrulab::fixtures {

inline env::RotationStep R(int a) { return {env::Direction::Right, a}; }
inline env::RotationStep Lt(int a) { return {env::Direction::Left, a}; }

// The four worked examples from the benchmark's sample listing.
inline env::ForcedScript golden_two_step() { return {"avocado", {R(270), Lt(90)}, {"router"}}; }
inline env::ForcedScript golden_three_step() { return {"receiver", {R(180), Lt(180), R(0)}, {"clock"}}; }
inline env::ForcedScript golden_four_step() {
  return {"plate", {Lt(90), R(180), Lt(360), Lt(90)}, {"faucet", "wardrobe"}};
}
inline env::ForcedScript golden_five_step() {
  return {"avocado", {R(270), Lt(90), R(0), R(180), R(270)}, {"router", "remote"}};
}

inline env::Episode golden(const env::ForcedScript& s, std::int64_t id = 0) {
  auto ep = env::replay_script(s);
  ep.id = id;
  return ep;
}

inline model::ModelConfig tiny_config(int vocab_size, int L = 2, int H = 2, int d = 16) {
  model::ModelConfig c;
  c.n_layers = L;
  c.n_heads = H;
  c.d_model = d;
  c.d_ff = 4 * d;
  c.max_len = 96;
  c.vocab_size = vocab_size;
  c.init_seed = 7;
  return c;
}

inline const model::Vocab& default_vocab() {
  static const model::Vocab v = model::Vocab::for_pool(env::ObjectPool::default_pool());
  return v;
}

}  // namespace vrulab::fixtures
