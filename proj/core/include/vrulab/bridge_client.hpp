#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vrulab/eval.hpp"
#include "vrulab/hidden_dump.hpp"
#include "vrulab/prompt.hpp"

namespace vrulab::bridge {

struct BridgeInfo {
  std::uint32_t n_layers = 0;
  std::uint32_t d_model = 0;
  std::string model;
};

// Character offsets of the newline closing each "Action: ..." line.
std::vector<std::size_t> action_newline_offsets(std::string_view prompt);

// Line-delimited JSON over the stdin/stdout of a child process. One request
// in flight at a time.
class BridgeClient {
 public:
  // argv[0] is the executable (searched on PATH); the rest are arguments.
  explicit BridgeClient(std::vector<std::string> argv);
  ~BridgeClient();
  BridgeClient(const BridgeClient&) = delete;
  BridgeClient& operator=(const BridgeClient&) = delete;

  // Sends one JSON object, returns the response line. A response carrying
  // "error" throws RuntimeFailure with its message.
  std::string request(const std::string& json_line);

  BridgeInfo info();
  std::string generate(const std::string& prompt, env::PromptMode mode, int max_new_tokens);
  // Asks for representations at `positions`; the bridge writes a dump to
  // out_path with steps numbered in request order.
  HiddenDump hidden_states(const std::string& prompt, std::span<const std::size_t> positions,
                           std::int64_t sample_id, const std::string& out_path);

 private:
  std::string read_line();

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Token caps per prompt mode.
inline constexpr int kDirectMaxNewTokens = 5;
inline constexpr int kThinkMaxNewTokens = 2048;

// Generates for every episode and scores the outputs with the eval harness
// (Direct extraction for direct prompts, Tagged for think prompts).
std::vector<eval::PredictionRecord> bridge_predictions(BridgeClient& client, std::span<const env::Episode> episodes,
                                                       env::PromptMode mode);

// Requests action-line anchors for each episode and merges the per-episode
// dumps; the result is checked against the bridge's reported shape.
HiddenDump bridge_dump(BridgeClient& client, std::span<const env::Episode> episodes, const std::string& scratch_dir);

}  // namespace vrulab::bridge
