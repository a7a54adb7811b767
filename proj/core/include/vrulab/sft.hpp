#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrulab/patch.hpp"
#include "vrulab/train.hpp"

namespace vrulab::sft {

using model::HeadId;
using model::Params;

// Echo control task: a list of objects and a 0-based positional query.
struct EchoItem {
  std::int64_t id = 0;
  std::vector<std::string> items;
  int query = 0;
  const std::string& answer() const { return items.at(query); }
};

inline constexpr int kEchoMinItems = 3;
inline constexpr int kEchoMaxItems = 5;

// Distinct objects per item, list length uniform in [3, 5], query uniform
// over the list. Deterministic in (pool, seed, size).
std::vector<EchoItem> control_task(const env::ObjectPool& pool, std::uint64_t seed, int size);

// "<ECHO>\n\nList: plate clock router\nQuery: item 1\nAnswer: "
std::string render_echo(const EchoItem& item);
model::Example make_echo_example(const model::Vocab& vocab, const EchoItem& item);
double control_accuracy(const Params& params, const model::Vocab& vocab, std::span<const EchoItem> items);

struct HeadSelection {
  std::vector<HeadId> heads;   // sorted
  std::vector<int> per_layer;  // tuned heads per layer
};

// Validates heads against the model shape; rejects duplicates.
HeadSelection make_selection(const model::ModelConfig& cfg, std::span<const HeadId> heads);
HeadSelection select_top_k(const patch::CausalMap& map, int K);

// K for a model with `total_heads` heads that tunes the same fraction as
// 32 of 784 heads; at least 1.
inline constexpr int kReferenceTunedHeads = 32;
inline constexpr int kReferenceTotalHeads = 784;
int matched_k(int total_heads);

// The Q/K/V/O block ranges of the selected heads.
std::vector<model::ParamRange> selection_ranges(const model::Layout& layout, const HeadSelection& sel);
// Q/K/V/O ranges of every head.
std::vector<model::ParamRange> attention_ranges(const model::Layout& layout);

// Zeroes every gradient outside the selected blocks and scales each
// selected block by H / h for its layer.
void masked_grad(Params& grads, const HeadSelection& sel);

enum class SftMode { Selective, Full };
std::string_view to_string(SftMode m);
SftMode parse_sft_mode(std::string_view s);

struct SftConfig {
  SftMode mode = SftMode::Selective;
  int K = 32;
  model::TrainHyper hyper{{1e-3, 0.9, 0.98, 1e-8, 0.0}, 1, 8, 0.02, 0.1, 1.0, 0};
};

// Reference hyperparameters of the original large-model runs.
model::TrainHyper reference_hyper();

struct SftReport {
  SftMode mode = SftMode::Selective;
  long tuned_params = 0;
  double samples_per_sec = 0;
  double vru_acc_before = 0;
  double vru_acc_after = 0;
  double control_acc_before = 0;
  double control_acc_after = 0;
  double vru_delta() const { return vru_acc_after - vru_acc_before; }
  double control_delta() const { return control_acc_after - control_acc_before; }
};

// K * (3 * d * d/H + d/H * d) for Selective, every parameter for Full.
long tuned_param_count(const model::ModelConfig& cfg, SftMode mode, int K);

struct SftResult {
  Params params;
  SftReport report;
};

// Selective mode requires a selection; Full ignores it.
SftResult sft_run(const Params& base, const model::Vocab& vocab, const SftConfig& config,
                  const std::optional<HeadSelection>& selection, std::span<const env::Episode> vru_train,
                  std::span<const env::Episode> vru_eval, std::span<const EchoItem> control_eval);

// "mode,tuned_params,samples_per_sec,vru_acc_before,vru_acc_after,control_acc_before,control_acc_after"
std::string sft_csv(std::span<const SftReport> reports);

// VRU and Echo examples in one list (training shuffles them).
std::vector<model::Example> mixed_curriculum(const model::Vocab& vocab, std::span<const env::Episode> vru,
                                             std::span<const EchoItem> echo);

}  // namespace vrulab::sft
