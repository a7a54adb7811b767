#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrulab/rotation_env.hpp"
#include "vrulab/transformer.hpp"
#include "vrulab/vocab.hpp"

namespace vrulab::patch {

using model::HeadId;
using model::Mat;
using model::Params;
using model::Vec;

struct PatchPair {
  env::Episode clean;
  env::Episode corrupted;
  std::vector<int> clean_ids;
  std::vector<int> corrupted_ids;
  int t_cl = 0;
  int t_cor = 0;
};

// Same episode with the last step's direction reversed; the orientation
// trace and ground truth are recomputed.
env::Episode flip_final_direction(const env::Episode& ep);

// Pairs whose clean and corrupted answers differ (both-unknown counts as
// equal and is dropped).
std::vector<PatchPair> build_pairs(const model::Vocab& vocab, std::span<const env::Episode> episodes);

// logits[t_cl] - logits[t_cor].
double logit_metric(const Vec& logits, const PatchPair& pair);

enum class PatchMode { DirectPath, Propagate };
std::string_view to_string(PatchMode m);
PatchMode parse_mode(std::string_view s);

struct PairCache {
  model::ForwardTrace clean;
  model::ForwardTrace corrupted;
};
PairCache cache_pair(const Params& params, const PatchPair& pair);

// Clean-prompt logits with `head`'s output replaced at every position by
// its corrupted-run value. DirectPath freezes every later head to its clean
// output; Propagate recomputes everything downstream.
Vec run_patched(const Params& params, const PatchPair& pair, const PairCache& cache, HeadId head,
                PatchMode mode);

// (pt - cl) / (cor - cl).
double phi(double logit_cl, double logit_cor, double logit_pt);

inline constexpr double kDivisionGuard = 1e-9;

struct PairEffects {
  std::int64_t episode_id = 0;
  double logit_cl = 0;
  double logit_cor = 0;
  std::vector<double> logit_pt;  // per head, index layer * H + head
  std::vector<double> phi;
};

struct CausalMap {
  PatchMode mode = PatchMode::DirectPath;
  int n_layers = 0;
  int n_heads = 0;
  std::vector<std::vector<double>> phi_mean;  // [layer][head]
  std::vector<PairEffects> pairs;             // retained pairs
  std::vector<std::string> warnings;

  int n_pairs() const { return static_cast<int>(pairs.size()); }
  double at(HeadId h) const { return phi_mean[h.layer][h.head]; }
};

// Pairs with |logit_cor - logit_cl| < kDivisionGuard are dropped with a
// warning. Throws ValidationError if no pair is given or none survives.
CausalMap causal_effects(const Params& params, std::span<const PatchPair> pairs,
                         PatchMode mode = PatchMode::DirectPath);

// Recomputes every phi and every head mean from the stored logits. Returns
// the largest absolute discrepancy.
double audit(const CausalMap& map);

// {"mode", "n_pairs", "phi_mean"}
std::string causal_map_json(const CausalMap& map);
CausalMap parse_causal_map(std::string_view json);
// pair_id,layer,head,logit_cl,logit_cor,logit_pt,phi
std::string causal_pairs_csv(const CausalMap& map);
std::string causal_map_svg(const CausalMap& map);

// Descending by mean effect, ties by (layer, head).
std::vector<HeadId> rank_heads(const CausalMap& map, int K);

inline constexpr double kDefaultEpsilon = 1e-4;

// Copy of params with the Q/K/V/O blocks of each listed head scaled by eps.
Params ablate(const Params& params, std::span<const HeadId> heads, double eps = kDefaultEpsilon);

struct KnockoutRow {
  int K = 0;
  double topk_acc = 0;
  double random_mean = 0;
  double random_std = 0;  // population std over seeds
};

// Random K-subsets for a seed: the first K of a seeded shuffle of all heads.
std::vector<HeadId> random_heads(const model::ModelConfig& cfg, int K, std::uint64_t seed);

// Accuracy is the bucket-averaged greedy VRU accuracy over `episodes`.
std::vector<KnockoutRow> knockout_curve(const Params& params, const model::Vocab& vocab,
                                        std::span<const env::Episode> episodes, const CausalMap& map,
                                        std::span<const int> Ks, std::span<const std::uint64_t> random_seeds,
                                        double eps = kDefaultEpsilon);

std::string knockout_csv(std::span<const KnockoutRow> rows);
std::string knockout_svg(std::span<const KnockoutRow> rows);

struct TokenWeight {
  int position = 0;
  double weight = 0;
};

struct HeadAttention {
  HeadId head;
  std::vector<double> weights;  // final-position attention over the prompt
  std::vector<TokenWeight> top;  // at most 10, descending
};

struct AttentionReport {
  std::int64_t episode_id = 0;
  std::vector<std::string> tokens;
  std::vector<HeadAttention> heads;
  friend bool operator==(const AttentionReport&, const AttentionReport&);
};

AttentionReport attention_report(const Params& params, const model::Vocab& vocab, const env::Episode& ep,
                                 std::span<const HeadId> heads);
std::string attention_json(const AttentionReport& report);
AttentionReport parse_attention_json(std::string_view json);
std::string attention_svg(const AttentionReport& report);

}  // namespace vrulab::patch
