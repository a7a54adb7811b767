#include "vrulab/patch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <json.hpp>

#include "vrulab/error.hpp"
#include "vrulab/parallel.hpp"
#include "vrulab/prompt.hpp"
#include "vrulab/rng.hpp"
#include "vrulab/svg.hpp"
#include "vrulab/train.hpp"

namespace vrulab::patch {

using ordered_json = nlohmann::ordered_json;

env::Episode flip_final_direction(const env::Episode& ep) {
  if (ep.steps.empty()) throw ValidationError("episode has no steps to flip");
  env::Episode out = ep;
  auto& last = out.steps.back().direction;
  last = last == env::Direction::Left ? env::Direction::Right : env::Direction::Left;
  out.orientation_trace.back() = env::rotate(out.orientation_trace[out.orientation_trace.size() - 2], out.steps.back());
  out.ground_truth = env::ground_truth_oracle(out);
  return out;
}

std::vector<PatchPair> build_pairs(const model::Vocab& vocab, std::span<const env::Episode> episodes) {
  std::vector<PatchPair> pairs;
  for (const auto& ep : episodes) {
    env::validate_episode(ep);
    auto corrupted = flip_final_direction(ep);
    if (corrupted.ground_truth == ep.ground_truth) continue;
    PatchPair p;
    p.clean_ids = model::encode(vocab, env::render_marked_prompt(ep)).ids;
    p.corrupted_ids = model::encode(vocab, env::render_marked_prompt(corrupted)).ids;
    p.t_cl = vocab.id(ep.answer_text());
    p.t_cor = vocab.id(corrupted.answer_text());
    p.clean = ep;
    p.corrupted = std::move(corrupted);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

double logit_metric(const Vec& logits, const PatchPair& pair) {
  if (pair.t_cl < 0 || pair.t_cl >= logits.size() || pair.t_cor < 0 || pair.t_cor >= logits.size()) {
    throw ValidationError("answer token id outside the vocabulary");
  }
  return logits[pair.t_cl] - logits[pair.t_cor];
}

std::string_view to_string(PatchMode m) {
  return m == PatchMode::DirectPath ? "direct_path" : "propagate";
}

PatchMode parse_mode(std::string_view s) {
  if (s == "direct_path") return PatchMode::DirectPath;
  if (s == "propagate") return PatchMode::Propagate;
  throw ValidationError("unknown patch mode '" + std::string(s) + "'");
}

PairCache cache_pair(const Params& params, const PatchPair& pair) {
  return {model::forward(params, pair.clean_ids, true), model::forward(params, pair.corrupted_ids, true)};
}

Vec run_patched(const Params& params, const PatchPair& pair, const PairCache& cache, HeadId head,
                PatchMode mode) {
  const auto& cfg = params.config();
  if (head.layer < 0 || head.layer >= cfg.n_layers || head.head < 0 || head.head >= cfg.n_heads) {
    throw ValidationError("head (" + std::to_string(head.layer) + ", " + std::to_string(head.head) +
                          ") outside the model");
  }
  model::Intervention iv;
  iv.patches.push_back({head, &cache.corrupted.head_outputs[head.layer]});
  if (mode == PatchMode::DirectPath) {
    iv.freeze_from = head.layer + 1;
    iv.frozen_z = &cache.clean.head_outputs;
  }
  return model::forward(params, pair.clean_ids, false, &iv).logits;
}

double phi(double logit_cl, double logit_cor, double logit_pt) {
  return (logit_pt - logit_cl) / (logit_cor - logit_cl);
}

CausalMap causal_effects(const Params& params, std::span<const PatchPair> pairs, PatchMode mode) {
  if (pairs.empty()) throw ValidationError("causal effects need at least one pair");
  const auto& cfg = params.config();
  const int L = cfg.n_layers, H = cfg.n_heads, n_heads = L * H;

  std::vector<PairEffects> all(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& pair = pairs[i];
    const auto cache = cache_pair(params, pair);
    auto& fx = all[i];
    fx.episode_id = pair.clean.id;
    fx.logit_cl = logit_metric(cache.clean.logits, pair);
    fx.logit_cor = logit_metric(cache.corrupted.logits, pair);
    if (std::abs(fx.logit_cor - fx.logit_cl) < kDivisionGuard) return;
    fx.logit_pt.resize(n_heads);
    fx.phi.resize(n_heads);
    for (int l = 0; l < L; ++l) {
      for (int h = 0; h < H; ++h) {
        const double pt = logit_metric(run_patched(params, pair, cache, {l, h}, mode), pair);
        fx.logit_pt[l * H + h] = pt;
        fx.phi[l * H + h] = phi(fx.logit_cl, fx.logit_cor, pt);
      }
    }
  });

  CausalMap map;
  map.mode = mode;
  map.n_layers = L;
  map.n_heads = H;
  for (auto& fx : all) {
    if (fx.phi.empty()) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "dropped episode %lld: |logit_cor - logit_cl| = %.3g below %.0e",
                    static_cast<long long>(fx.episode_id), std::abs(fx.logit_cor - fx.logit_cl), kDivisionGuard);
      map.warnings.emplace_back(buf);
      continue;
    }
    map.pairs.push_back(std::move(fx));
  }
  if (map.pairs.empty()) throw ValidationError("every pair was dropped by the division guard");

  map.phi_mean.assign(L, std::vector<double>(H, 0.0));
  for (int l = 0; l < L; ++l) {
    for (int h = 0; h < H; ++h) {
      double sum = 0;
      for (const auto& fx : map.pairs) sum += fx.phi[l * H + h];
      map.phi_mean[l][h] = sum / map.n_pairs();
    }
  }
  return map;
}

double audit(const CausalMap& map) {
  double worst = 0;
  const int H = map.n_heads;
  for (int l = 0; l < map.n_layers; ++l) {
    for (int h = 0; h < H; ++h) {
      double sum = 0;
      for (const auto& fx : map.pairs) {
        const double recomputed = (fx.logit_pt[l * H + h] - fx.logit_cl) / (fx.logit_cor - fx.logit_cl);
        worst = std::max(worst, std::abs(recomputed - fx.phi[l * H + h]));
        sum += recomputed;
      }
      worst = std::max(worst, std::abs(sum / map.n_pairs() - map.phi_mean[l][h]));
    }
  }
  return worst;
}

std::string causal_map_json(const CausalMap& map) {
  ordered_json j;
  j["mode"] = to_string(map.mode);
  j["n_pairs"] = map.n_pairs();
  j["phi_mean"] = map.phi_mean;
  return j.dump(2) + "\n";
}

CausalMap parse_causal_map(std::string_view text) {
  CausalMap map;
  try {
    const auto j = ordered_json::parse(text);
    map.mode = parse_mode(j.at("mode").get<std::string>());
    map.phi_mean = j.at("phi_mean").get<std::vector<std::vector<double>>>();
    map.pairs.resize(j.at("n_pairs").get<std::size_t>());
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("malformed causal map: ") + e.what());
  }
  map.n_layers = static_cast<int>(map.phi_mean.size());
  if (map.n_layers == 0) throw ValidationError("causal map has no layers");
  map.n_heads = static_cast<int>(map.phi_mean[0].size());
  for (const auto& row : map.phi_mean) {
    if (static_cast<int>(row.size()) != map.n_heads || row.empty()) {
      throw ValidationError("causal map rows have unequal head counts");
    }
  }
  return map;
}

std::string causal_pairs_csv(const CausalMap& map) {
  std::string out = "pair_id,layer,head,logit_cl,logit_cor,logit_pt,phi\n";
  char buf[200];
  for (const auto& fx : map.pairs) {
    for (int l = 0; l < map.n_layers; ++l) {
      for (int h = 0; h < map.n_heads; ++h) {
        const int k = l * map.n_heads + h;
        std::snprintf(buf, sizeof buf, "%lld,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(fx.episode_id), l, h, fx.logit_cl, fx.logit_cor, fx.logit_pt[k],
                      fx.phi[k]);
        out += buf;
      }
    }
  }
  return out;
}

std::string causal_map_svg(const CausalMap& map) {
  return svg::heatmap("Averaged causal effect (" + std::string(to_string(map.mode)) + ", " +
                          std::to_string(map.n_pairs()) + " pairs)",
                      "layer", "head", map.phi_mean);
}

std::vector<HeadId> rank_heads(const CausalMap& map, int K) {
  const int total = map.n_layers * map.n_heads;
  if (K < 0 || K > total) {
    throw ValidationError("K = " + std::to_string(K) + " outside [0, " + std::to_string(total) + "]");
  }
  std::vector<HeadId> heads;
  for (int l = 0; l < map.n_layers; ++l) {
    for (int h = 0; h < map.n_heads; ++h) heads.push_back({l, h});
  }
  std::stable_sort(heads.begin(), heads.end(),
                   [&](const HeadId& a, const HeadId& b) { return map.at(a) > map.at(b); });
  heads.resize(K);
  return heads;
}

Params ablate(const Params& params, std::span<const HeadId> heads, double eps) {
  if (!(eps >= 0)) throw ValidationError("ablation coefficient must be >= 0");
  const auto& cfg = params.config();
  std::set<HeadId> seen;
  for (const auto& h : heads) {
    if (h.layer < 0 || h.layer >= cfg.n_layers || h.head < 0 || h.head >= cfg.n_heads) {
      throw ValidationError("head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                            ") outside the model");
    }
    if (!seen.insert(h).second) {
      throw ValidationError("head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                            ") listed twice");
    }
  }
  Params out = params;
  for (const auto& h : heads) {
    for (auto m : {model::HeadMatrix::Q, model::HeadMatrix::K, model::HeadMatrix::V, model::HeadMatrix::O}) {
      for (double& w : out.range(out.layout().head_block(h.layer, h.head, m))) w *= eps;
    }
  }
  return out;
}

std::vector<HeadId> random_heads(const model::ModelConfig& cfg, int K, std::uint64_t seed) {
  std::vector<HeadId> heads;
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h) heads.push_back({l, h});
  }
  if (K < 0 || K > static_cast<int>(heads.size())) throw ValidationError("random K outside the head count");
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(K)));
  std::shuffle(heads.begin(), heads.end(), rng);
  heads.resize(K);
  return heads;
}

std::vector<KnockoutRow> knockout_curve(const Params& params, const model::Vocab& vocab,
                                        std::span<const env::Episode> episodes, const CausalMap& map,
                                        std::span<const int> Ks, std::span<const std::uint64_t> random_seeds,
                                        double eps) {
  if (!std::is_sorted(Ks.begin(), Ks.end())) throw ValidationError("knockout K values must be ascending");
  if (random_seeds.empty()) throw ValidationError("knockout needs at least one random seed");
  const auto& cfg = params.config();
  if (map.n_layers != cfg.n_layers || map.n_heads != cfg.n_heads) {
    throw ValidationError("causal map shape does not match the model");
  }
  auto acc = [&](std::span<const HeadId> heads) {
    return model::evaluate(ablate(params, heads, eps), vocab, episodes).average();
  };
  std::vector<KnockoutRow> rows;
  for (int K : Ks) {
    KnockoutRow row;
    row.K = K;
    row.topk_acc = acc(rank_heads(map, K));
    std::vector<double> r;
    for (auto seed : random_seeds) r.push_back(acc(random_heads(cfg, K, seed)));
    const double n = static_cast<double>(r.size());
    row.random_mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double var = 0;
    for (double a : r) var += (a - row.random_mean) * (a - row.random_mean);
    row.random_std = std::sqrt(var / n);
    rows.push_back(row);
  }
  return rows;
}

std::string knockout_csv(std::span<const KnockoutRow> rows) {
  std::string out = "K,topk_acc,random_mean,random_std\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f\n", r.K, r.topk_acc, r.random_mean, r.random_std);
    out += buf;
  }
  return out;
}

std::string knockout_svg(std::span<const KnockoutRow> rows) {
  svg::Series top{"top-K by effect", {}, {}, {}}, rnd{"random K", {}, {}, {}};
  for (const auto& r : rows) {
    top.x.push_back(r.K);
    top.y.push_back(r.topk_acc);
    rnd.x.push_back(r.K);
    rnd.y.push_back(r.random_mean);
    rnd.err.push_back(r.random_std);
  }
  return svg::line_plot("Head knockout", "K", "accuracy", {top, rnd});
}

bool operator==(const AttentionReport& a, const AttentionReport& b) {
  if (a.episode_id != b.episode_id || a.tokens != b.tokens || a.heads.size() != b.heads.size()) return false;
  for (std::size_t i = 0; i < a.heads.size(); ++i) {
    const auto &x = a.heads[i], &y = b.heads[i];
    if (x.head != y.head || x.weights != y.weights || x.top.size() != y.top.size()) return false;
    for (std::size_t k = 0; k < x.top.size(); ++k) {
      if (x.top[k].position != y.top[k].position || x.top[k].weight != y.top[k].weight) return false;
    }
  }
  return true;
}

AttentionReport attention_report(const Params& params, const model::Vocab& vocab, const env::Episode& ep,
                                 std::span<const HeadId> heads) {
  const auto enc = model::encode(vocab, env::render_marked_prompt(ep));
  const auto trace = model::forward(params, enc.ids, true);
  AttentionReport report;
  report.episode_id = ep.id;
  for (int id : enc.ids) report.tokens.push_back(vocab.token(id));
  const Eigen::Index last = static_cast<Eigen::Index>(enc.ids.size()) - 1;
  for (const auto& h : heads) {
    if (h.layer < 0 || h.layer >= params.config().n_layers || h.head < 0 || h.head >= params.config().n_heads) {
      throw ValidationError("head outside the model");
    }
    HeadAttention ha;
    ha.head = h;
    const auto row = trace.attention[h.layer][h.head].row(last);
    ha.weights.assign(row.data(), row.data() + row.size());
    std::vector<int> order(ha.weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ha.weights[a] > ha.weights[b]; });
    for (std::size_t k = 0; k < std::min<std::size_t>(10, order.size()); ++k) {
      ha.top.push_back({order[k], ha.weights[order[k]]});
    }
    report.heads.push_back(std::move(ha));
  }
  return report;
}

std::string attention_json(const AttentionReport& report) {
  ordered_json j;
  j["episode_id"] = report.episode_id;
  j["tokens"] = report.tokens;
  j["heads"] = ordered_json::array();
  for (const auto& h : report.heads) {
    ordered_json top = ordered_json::array();
    for (const auto& t : h.top) {
      top.push_back({{"position", t.position}, {"token", report.tokens.at(t.position)}, {"weight", t.weight}});
    }
    j["heads"].push_back({{"layer", h.head.layer}, {"head", h.head.head}, {"weights", h.weights}, {"top", top}});
  }
  return j.dump(2) + "\n";
}

AttentionReport parse_attention_json(std::string_view text) {
  AttentionReport report;
  try {
    const auto j = ordered_json::parse(text);
    report.episode_id = j.at("episode_id").get<std::int64_t>();
    report.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& hj : j.at("heads")) {
      HeadAttention h;
      h.head = {hj.at("layer").get<int>(), hj.at("head").get<int>()};
      h.weights = hj.at("weights").get<std::vector<double>>();
      for (const auto& t : hj.at("top")) h.top.push_back({t.at("position").get<int>(), t.at("weight").get<double>()});
      if (h.weights.size() != report.tokens.size()) {
        throw ValidationError("attention weights do not cover the token list");
      }
      report.heads.push_back(std::move(h));
    }
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("malformed attention report: ") + e.what());
  }
  return report;
}

std::string attention_svg(const AttentionReport& report) {
  std::vector<svg::WeightedTokens> rows;
  for (const auto& h : report.heads) {
    const double peak = *std::max_element(h.weights.begin(), h.weights.end());
    svg::WeightedTokens row;
    row.caption = "head " + std::to_string(h.head.layer) + "." + std::to_string(h.head.head);
    row.tokens = report.tokens;
    for (double w : h.weights) row.weights.push_back(peak > 0 ? w / peak : 0.0);
    rows.push_back(std::move(row));
  }
  return svg::text_heatmap("Final-position attention, episode " + std::to_string(report.episode_id), rows);
}

}  // namespace vrulab::patch
