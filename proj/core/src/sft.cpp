#include "vrulab/sft.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "vrulab/error.hpp"
#include "vrulab/parallel.hpp"
#include "vrulab/rng.hpp"

namespace vrulab::sft {

std::vector<EchoItem> control_task(const env::ObjectPool& pool, std::uint64_t seed, int size) {
  if (size < 0) throw ValidationError("control set size must be >= 0");
  if (pool.size() < static_cast<std::size_t>(kEchoMaxItems)) {
    throw ValidationError("object pool too small for the control task");
  }
  std::vector<EchoItem> out;
  out.reserve(static_cast<std::size_t>(size));
  const auto names = pool.names();
  for (int i = 0; i < size; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 0xEC40));
    const int k = std::uniform_int_distribution<int>(kEchoMinItems, kEchoMaxItems)(rng);
    std::vector<std::size_t> idx(names.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    EchoItem item;
    item.id = i;
    for (int j = 0; j < k; ++j) {
      const std::size_t pick = std::uniform_int_distribution<std::size_t>(j, idx.size() - 1)(rng);
      std::swap(idx[j], idx[pick]);
      item.items.push_back(names[idx[j]]);
    }
    item.query = std::uniform_int_distribution<int>(0, k - 1)(rng);
    out.push_back(std::move(item));
  }
  return out;
}

std::string render_echo(const EchoItem& item) {
  std::string s = "<ECHO>\n\nList:";
  for (const auto& name : item.items) s += " " + name;
  s += "\nQuery: item " + std::to_string(item.query) + "\nAnswer: ";
  return s;
}

model::Example make_echo_example(const model::Vocab& vocab, const EchoItem& item) {
  return {model::encode(vocab, render_echo(item)).ids, vocab.id(item.answer())};
}

double control_accuracy(const Params& params, const model::Vocab& vocab, std::span<const EchoItem> items) {
  if (items.empty()) return 0.0;
  std::vector<char> hit(items.size(), 0);
  parallel_for(items.size(), [&](std::size_t i) {
    const auto ex = make_echo_example(vocab, items[i]);
    hit[i] = model::predict_token(params, ex.ids) == ex.answer;
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(items.size());
}

HeadSelection make_selection(const model::ModelConfig& cfg, std::span<const HeadId> heads) {
  HeadSelection sel;
  sel.per_layer.assign(cfg.n_layers, 0);
  std::set<HeadId> seen;
  for (const auto& h : heads) {
    if (h.layer < 0 || h.layer >= cfg.n_layers || h.head < 0 || h.head >= cfg.n_heads) {
      throw ValidationError("selected head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                            ") outside the model");
    }
    if (!seen.insert(h).second) {
      throw ValidationError("head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) +
                            ") selected twice");
    }
    sel.per_layer[h.layer]++;
  }
  sel.heads.assign(seen.begin(), seen.end());
  return sel;
}

HeadSelection select_top_k(const patch::CausalMap& map, int K) {
  model::ModelConfig shape;
  shape.n_layers = map.n_layers;
  shape.n_heads = map.n_heads;
  return make_selection(shape, patch::rank_heads(map, K));
}

std::vector<model::ParamRange> selection_ranges(const model::Layout& layout, const HeadSelection& sel) {
  std::vector<model::ParamRange> out;
  for (const auto& h : sel.heads) {
    for (auto m : {model::HeadMatrix::Q, model::HeadMatrix::K, model::HeadMatrix::V, model::HeadMatrix::O}) {
      out.push_back(layout.head_block(h.layer, h.head, m));
    }
  }
  return out;
}

std::vector<model::ParamRange> attention_ranges(const model::Layout& layout) {
  const auto& cfg = layout.config();
  std::vector<HeadId> all;
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h) all.push_back({l, h});
  }
  return selection_ranges(layout, make_selection(cfg, all));
}

void masked_grad(Params& grads, const HeadSelection& sel) {
  const auto& cfg = grads.config();
  if (static_cast<int>(sel.per_layer.size()) != cfg.n_layers) {
    throw ValidationError("selection layer count does not match the model");
  }
  make_selection(cfg, sel.heads);
  Params masked(cfg);
  for (const auto& h : sel.heads) {
    const double factor = static_cast<double>(cfg.n_heads) / sel.per_layer[h.layer];
    for (auto m : {model::HeadMatrix::Q, model::HeadMatrix::K, model::HeadMatrix::V, model::HeadMatrix::O}) {
      const auto r = grads.layout().head_block(h.layer, h.head, m);
      auto src = grads.range(r);
      auto dst = masked.range(r);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * factor;
    }
  }
  grads = std::move(masked);
}

std::string_view to_string(SftMode m) { return m == SftMode::Selective ? "selective" : "full"; }

SftMode parse_sft_mode(std::string_view s) {
  if (s == "selective") return SftMode::Selective;
  if (s == "full") return SftMode::Full;
  throw ValidationError("unknown sft mode '" + std::string(s) + "'");
}

model::TrainHyper reference_hyper() {
  model::TrainHyper h;
  h.adam = {2e-5, 0.9, 0.999, 1e-8, 0.1};
  h.epochs = 1;
  h.batch_size = 32;
  h.warmup_frac = 0.02;
  return h;
}

int matched_k(int total_heads) {
  if (total_heads < 1) throw ValidationError("total_heads must be >= 1");
  const long k = std::lround(static_cast<double>(total_heads) * kReferenceTunedHeads / kReferenceTotalHeads);
  return static_cast<int>(std::clamp(k, 1L, static_cast<long>(total_heads)));
}

long tuned_param_count(const model::ModelConfig& cfg, SftMode mode, int K) {
  if (mode == SftMode::Full) return static_cast<long>(model::Layout(cfg).total());
  const long d = cfg.d_model, dh = cfg.head_dim();
  return static_cast<long>(K) * (3 * d * dh + dh * d);
}

SftResult sft_run(const Params& base, const model::Vocab& vocab, const SftConfig& config,
                  const std::optional<HeadSelection>& selection, std::span<const env::Episode> vru_train,
                  std::span<const env::Episode> vru_eval, std::span<const EchoItem> control_eval) {
  if (vru_train.empty()) throw ValidationError("fine-tuning set is empty");
  SftResult result;
  auto& rep = result.report;
  rep.mode = config.mode;
  rep.vru_acc_before = model::evaluate(base, vocab, vru_eval).average();
  rep.control_acc_before = control_accuracy(base, vocab, control_eval);

  std::vector<model::ParamRange> trainable;
  std::function<void(Params&)> transform;
  if (config.mode == SftMode::Selective) {
    if (!selection) throw ValidationError("selective fine-tuning needs a head selection");
    HeadSelection sel = *selection;
    trainable = selection_ranges(base.layout(), sel);
    if (trainable.empty()) throw ValidationError("head selection is empty");
    transform = [sel](Params& g) { masked_grad(g, sel); };
    rep.tuned_params = tuned_param_count(base.config(), config.mode, static_cast<int>(sel.heads.size()));
  } else {
    rep.tuned_params = tuned_param_count(base.config(), config.mode, 0);
  }

  const auto examples = model::make_examples(vocab, vru_train);
  const auto t0 = std::chrono::steady_clock::now();
  auto trained = model::train_examples(base, examples, config.hyper, {}, std::move(trainable), std::move(transform));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.samples_per_sec = secs > 0 ? static_cast<double>(examples.size()) * config.hyper.epochs / secs : 0.0;

  result.params = std::move(trained.params);
  rep.vru_acc_after = model::evaluate(result.params, vocab, vru_eval).average();
  rep.control_acc_after = control_accuracy(result.params, vocab, control_eval);
  return result;
}

std::string sft_csv(std::span<const SftReport> reports) {
  std::string out =
      "mode,tuned_params,samples_per_sec,vru_acc_before,vru_acc_after,control_acc_before,control_acc_after\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%ld,%.3f,%.6f,%.6f,%.6f,%.6f\n", std::string(to_string(r.mode)).c_str(),
                  r.tuned_params, r.samples_per_sec, r.vru_acc_before, r.vru_acc_after, r.control_acc_before,
                  r.control_acc_after);
    out += buf;
  }
  return out;
}

std::vector<model::Example> mixed_curriculum(const model::Vocab& vocab, std::span<const env::Episode> vru,
                                             std::span<const EchoItem> echo) {
  auto out = model::make_examples(vocab, vru);
  for (const auto& item : echo) out.push_back(make_echo_example(vocab, item));
  return out;
}

}  // namespace vrulab::sft
