// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Artifacts (checkpoints, maps, curves, sweeps, reports) go to --work-dir.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "circle_tracker.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "reference_model.hpp"
#include "vrulab/checkpoint.hpp"
#include "vrulab/dataset.hpp"
#include "vrulab/defaults.hpp"
#include "vrulab/eval.hpp"
#include "vrulab/patch.hpp"
#include "vrulab/probe.hpp"
#include "vrulab/prompt.hpp"
#include "vrulab/sft.hpp"
#include "vrulab/train.hpp"

namespace fs = std::filesystem;
using namespace vrulab;
using fixtures::default_vocab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) { std::cerr << "  " << s << std::endl; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  bool reuse = false;

  std::vector<env::Episode> train_set, heldout;
  std::optional<model::Params> seed0;
  std::optional<model::Params> base;

  std::vector<env::Episode> episodes(std::uint64_t seed, const std::map<int, int>& quotas) const {
    env::DatasetConfig cfg;
    cfg.seed = seed;
    cfg.quotas = quotas;
    return env::generate_dataset(cfg, env::ObjectPool::default_pool()).episodes;
  }

  void load_data() {
    if (!train_set.empty()) return;
    train_set = episodes(defaults::kTrainDataSeed, defaults::kTrainQuotas);
    heldout = episodes(defaults::kHeldoutDataSeed, defaults::kHeldoutQuotas);
  }

  // Trains (or, with --reuse, loads) a default-config model. Returns the
  // params and the training wall-clock (0 when loaded).
  std::pair<model::Params, double> default_model(const std::string& name, std::uint64_t seed, int echo_items,
                                                  int epochs = model::TrainHyper{}.epochs) {
    load_data();
    const auto path = work / (name + ".bin");
    if (reuse && fs::exists(path)) {
      note("reusing " + path.string());
      return {model::load_checkpoint(path.string()), 0.0};
    }
    const auto& vocab = default_vocab();
    model::ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.init_seed = seed;
    model::TrainHyper th;
    th.seed = seed;
    th.epochs = epochs;
    auto examples = model::make_examples(vocab, train_set);
    const auto echo = sft::control_task(env::ObjectPool::default_pool(), defaults::kEchoTrainSeed, echo_items);
    for (const auto& item : echo) examples.push_back(sft::make_echo_example(vocab, item));
    const auto t0 = Clock::now();
    auto on_epoch = [&](const model::Params& p, model::EpochMetrics& m) {
      if (m.epoch == 0) return;
      const auto r = model::evaluate(p, vocab, heldout);
      note(fmt("%s epoch %d loss %.4f acc2 %.3f acc3 %.3f (%.0fs)", name.c_str(), m.epoch, m.train_loss,
               r.per_bucket.at(2).accuracy(), r.per_bucket.at(3).accuracy(), seconds_since(t0)));
    };
    auto result = model::train_examples(model::Params::initialize(mc), examples, th, on_epoch);
    const double secs = seconds_since(t0);
    model::save_checkpoint(path.string(), result.params);
    return {std::move(result.params), secs};
  }

  const model::Params& seed0_model() {
    if (!seed0) seed0 = default_model("vru_seed0", 0, 0).first;
    return *seed0;
  }

  const model::Params& base_model() {
    if (!base) base = default_model("mixed_base", 0, defaults::kEchoTrainItems, defaults::kBaseEpochs).first;
    return *base;
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(work / name) << text; }
};

// Worked examples reproduced under forced-script generation.
Outcome golden_episodes(Context&) {
  struct Expect {
    env::ForcedScript script;
    std::vector<std::string> observations;
    std::string answer;
  };
  const std::vector<Expect> cases = {
      {fixtures::golden_two_step(), {"router"}, "unknown"},
      {fixtures::golden_three_step(), {"clock", "receiver"}, "receiver"},
      {fixtures::golden_four_step(), {"faucet", "wardrobe", "wardrobe"}, "plate"},
      {fixtures::golden_five_step(), {"router", "remote", "remote", "avocado"}, "router"},
  };
  const auto t0 = Clock::now();
  int ok = 0;
  for (const auto& c : cases) {
    const auto ep = env::generate_episode(0, static_cast<int>(c.script.steps.size()),
                                          env::ObjectPool::default_pool(), c.script);
    ok += ep.observations == c.observations && ep.answer_text() == c.answer;
  }
  const double secs = seconds_since(t0);
  return {ok == 4 && secs < 1.0, fmt("%d/4 exact, %.3f s (limit 1 s)", ok, secs)};
}

Outcome oracle_equivalence(Context&) {
  const auto& pool = env::ObjectPool::default_pool();
  const std::vector<std::string> supply(pool.names().begin() + 1, pool.names().begin() + 4);
  const std::string initial = pool.names()[0];
  int checked = 0, mismatches = 0;
  for (int n : {2, 3}) {
    for (const auto& steps : fixtures::all_sequences(n)) {
      std::size_t used = 0;
      const auto expect = fixtures::track(initial, steps, supply, &used);
      const env::ForcedScript script{initial, steps, {supply.begin(), supply.begin() + static_cast<long>(used)}};
      const auto ep = env::generate_episode(0, n, pool, script);
      ++checked;
      mismatches += ep.observations != expect.observations || ep.ground_truth != expect.answer ||
                    env::ground_truth_oracle(ep) != expect.answer;
    }
  }
  return {checked == 1100 && mismatches == 0, fmt("%d sequences, %d mismatches", checked, mismatches)};
}

Outcome metric_correctness(Context& ctx) {
  const auto eps = ctx.episodes(11, {{2, 100}, {3, 100}, {4, 100}, {5, 100}});
  std::vector<eval::PredictionRecord> preds;
  for (const auto& ep : eps) preds.push_back(eval::make_prediction(ep.id, ep.answer_text(), eval::ExtractMode::Direct));
  const auto report = eval::accuracy(preds, eps);
  bool all_one = report.per_bucket.size() == 4;
  for (const auto& [n, b] : report.per_bucket) all_one = all_one && b.accuracy() == 1.0;

  std::vector<env::Episode> four(eps.begin(), eps.begin() + 4);
  std::vector<eval::PredictionRecord> hand(preds.begin(), preds.begin() + 4);
  hand[1] = eval::make_prediction(four[1].id, "not_an_object", eval::ExtractMode::Direct);
  const double three_of_four = eval::accuracy(hand, four).per_bucket.at(2).accuracy();
  return {all_one && three_of_four == 0.75,
          fmt("oracle buckets all 1.0: %s; hand case %.17g (want 0.75)", all_one ? "yes" : "no", three_of_four)};
}

Outcome gradient_fidelity(Context&) {
  const auto cfg = fixtures::tiny_config(default_vocab().size(), 2, 2, 16);
  const auto p = fixtures::gradcheck_params(cfg, 3);
  const auto ids = model::encode(default_vocab(), env::render_marked_prompt(fixtures::golden(fixtures::golden_two_step()))).ids;
  const auto t0 = Clock::now();
  const auto r = fixtures::gradient_check(p, ids, default_vocab().id("router"));
  const double secs = seconds_since(t0);
  bool ok = r.per_family.size() == 5;
  for (const auto& [fam, err] : r.per_family) ok = ok && err <= 1e-5 && r.checked.at(fam) > 0;
  return {ok && secs < 120.0, fmt("max rel error %.2e over %zu families (limit 1e-5), %.1f s (limit 120 s)",
                                  r.max_rel_error, r.per_family.size(), secs)};
}

Outcome patching_arithmetic(Context&) {
  double worst_phi = 0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const double cl = u(rng), cor = u(rng);
    if (std::abs(cor - cl) < 1e-3) continue;
    worst_phi = std::max({worst_phi, std::abs(patch::phi(cl, cor, cl)), std::abs(patch::phi(cl, cor, cor) - 1.0)});
  }
  worst_phi = std::max(worst_phi, std::abs(patch::phi(2.0, -1.0, 0.5) - 0.5));

  const auto cfg = fixtures::tiny_config(9, 1, 2, 8);
  const auto p = fixtures::random_params(cfg, 1);
  const auto pair = fixtures::synthetic_pair(cfg.vocab_size);
  const auto cache = patch::cache_pair(p, pair);
  const auto cor = fixtures::reference_forward(p, pair.corrupted_ids, {});
  double worst_asm = 0;
  for (int h = 0; h < 2; ++h) {
    std::vector<std::vector<const fixtures::HeadZ*>> over(1, std::vector<const fixtures::HeadZ*>(2, nullptr));
    over[0][h] = &cor.z[0][h];
    const auto ref = fixtures::reference_forward(p, pair.clean_ids, over);
    for (auto mode : {patch::PatchMode::DirectPath, patch::PatchMode::Propagate}) {
      worst_asm = std::max(worst_asm, fixtures::max_diff(patch::run_patched(p, pair, cache, {0, h}, mode), ref.logits));
    }
  }
  return {worst_phi <= 1e-12 && worst_asm <= 1e-9,
          fmt("phi identities max error %.1e (limit 1e-12); assembly max diff %.1e (limit 1e-9)", worst_phi, worst_asm)};
}

Outcome ablation_identities(Context&) {
  const auto cfg = fixtures::tiny_config(default_vocab().size(), 2, 2, 16);
  const auto p = fixtures::random_params(cfg, 7, 0.2);
  const auto ids =
      model::encode(default_vocab(), env::render_marked_prompt(fixtures::golden(fixtures::golden_four_step()))).ids;
  const std::vector<model::HeadId> all = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const bool identity = patch::ablate(p, all, 1.0) == p &&
                        model::forward(patch::ablate(p, all, 1.0), ids).logits == model::forward(p, ids).logits;
  model::Intervention iv;
  iv.zero_attention = true;
  const double diff =
      (model::forward(patch::ablate(p, all, 0.0), ids).logits - model::forward(p, ids, false, &iv).logits)
          .cwiseAbs()
          .maxCoeff();
  return {identity && diff <= 1e-9,
          fmt("eps=1 bitwise identical: %s; eps=0 vs zeroed attention %.1e (limit 1e-9)", identity ? "yes" : "no", diff)};
}

Outcome trained_model(Context& ctx) {
  ctx.load_data();
  std::vector<env::Episode> two;
  for (const auto& ep : ctx.heldout) {
    if (ep.n_steps() == 2) two.push_back(ep);
  }
  std::vector<eval::PredictionRecord> unk;
  for (const auto& ep : two) unk.push_back(eval::make_prediction(ep.id, "unknown", eval::ExtractMode::Direct));
  const double baseline = eval::accuracy(unk, two).per_bucket.at(2).accuracy();

  int passing = 0, trained = 0;
  bool in_time = true;
  std::string detail = fmt("baseline %.3f;", baseline);
  for (std::uint64_t seed : {0, 1, 2}) {
    if (passing >= 2 || trained - passing >= 2) {
      detail += fmt(" seed %d not needed (majority decided);", static_cast<int>(seed));
      continue;
    }
    auto [params, secs] = ctx.default_model("vru_seed" + std::to_string(seed), seed, 0);
    const double acc = model::evaluate(params, default_vocab(), two).per_bucket.at(2).accuracy();
    const bool ok = acc >= baseline + 0.20;
    passing += ok;
    ++trained;
    in_time = in_time && secs < 1800.0;
    detail += fmt(" seed %d acc2 %.3f (%+.1f pts, %.0f s);", static_cast<int>(seed), acc, 100 * (acc - baseline), secs);
    if (seed == 0) ctx.seed0 = std::move(params);
  }
  detail += " need +20 pts on 2 of 3 seeds, each < 1800 s";
  return {passing >= 2 && in_time, detail};
}

std::vector<patch::PatchPair> causal_pairs(const std::vector<env::Episode>& eps, std::size_t n) {
  auto pairs = patch::build_pairs(default_vocab(), eps);
  if (pairs.size() > n) pairs.resize(n);
  return pairs;
}

Outcome knockout_pattern(Context& ctx) {
  const auto& p = ctx.seed0_model();
  const auto map = patch::causal_effects(p, causal_pairs(ctx.heldout, 100));
  ctx.write("vru_seed0_map.json", patch::causal_map_json(map));
  ctx.write("vru_seed0_map.svg", patch::causal_map_svg(map));
  const std::vector<int> Ks = {0, 8};
  const std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  const auto rows = patch::knockout_curve(p, default_vocab(), ctx.heldout, map, Ks, seeds);
  ctx.write("knockout.csv", patch::knockout_csv(rows));
  const double base = rows[0].topk_acc;
  const double top_drop = base - rows[1].topk_acc;
  const double rand_drop = base - rows[1].random_mean;
  const bool ok = top_drop > 0 && top_drop >= 2.0 * std::max(rand_drop, 0.0);

  // Informational only: the same knockout ranked by a map whose MLPs are recomputed.
  const auto prop = patch::causal_effects(p, causal_pairs(ctx.heldout, 100), patch::PatchMode::Propagate);
  ctx.write("vru_seed0_map_propagate.json", patch::causal_map_json(prop));
  const std::vector<int> top8 = {8};
  const std::vector<std::uint64_t> no_seeds = {0};
  const double prop_drop = base - patch::knockout_curve(p, default_vocab(), ctx.heldout, prop, top8, no_seeds)[0].topk_acc;
  return {ok, fmt("%d pairs, %s map; unablated %.3f, top-8 %.3f (drop %.3f), random-8 %.3f +- %.3f (drop %.3f); need "
                  "top drop >= 2x random drop [propagate map, not scored: top-8 drop %.3f]",
                  map.n_pairs(), std::string(patch::to_string(map.mode)).c_str(), base, rows[1].topk_acc, top_drop,
                  rows[1].random_mean, rows[1].random_std, rand_drop, prop_drop)};
}

Outcome probing_pattern(Context& ctx) {
  const auto& p = ctx.seed0_model();
  const auto reps = probe::capture_representations(p, default_vocab(), ctx.heldout);
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::map<probe::Target, probe::LayerScore> best;
  std::string csv;
  std::vector<std::pair<probe::Target, std::vector<probe::LayerScore>>> sweeps;
  for (auto t : {probe::Target::Direction, probe::Target::Angle, probe::Target::Orientation}) {
    const auto scores = probe::layer_sweep(reps, ctx.heldout, t, seeds);
    csv += probe::sweep_csv(t, scores, csv.empty());
    for (const auto& s : scores) {
      if (!best.contains(t) || s.mean_acc > best[t].mean_acc) best[t] = s;
    }
    sweeps.emplace_back(t, scores);
  }
  ctx.write("probe_sweep.csv", csv);
  ctx.write("probe_sweep.svg", probe::sweep_svg(sweeps));
  const auto& d = best[probe::Target::Direction];
  const auto& a = best[probe::Target::Angle];
  const auto& o = best[probe::Target::Orientation];
  const bool ok = d.mean_acc >= 0.95 && a.mean_acc >= 0.95 && o.mean_acc >= 0.40;
  return {ok, fmt("best direction %.3f (layer %d), angle %.3f (layer %d) [need 0.95]; orientation %.3f (layer %d) "
                  "[need 0.40]",
                  d.mean_acc, d.layer, a.mean_acc, a.layer, o.mean_acc, o.layer)};
}

Outcome selective_sft(Context& ctx) {
  const auto& base = ctx.base_model();
  const auto& vocab = default_vocab();
  const auto map = patch::causal_effects(base, causal_pairs(ctx.heldout, 100));
  ctx.write("mixed_base_map.json", patch::causal_map_json(map));
  const int K = sft::matched_k(base.config().n_layers * base.config().n_heads);
  const auto sel = sft::select_top_k(map, K);
  const auto ft_train = ctx.episodes(defaults::kSftDataSeed, defaults::kSftQuotas);
  const auto control = sft::control_task(env::ObjectPool::default_pool(), defaults::kEchoEvalSeed,
                                         defaults::kEchoEvalItems);

  sft::SftConfig sc;
  sc.mode = sft::SftMode::Selective;
  sc.K = K;
  const auto selective = sft::sft_run(base, vocab, sc, sel, ft_train, ctx.heldout, control);
  sc.mode = sft::SftMode::Full;
  const auto full = sft::sft_run(base, vocab, sc, std::nullopt, ft_train, ctx.heldout, control);
  const std::vector<sft::SftReport> reports = {selective.report, full.report};
  ctx.write("sft_report.csv", sft::sft_csv(reports));

  // Everything outside the selected Q/K/V/O blocks must be untouched.
  std::vector<char> inside(base.data().size(), 0);
  for (const auto& r : sft::selection_ranges(base.layout(), sel)) {
    std::fill(inside.begin() + static_cast<long>(r.offset), inside.begin() + static_cast<long>(r.offset + r.size), 1);
  }
  long changed_outside = 0;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    changed_outside += !inside[i] && selective.params.data()[i] != base.data()[i];
  }
  const auto& s = selective.report;
  const auto& f = full.report;
  const double s_forget = s.control_acc_before - s.control_acc_after;
  const double f_forget = f.control_acc_before - f.control_acc_after;
  const bool ok = s.vru_delta() > 0 && s_forget < f_forget && changed_outside == 0;
  return {ok, fmt("K=%d; selective VRU %.3f -> %.3f, echo %.3f -> %.3f; full VRU %.3f -> %.3f, echo %.3f -> %.3f; "
                  "%ld non-selected values changed",
                  K, s.vru_acc_before, s.vru_acc_after, s.control_acc_before, s.control_acc_after, f.vru_acc_before,
                  f.vru_acc_after, f.control_acc_before, f.control_acc_after, changed_outside)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_runs";
  std::vector<std::string> only;
  bool reuse = false;
  app.add_option("--work-dir", work, "Directory for checkpoints and reports")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_flag("--reuse", reuse, "Load checkpoints already present in the work dir instead of training");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.work = work;
  ctx.reuse = reuse;
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"golden-episodes", golden_episodes},
      {"oracle-equivalence", oracle_equivalence},
      {"metric-correctness", metric_correctness},
      {"gradient-fidelity", gradient_fidelity},
      {"patching-arithmetic", patching_arithmetic},
      {"ablation-identities", ablation_identities},
      {"trained-toy-model", trained_model},
      {"knockout-pattern", knockout_pattern},
      {"probing-pattern", probing_pattern},
      {"selective-vs-full-sft", selective_sft},
  };
  const std::set<std::string> wanted(only.begin(), only.end());
  int failed = 0;
  std::string summary;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && !wanted.contains(name)) continue;
    Outcome out;
    try {
      out = run(ctx);
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    failed += !out.pass;
    const std::string line = std::string(out.pass ? "PASS " : "FAIL ") + name + ": " + out.detail;
    std::cout << line << std::endl;
    summary += line + "\n";
  }
  ctx.write("summary.txt", summary);
  return failed == 0 ? 0 : 1;
}
