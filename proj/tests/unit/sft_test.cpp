#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"
#include "vrulab/dataset.hpp"
#include "vrulab/error.hpp"
#include "vrulab/optimizer.hpp"
#include "vrulab/sft.hpp"

using namespace vrulab;
using namespace vrulab::sft;
using model::HeadMatrix;
using fixtures::default_vocab;

namespace {

patch::CausalMap map_from(std::vector<std::vector<double>> phi) {
  patch::CausalMap m;
  m.n_layers = static_cast<int>(phi.size());
  m.n_heads = static_cast<int>(phi[0].size());
  m.phi_mean = std::move(phi);
  return m;
}

Params filled(const model::ModelConfig& cfg, double v) {
  Params p(cfg);
  for (auto& x : p.data()) x = v;
  return p;
}

bool in_ranges(std::size_t i, const std::vector<model::ParamRange>& rs) {
  for (const auto& r : rs) {
    if (i >= r.offset && i < r.offset + r.size) return true;
  }
  return false;
}

std::vector<env::Episode> episodes(std::uint64_t seed, int n2, int n3) {
  env::DatasetConfig cfg;
  cfg.seed = seed;
  cfg.quotas = {{2, n2}, {3, n3}};
  return env::generate_dataset(cfg, env::ObjectPool::default_pool()).episodes;
}

}  // namespace

TEST(Selection, TopKCountsPerLayer) {
  const auto all = select_top_k(map_from({{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}}), 6);
  EXPECT_EQ(all.per_layer, (std::vector<int>{3, 3}));
  EXPECT_EQ(all.heads.size(), 6u);
  const auto conc = select_top_k(map_from({{0.0, 0.0, 0.0, 0.0}, {0.9, 0.8, 0.7, 0.6}, {0.0, 0.0, 0.0, 0.0}}), 3);
  EXPECT_EQ(conc.per_layer, (std::vector<int>{0, 3, 0}));
  EXPECT_TRUE(std::is_sorted(conc.heads.begin(), conc.heads.end()));
}

TEST(Selection, MatchedFraction) {
  EXPECT_EQ(matched_k(784), 32);
  EXPECT_EQ(matched_k(576), 24);
  EXPECT_EQ(matched_k(48), 2);
  EXPECT_EQ(matched_k(4), 1);
  EXPECT_THROW(matched_k(0), ValidationError);
}

TEST(Selection, Validates) {
  const auto cfg = fixtures::tiny_config(10, 2, 2, 8);
  const std::vector<HeadId> dup = {{0, 1}, {0, 1}};
  EXPECT_THROW(make_selection(cfg, dup), ValidationError);
  const std::vector<HeadId> out = {{0, 2}};
  EXPECT_THROW(make_selection(cfg, out), ValidationError);
}

TEST(MaskedGrad, FullLayerHasUnitScale) {
  const auto cfg = fixtures::tiny_config(10, 2, 2, 8);
  auto g = filled(cfg, 1.5);
  const std::vector<HeadId> heads = {{1, 0}, {1, 1}};
  const auto sel = make_selection(cfg, heads);
  masked_grad(g, sel);
  const auto ranges = selection_ranges(g.layout(), sel);
  for (std::size_t i = 0; i < g.data().size(); ++i) EXPECT_EQ(g.data()[i], in_ranges(i, ranges) ? 1.5 : 0.0);
}

TEST(MaskedGrad, EmptySelectionZeroes) {
  const auto cfg = fixtures::tiny_config(10, 2, 2, 8);
  auto g = filled(cfg, 2.0);
  masked_grad(g, make_selection(cfg, {}));
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(MaskedGrad, EightHeadsTwoSelectedScaleByFour) {
  const auto cfg = fixtures::tiny_config(10, 2, 8, 16);
  auto g = filled(cfg, 1.0);
  const std::vector<HeadId> heads = {{0, 3}, {0, 6}, {1, 0}};
  const auto sel = make_selection(cfg, heads);
  EXPECT_EQ(sel.per_layer, (std::vector<int>{2, 1}));
  masked_grad(g, sel);
  for (auto m : {HeadMatrix::Q, HeadMatrix::K, HeadMatrix::V, HeadMatrix::O}) {
    for (double v : g.range(g.layout().head_block(0, 3, m))) EXPECT_EQ(v, 4.0);
    for (double v : g.range(g.layout().head_block(1, 0, m))) EXPECT_EQ(v, 8.0);
    for (double v : g.range(g.layout().head_block(0, 2, m))) EXPECT_EQ(v, 0.0);
  }
}

// A plain gradient step makes the realized update proportional to the
// gradient, so the H/h factor is visible directly.
TEST(MaskedGrad, RescaleVisibleInRealizedUpdate) {
  const auto cfg = fixtures::tiny_config(default_vocab().size(), 2, 4, 16);
  const auto p = model::Params::initialize(cfg);
  const auto ex = model::make_example(default_vocab(), fixtures::golden(fixtures::golden_five_step()));
  const auto raw = model::loss_and_grad(p, ex.ids, ex.answer).grads;
  const std::vector<HeadId> heads = {{0, 1}, {0, 2}, {1, 3}};
  const auto sel = make_selection(cfg, heads);
  auto masked = raw;
  masked_grad(masked, sel);
  auto plain = p, scaled = p;
  model::sgd_step(plain, raw, 0.1);
  model::sgd_step(scaled, masked, 0.1);
  for (const auto& h : heads) {
    const double factor = 4.0 / sel.per_layer[h.layer];
    const auto r = p.layout().head_block(h.layer, h.head, HeadMatrix::V);
    for (std::size_t i = r.offset; i < r.offset + r.size; ++i) {
      EXPECT_NEAR(scaled.data()[i] - p.data()[i], factor * (plain.data()[i] - p.data()[i]), 1e-15);
    }
  }
}

TEST(TunedCount, BlockArithmetic) {
  auto cfg = fixtures::tiny_config(50, 6, 8, 128);
  EXPECT_EQ(tuned_param_count(cfg, SftMode::Selective, 32), 32L * (3 * 128 * 16 + 16 * 128));
  EXPECT_EQ(tuned_param_count(cfg, SftMode::Full, 0), static_cast<long>(model::Layout(cfg).total()));
  const auto sel = make_selection(cfg, std::vector<HeadId>{{0, 0}, {5, 7}});
  std::size_t n = 0;
  for (const auto& r : selection_ranges(model::Layout(cfg), sel)) n += r.size;
  EXPECT_EQ(static_cast<long>(n), tuned_param_count(cfg, SftMode::Selective, 2));
}

TEST(SftRun, SelectiveFreezesEverythingElse) {
  const auto cfg = fixtures::tiny_config(default_vocab().size(), 2, 2, 16);
  const auto base = model::Params::initialize(cfg);
  const auto train = episodes(1, 24, 8);
  const auto eval = episodes(2, 10, 10);
  const auto control = control_task(env::ObjectPool::default_pool(), 3, 20);
  SftConfig config;
  config.hyper.batch_size = 8;
  config.hyper.adam.weight_decay = 0.1;
  const std::vector<HeadId> heads = {{1, 0}};
  const auto sel = make_selection(cfg, heads);
  const auto res = sft_run(base, default_vocab(), config, sel, train, eval, control);
  const auto ranges = selection_ranges(base.layout(), sel);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < base.data().size(); ++i) {
    if (in_ranges(i, ranges)) {
      changed += res.params.data()[i] != base.data()[i];
    } else {
      ASSERT_EQ(res.params.data()[i], base.data()[i]) << i;
    }
  }
  EXPECT_GT(changed, 0u);
  EXPECT_EQ(res.report.tuned_params, tuned_param_count(cfg, SftMode::Selective, 1));
  EXPECT_EQ(res.report.vru_delta(), res.report.vru_acc_after - res.report.vru_acc_before);
  EXPECT_THROW(sft_run(base, default_vocab(), config, std::nullopt, train, eval, control), ValidationError);
}

TEST(SftRun, AllHeadsSelectiveEqualsAttentionOnlyFull) {
  const auto cfg = fixtures::tiny_config(default_vocab().size(), 2, 2, 16);
  const auto base = model::Params::initialize(cfg);
  const auto examples = model::make_examples(default_vocab(), episodes(4, 24, 8));
  model::TrainHyper h;
  h.epochs = 1;
  h.batch_size = 8;
  h.grad_clip = 0;
  h.adam.weight_decay = 0.1;
  const auto sel = make_selection(cfg, std::vector<HeadId>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  const auto selective = model::train_examples(base, examples, h, {}, selection_ranges(base.layout(), sel),
                                               [sel](Params& g) { masked_grad(g, sel); });
  const auto full = model::train_examples(base, examples, h, {}, attention_ranges(base.layout()));
  EXPECT_EQ(selective.params, full.params);
}

TEST(Echo, DefinitionAndRendering) {
  EchoItem item{0, {"plate", "clock", "router"}, 1};
  EXPECT_EQ(item.answer(), "clock");
  EXPECT_EQ(render_echo(item), "<ECHO>\n\nList: plate clock router\nQuery: item 1\nAnswer: ");
  const auto ex = make_echo_example(default_vocab(), item);
  EXPECT_EQ(ex.answer, default_vocab().id("clock"));
}

TEST(Echo, GeneratedItemsAreValidAndClosed) {
  const auto items = control_task(env::ObjectPool::default_pool(), 7, 500);
  ASSERT_EQ(items.size(), 500u);
  EXPECT_EQ(control_task(env::ObjectPool::default_pool(), 7, 500).front().items, items.front().items);
  int correct = 0;
  for (const auto& it : items) {
    EXPECT_GE(static_cast<int>(it.items.size()), kEchoMinItems);
    EXPECT_LE(static_cast<int>(it.items.size()), kEchoMaxItems);
    EXPECT_EQ(std::set<std::string>(it.items.begin(), it.items.end()).size(), it.items.size());
    EXPECT_NO_THROW(model::encode(default_vocab(), render_echo(it)));
    correct += it.answer() == it.items[it.query];
  }
  EXPECT_EQ(correct, 500);
}

TEST(Report, CsvAndModes) {
  SftReport r;
  r.mode = SftMode::Full;
  r.tuned_params = 1234;
  r.vru_acc_before = 0.5;
  r.vru_acc_after = 0.75;
  r.control_acc_before = 1.0;
  r.control_acc_after = 0.25;
  const std::vector<SftReport> rs{r};
  const auto csv = sft_csv(rs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "mode,tuned_params,samples_per_sec,vru_acc_before,vru_acc_after,control_acc_before,control_acc_after");
  EXPECT_NE(csv.find("full,1234,"), std::string::npos);
  EXPECT_EQ(r.control_delta(), -0.75);
  EXPECT_EQ(parse_sft_mode("selective"), SftMode::Selective);
  EXPECT_THROW(parse_sft_mode("lora"), ValidationError);
  const auto ref = reference_hyper();
  EXPECT_EQ(ref.adam.lr, 2e-5);
  EXPECT_EQ(ref.batch_size, 32);
  EXPECT_EQ(ref.epochs, 1);
}
