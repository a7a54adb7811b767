// vrulab: command-line front end for dataset generation, training and the
// interpretability experiments.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vrulab/bridge_client.hpp"
#include "vrulab/checkpoint.hpp"
#include "vrulab/dataset.hpp"
#include "vrulab/defaults.hpp"
#include "vrulab/error.hpp"
#include "vrulab/eval.hpp"
#include "vrulab/patch.hpp"
#include "vrulab/probe.hpp"
#include "vrulab/sft.hpp"
#include "vrulab/train.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace vrulab;

namespace {

// Reads a flat JSON object of option values for the selected subcommand.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App& app) : app_(app) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    ordered_json j;
    try {
      input >> j;
    } catch (const ordered_json::exception& e) {
      throw CLI::ConversionError(std::string("config file: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    const auto subs = app_.get_subcommands();
    std::vector<CLI::ConfigItem> items;
    for (auto it = j.begin(); it != j.end(); ++it) {
      CLI::ConfigItem item;
      if (!subs.empty()) item.parents = {subs.front()->get_name()};
      item.name = it.key();
      const auto& v = it.value();
      if (v.is_string()) {
        item.inputs = {v.get<std::string>()};
      } else if (v.is_boolean()) {
        item.inputs = {v.get<bool>() ? "true" : "false"};
      } else if (v.is_number() || v.is_null()) {
        item.inputs = {v.dump()};
      } else {
        throw CLI::ConversionError("config key '" + it.key() + "' must be a scalar");
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App& app_;
};

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("bad " + what + " '" + s + "'");
  }
}

// "2=100,3=100"
std::map<int, int> parse_quotas(const std::string& s) {
  std::map<int, int> out;
  for (const auto& part : split(s, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ValidationError("quota '" + part + "' is not n=count");
    const int n = static_cast<int>(parse_u64(part.substr(0, eq), "step count"));
    out[n] = static_cast<int>(parse_u64(part.substr(eq + 1), "quota"));
  }
  if (out.empty()) throw ValidationError("no quotas given");
  return out;
}

std::string format_quotas(const std::map<int, int>& q) {
  std::string out;
  for (const auto& [n, c] : q) out += (out.empty() ? "" : ",") + std::to_string(n) + "=" + std::to_string(c);
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_u64(part, "seed"));
  if (out.empty()) throw ValidationError("no seeds given");
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) out.push_back(static_cast<int>(parse_u64(part, "integer")));
  return out;
}

std::vector<model::HeadId> parse_heads(const std::string& s) {
  std::vector<model::HeadId> out;
  for (const auto& part : split(s, ',')) {
    const auto dot = part.find('.');
    if (dot == std::string::npos) throw ValidationError("head '" + part + "' is not layer.head");
    out.push_back({static_cast<int>(parse_u64(part.substr(0, dot), "layer")),
                   static_cast<int>(parse_u64(part.substr(dot + 1), "head"))});
  }
  return out;
}

// The effective value of every option of a subcommand.
ordered_json resolved_config(const CLI::App& sub) {
  ordered_json j;
  j["command"] = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name == "out") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      j[name] = res.size() == 1 ? res[0] : CLI::detail::join(res, ",");
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

struct RunDir {
  fs::path path;

  static RunDir create(const CLI::App& sub, const std::string& root) {
    const auto cfg = resolved_config(sub);
    const std::string text = cfg.dump(2) + "\n";
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
    RunDir dir{fs::path(root) / (sub.get_name() + "-" + hex)};
    fs::create_directories(dir.path);
    write_file(dir.path / "config.json", text);
    return dir;
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

model::Vocab load_vocab_for(const std::string& checkpoint, const std::string& vocab_path) {
  return model::Vocab::load(vocab_path.empty() ? checkpoint + ".vocab.json" : vocab_path);
}

void log(const std::string& msg) { std::cerr << msg << "\n"; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viewpoint-rotation experiments on a toy transformer"};
  app.require_subcommand(1);
  std::string out_root = "runs";
  app.config_formatter(std::make_shared<JsonConfig>(app));
  app.set_config("--config", "", "JSON file with option values; command-line flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_root, "Root directory for run outputs")->capture_default_str();
  };

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a rotation dataset");
  std::uint64_t gen_seed = 0;
  std::string gen_quota = "2=1000,3=1000,4=1000,5=1000";
  bool gen_no_dedup = false;
  gen->add_option("--seed", gen_seed, "Master seed")->capture_default_str();
  gen->add_option("--quota", gen_quota, "Episodes per step count, e.g. 2=100,3=100")->capture_default_str();
  gen->add_flag("--no-dedup", gen_no_dedup, "Keep duplicate episodes");
  add_common(gen);

  // eval
  auto* ev = app.add_subcommand("eval", "Score a predictions file");
  std::string ev_dataset, ev_preds, ev_mode = "direct";
  ev->add_option("--dataset", ev_dataset, "Episodes JSONL")->required();
  ev->add_option("--predictions", ev_preds, "Predictions JSONL {id, raw}")->required();
  ev->add_option("--mode", ev_mode, "direct or tagged answer extraction")->capture_default_str();
  add_common(ev);

  // train
  auto* tr = app.add_subcommand("train", "Train the toy transformer");
  std::string tr_data, tr_heldout;
  std::uint64_t tr_data_seed = defaults::kTrainDataSeed, tr_heldout_seed = defaults::kHeldoutDataSeed;
  std::string tr_quota = format_quotas(defaults::kTrainQuotas);
  std::string tr_heldout_quota = format_quotas(defaults::kHeldoutQuotas);
  int tr_echo = 0;
  std::uint64_t tr_echo_seed = defaults::kEchoTrainSeed;
  model::ModelConfig mc;
  model::TrainHyper th;
  tr->add_option("--train-data", tr_data, "Training episodes JSONL (default: generated)");
  tr->add_option("--heldout-data", tr_heldout, "Held-out episodes JSONL (default: generated)");
  tr->add_option("--data-seed", tr_data_seed)->capture_default_str();
  tr->add_option("--quota", tr_quota)->capture_default_str();
  tr->add_option("--heldout-seed", tr_heldout_seed)->capture_default_str();
  tr->add_option("--heldout-quota", tr_heldout_quota)->capture_default_str();
  tr->add_option("--echo", tr_echo, "Echo control items mixed into training")->capture_default_str();
  tr->add_option("--echo-seed", tr_echo_seed)->capture_default_str();
  tr->add_option("--layers", mc.n_layers)->capture_default_str();
  tr->add_option("--heads", mc.n_heads)->capture_default_str();
  tr->add_option("--d-model", mc.d_model)->capture_default_str();
  tr->add_option("--d-ff", mc.d_ff)->capture_default_str();
  tr->add_option("--max-len", mc.max_len)->capture_default_str();
  tr->add_option("--init-seed", mc.init_seed)->capture_default_str();
  tr->add_option("--lr", th.adam.lr)->capture_default_str();
  tr->add_option("--beta1", th.adam.beta1)->capture_default_str();
  tr->add_option("--beta2", th.adam.beta2)->capture_default_str();
  tr->add_option("--weight-decay", th.adam.weight_decay)->capture_default_str();
  tr->add_option("--epochs", th.epochs)->capture_default_str();
  tr->add_option("--batch", th.batch_size)->capture_default_str();
  tr->add_option("--warmup", th.warmup_frac)->capture_default_str();
  tr->add_option("--min-lr-frac", th.min_lr_frac)->capture_default_str();
  tr->add_option("--clip", th.grad_clip)->capture_default_str();
  tr->add_option("--shuffle-seed", th.seed)->capture_default_str();
  add_common(tr);

  // probe
  auto* pr = app.add_subcommand("probe", "Layer-wise linear probing");
  std::string pr_ckpt, pr_vocab, pr_dump, pr_dataset, pr_target = "all", pr_seeds = "0,1,2";
  bool pr_export = false;
  probe::ProbeHyper ph;
  pr->add_option("--checkpoint", pr_ckpt, "Toy model checkpoint");
  pr->add_option("--vocab", pr_vocab, "Vocab JSON (default: <checkpoint>.vocab.json)");
  pr->add_option("--dump", pr_dump, "Hidden-state dump instead of a checkpoint");
  pr->add_option("--dataset", pr_dataset, "Episodes JSONL")->required();
  pr->add_option("--target", pr_target, "direction, angle, orientation or all")->capture_default_str();
  pr->add_option("--seeds", pr_seeds, "Split seeds")->capture_default_str();
  pr->add_option("--probe-lr", ph.lr)->capture_default_str();
  pr->add_option("--probe-epochs", ph.epochs)->capture_default_str();
  pr->add_option("--probe-l2", ph.l2)->capture_default_str();
  pr->add_flag("--export-dump", pr_export, "Also write the captured representations as a dump");
  add_common(pr);

  // patch
  auto* pa = app.add_subcommand("patch", "Path patching causal-effect map");
  std::string pa_ckpt, pa_vocab, pa_pairs, pa_mode = "direct";
  int pa_max_pairs = 0, pa_attention = 0;
  pa->add_option("--checkpoint", pa_ckpt)->required();
  pa->add_option("--vocab", pa_vocab);
  pa->add_option("--pairs-from", pa_pairs, "Episodes JSONL to build pairs from")->required();
  pa->add_option("--mode", pa_mode, "direct or propagate")->capture_default_str();
  pa->add_option("--max-pairs", pa_max_pairs, "Use at most this many pairs (0 = all)")->capture_default_str();
  pa->add_option("--attention", pa_attention, "Attention report for the top N heads")->capture_default_str();
  add_common(pa);

  // ablate
  auto* ab = app.add_subcommand("ablate", "Head knockout curve");
  std::string ab_ckpt, ab_vocab, ab_map, ab_dataset, ab_ks = "0,1,2,4,8,16", ab_seeds = "0,1,2,3,4", ab_heads;
  double ab_eps = patch::kDefaultEpsilon;
  ab->add_option("--checkpoint", ab_ckpt)->required();
  ab->add_option("--vocab", ab_vocab);
  ab->add_option("--map", ab_map, "Causal map JSON")->required();
  ab->add_option("--dataset", ab_dataset, "Evaluation episodes JSONL")->required();
  ab->add_option("--k", ab_ks, "Ascending K values")->capture_default_str();
  ab->add_option("--random-seeds", ab_seeds)->capture_default_str();
  ab->add_option("--epsilon", ab_eps)->capture_default_str();
  ab->add_option("--save-heads", ab_heads, "Also write a checkpoint with these heads (layer.head,...) ablated");
  add_common(ab);

  // sft
  auto* sf = app.add_subcommand("sft", "Selective versus full fine-tuning");
  std::string sf_ckpt, sf_vocab, sf_map, sf_train, sf_eval, sf_mode = "both";
  int sf_k = 32, sf_control = defaults::kEchoEvalItems;
  std::uint64_t sf_control_seed = defaults::kEchoEvalSeed;
  sft::SftConfig sc;
  sf->add_option("--checkpoint", sf_ckpt, "Base model")->required();
  sf->add_option("--vocab", sf_vocab);
  sf->add_option("--map", sf_map, "Causal map JSON (needed for selective)");
  sf->add_option("--train", sf_train, "Fine-tuning episodes JSONL")->required();
  sf->add_option("--eval", sf_eval, "Evaluation episodes JSONL")->required();
  sf->add_option("--mode", sf_mode, "selective, full or both")->capture_default_str();
  sf->add_option("--k", sf_k, "Heads to tune in selective mode; 0 picks the same fraction as 32 of 784")->capture_default_str();
  sf->add_option("--control-size", sf_control)->capture_default_str();
  sf->add_option("--control-seed", sf_control_seed)->capture_default_str();
  sf->add_option("--lr", sc.hyper.adam.lr)->capture_default_str();
  sf->add_option("--weight-decay", sc.hyper.adam.weight_decay)->capture_default_str();
  sf->add_option("--epochs", sc.hyper.epochs)->capture_default_str();
  sf->add_option("--batch", sc.hyper.batch_size)->capture_default_str();
  sf->add_option("--warmup", sc.hyper.warmup_frac)->capture_default_str();
  sf->add_option("--clip", sc.hyper.grad_clip)->capture_default_str();
  sf->add_option("--shuffle-seed", sc.hyper.seed)->capture_default_str();
  add_common(sf);

  // report
  auto* rp = app.add_subcommand("report", "Render accuracy reports as a table");
  std::vector<std::string> rp_csvs;
  rp->add_option("reports", rp_csvs, "Report CSV files")->required();
  add_common(rp);

  // bridge-eval
  auto* be = app.add_subcommand("bridge-eval", "Evaluate an external model through the stdio bridge");
  std::string be_cmd, be_model, be_dataset, be_mode = "direct";
  bool be_probe = false;
  be->add_option("--bridge", be_cmd, "Bridge executable (with arguments, space separated)")->required();
  be->add_option("--model", be_model, "Model identifier passed to the bridge")->required();
  be->add_option("--dataset", be_dataset)->required();
  be->add_option("--mode", be_mode, "direct or think")->capture_default_str();
  be->add_flag("--probe", be_probe, "Also dump hidden states and run a direction probe");
  add_common(be);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const auto run = RunDir::create(*gen, out_root);
      env::DatasetConfig dc;
      dc.seed = gen_seed;
      dc.quotas = parse_quotas(gen_quota);
      dc.dedup = !gen_no_dedup;
      const auto data = env::generate_dataset(dc, env::ObjectPool::default_pool());
      std::ofstream out(run / "episodes.jsonl", std::ios::binary);
      env::write_episodes(out, data.episodes);
      write_file(run / "manifest.json", env::manifest_to_json(data.manifest));
      for (const auto& w : data.manifest.warnings) log("warning: " + w);
      std::cout << run.path.string() << "\n";
    } else if (*ev) {
      const auto run = RunDir::create(*ev, out_root);
      const auto golds = env::read_episodes_file(ev_dataset);
      std::ifstream in(ev_preds, std::ios::binary);
      if (!in) throw ValidationError("cannot open '" + ev_preds + "'");
      const auto mode = ev_mode == "tagged" ? eval::ExtractMode::Tagged
                        : ev_mode == "direct" ? eval::ExtractMode::Direct
                                              : throw ValidationError("unknown mode '" + ev_mode + "'");
      const auto preds = eval::read_predictions(in, mode);
      const auto report = eval::accuracy(preds, golds);
      write_file(run / "report.csv", eval::report_csv(report));
      std::cout << eval::report_table(report);
    } else if (*tr) {
      mc.vocab_size = 0;
      const auto run = RunDir::create(*tr, out_root);
      const auto& pool = env::ObjectPool::default_pool();
      auto load_or_gen = [&](const std::string& path, std::uint64_t seed, const std::string& quota) {
        if (!path.empty()) return env::read_episodes_file(path);
        env::DatasetConfig dc;
        dc.seed = seed;
        dc.quotas = parse_quotas(quota);
        return env::generate_dataset(dc, pool).episodes;
      };
      const auto train_eps = load_or_gen(tr_data, tr_data_seed, tr_quota);
      const auto heldout = load_or_gen(tr_heldout, tr_heldout_seed, tr_heldout_quota);
      const auto vocab = model::Vocab::for_pool(pool);
      mc.vocab_size = vocab.size();
      mc.validate();

      auto examples = model::make_examples(vocab, train_eps);
      const auto echo = sft::control_task(pool, tr_echo_seed, tr_echo);
      for (const auto& item : echo) examples.push_back(sft::make_echo_example(vocab, item));
      const auto heldout_examples = model::make_examples(vocab, heldout);

      std::string log_csv = "epoch,train_loss,heldout_loss";
      for (const auto& [n, q] : parse_quotas(tr_heldout_quota)) log_csv += ",acc_" + std::to_string(n);
      log_csv += ",avg\n";
      std::string timing = "epoch,seconds\n";
      auto on_epoch = [&](const model::Params& p, model::EpochMetrics& m) {
        m.heldout_loss = model::mean_loss(p, heldout_examples);
        m.heldout = model::evaluate(p, vocab, heldout);
        std::string line = std::to_string(m.epoch) + "," + fmt("%.6f", m.train_loss) + "," + fmt("%.6f", m.heldout_loss);
        for (const auto& [n, b] : m.heldout.per_bucket) line += "," + fmt("%.6f", b.accuracy());
        line += "," + fmt("%.6f", m.heldout.average());
        log_csv += line + "\n";
        timing += std::to_string(m.epoch) + "," + fmt("%.1f", m.seconds) + "\n";
        log("epoch " + line);
      };
      model::Params init = model::Params::initialize(mc);
      auto result = model::train_examples(std::move(init), examples, th, on_epoch);
      model::save_checkpoint((run / "model.bin").string(), result.params);
      vocab.save((run / "model.bin.vocab.json").string());
      write_file(run / "train_log.csv", log_csv);
      write_file(run / "timing.csv", timing);
      const auto final_report = model::evaluate(result.params, vocab, heldout);
      write_file(run / "heldout.csv", eval::report_csv(final_report));
      if (!echo.empty()) {
        const auto control = sft::control_task(pool, defaults::kEchoEvalSeed, defaults::kEchoEvalItems);
        write_file(run / "control.txt", fmt("%.6f\n", sft::control_accuracy(result.params, vocab, control)));
      }
      std::cout << eval::report_table(final_report) << run.path.string() << "\n";
    } else if (*pr) {
      if (pr_ckpt.empty() == pr_dump.empty()) throw ValidationError("give exactly one of --checkpoint or --dump");
      const auto run = RunDir::create(*pr, out_root);
      const auto episodes = env::read_episodes_file(pr_dataset);
      probe::Representations reps;
      if (!pr_ckpt.empty()) {
        const auto params = model::load_checkpoint(pr_ckpt);
        reps = probe::capture_representations(params, load_vocab_for(pr_ckpt, pr_vocab), episodes);
        if (pr_export) bridge::save_dump((run / "representations.vruh").string(), probe::to_dump(reps, episodes));
      } else {
        reps = probe::representations_from_dump(bridge::load_dump(pr_dump), episodes);
      }
      std::vector<probe::Target> targets;
      if (pr_target == "all") {
        targets = {probe::Target::Direction, probe::Target::Angle, probe::Target::Orientation};
      } else {
        targets = {probe::parse_target(pr_target)};
      }
      const auto seeds = parse_seeds(pr_seeds);
      std::string csv;
      std::vector<std::pair<probe::Target, std::vector<probe::LayerScore>>> sweeps;
      for (auto t : targets) {
        auto scores = probe::layer_sweep(reps, episodes, t, seeds, ph);
        csv += probe::sweep_csv(t, scores, csv.empty());
        sweeps.emplace_back(t, std::move(scores));
      }
      write_file(run / "sweep.csv", csv);
      write_file(run / "sweep.svg", probe::sweep_svg(sweeps));
      std::cout << csv << run.path.string() << "\n";
    } else if (*pa) {
      const auto run = RunDir::create(*pa, out_root);
      const auto params = model::load_checkpoint(pa_ckpt);
      const auto vocab = load_vocab_for(pa_ckpt, pa_vocab);
      auto pairs = patch::build_pairs(vocab, env::read_episodes_file(pa_pairs));
      if (pa_max_pairs > 0 && static_cast<int>(pairs.size()) > pa_max_pairs) pairs.resize(pa_max_pairs);
      const auto mode = pa_mode == "direct" ? patch::PatchMode::DirectPath : patch::parse_mode(pa_mode);
      log("patching " + std::to_string(pairs.size()) + " pairs");
      const auto map = patch::causal_effects(params, pairs, mode);
      for (const auto& w : map.warnings) log("warning: " + w);
      if (patch::audit(map) > 1e-12) throw RuntimeFailure("causal map failed its arithmetic audit");
      write_file(run / "causal_map.json", patch::causal_map_json(map));
      write_file(run / "pairs.csv", patch::causal_pairs_csv(map));
      write_file(run / "causal_map.svg", patch::causal_map_svg(map));
      if (pa_attention > 0) {
        const auto heads = patch::rank_heads(map, std::min(pa_attention, map.n_layers * map.n_heads));
        const auto report = patch::attention_report(params, vocab, pairs.front().clean, heads);
        write_file(run / "attention.json", patch::attention_json(report));
        write_file(run / "attention.svg", patch::attention_svg(report));
      }
      std::cout << run.path.string() << "\n";
    } else if (*ab) {
      const auto run = RunDir::create(*ab, out_root);
      const auto params = model::load_checkpoint(ab_ckpt);
      const auto vocab = load_vocab_for(ab_ckpt, ab_vocab);
      const auto map = patch::parse_causal_map(read_file(ab_map));
      const auto episodes = env::read_episodes_file(ab_dataset);
      const auto ks = parse_ints(ab_ks);
      const auto seeds = parse_seeds(ab_seeds);
      const auto rows = patch::knockout_curve(params, vocab, episodes, map, ks, seeds, ab_eps);
      write_file(run / "knockout.csv", patch::knockout_csv(rows));
      write_file(run / "knockout.svg", patch::knockout_svg(rows));
      if (!ab_heads.empty()) {
        const auto heads = parse_heads(ab_heads);
        model::save_checkpoint((run / "ablated.bin").string(), patch::ablate(params, heads, ab_eps));
        vocab.save((run / "ablated.bin.vocab.json").string());
      }
      std::cout << patch::knockout_csv(rows) << run.path.string() << "\n";
    } else if (*sf) {
      const auto run = RunDir::create(*sf, out_root);
      const auto base = model::load_checkpoint(sf_ckpt);
      const auto vocab = load_vocab_for(sf_ckpt, sf_vocab);
      const auto train_eps = env::read_episodes_file(sf_train);
      const auto eval_eps = env::read_episodes_file(sf_eval);
      const auto control = sft::control_task(env::ObjectPool::default_pool(), sf_control_seed, sf_control);
      std::vector<sft::SftMode> modes;
      if (sf_mode == "both") {
        modes = {sft::SftMode::Selective, sft::SftMode::Full};
      } else {
        modes = {sft::parse_sft_mode(sf_mode)};
      }
      if (sf_k == 0) sf_k = sft::matched_k(base.config().n_layers * base.config().n_heads);
      std::vector<sft::SftReport> reports;
      for (auto m : modes) {
        sft::SftConfig cfg = sc;
        cfg.mode = m;
        cfg.K = sf_k;
        std::optional<sft::HeadSelection> sel;
        if (m == sft::SftMode::Selective) {
          if (sf_map.empty()) throw ValidationError("selective mode needs --map");
          sel = sft::select_top_k(patch::parse_causal_map(read_file(sf_map)), sf_k);
        }
        auto res = sft::sft_run(base, vocab, cfg, sel, train_eps, eval_eps, control);
        const std::string name = std::string(sft::to_string(m)) + ".bin";
        model::save_checkpoint((run / name).string(), res.params);
        vocab.save((run / (name + ".vocab.json")).string());
        reports.push_back(res.report);
      }
      write_file(run / "sft_report.csv", sft::sft_csv(reports));
      std::cout << sft::sft_csv(reports) << run.path.string() << "\n";
    } else if (*rp) {
      for (const auto& path : rp_csvs) {
        std::cout << path << "\n" << eval::report_table(eval::parse_report_csv(read_file(path))) << "\n";
      }
    } else if (*be) {
      const auto run = RunDir::create(*be, out_root);
      const auto episodes = env::read_episodes_file(be_dataset);
      const auto mode = be_mode == "think" ? env::PromptMode::Think
                        : be_mode == "direct" ? env::PromptMode::Direct
                                              : throw ValidationError("unknown mode '" + be_mode + "'");
      auto argv_b = split(be_cmd, ' ');
      argv_b.push_back(be_model);
      bridge::BridgeClient client(argv_b);
      const auto info = client.info();
      log("bridge model " + info.model + ": " + std::to_string(info.n_layers) + " layers, d_model " +
          std::to_string(info.d_model));
      const auto preds = bridge::bridge_predictions(client, episodes, mode);
      {
        std::ofstream out(run / "predictions.jsonl", std::ios::binary);
        eval::write_predictions(out, preds);
      }
      const auto report = eval::accuracy(preds, episodes);
      write_file(run / "report.csv", eval::report_csv(report));
      std::cout << eval::report_table(report);
      if (be_probe) {
        const auto dump = bridge::bridge_dump(client, episodes, (run / "scratch").string());
        bridge::save_dump((run / "hidden.vruh").string(), dump);
        fs::remove_all(run / "scratch");
        const auto reps = probe::representations_from_dump(dump, episodes);
        const std::vector<std::uint64_t> seeds = {0, 1, 2};
        const auto scores = probe::layer_sweep(reps, episodes, probe::Target::Direction, seeds);
        write_file(run / "probe.csv", probe::sweep_csv(probe::Target::Direction, scores));
      }
      std::cout << run.path.string() << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
