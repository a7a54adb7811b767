#include "vrulab/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "vrulab/error.hpp"
#include "vrulab/parallel.hpp"
#include "vrulab/prompt.hpp"
#include "vrulab/rng.hpp"
#include "vrulab/svg.hpp"

namespace vrulab::probe {

std::string_view to_string(Target t) {
  switch (t) {
    case Target::Direction: return "direction";
    case Target::Angle: return "angle";
    case Target::Orientation: return "orientation";
  }
  return "?";
}

Target parse_target(std::string_view s) {
  if (s == "direction") return Target::Direction;
  if (s == "angle") return Target::Angle;
  if (s == "orientation") return Target::Orientation;
  throw ValidationError("unknown probe target '" + std::string(s) + "'");
}

int class_count(Target t) {
  switch (t) {
    case Target::Direction: return 2;
    case Target::Angle: return 5;
    case Target::Orientation: return 4;
  }
  return 0;
}

int label_for(Target t, const env::Episode& ep, int step) {
  const auto& s = ep.steps.at(step);
  switch (t) {
    case Target::Direction: return s.direction == env::Direction::Left ? 0 : 1;
    case Target::Angle: return s.angle / 90;
    case Target::Orientation: return ep.orientation_trace.at(step + 1).quarter_turns();
  }
  return 0;
}

Representations capture_representations(const model::Params& params, const model::Vocab& vocab,
                                        std::span<const env::Episode> episodes) {
  const auto& cfg = params.config();
  std::vector<std::vector<std::vector<Vec>>> per_episode(episodes.size());  // [ep][layer][step]
  parallel_for(episodes.size(), [&](std::size_t e) {
    const auto enc = model::encode(vocab, env::render_marked_prompt(episodes[e]));
    if (static_cast<int>(enc.action_newlines.size()) != episodes[e].n_steps()) {
      throw ValidationError("episode " + std::to_string(episodes[e].id) + ": found " +
                            std::to_string(enc.action_newlines.size()) + " action anchors for " +
                            std::to_string(episodes[e].n_steps()) + " steps");
    }
    const auto trace = model::forward(params, enc.ids, true);
    auto& out = per_episode[e];
    out.resize(trace.residual.size());
    for (std::size_t l = 0; l < trace.residual.size(); ++l) {
      for (int pos : enc.action_newlines) out[l].push_back(trace.residual[l].row(pos).transpose());
    }
  });

  Representations reps;
  reps.d_model = cfg.d_model;
  std::size_t rows = 0;
  for (const auto& ep : episodes) rows += static_cast<std::size_t>(ep.n_steps());
  reps.layers.assign(static_cast<std::size_t>(cfg.n_layers) + 1, Mat(rows, cfg.d_model));
  std::size_t r = 0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (int s = 0; s < episodes[e].n_steps(); ++s, ++r) {
      for (std::size_t l = 0; l < reps.layers.size(); ++l) {
        reps.layers[l].row(static_cast<Eigen::Index>(r)) = per_episode[e][l][s].transpose();
      }
      reps.episode_index.push_back(static_cast<int>(e));
      reps.step.push_back(s);
    }
  }
  return reps;
}

Representations representations_from_dump(const bridge::HiddenDump& dump,
                                          std::span<const env::Episode> episodes) {
  std::map<std::tuple<std::uint32_t, std::int64_t, std::uint32_t>, const bridge::DumpRow*> index;
  for (const auto& row : dump.rows) index[{row.layer, row.sample_id, row.step}] = &row;

  Representations reps;
  reps.d_model = static_cast<int>(dump.d_model);
  std::size_t rows = 0;
  for (const auto& ep : episodes) rows += static_cast<std::size_t>(ep.n_steps());
  reps.layers.assign(dump.n_layers, Mat(rows, dump.d_model));
  std::size_t r = 0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (int s = 0; s < episodes[e].n_steps(); ++s, ++r) {
      for (std::uint32_t l = 0; l < dump.n_layers; ++l) {
        auto it = index.find({l, episodes[e].id, static_cast<std::uint32_t>(s)});
        if (it == index.end()) {
          throw ValidationError("dump lacks layer " + std::to_string(l) + " of sample " +
                                std::to_string(episodes[e].id) + " step " + std::to_string(s));
        }
        reps.layers[l].row(static_cast<Eigen::Index>(r)) =
            Eigen::Map<const Vec>(it->second->values.data(), dump.d_model).transpose();
      }
      reps.episode_index.push_back(static_cast<int>(e));
      reps.step.push_back(s);
    }
  }
  return reps;
}

bridge::HiddenDump to_dump(const Representations& reps, std::span<const env::Episode> episodes) {
  bridge::HiddenDump dump;
  dump.n_layers = static_cast<std::uint32_t>(reps.n_layers());
  dump.d_model = static_cast<std::uint32_t>(reps.d_model);
  for (int l = 0; l < reps.n_layers(); ++l) {
    for (std::size_t r = 0; r < reps.step.size(); ++r) {
      bridge::DumpRow row;
      row.layer = static_cast<std::uint32_t>(l);
      row.sample_id = episodes[reps.episode_index[r]].id;
      row.step = static_cast<std::uint32_t>(reps.step[r]);
      const auto v = reps.layers[l].row(static_cast<Eigen::Index>(r));
      row.values.assign(v.data(), v.data() + v.size());
      dump.rows.push_back(std::move(row));
    }
  }
  return dump;
}

ProbeDataset build_probe_dataset(const Representations& reps, std::span<const env::Episode> episodes,
                                 Target target, int layer) {
  if (layer < 0 || layer >= reps.n_layers()) {
    throw ValidationError("layer " + std::to_string(layer) + " outside [0, " +
                          std::to_string(reps.n_layers()) + ")");
  }
  std::size_t expected = 0;
  for (const auto& ep : episodes) expected += static_cast<std::size_t>(ep.n_steps());
  if (expected != reps.step.size()) {
    throw ValidationError("representations hold " + std::to_string(reps.step.size()) + " rows, episodes have " +
                          std::to_string(expected) + " steps");
  }
  ProbeDataset ds;
  ds.layer = layer;
  ds.target = target;
  ds.features = reps.layers[layer];
  ds.episode_index = reps.episode_index;
  ds.labels.reserve(expected);
  for (std::size_t r = 0; r < expected; ++r) {
    ds.labels.push_back(label_for(target, episodes[reps.episode_index[r]], reps.step[r]));
  }
  ds.is_train.assign(expected, 1);
  return ds;
}

void assign_split(ProbeDataset& ds, std::uint64_t seed, double train_frac) {
  int n_eps = 0;
  for (int e : ds.episode_index) n_eps = std::max(n_eps, e + 1);
  std::vector<int> order(n_eps);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = static_cast<int>(std::lround(train_frac * n_eps));
  std::vector<char> train_ep(n_eps, 0);
  for (int i = 0; i < n_train; ++i) train_ep[order[i]] = 1;
  ds.is_train.resize(ds.rows());
  for (std::size_t r = 0; r < ds.rows(); ++r) ds.is_train[r] = train_ep[ds.episode_index[r]];
}

int LinearProbe::predict(const Eigen::Ref<const Vec>& x) const {
  Eigen::Index best;
  (weight * x + bias).maxCoeff(&best);
  return static_cast<int>(best);
}

LinearProbe train_probe(const ProbeDataset& ds, const ProbeHyper& hyper, std::uint64_t seed) {
  std::vector<Eigen::Index> rows;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if (ds.is_train[r]) rows.push_back(static_cast<Eigen::Index>(r));
  }
  if (rows.empty()) throw ValidationError("probe train split is empty");
  const int C = ds.n_classes();
  std::vector<int> counts(C, 0);
  for (auto r : rows) counts[ds.labels[r]]++;
  if (std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) < 2) {
    throw ValidationError("degenerate probe data: training labels contain a single class");
  }

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size()), d = ds.features.cols();
  Mat X(n, d);
  Mat Y = Mat::Zero(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = ds.features.row(rows[i]);
    Y(i, ds.labels[rows[i]]) = 1.0;
  }
  const Vec mean = X.colwise().mean().transpose();
  Vec stdev = ((X.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (stdev[j] < 1e-12) stdev[j] = 1.0;
  }
  X = (X.rowwise() - mean.transpose()).array().rowwise() / stdev.transpose().array();

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  Mat W(C, d);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = normal(rng);
  Vec b = Vec::Zero(C);

  const double inv_n = 1.0 / static_cast<double>(n);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    Mat scores = (X * W.transpose()).rowwise() + b.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - mx).exp();
      scores.row(i) /= scores.row(i).sum();
    }
    const Mat dscores = (scores - Y) * inv_n;
    const Mat gW = dscores.transpose() * X + hyper.l2 * W;
    const Vec gb = dscores.colwise().sum().transpose();
    W -= hyper.lr * gW;
    b -= hyper.lr * gb;
  }

  LinearProbe probe;
  probe.weight = W.array().rowwise() / stdev.transpose().array();
  probe.bias = b - probe.weight * mean;
  return probe;
}

double probe_accuracy(const LinearProbe& probe, const ProbeDataset& ds, bool test) {
  int total = 0, correct = 0;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if (static_cast<bool>(ds.is_train[r]) == test) continue;
    ++total;
    if (probe.predict(ds.features.row(static_cast<Eigen::Index>(r)).transpose()) == ds.labels[r]) ++correct;
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

std::vector<LayerScore> layer_sweep(const Representations& reps, std::span<const env::Episode> episodes,
                                    Target target, std::span<const std::uint64_t> seeds,
                                    const ProbeHyper& hyper) {
  if (seeds.empty()) throw ValidationError("layer sweep needs at least one seed");
  const int L = reps.n_layers();
  std::vector<LayerScore> scores(L);
  std::vector<std::vector<double>> acc(L, std::vector<double>(seeds.size()));
  parallel_for(static_cast<std::size_t>(L) * seeds.size(), [&](std::size_t job) {
    const int l = static_cast<int>(job / seeds.size());
    const std::size_t s = job % seeds.size();
    ProbeDataset ds = build_probe_dataset(reps, episodes, target, l);
    assign_split(ds, seeds[s]);
    acc[l][s] = probe_accuracy(train_probe(ds, hyper, seeds[s]), ds, true);
    if (s == 0) {
      scores[l].n_train = static_cast<int>(std::count(ds.is_train.begin(), ds.is_train.end(), 1));
      scores[l].n_test = static_cast<int>(ds.rows()) - scores[l].n_train;
    }
  });
  for (int l = 0; l < L; ++l) {
    const double k = static_cast<double>(seeds.size());
    const double mean = std::accumulate(acc[l].begin(), acc[l].end(), 0.0) / k;
    double var = 0;
    for (double a : acc[l]) var += (a - mean) * (a - mean);
    scores[l].layer = l;
    scores[l].mean_acc = mean;
    scores[l].std_acc = std::sqrt(var / k);
  }
  return scores;
}

std::string sweep_csv(Target target, std::span<const LayerScore> scores, bool header) {
  std::string out = header ? "layer,target,mean_acc,std_acc,n_train,n_test\n" : "";
  char buf[160];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%d,%d\n", s.layer, std::string(to_string(target)).c_str(),
                  s.mean_acc, s.std_acc, s.n_train, s.n_test);
    out += buf;
  }
  return out;
}

std::string sweep_svg(const std::vector<std::pair<Target, std::vector<LayerScore>>>& sweeps) {
  std::vector<svg::Series> series;
  for (const auto& [target, scores] : sweeps) {
    svg::Series s;
    s.label = std::string(to_string(target));
    for (const auto& sc : scores) {
      s.x.push_back(sc.layer);
      s.y.push_back(sc.mean_acc);
      s.err.push_back(sc.std_acc);
    }
    series.push_back(std::move(s));
  }
  return svg::line_plot("Layer-wise linear probing", "layer", "test accuracy", series);
}

}  // namespace vrulab::probe
