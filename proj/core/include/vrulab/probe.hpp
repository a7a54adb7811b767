#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrulab/hidden_dump.hpp"
#include "vrulab/rotation_env.hpp"
#include "vrulab/transformer.hpp"
#include "vrulab/vocab.hpp"

namespace vrulab::probe {

using model::Mat;
using model::Vec;

enum class Target { Direction, Angle, Orientation };

std::string_view to_string(Target t);
Target parse_target(std::string_view s);
int class_count(Target t);  // 2, 5, 4
// Class index of the label for step `step` (0-based) of an episode:
// direction (left 0, right 1), angle (index into 0/90/180/270/360), or the
// orientation reached after the step (degrees / 90).
int label_for(Target t, const env::Episode& ep, int step);

// Representations at the newline ending each action line, one row per
// (episode, step) in dataset order, for every captured layer. Layer 0 is the
// embedding sum, layer l the residual stream after block l.
struct Representations {
  int d_model = 0;
  std::vector<Mat> layers;
  std::vector<int> episode_index;  // row -> position in the episode list
  std::vector<int> step;           // row -> step within its episode

  int n_layers() const { return static_cast<int>(layers.size()); }
};

Representations capture_representations(const model::Params& params, const model::Vocab& vocab,
                                        std::span<const env::Episode> episodes);

// Rows of a hidden-state dump matched to episodes by (sample id, step).
// Every step of every episode must be present at every layer.
Representations representations_from_dump(const bridge::HiddenDump& dump,
                                          std::span<const env::Episode> episodes);

struct ProbeDataset {
  int layer = 0;
  Target target = Target::Direction;
  Mat features;                    // one row per action step
  std::vector<int> labels;
  std::vector<int> episode_index;  // row -> episode
  std::vector<char> is_train;      // filled by assign_split

  int n_classes() const { return class_count(target); }
  std::size_t rows() const { return labels.size(); }
};

ProbeDataset build_probe_dataset(const Representations& reps, std::span<const env::Episode> episodes,
                                 Target target, int layer);

// Seeded episode-level split: a shuffled episode order, the first
// round(train_frac * E) episodes go to train.
void assign_split(ProbeDataset& ds, std::uint64_t seed, double train_frac = 0.8);

struct ProbeHyper {
  double lr = 0.1;
  int epochs = 500;
  double l2 = 1e-4;
};

// Affine classifier on raw representations.
struct LinearProbe {
  Mat weight;  // classes x d
  Vec bias;    // classes
  int predict(const Eigen::Ref<const Vec>& x) const;
};

// Multinomial logistic regression by full-batch gradient descent on
// standardized train features (statistics folded back into the returned
// weights). Throws ValidationError if the train split is empty or has a
// single class.
LinearProbe train_probe(const ProbeDataset& ds, const ProbeHyper& hyper, std::uint64_t seed);

// Accuracy over the test rows (or train rows when `test` is false).
double probe_accuracy(const LinearProbe& probe, const ProbeDataset& ds, bool test = true);

struct LayerScore {
  int layer = 0;
  double mean_acc = 0;
  double std_acc = 0;  // population std over seeds
  int n_train = 0;
  int n_test = 0;
};

// For each layer and seed: split by seed, train, score on test.
std::vector<LayerScore> layer_sweep(const Representations& reps, std::span<const env::Episode> episodes,
                                    Target target, std::span<const std::uint64_t> seeds,
                                    const ProbeHyper& hyper = {});

// "layer,target,mean_acc,std_acc,n_train,n_test"
std::string sweep_csv(Target target, std::span<const LayerScore> scores, bool header = true);
std::string sweep_svg(const std::vector<std::pair<Target, std::vector<LayerScore>>>& sweeps);

// Toy-model representations exported in dump format (all layers).
bridge::HiddenDump to_dump(const Representations& reps, std::span<const env::Episode> episodes);

}  // namespace vrulab::probe
