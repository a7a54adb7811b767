#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vrulab/error.hpp"
#include "vrulab/eval.hpp"
#include "vrulab/optimizer.hpp"
#include "vrulab/rotation_env.hpp"
#include "vrulab/transformer.hpp"
#include "vrulab/vocab.hpp"

namespace vrulab::model {

struct Example {
  std::vector<int> ids;
  int answer = 0;
};

// Tokenized marked prompt with the ground-truth answer token.
Example make_example(const Vocab& vocab, const env::Episode& ep);
std::vector<Example> make_examples(const Vocab& vocab, std::span<const env::Episode> eps);

// Greedy (argmax) next token at the final position.
int predict_token(const Params& params, std::span<const int> ids);

// Greedy predictions scored by the eval harness (Direct extraction).
eval::EvalReport evaluate(const Params& params, const Vocab& vocab,
                          std::span<const env::Episode> episodes);

double mean_loss(const Params& params, std::span<const Example> examples);

struct TrainHyper {
  AdamHyper adam{1e-3, 0.9, 0.98, 1e-8, 0.0};
  int epochs = 5;
  int batch_size = 8;
  double warmup_frac = 0.02;
  double min_lr_frac = 0.1;  // cosine decay floor, as a fraction of adam.lr
  double grad_clip = 1.0;    // global norm; <= 0 disables
  std::uint64_t seed = 0;    // minibatch shuffling
};

struct EpochMetrics {
  int epoch = 0;             // 0 is the untrained model
  double train_loss = 0;     // mean minibatch loss over the epoch
  double heldout_loss = 0;
  eval::EvalReport heldout;  // greedy accuracy per bucket
  double seconds = 0;
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainResult {
  Params params;
  std::vector<EpochMetrics> log;
};

// Thrown when a minibatch loss or gradient goes non-finite; carries the
// parameters from before the failing step.
class TrainingDiverged : public RuntimeFailure {
 public:
  TrainingDiverged(const std::string& what, Params last_good)
      : RuntimeFailure(what), last_good_(std::move(last_good)) {}
  const Params& last_good() const { return last_good_; }

 private:
  Params last_good_;
};

// Minibatch optimizer loop shared by pre-training and fine-tuning.
class Trainer {
 public:
  // transform is applied to each batch gradient before the optimizer step;
  // trainable restricts which parameter ranges the optimizer may touch.
  Trainer(Params init, TrainHyper hyper, long total_steps,
          std::vector<ParamRange> trainable = {},
          std::function<void(Params&)> transform = {});

  // Mean-loss gradient step over the batch. Gradients are accumulated in
  // fixed-size chunks and reduced in index order, so results do not depend
  // on the thread count.
  double step(std::span<const Example* const> batch);

  double current_lr() const;
  const Params& params() const { return params_; }
  Params take_params() && { return std::move(params_); }

 private:
  Params params_;
  TrainHyper hyper_;
  long total_steps_;
  std::vector<ParamRange> trainable_;
  std::function<void(Params&)> transform_;
  AdamState state_;
};

// Batch gradient of the mean loss; returns the mean loss.
double batch_gradient(const Params& params, std::span<const Example* const> batch, Params& grads);

// Runs hyper.epochs shuffled passes over `examples`. `on_epoch` is called
// with epoch 0 before training and after every epoch; it fills in
// evaluation fields of the metrics it is given.
TrainResult train_examples(Params init, std::span<const Example> examples, const TrainHyper& hyper,
                           const std::function<void(const Params&, EpochMetrics&)>& on_epoch = {},
                           std::vector<ParamRange> trainable = {},
                           std::function<void(Params&)> transform = {});

// Trains a fresh model on VRU episodes, logging held-out accuracy each epoch.
TrainResult train(const ModelConfig& config, const Vocab& vocab,
                  std::span<const env::Episode> train_set,
                  std::span<const env::Episode> heldout, const TrainHyper& hyper,
                  const std::function<void(const EpochMetrics&)>& progress = {});

}  // namespace vrulab::model
