#include "vrulab/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "vrulab/error.hpp"
#include "vrulab/parallel.hpp"
#include "vrulab/prompt.hpp"
#include "vrulab/rng.hpp"

namespace vrulab::model {

namespace {
constexpr std::size_t kChunk = 4;
}

Example make_example(const Vocab& vocab, const env::Episode& ep) {
  Example ex;
  ex.ids = encode(vocab, env::render_marked_prompt(ep)).ids;
  ex.answer = vocab.id(ep.answer_text());
  return ex;
}

std::vector<Example> make_examples(const Vocab& vocab, std::span<const env::Episode> eps) {
  std::vector<Example> out;
  out.reserve(eps.size());
  for (const auto& ep : eps) out.push_back(make_example(vocab, ep));
  return out;
}

int predict_token(const Params& params, std::span<const int> ids) {
  Eigen::Index best;
  forward(params, ids).logits.maxCoeff(&best);
  return static_cast<int>(best);
}

eval::EvalReport evaluate(const Params& params, const Vocab& vocab,
                          std::span<const env::Episode> episodes) {
  std::vector<eval::PredictionRecord> preds(episodes.size());
  parallel_for(episodes.size(), [&](std::size_t i) {
    const auto ids = encode(vocab, env::render_marked_prompt(episodes[i])).ids;
    preds[i] = eval::make_prediction(episodes[i].id, vocab.token(predict_token(params, ids)),
                                     eval::ExtractMode::Direct);
  });
  return eval::accuracy(preds, episodes);
}

double mean_loss(const Params& params, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::vector<double> losses(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) {
    losses[i] = cross_entropy(forward(params, examples[i].ids).logits, examples[i].answer);
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(examples.size());
}

double batch_gradient(const Params& params, std::span<const Example* const> batch, Params& grads) {
  grads.set_zero();
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<Params> partial(n_chunks);
  std::vector<double> losses(n_chunks, 0.0);
  parallel_for(n_chunks, [&](std::size_t c) {
    partial[c] = Params(params.config());
    const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      losses[c] += accumulate_grad(params, batch[i]->ids, batch[i]->answer, scale, partial[c]);
    }
  });
  auto g = grads.data();
  double loss = 0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const auto pc = partial[c].data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += pc[i];
    loss += losses[c];
  }
  return loss * scale;
}

Trainer::Trainer(Params init, TrainHyper hyper, long total_steps,
                 std::vector<ParamRange> trainable, std::function<void(Params&)> transform)
    : params_(std::move(init)),
      hyper_(hyper),
      total_steps_(std::max(total_steps, 1L)),
      trainable_(std::move(trainable)),
      transform_(std::move(transform)) {}

double Trainer::current_lr() const {
  // Linear warmup, then cosine decay to min_lr_frac * lr.
  const double step = static_cast<double>(state_.step + 1);
  const double warm = std::max(1.0, hyper_.warmup_frac * static_cast<double>(total_steps_));
  const double base = hyper_.adam.lr;
  if (step <= warm) return base * step / warm;
  const double progress = std::min(1.0, (step - warm) / std::max(1.0, static_cast<double>(total_steps_) - warm));
  const double floor = hyper_.min_lr_frac * base;
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double Trainer::step(std::span<const Example* const> batch) {
  Params grads(params_.config());
  const double loss = batch_gradient(params_, batch, grads);
  if (!std::isfinite(loss)) {
    throw TrainingDiverged("training diverged: non-finite loss at step " +
                               std::to_string(state_.step + 1),
                           params_);
  }
  if (transform_) transform_(grads);
  try {
    check_finite(grads);
  } catch (const RuntimeFailure& e) {
    throw TrainingDiverged(e.what(), params_);
  }
  if (hyper_.grad_clip > 0) clip_grad_norm(grads, hyper_.grad_clip);
  AdamHyper h = hyper_.adam;
  h.lr = current_lr();
  adam_step(params_, grads, state_, h, trainable_);
  return loss;
}

TrainResult train_examples(Params init, std::span<const Example> examples, const TrainHyper& hyper,
                           const std::function<void(const Params&, EpochMetrics&)>& on_epoch,
                           std::vector<ParamRange> trainable,
                           std::function<void(Params&)> transform) {
  if (examples.empty()) throw ValidationError("training set is empty");
  if (hyper.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  const std::size_t n = examples.size();
  const std::size_t bs = static_cast<std::size_t>(hyper.batch_size);
  const long steps_per_epoch = static_cast<long>((n + bs - 1) / bs);
  Trainer trainer(std::move(init), hyper, steps_per_epoch * hyper.epochs, std::move(trainable),
                  std::move(transform));

  TrainResult result;
  EpochMetrics m0;
  if (on_epoch) on_epoch(trainer.params(), m0);
  result.log.push_back(m0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(hyper.seed);
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::vector<const Example*> batch;
    for (std::size_t b = 0; b < n; b += bs) {
      batch.clear();
      for (std::size_t i = b; i < std::min(n, b + bs); ++i) batch.push_back(&examples[order[i]]);
      loss_sum += trainer.step(batch);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_epoch) on_epoch(trainer.params(), m);
    result.log.push_back(m);
  }
  result.params = std::move(trainer).take_params();
  return result;
}

TrainResult train(const ModelConfig& config, const Vocab& vocab,
                  std::span<const env::Episode> train_set,
                  std::span<const env::Episode> heldout, const TrainHyper& hyper,
                  const std::function<void(const EpochMetrics&)>& progress) {
  ModelConfig cfg = config;
  cfg.vocab_size = vocab.size();
  const auto examples = make_examples(vocab, train_set);
  const auto heldout_examples = make_examples(vocab, heldout);
  auto on_epoch = [&](const Params& p, EpochMetrics& m) {
    m.heldout_loss = mean_loss(p, heldout_examples);
    m.heldout = evaluate(p, vocab, heldout);
    if (progress) progress(m);
  };
  return train_examples(Params::initialize(cfg), examples, hyper, on_epoch);
}

}  // namespace vrulab::model
