#include "vrulab/optimizer.hpp"

#include <cmath>

#include "vrulab/error.hpp"

namespace vrulab::model {

namespace {

template <typename Fn>
void for_ranges(std::size_t total, std::span<const ParamRange> trainable, Fn&& fn) {
  if (trainable.empty()) {
    for (std::size_t i = 0; i < total; ++i) fn(i);
    return;
  }
  for (const auto& r : trainable) {
    for (std::size_t i = r.offset; i < r.offset + r.size; ++i) fn(i);
  }
}

}  // namespace

void check_finite(const Params& grads) {
  const auto g = grads.data();
  for (const auto& t : grads.layout().tensors()) {
    for (std::size_t i = t.offset; i < t.offset + t.rows * t.cols; ++i) {
      if (!std::isfinite(g[i])) {
        throw RuntimeFailure("non-finite gradient in '" + t.name + "' at element " +
                             std::to_string(i - t.offset));
      }
    }
  }
}

void adam_step(Params& params, const Params& grads, AdamState& state, const AdamHyper& hyper,
               std::span<const ParamRange> trainable) {
  check_finite(grads);
  auto p = params.data();
  const auto g = grads.data();
  if (state.m.size() != p.size()) {
    state.m.assign(p.size(), 0.0);
    state.v.assign(p.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for_ranges(p.size(), trainable, [&](std::size_t i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p[i] -= hyper.lr * (mhat / (std::sqrt(vhat) + hyper.eps) + hyper.weight_decay * p[i]);
  });
}

void sgd_step(Params& params, const Params& grads, double lr, std::span<const ParamRange> trainable) {
  check_finite(grads);
  auto p = params.data();
  const auto g = grads.data();
  for_ranges(p.size(), trainable, [&](std::size_t i) { p[i] -= lr * g[i]; });
}

double clip_grad_norm(Params& grads, double max_norm) {
  double sq = 0;
  for (double v : grads.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (double& v : grads.data()) v *= s;
  }
  return norm;
}

}  // namespace vrulab::model
