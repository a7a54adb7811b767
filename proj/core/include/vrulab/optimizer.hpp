#pragma once

#include <span>
#include <vector>

#include "vrulab/transformer.hpp"

namespace vrulab::model {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
};

// One Adam step with decoupled weight decay. When `trainable` is non-empty
// only those ranges are touched; everything else stays bit-identical.
// A non-finite gradient throws RuntimeFailure naming the tensor.
void adam_step(Params& params, const Params& grads, AdamState& state, const AdamHyper& hyper,
               std::span<const ParamRange> trainable = {});

// Plain gradient descent, same masking contract as adam_step.
void sgd_step(Params& params, const Params& grads, double lr,
              std::span<const ParamRange> trainable = {});

// Throws RuntimeFailure if any gradient is NaN or infinite.
void check_finite(const Params& grads);

// Scales grads in place so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(Params& grads, double max_norm);

}  // namespace vrulab::model
