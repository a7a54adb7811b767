#include "vrulab/transformer.hpp"

#include <cmath>
#include <random>

#include "vrulab/error.hpp"
#include "vrulab/rng.hpp"

namespace vrulab::model {

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || max_len < 1) {
    throw ValidationError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ValidationError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
  }
  if (vocab_size < 2) throw ValidationError("vocab_size must be at least 2");
}

Layout::Layout(const ModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model, ff = cfg.d_ff;
  auto add = [&](std::string name, ParamFamily fam, std::size_t rows, std::size_t cols) {
    tensors_.push_back(TensorInfo{std::move(name), fam, total_, rows, cols});
    total_ += rows * cols;
  };
  add("tok_emb", ParamFamily::TokenEmbedding, cfg.vocab_size, d);
  add("pos_emb", ParamFamily::PositionEmbedding, cfg.max_len, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln1.g", ParamFamily::Norm, 1, d);
    add(p + "ln1.b", ParamFamily::Norm, 1, d);
    add(p + "wq", ParamFamily::Attention, d, d);
    add(p + "wk", ParamFamily::Attention, d, d);
    add(p + "wv", ParamFamily::Attention, d, d);
    add(p + "wo", ParamFamily::Attention, d, d);
    add(p + "ln2.g", ParamFamily::Norm, 1, d);
    add(p + "ln2.b", ParamFamily::Norm, 1, d);
    add(p + "w1", ParamFamily::Mlp, d, ff);
    add(p + "b1", ParamFamily::Mlp, 1, ff);
    add(p + "w2", ParamFamily::Mlp, ff, d);
    add(p + "b2", ParamFamily::Mlp, 1, d);
  }
  add("lnf.g", ParamFamily::Norm, 1, d);
  add("lnf.b", ParamFamily::Norm, 1, d);
}

ParamRange Layout::head_block(int layer, int head, HeadMatrix m) const {
  if (layer < 0 || layer >= cfg_.n_layers || head < 0 || head >= cfg_.n_heads) {
    throw ValidationError("head " + std::to_string(layer) + "." + std::to_string(head) +
                          " outside the model");
  }
  static constexpr int which[] = {Wq, Wk, Wv, Wo};
  const auto& t = layer_tensor(layer, which[static_cast<int>(m)]);
  const std::size_t block = static_cast<std::size_t>(cfg_.head_dim()) * cfg_.d_model;
  return ParamRange{t.offset + static_cast<std::size_t>(head) * block, block};
}

Params::Params(const ModelConfig& cfg) : cfg_(cfg), layout_(cfg), data_(layout_.total(), 0.0) {}

Params Params::initialize(const ModelConfig& cfg) {
  Params p(cfg);
  Rng rng(cfg.init_seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  const double out_scale = 1.0 / std::sqrt(2.0 * cfg.n_layers);
  for (const auto& t : p.layout().tensors()) {
    auto m = p.tensor(t);
    const bool is_gain = t.name.ends_with(".g");
    const bool is_bias = t.name.ends_with(".b") || t.name.ends_with("b1") || t.name.ends_with("b2");
    if (is_gain) {
      m.setOnes();
    } else if (is_bias) {
      m.setZero();
    } else {
      const double scale = (t.name.ends_with("wo") || t.name.ends_with("w2")) ? out_scale : 1.0;
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * scale;
    }
  }
  return p;
}

void Params::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

struct NormCache {
  Mat xhat;
  Vec rstd;
};

// Row-wise layer norm: y = (x - mean) / sqrt(var + eps) * g + b.
Mat layer_norm(const Mat& x, ConstMatMap g, ConstMatMap b, NormCache* cache) {
  const Eigen::Index d = x.cols();
  Mat xhat(x.rows(), d);
  Vec rstd(x.rows());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const double mean = x.row(t).mean();
    const double var = (x.row(t).array() - mean).square().sum() / static_cast<double>(d);
    rstd[t] = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(t) = (x.row(t).array() - mean) * rstd[t];
  }
  Mat y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

// Returns dx and accumulates dg, db.
Mat layer_norm_backward(const Mat& dy, const NormCache& c, ConstMatMap g, MatMap dg, MatMap db) {
  dg.row(0) += (c.xhat.array() * dy.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * g.row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index t = 0; t < dy.rows(); ++t) {
    const double m1 = dxhat.row(t).mean();
    const double m2 = (dxhat.row(t).array() * c.xhat.row(t).array()).mean();
    dx.row(t) = c.rstd[t] * (dxhat.row(t).array() - m1 - c.xhat.row(t).array() * m2);
  }
  return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u))); }

double gelu_grad(double u) {
  const double th = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

struct LayerCache {
  Mat x_in;
  NormCache ln1;
  Mat a, q, k, v;
  std::vector<Mat> probs;
  Mat z;
  Mat x_mid;
  NormCache ln2;
  Mat m, u, g;
};

struct Cache {
  std::vector<LayerCache> layers;
  Mat x_out;
  NormCache lnf;
  Vec xf;
};

void check_ids(const Params& params, std::span<const int> ids) {
  const auto& cfg = params.config();
  if (ids.empty()) throw ValidationError("empty input sequence");
  if (static_cast<int>(ids.size()) > cfg.max_len) {
    throw ValidationError("input of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                          std::to_string(cfg.max_len));
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size) throw ValidationError("token id " + std::to_string(id) + " out of range");
  }
}

// Causal softmax attention of one head; returns the [T x T] probabilities.
Mat head_attention(const Eigen::Ref<const Mat>& qh, const Eigen::Ref<const Mat>& kh, double scale) {
  const Eigen::Index T = qh.rows();
  Mat s = (qh * kh.transpose()) * scale;
  for (Eigen::Index i = 0; i < T; ++i) {
    double mx = s(i, 0);
    for (Eigen::Index j = 1; j <= i; ++j) mx = std::max(mx, s(i, j));
    double sum = 0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      s(i, j) = std::exp(s(i, j) - mx);
      sum += s(i, j);
    }
    for (Eigen::Index j = 0; j <= i; ++j) s(i, j) /= sum;
    for (Eigen::Index j = i + 1; j < T; ++j) s(i, j) = 0.0;
  }
  return s;
}

Mat embed(const Params& params, std::span<const int> ids) {
  const auto& L = params.layout();
  auto tok = params.tensor(L.tok_emb());
  auto pos = params.tensor(L.pos_emb());
  Mat x(static_cast<Eigen::Index>(ids.size()), params.config().d_model);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    x.row(static_cast<Eigen::Index>(t)) = tok.row(ids[t]) + pos.row(static_cast<Eigen::Index>(t));
  }
  return x;
}

Vec forward_impl(const Params& params, std::span<const int> ids, const Intervention* iv,
                 Cache* cache, ForwardTrace* trace) {
  check_ids(params, ids);
  const auto& cfg = params.config();
  const auto& L = params.layout();
  const int H = cfg.n_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index T = static_cast<Eigen::Index>(ids.size());

  Mat x = embed(params, ids);
  if (trace) trace->residual.push_back(x);
  if (cache) cache->layers.resize(cfg.n_layers);

  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x_in = x;

    Mat z;
    std::vector<Mat> probs;
    const bool frozen = iv && iv->freeze_from >= 0 && l >= iv->freeze_from;
    if (iv && iv->zero_attention) {
      z = Mat::Zero(T, cfg.d_model);
    } else if (frozen) {
      z = (*iv->frozen_z)[l];
    } else {
      Mat a = layer_norm(x, params.layer(l, Layout::Ln1G), params.layer(l, Layout::Ln1B),
                         lc ? &lc->ln1 : nullptr);
      Mat q = a * params.layer(l, Layout::Wq).transpose();
      Mat k = a * params.layer(l, Layout::Wk).transpose();
      Mat v = a * params.layer(l, Layout::Wv).transpose();
      z.resize(T, cfg.d_model);
      probs.reserve(H);
      for (int h = 0; h < H; ++h) {
        Mat p = head_attention(q.middleCols(h * dh, dh), k.middleCols(h * dh, dh), scale);
        z.middleCols(h * dh, dh) = p * v.middleCols(h * dh, dh);
        probs.push_back(std::move(p));
      }
      if (lc) {
        lc->a = std::move(a);
        lc->q = std::move(q);
        lc->k = std::move(k);
        lc->v = std::move(v);
      }
    }
    if (iv) {
      for (const auto& patch : iv->patches) {
        if (patch.head.layer != l) continue;
        if (patch.head.head < 0 || patch.head.head >= H) {
          throw ValidationError("patched head index out of range");
        }
        z.middleCols(patch.head.head * dh, dh) = patch.source->middleCols(patch.head.head * dh, dh);
      }
    }

    Mat x_mid = x;
    if (!(iv && iv->zero_attention)) x_mid.noalias() += z * params.layer(l, Layout::Wo);

    Mat m = layer_norm(x_mid, params.layer(l, Layout::Ln2G), params.layer(l, Layout::Ln2B),
                       lc ? &lc->ln2 : nullptr);
    Mat u = (m * params.layer(l, Layout::W1)).rowwise() + params.layer(l, Layout::B1).row(0);
    Mat g = u.unaryExpr([](double val) { return gelu(val); });
    x = x_mid;
    x.noalias() += g * params.layer(l, Layout::W2);
    x.rowwise() += params.layer(l, Layout::B2).row(0);

    if (trace) {
      trace->residual_mid.push_back(x_mid);
      trace->residual.push_back(x);
      trace->attention.push_back(probs);
      trace->head_outputs.push_back(z);
    }
    if (lc) {
      lc->probs = std::move(probs);
      lc->z = std::move(z);
      lc->x_mid = std::move(x_mid);
      lc->m = std::move(m);
      lc->u = std::move(u);
      lc->g = std::move(g);
    }
  }

  Mat last = x.row(T - 1);
  NormCache nc;
  Mat xf = layer_norm(last, params.tensor(L.lnf_g()), params.tensor(L.lnf_b()), &nc);
  Vec logits = params.tensor(L.tok_emb()) * xf.row(0).transpose();
  if (cache) {
    cache->x_out = std::move(x);
    cache->lnf = std::move(nc);
    cache->xf = xf.row(0).transpose();
  }
  return logits;
}

}  // namespace

ForwardTrace forward(const Params& params, std::span<const int> ids, bool capture,
                     const Intervention* intervention) {
  ForwardTrace trace;
  trace.logits = forward_impl(params, ids, intervention, nullptr, capture ? &trace : nullptr);
  return trace;
}

Vec forward_headwise(const Params& params, std::span<const int> ids) {
  check_ids(params, ids);
  const auto& cfg = params.config();
  const auto& L = params.layout();
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index T = static_cast<Eigen::Index>(ids.size());
  const Eigen::Index d = cfg.d_model;

  Mat x = embed(params, ids);
  for (int l = 0; l < cfg.n_layers; ++l) {
    Mat a = layer_norm(x, params.layer(l, Layout::Ln1G), params.layer(l, Layout::Ln1B), nullptr);
    Mat attn_out = Mat::Zero(T, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      // W_Q[l,h] etc. are d x d/H blocks; wo's block is d/H x d.
      auto block = [&](HeadMatrix which) {
        const auto r = L.head_block(l, h, which);
        ConstMatMap rows(params.data().data() + r.offset, dh, d);
        return Mat(rows);
      };
      const Mat wq = block(HeadMatrix::Q).transpose();
      const Mat wk = block(HeadMatrix::K).transpose();
      const Mat wv = block(HeadMatrix::V).transpose();
      const Mat wo = block(HeadMatrix::O);
      Mat p = head_attention(a * wq, a * wk, scale);
      attn_out += (p * (a * wv)) * wo;
    }
    Mat x_mid = x + attn_out;
    Mat m = layer_norm(x_mid, params.layer(l, Layout::Ln2G), params.layer(l, Layout::Ln2B), nullptr);
    Mat u = (m * params.layer(l, Layout::W1)).rowwise() + params.layer(l, Layout::B1).row(0);
    Mat g = u.unaryExpr([](double val) { return gelu(val); });
    x = x_mid + g * params.layer(l, Layout::W2);
    x.rowwise() += params.layer(l, Layout::B2).row(0);
  }
  Mat last = x.row(T - 1);
  Mat xf = layer_norm(last, params.tensor(L.lnf_g()), params.tensor(L.lnf_b()), nullptr);
  return params.tensor(L.tok_emb()) * xf.row(0).transpose();
}

double cross_entropy(const Vec& logits, int answer) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits[answer];
}

double accumulate_grad(const Params& params, std::span<const int> ids, int answer,
                       double scale, Params& grads, Vec* logits_out) {
  const auto& cfg = params.config();
  if (answer < 0 || answer >= cfg.vocab_size) throw ValidationError("answer token out of range");
  const auto& L = params.layout();
  Cache cache;
  const Vec logits = forward_impl(params, ids, nullptr, &cache, nullptr);
  const double loss = cross_entropy(logits, answer);
  if (logits_out) *logits_out = logits;

  const int H = cfg.n_heads, dh = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index T = static_cast<Eigen::Index>(ids.size());

  Vec dlogits = (logits.array() - logits.maxCoeff()).exp();
  dlogits /= dlogits.sum();
  dlogits[answer] -= 1.0;
  dlogits *= scale;

  auto tok = params.tensor(L.tok_emb());
  auto dtok = grads.tensor(L.tok_emb());
  dtok.noalias() += dlogits * cache.xf.transpose();
  Mat dxf = (tok.transpose() * dlogits).transpose();
  Mat dlast = layer_norm_backward(dxf, cache.lnf, params.tensor(L.lnf_g()),
                                  grads.tensor(L.lnf_g()), grads.tensor(L.lnf_b()));
  Mat dx = Mat::Zero(T, cfg.d_model);
  dx.row(T - 1) = dlast.row(0);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerCache& c = cache.layers[l];
    // MLP
    const Mat& df = dx;
    grads.layer(l, Layout::W2).noalias() += c.g.transpose() * df;
    grads.layer(l, Layout::B2).row(0) += df.colwise().sum();
    Mat dg = df * params.layer(l, Layout::W2).transpose();
    Mat du = dg.array() * c.u.unaryExpr([](double val) { return gelu_grad(val); }).array();
    grads.layer(l, Layout::W1).noalias() += c.m.transpose() * du;
    grads.layer(l, Layout::B1).row(0) += du.colwise().sum();
    Mat dm = du * params.layer(l, Layout::W1).transpose();
    Mat dx_mid = dx + layer_norm_backward(dm, c.ln2, params.layer(l, Layout::Ln2G),
                                          grads.layer(l, Layout::Ln2G), grads.layer(l, Layout::Ln2B));
    // Attention
    grads.layer(l, Layout::Wo).noalias() += c.z.transpose() * dx_mid;
    Mat dz = dx_mid * params.layer(l, Layout::Wo).transpose();
    Mat dq(T, cfg.d_model), dk(T, cfg.d_model), dv(T, cfg.d_model);
    for (int h = 0; h < H; ++h) {
      const Mat& p = c.probs[h];
      auto dzh = dz.middleCols(h * dh, dh);
      Mat dp = dzh * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = p.transpose() * dzh;
      Vec rowdot = (dp.array() * p.array()).rowwise().sum();
      Mat ds = p.array() * (dp.colwise() - rowdot).array();
      dq.middleCols(h * dh, dh).noalias() = (ds * c.k.middleCols(h * dh, dh)) * att_scale;
      dk.middleCols(h * dh, dh).noalias() = (ds.transpose() * c.q.middleCols(h * dh, dh)) * att_scale;
    }
    grads.layer(l, Layout::Wq).noalias() += dq.transpose() * c.a;
    grads.layer(l, Layout::Wk).noalias() += dk.transpose() * c.a;
    grads.layer(l, Layout::Wv).noalias() += dv.transpose() * c.a;
    Mat da = dq * params.layer(l, Layout::Wq);
    da.noalias() += dk * params.layer(l, Layout::Wk);
    da.noalias() += dv * params.layer(l, Layout::Wv);
    dx = dx_mid + layer_norm_backward(da, c.ln1, params.layer(l, Layout::Ln1G),
                                      grads.layer(l, Layout::Ln1G), grads.layer(l, Layout::Ln1B));
  }

  auto dpos = grads.tensor(L.pos_emb());
  for (Eigen::Index t = 0; t < T; ++t) {
    dtok.row(ids[t]) += dx.row(t);
    dpos.row(t) += dx.row(t);
  }
  return loss;
}

LossAndGrad loss_and_grad(const Params& params, std::span<const int> ids, int answer) {
  LossAndGrad out;
  out.grads = Params(params.config());
  out.loss = accumulate_grad(params, ids, answer, 1.0, out.grads, &out.logits);
  return out;
}

}  // namespace vrulab::model
