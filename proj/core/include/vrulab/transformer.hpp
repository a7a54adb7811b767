#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace vrulab::model {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct ModelConfig {
  int n_layers = 6;
  int n_heads = 8;
  int d_model = 128;
  int d_ff = 512;
  int max_len = 128;
  int vocab_size = 0;
  std::uint64_t init_seed = 0;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class HeadMatrix { Q, K, V, O };

// A contiguous slice of the flat parameter vector.
struct ParamRange {
  std::size_t offset = 0;
  std::size_t size = 0;
};

enum class ParamFamily { TokenEmbedding, PositionEmbedding, Attention, Mlp, Norm };

struct TensorInfo {
  std::string name;
  ParamFamily family;
  std::size_t offset, rows, cols;
};

// Flat parameter layout, in storage (and checkpoint) order:
//   tok_emb [V x d], pos_emb [max_len x d],
//   per layer: ln1.g [d], ln1.b [d], wq [d x d], wk [d x d], wv [d x d],
//              wo [d x d], ln2.g [d], ln2.b [d], w1 [d x d_ff], b1 [d_ff],
//              w2 [d_ff x d], b2 [d],
//   lnf.g [d], lnf.b [d].
// All matrices are row-major. wq/wk/wv are stored output-major (row r holds
// the weights producing output feature r), so head j's block occupies rows
// [j*d/H, (j+1)*d/H) and is contiguous; the d x d/H block W_Q[i,j] is its
// transpose. wo is stored input-major, so head j's d/H x d block is likewise
// the contiguous rows [j*d/H, (j+1)*d/H).
class Layout {
 public:
  Layout() = default;
  explicit Layout(const ModelConfig& cfg);

  std::size_t total() const { return total_; }
  const ModelConfig& config() const { return cfg_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }

  const TensorInfo& tok_emb() const { return tensors_[0]; }
  const TensorInfo& pos_emb() const { return tensors_[1]; }
  // Per-layer tensor by index into the per-layer order above.
  const TensorInfo& layer_tensor(int layer, int which) const {
    return tensors_[2 + static_cast<std::size_t>(layer) * kPerLayer + which];
  }
  const TensorInfo& lnf_g() const { return tensors_[tensors_.size() - 2]; }
  const TensorInfo& lnf_b() const { return tensors_[tensors_.size() - 1]; }

  ParamRange head_block(int layer, int head, HeadMatrix m) const;

  static constexpr int kPerLayer = 12;
  enum LayerTensor { Ln1G, Ln1B, Wq, Wk, Wv, Wo, Ln2G, Ln2B, W1, B1, W2, B2 };

 private:
  ModelConfig cfg_;
  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

class Params {
 public:
  Params() = default;
  // Zero-filled.
  explicit Params(const ModelConfig& cfg);

  // Weights ~ N(0, 0.02), output projections scaled by 1/sqrt(2L), norm gains
  // one, biases zero. Seeded by cfg.init_seed.
  static Params initialize(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const Layout& layout() const { return layout_; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  MatMap tensor(const TensorInfo& t) {
    return MatMap(data_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  }
  ConstMatMap tensor(const TensorInfo& t) const {
    return ConstMatMap(data_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  }
  MatMap layer(int l, int which) { return tensor(layout_.layer_tensor(l, which)); }
  ConstMatMap layer(int l, int which) const { return tensor(layout_.layer_tensor(l, which)); }

  std::span<double> range(ParamRange r) { return std::span<double>(data_).subspan(r.offset, r.size); }
  std::span<const double> range(ParamRange r) const {
    return std::span<const double>(data_).subspan(r.offset, r.size);
  }

  void set_zero();
  friend bool operator==(const Params& a, const Params& b) {
    return a.cfg_ == b.cfg_ && a.data_ == b.data_;
  }

 private:
  ModelConfig cfg_;
  Layout layout_;
  // Aligned so vectorized reductions peel the same way on every allocation.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

struct HeadId {
  int layer = 0;
  int head = 0;
  friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

// Replaces head output slices (the d/H-wide value-weighted outputs, before
// wo) during a forward pass.
struct HeadPatch {
  HeadId head;
  const Mat* source = nullptr;  // [T x d] head outputs of another run
};

struct Intervention {
  std::vector<HeadPatch> patches;
  // Layers >= freeze_from use frozen_z for every unpatched head instead of
  // computing attention.
  int freeze_from = -1;
  const std::vector<Mat>* frozen_z = nullptr;
  // Skip every attention sublayer (its output is taken as zero).
  bool zero_attention = false;
};

struct ForwardTrace {
  // residual[0] is the embedding sum; residual[l] is the stream after block l.
  std::vector<Mat> residual;
  // Stream after each block's attention sublayer, before its MLP.
  std::vector<Mat> residual_mid;
  // attention[l][h] is the [T x T] attention matrix of head h at layer l.
  std::vector<std::vector<Mat>> attention;
  // head_outputs[l] is [T x d]; columns [h*d/H, (h+1)*d/H) belong to head h.
  std::vector<Mat> head_outputs;
  Vec logits;  // at the final position
};

// Causal pre-norm decoder. With capture off only logits are filled.
// Throws ValidationError if ids is empty, too long or holds bad ids.
ForwardTrace forward(const Params& params, std::span<const int> ids, bool capture = false,
                     const Intervention* intervention = nullptr);

// Reference forward that applies each head's blocks separately and sums the
// per-head wo contributions. Numerically equal to forward() up to rounding.
Vec forward_headwise(const Params& params, std::span<const int> ids);

struct LossAndGrad {
  double loss = 0;
  Params grads;
  Vec logits;
};

// Cross-entropy of the answer token at the final position, with gradients
// for every parameter.
LossAndGrad loss_and_grad(const Params& params, std::span<const int> ids, int answer);

// Accumulating variant: adds d(loss)/d(params) * scale into grads and
// returns the loss.
double accumulate_grad(const Params& params, std::span<const int> ids, int answer,
                       double scale, Params& grads, Vec* logits_out = nullptr);

double cross_entropy(const Vec& logits, int answer);

}  // namespace vrulab::model
