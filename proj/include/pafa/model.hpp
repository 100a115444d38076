#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pafa/dense.hpp"
#include "pafa/errors.hpp"
#include "pafa/rng.hpp"

namespace pafa {

// Pooled-MLP encoder: temporal mean+std pooling over the fbank frames,
// then fully connected layers with ReLU. The last hidden width is the
// embedding dimension shared by both heads.
struct ModelConfig {
  int frames = 498;
  int mels = 128;
  std::vector<int> hidden = {256, 128};
  int n_classes = 4;
  int proj_dim = 128;

  int pooled_dim() const { return 2 * mels; }
  int embed_dim() const { return hidden.back(); }
};

inline constexpr double kPoolVarianceEps = 1e-8;

template <typename Scalar>
struct TensorRef {
  std::string name;
  MatrixX<Scalar>* value = nullptr;  // biases are stored as n x 1
  int rank = 2;
};

template <typename Scalar>
class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p;
    p.cfg_ = cfg;
    p.has_projection_ = true;
    Rng rng(derive_seed(seed, "model-init"));
    int in_dim = cfg.pooled_dim();
    for (int width : cfg.hidden) {
      p.enc_w_.push_back(scaled_uniform(width, in_dim, rng));
      p.enc_b_.push_back(MatrixX<Scalar>::Zero(width, 1));
      in_dim = width;
    }
    const int d = cfg.embed_dim();
    p.cls_w_ = scaled_uniform(cfg.n_classes, d, rng);
    p.cls_b_ = MatrixX<Scalar>::Zero(cfg.n_classes, 1);
    p.proj_w1_ = scaled_uniform(d, d, rng);
    p.proj_b1_ = MatrixX<Scalar>::Zero(d, 1);
    p.proj_w2_ = scaled_uniform(cfg.proj_dim, d, rng);
    p.proj_b2_ = MatrixX<Scalar>::Zero(cfg.proj_dim, 1);
    return p;
  }

  static ModelParams zeros_like(const ModelParams& other) {
    ModelParams p = other;
    p.for_each_tensor([](const std::string&, MatrixX<Scalar>& t, int) { t.setZero(); });
    return p;
  }

  // Inference parameter set: projection tensors removed, classification
  // path untouched.
  ModelParams stripped() const {
    ModelParams p = *this;
    p.has_projection_ = false;
    p.proj_w1_.resize(0, 0);
    p.proj_b1_.resize(0, 0);
    p.proj_w2_.resize(0, 0);
    p.proj_b2_.resize(0, 0);
    return p;
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.cfg_ = cfg_;
    out.has_projection_ = has_projection_;
    for (const auto& w : enc_w_) out.enc_w_.push_back(w.template cast<Other>());
    for (const auto& b : enc_b_) out.enc_b_.push_back(b.template cast<Other>());
    out.cls_w_ = cls_w_.template cast<Other>();
    out.cls_b_ = cls_b_.template cast<Other>();
    if (has_projection_) {
      out.proj_w1_ = proj_w1_.template cast<Other>();
      out.proj_b1_ = proj_b1_.template cast<Other>();
      out.proj_w2_ = proj_w2_.template cast<Other>();
      out.proj_b2_ = proj_b2_.template cast<Other>();
    }
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  bool has_projection() const { return has_projection_; }

  template <typename F>
  void for_each_tensor(F&& f) {
    for (std::size_t i = 0; i < enc_w_.size(); ++i) {
      f("enc." + std::to_string(i) + ".w", enc_w_[i], 2);
      f("enc." + std::to_string(i) + ".b", enc_b_[i], 1);
    }
    f("cls.w", cls_w_, 2);
    f("cls.b", cls_b_, 1);
    if (has_projection_) {
      f("proj.0.w", proj_w1_, 2);
      f("proj.0.b", proj_b1_, 1);
      f("proj.1.w", proj_w2_, 2);
      f("proj.1.b", proj_b2_, 1);
    }
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const std::string& name, MatrixX<Scalar>& t, int rank) {
          f(name, static_cast<const MatrixX<Scalar>&>(t), rank);
        });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const MatrixX<Scalar>& t, int) { n += t.size(); });
    return n;
  }

  // Direct accessors used by forward/backward.
  const std::vector<MatrixX<Scalar>>& enc_w() const { return enc_w_; }
  const std::vector<MatrixX<Scalar>>& enc_b() const { return enc_b_; }
  const MatrixX<Scalar>& cls_w() const { return cls_w_; }
  const MatrixX<Scalar>& cls_b() const { return cls_b_; }
  const MatrixX<Scalar>& proj_w1() const { return proj_w1_; }
  const MatrixX<Scalar>& proj_b1() const { return proj_b1_; }
  const MatrixX<Scalar>& proj_w2() const { return proj_w2_; }
  const MatrixX<Scalar>& proj_b2() const { return proj_b2_; }

  std::vector<MatrixX<Scalar>>& mutable_enc_w() { return enc_w_; }
  std::vector<MatrixX<Scalar>>& mutable_enc_b() { return enc_b_; }
  MatrixX<Scalar>& mutable_cls_w() { return cls_w_; }
  MatrixX<Scalar>& mutable_cls_b() { return cls_b_; }
  MatrixX<Scalar>& mutable_proj_w1() { return proj_w1_; }
  MatrixX<Scalar>& mutable_proj_b1() { return proj_b1_; }
  MatrixX<Scalar>& mutable_proj_w2() { return proj_w2_; }
  MatrixX<Scalar>& mutable_proj_b2() { return proj_b2_; }

  void set_config(const ModelConfig& cfg, bool has_projection) {
    cfg_ = cfg;
    has_projection_ = has_projection;
  }

  template <typename>
  friend class ModelParams;

 private:
  static MatrixX<Scalar> scaled_uniform(int rows, int cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    MatrixX<Scalar> m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
    return m;
  }

  ModelConfig cfg_;
  bool has_projection_ = true;
  std::vector<MatrixX<Scalar>> enc_w_, enc_b_;
  MatrixX<Scalar> cls_w_, cls_b_;
  MatrixX<Scalar> proj_w1_, proj_b1_, proj_w2_, proj_b2_;
};

// Forward activations kept for the backward pass.
template <typename Scalar>
struct ForwardPass {
  MatrixX<Scalar> pooled;                    // B x 2M
  std::vector<MatrixX<Scalar>> pre;          // per layer, B x width (pre-ReLU)
  std::vector<MatrixX<Scalar>> post;         // per layer, B x width
  MatrixX<Scalar> encoder_out;               // B x d
  MatrixX<Scalar> logits;                    // B x C
  MatrixX<Scalar> proj_pre, proj_hidden;     // B x d
  MatrixX<Scalar> proj;                      // B x proj_dim (empty when stripped)
};

template <typename Scalar>
MatrixX<Scalar> relu(const MatrixX<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

// ReLU subgradient with derivative 0 at 0.
template <typename Scalar>
MatrixX<Scalar> relu_mask(const MatrixX<Scalar>& pre) {
  return (pre.array() > Scalar(0)).template cast<Scalar>().matrix();
}

template <typename Scalar>
MatrixX<Scalar> pool_mean_std(const std::vector<const MatrixX<Scalar>*>& batch, int mels) {
  const Index b_size = static_cast<Index>(batch.size());
  MatrixX<Scalar> pooled(b_size, 2 * mels);
  for (Index b = 0; b < b_size; ++b) {
    const MatrixX<Scalar>& x = *batch[static_cast<std::size_t>(b)];
    if (x.cols() != mels)
      throw DataError("feature matrix has " + std::to_string(x.cols()) + " mel bins, expected " +
                      std::to_string(mels));
    if (!x.allFinite()) throw DataError("feature matrix contains NaN/Inf");
    const Scalar t = static_cast<Scalar>(x.rows());
    const RowVectorX<Scalar> mean = x.colwise().sum() / t;
    const RowVectorX<Scalar> var =
        (x.rowwise() - mean).array().square().colwise().sum() / t;
    pooled.row(b).head(mels) = mean;
    pooled.row(b).tail(mels) =
        (var.array() + static_cast<Scalar>(kPoolVarianceEps)).sqrt().matrix();
  }
  return pooled;
}

template <typename Scalar>
ForwardPass<Scalar> forward(const ModelParams<Scalar>& params,
                            const std::vector<const MatrixX<Scalar>*>& batch) {
  if (batch.empty()) throw DataError("empty batch");
  const auto& cfg = params.config();
  ForwardPass<Scalar> fw;
  fw.pooled = pool_mean_std(batch, cfg.mels);

  const MatrixX<Scalar>* h = &fw.pooled;
  for (std::size_t i = 0; i < params.enc_w().size(); ++i) {
    MatrixX<Scalar> pre = (*h) * params.enc_w()[i].transpose();
    pre.rowwise() += params.enc_b()[i].col(0).transpose();
    fw.post.push_back(relu(pre));
    fw.pre.push_back(std::move(pre));
    h = &fw.post.back();
  }
  fw.encoder_out = fw.post.back();

  fw.logits = fw.encoder_out * params.cls_w().transpose();
  fw.logits.rowwise() += params.cls_b().col(0).transpose();

  if (params.has_projection()) {
    fw.proj_pre = fw.encoder_out * params.proj_w1().transpose();
    fw.proj_pre.rowwise() += params.proj_b1().col(0).transpose();
    fw.proj_hidden = relu(fw.proj_pre);
    fw.proj = fw.proj_hidden * params.proj_w2().transpose();
    fw.proj.rowwise() += params.proj_b2().col(0).transpose();
  }
  return fw;
}

template <typename Scalar>
struct CrossEntropyResult {
  Scalar loss = 0;
  MatrixX<Scalar> grad_logits;  // (softmax - onehot) / B
};

// Mean negative log softmax at the true class, stabilized by row-max
// subtraction.
template <typename Scalar>
CrossEntropyResult<Scalar> cross_entropy(const MatrixX<Scalar>& logits,
                                         std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.rows())
    throw DataError("cross_entropy: label count does not match batch");
  const Index b_size = logits.rows();
  CrossEntropyResult<Scalar> out;
  out.grad_logits.resize(logits.rows(), logits.cols());
  Scalar loss = 0;
  for (Index b = 0; b < b_size; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= logits.cols()) throw DataError("label out of range");
    const Scalar m = logits.row(b).maxCoeff();
    const RowVectorX<Scalar> shifted = logits.row(b).array() - m;
    const RowVectorX<Scalar> exps = shifted.array().exp();
    const Scalar sum = exps.sum();
    loss += std::log(sum) - shifted[y];
    out.grad_logits.row(b) = exps / sum;
    out.grad_logits(b, y) -= Scalar(1);
  }
  out.loss = loss / static_cast<Scalar>(b_size);
  out.grad_logits /= static_cast<Scalar>(b_size);
  return out;
}

// Reverse mode through both heads; the classifier and projection gradient
// paths sum at the shared encoder output. grad_proj may be empty (0 x 0)
// to mean an all-zero projection gradient.
template <typename Scalar>
ModelParams<Scalar> backward(const ModelParams<Scalar>& params, const ForwardPass<Scalar>& fw,
                             const MatrixX<Scalar>& grad_logits,
                             const MatrixX<Scalar>& grad_proj) {
  const bool use_proj = grad_proj.size() > 0;
  if (use_proj && !params.has_projection())
    throw DataError("projection gradient supplied for a stripped parameter set");

  ModelParams<Scalar> grads = ModelParams<Scalar>::zeros_like(params);

  grads.mutable_cls_w() = grad_logits.transpose() * fw.encoder_out;
  grads.mutable_cls_b() = grad_logits.colwise().sum().transpose();
  MatrixX<Scalar> grad_encoder = grad_logits * params.cls_w();

  if (use_proj) {
    grads.mutable_proj_w2() = grad_proj.transpose() * fw.proj_hidden;
    grads.mutable_proj_b2() = grad_proj.colwise().sum().transpose();
    MatrixX<Scalar> grad_hidden = grad_proj * params.proj_w2();
    MatrixX<Scalar> grad_pre = grad_hidden.cwiseProduct(relu_mask(fw.proj_pre));
    grads.mutable_proj_w1() = grad_pre.transpose() * fw.encoder_out;
    grads.mutable_proj_b1() = grad_pre.colwise().sum().transpose();
    grad_encoder += grad_pre * params.proj_w1();
  }

  MatrixX<Scalar> delta = grad_encoder.cwiseProduct(relu_mask(fw.pre.back()));
  for (std::size_t i = params.enc_w().size(); i-- > 0;) {
    const MatrixX<Scalar>& input = i == 0 ? fw.pooled : fw.post[i - 1];
    grads.mutable_enc_w()[i] = delta.transpose() * input;
    grads.mutable_enc_b()[i] = delta.colwise().sum().transpose();
    if (i > 0) delta = (delta * params.enc_w()[i]).cwiseProduct(relu_mask(fw.pre[i - 1]));
  }
  return grads;
}

// Checkpoint file: "PAFC", u32 version, u32 tensor count; per tensor a
// u32 name length, the name, u32 rank, u32 dims, then float32 data in
// row-major order. Little-endian throughout.
void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace pafa
