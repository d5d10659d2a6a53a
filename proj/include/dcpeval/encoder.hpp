// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dcpeval/error.hpp"
#include "dcpeval/rng.hpp"

namespace dcpeval {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

enum class HeadKind { classification, regression, ruber };

inline std::string_view to_string(HeadKind h) {
  switch (h) {
    case HeadKind::classification: return "classification";
    case HeadKind::regression: return "regression";
    case HeadKind::ruber: return "ruber";
  }
  return "classification";
}

inline HeadKind head_from_string(std::string_view s) {
  if (s == "classification") return HeadKind::classification;
  if (s == "regression") return HeadKind::regression;
  if (s == "ruber") return HeadKind::ruber;
  throw ConfigError("unknown head kind '" + std::string(s) + "'");
}

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_len = 256;
  double dropout = 0.1;
  HeadKind head = HeadKind::classification;
  std::uint64_t seed = 0;

  bool operator==(const EncoderConfig&) const = default;

  void validate() const {
    if (vocab_size < 1) throw ConfigError("encoder: vocab_size must be positive");
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
      throw ConfigError("encoder: d_model must be divisible by n_heads");
    }
    if (n_layers < 1) throw ConfigError("encoder: n_layers must be >= 1");
    if (d_ff < 1) throw ConfigError("encoder: d_ff must be positive");
    if (max_len < 16) throw ConfigError("encoder: max_len must be >= 16");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must lie in [0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size}, {"d_model", d_model}, {"n_layers", n_layers}, {"n_heads", n_heads},
            {"d_ff", d_ff},             {"max_len", max_len}, {"dropout", dropout},   {"head", std::string(to_string(head))},
            {"seed", seed}};
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.head = head_from_string(j.at("head").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }
};

template <typename T>
struct Tensor {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool trainable = true;
  bool decay = false;  // receives decoupled weight decay
};

/// One training/inference input. `ids_b` is the second segment for the
/// bi-encoder head and empty otherwise. Ids may contain PAD anywhere.
struct Example {
  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> ids_b;
  float target = 0.0f;
};

namespace nn {

inline constexpr std::int32_t kPad = 0;

template <typename T>
T gelu(T x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  constexpr T c = T(0.7978845608028654);
  const T u = c * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(u);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * T(0.044715) * x * x);
}

template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, LayerNormCache<T>& cache) {
  constexpr T eps = T(1e-5);
  const auto n = x.cols();
  cache.xhat.resize(x.rows(), n);
  cache.rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T rstd = T(1) / std::sqrt(var + eps);
    cache.rstd(r) = rstd;
    cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
  }
  Matrix<T> y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gain, const LayerNormCache<T>& cache,
                              Matrix<T>& dgain, Matrix<T>& dbias) {
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  Matrix<T> dxhat = dy.array().rowwise() * gain.row(0).array();
  Matrix<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T m1 = dxhat.row(r).mean();
    const T m2 = (dxhat.row(r).array() * cache.xhat.row(r).array()).mean();
    dx.row(r) = cache.rstd(r) * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
  }
  return dx;
}

}  // namespace nn

/// Pre-LayerNorm transformer encoder with learned absolute positions, pooled
/// at the CLS position (first non-PAD token), and one of three heads:
/// a sigmoid classifier, a scalar regressor with a fixed output affine map,
/// or a bi-encoder scorer over [c; r; c⊙r; |c−r|].
template <typename T>
class Model {
 public:
  explicit Model(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    const auto ff = static_cast<Eigen::Index>(cfg_.d_ff);
    tok_emb_ = add("embeddings.token", static_cast<Eigen::Index>(cfg_.vocab_size), d, true);
    pos_emb_ = add("embeddings.position", static_cast<Eigen::Index>(cfg_.max_len), d, true);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      LayerIdx li;
      li.ln1_g = add(p + "ln1.gain", 1, d);
      li.ln1_b = add(p + "ln1.bias", 1, d);
      li.wq = add(p + "attn.wq", d, d, true);
      li.bq = add(p + "attn.bq", 1, d);
      li.wk = add(p + "attn.wk", d, d, true);
      li.wv = add(p + "attn.wv", d, d, true);
      li.bv = add(p + "attn.bv", 1, d);
      li.wo = add(p + "attn.wo", d, d, true);
      li.bo = add(p + "attn.bo", 1, d);
      li.ln2_g = add(p + "ln2.gain", 1, d);
      li.ln2_b = add(p + "ln2.bias", 1, d);
      li.w1 = add(p + "ffn.w1", d, ff, true);
      li.b1 = add(p + "ffn.b1", 1, ff);
      li.w2 = add(p + "ffn.w2", ff, d, true);
      li.b2 = add(p + "ffn.b2", 1, d);
      layers_.push_back(li);
    }
    lnf_g_ = add("final_ln.gain", 1, d);
    lnf_b_ = add("final_ln.bias", 1, d);
    if (cfg_.head == HeadKind::ruber) {
      head_w1_ = add("head.w1", 4 * d, d, true);
      head_b1_ = add("head.b1", 1, d);
      head_w_ = add("head.w2", d, 1, true);
      head_b_ = add("head.b2", 1, 1);
    } else {
      head_w_ = add("head.weight", d, 1, true);
      head_b_ = add("head.bias", 1, 1);
    }
    if (cfg_.head == HeadKind::regression) {
      out_shift_ = add("head.output_shift", 1, 1);
      out_scale_ = add("head.output_scale", 1, 1);
      tensors_[out_shift_].trainable = false;
      tensors_[out_scale_].trainable = false;
    }
    initialize();
  }

  const EncoderConfig& config() const { return cfg_; }
  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }

  Tensor<T>& tensor(std::string_view name) {
    for (auto& t : tensors_) {
      if (t.name == name) return t;
    }
    throw Error("no tensor named '" + std::string(name) + "'");
  }
  const Tensor<T>& tensor(std::string_view name) const { return const_cast<Model*>(this)->tensor(name); }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& t : tensors_) t.grad.setZero();
  }

  /// Regression outputs are shift + scale·raw; fit from training targets so the
  /// head starts at the target mean with unit-scale residuals.
  void fit_output_normalization(std::span<const Example> data) {
    if (cfg_.head != HeadKind::regression || data.empty()) return;
    double mean = 0.0;
    for (const auto& e : data) mean += e.target;
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (const auto& e : data) var += (e.target - mean) * (e.target - mean);
    var /= static_cast<double>(data.size());
    tensors_[out_shift_].value(0, 0) = static_cast<T>(mean);
    tensors_[out_scale_].value(0, 0) = static_cast<T>(var > 1e-12 ? std::sqrt(var) : 1.0);
  }

  /// Zeroes the head so every classification input scores sigmoid(0) = 0.5.
  void zero_head() {
    tensors_[head_w_].value.setZero();
    tensors_[head_b_].value.setZero();
    if (cfg_.head == HeadKind::ruber) {
      tensors_[head_w1_].value.setZero();
      tensors_[head_b1_].value.setZero();
    }
  }

  /// Inference output: probability for classification and bi-encoder heads,
  /// a real score for regression.
  T predict(const Example& ex) const {
    Pass pass;
    return output(run(ex, pass, nullptr));
  }

  /// Forward over a batch of equally padded sequences (single-segment heads).
  std::vector<T> forward(const std::vector<std::vector<std::int32_t>>& batch) const {
    if (cfg_.head == HeadKind::ruber) throw ConfigError("forward: bi-encoder head needs paired inputs");
    std::vector<T> out;
    out.reserve(batch.size());
    for (const auto& seq : batch) {
      if (seq.size() != batch.front().size()) throw ConfigError("forward: sequences must be padded to equal length");
      Example ex;
      ex.ids = seq;
      out.push_back(predict(ex));
    }
    return out;
  }

  /// Mean loss over `batch`; when `accumulate` is set, adds d(mean loss)/dθ to
  /// the gradient buffers. Dropout is active only when `dropout_seed` is given.
  T loss_and_grad(std::span<const Example> batch, bool accumulate, const std::uint64_t* dropout_seed = nullptr) {
    T total = T(0);
    const T inv_n = T(1) / static_cast<T>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Pass pass;
      std::optional<Rng> rng;
      if (dropout_seed && cfg_.dropout > 0.0) rng.emplace(derive_seed(*dropout_seed, i));
      const T raw = run(batch[i], pass, rng ? &*rng : nullptr);
      const T y = static_cast<T>(batch[i].target);
      T dl_draw;
      if (cfg_.head == HeadKind::regression) {
        const T scale = tensors_[out_scale_].value(0, 0);
        const T out = tensors_[out_shift_].value(0, 0) + scale * raw;
        total += (out - y) * (out - y);
        dl_draw = T(2) * (out - y) * scale;
      } else {
        // softplus(z) − y·z, evaluated stably
        const T z = raw;
        total += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z;
        dl_draw = sigmoid(z) - y;
      }
      if (accumulate) backward(pass, dl_draw * inv_n);
    }
    return total * inv_n;
  }

 private:
  struct LayerIdx {
    std::size_t ln1_g, ln1_b, wq, bq, wk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  struct LayerCache {
    Eigen::Index rows_out = 0;
    nn::LayerNormCache<T> ln1;
    Matrix<T> a, q, k, v;
    std::vector<Matrix<T>> probs;
    Matrix<T> attn;
    Matrix<T> proj_mask;
    nn::LayerNormCache<T> ln2;
    Matrix<T> b, h_pre, g;
    Matrix<T> ff_mask;
  };

  struct TrunkCache {
    std::vector<std::int32_t> ids;
    Matrix<T> emb_mask;
    std::vector<LayerCache> layers;
    nn::LayerNormCache<T> lnf;
  };

  struct Pass {
    TrunkCache a, b;
    RowVec<T> pooled_a, pooled_b;
    RowVec<T> features, hidden;
  };

  static T sigmoid(T z) { return z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z)); }

  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols, bool decay = false) {
    Tensor<T> t;
    t.name = std::move(name);
    t.value = Matrix<T>::Zero(rows, cols);
    t.grad = Matrix<T>::Zero(rows, cols);
    t.decay = decay;
    tensors_.push_back(std::move(t));
    return tensors_.size() - 1;
  }

  void initialize() {
    Rng rng(derive_seed(cfg_.seed, 0x696e6974));
    for (auto& t : tensors_) {
      const bool is_gain = t.name.ends_with(".gain");
      if (t.name == "head.output_scale" || is_gain) {
        t.value.setOnes();
      } else if (t.name.starts_with("embeddings.")) {
        for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = static_cast<T>(0.1 * rng.normal());
      } else if (t.decay && !t.name.starts_with("head.weight") && t.name != "head.w2") {
        const double bound = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
        for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
      }
    }
  }

  T output(T raw) const {
    if (cfg_.head == HeadKind::regression) {
      return tensors_[out_shift_].value(0, 0) + tensors_[out_scale_].value(0, 0) * raw;
    }
    return sigmoid(raw);
  }

  const Matrix<T>& W(std::size_t i) const { return tensors_[i].value; }
  Matrix<T>& G(std::size_t i) { return tensors_[i].grad; }

  std::vector<std::int32_t> strip(const std::vector<std::int32_t>& seq) const {
    if (seq.size() > cfg_.max_len) {
      throw ConfigError("encoder: sequence length " + std::to_string(seq.size()) + " exceeds max_len " +
                        std::to_string(cfg_.max_len));
    }
    std::vector<std::int32_t> ids;
    ids.reserve(seq.size());
    for (auto id : seq) {
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
        throw ConfigError("encoder: token id " + std::to_string(id) + " out of range for vocab_size " +
                          std::to_string(cfg_.vocab_size));
      }
      if (id != nn::kPad) ids.push_back(id);
    }
    if (ids.empty()) throw ConfigError("encoder: sequence contains only padding");
    return ids;
  }

  Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, Rng* rng) const {
    if (!rng) return {};
    const T keep = static_cast<T>(1.0 - cfg_.dropout);
    Matrix<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < cfg_.dropout ? T(0) : T(1) / keep;
    return m;
  }

  /// Runs the trunk; returns the pooled CLS row (after the final LayerNorm).
  RowVec<T> trunk(const std::vector<std::int32_t>& seq, TrunkCache& c, Rng* rng) const {
    c.ids = strip(seq);
    const auto L = static_cast<Eigen::Index>(c.ids.size());
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    Matrix<T> x(L, d);
    for (Eigen::Index i = 0; i < L; ++i) x.row(i) = W(tok_emb_).row(c.ids[static_cast<std::size_t>(i)]) + W(pos_emb_).row(i);
    c.emb_mask = dropout_mask(L, d, rng);
    if (rng) x.array() *= c.emb_mask.array();

    const auto heads = static_cast<Eigen::Index>(cfg_.n_heads);
    const Eigen::Index dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    c.layers.resize(cfg_.n_layers);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const LayerIdx& li = layers_[l];
      LayerCache& lc = c.layers[l];
      // Only the CLS row is needed from the last layer.
      const Eigen::Index R = (l + 1 == cfg_.n_layers) ? 1 : L;
      lc.rows_out = R;
      lc.a = nn::layer_norm(x, W(li.ln1_g), W(li.ln1_b), lc.ln1);
      lc.q = lc.a.topRows(R) * W(li.wq);
      lc.q.rowwise() += W(li.bq).row(0);
      // No key bias: it shifts every score in a row equally and cancels in the softmax.
      lc.k = lc.a * W(li.wk);
      lc.v = lc.a * W(li.wv);
      lc.v.rowwise() += W(li.bv).row(0);
      lc.attn.resize(R, d);
      lc.probs.resize(static_cast<std::size_t>(heads));
      for (Eigen::Index h = 0; h < heads; ++h) {
        Matrix<T> s = (lc.q.middleCols(h * dh, dh) * lc.k.middleCols(h * dh, dh).transpose()) * scale;
        for (Eigen::Index r = 0; r < R; ++r) {
          const T mx = s.row(r).maxCoeff();
          s.row(r) = (s.row(r).array() - mx).exp();
          s.row(r) /= s.row(r).sum();
        }
        lc.attn.middleCols(h * dh, dh) = s * lc.v.middleCols(h * dh, dh);
        lc.probs[static_cast<std::size_t>(h)] = std::move(s);
      }
      Matrix<T> proj = lc.attn * W(li.wo);
      proj.rowwise() += W(li.bo).row(0);
      lc.proj_mask = dropout_mask(R, d, rng);
      if (rng) proj.array() *= lc.proj_mask.array();
      Matrix<T> mid = x.topRows(R) + proj;

      lc.b = nn::layer_norm(mid, W(li.ln2_g), W(li.ln2_b), lc.ln2);
      lc.h_pre = lc.b * W(li.w1);
      lc.h_pre.rowwise() += W(li.b1).row(0);
      lc.g = lc.h_pre.unaryExpr([](T v) { return nn::gelu(v); });
      Matrix<T> ffo = lc.g * W(li.w2);
      ffo.rowwise() += W(li.b2).row(0);
      lc.ff_mask = dropout_mask(R, d, rng);
      if (rng) ffo.array() *= lc.ff_mask.array();
      x = mid + ffo;
    }
    Matrix<T> cls = x.topRows(1);
    return nn::layer_norm(cls, W(lnf_g_), W(lnf_b_), c.lnf).row(0);
  }

  void trunk_backward(const TrunkCache& c, const RowVec<T>& dpooled) {
    Matrix<T> dx = nn::layer_norm_backward(Matrix<T>(dpooled), W(lnf_g_), c.lnf, G(lnf_g_), G(lnf_b_));
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    const auto heads = static_cast<Eigen::Index>(cfg_.n_heads);
    const Eigen::Index dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const bool dropout = c.emb_mask.size() > 0;
    for (std::size_t l = cfg_.n_layers; l-- > 0;) {
      const LayerIdx& li = layers_[l];
      const LayerCache& lc = c.layers[l];
      const Eigen::Index R = lc.rows_out;
      const Eigen::Index L = lc.a.rows();

      Matrix<T> dffo = dropout ? Matrix<T>(dx.array() * lc.ff_mask.array()) : dx;
      G(li.w2).noalias() += lc.g.transpose() * dffo;
      G(li.b2).row(0) += dffo.colwise().sum();
      Matrix<T> dh_pre = dffo * W(li.w2).transpose();
      dh_pre.array() *= lc.h_pre.unaryExpr([](T v) { return nn::gelu_grad(v); }).array();
      G(li.w1).noalias() += lc.b.transpose() * dh_pre;
      G(li.b1).row(0) += dh_pre.colwise().sum();
      Matrix<T> db = dh_pre * W(li.w1).transpose();
      Matrix<T> dmid = dx + nn::layer_norm_backward(db, W(li.ln2_g), lc.ln2, G(li.ln2_g), G(li.ln2_b));

      Matrix<T> dproj = dropout ? Matrix<T>(dmid.array() * lc.proj_mask.array()) : dmid;
      G(li.wo).noalias() += lc.attn.transpose() * dproj;
      G(li.bo).row(0) += dproj.colwise().sum();
      Matrix<T> dattn = dproj * W(li.wo).transpose();

      Matrix<T> dq(R, d), dk(L, d), dv(L, d);
      for (Eigen::Index h = 0; h < heads; ++h) {
        const Matrix<T>& p = lc.probs[static_cast<std::size_t>(h)];
        const auto dO = dattn.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh) = p.transpose() * dO;
        Matrix<T> dp = dO * lc.v.middleCols(h * dh, dh).transpose();
        Matrix<T> ds(R, L);
        for (Eigen::Index r = 0; r < R; ++r) {
          const T dot = (dp.row(r).array() * p.row(r).array()).sum();
          ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot) * scale;
        }
        dq.middleCols(h * dh, dh) = ds * lc.k.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh) = ds.transpose() * lc.q.middleCols(h * dh, dh);
      }
      G(li.wq).noalias() += lc.a.topRows(R).transpose() * dq;
      G(li.bq).row(0) += dq.colwise().sum();
      G(li.wk).noalias() += lc.a.transpose() * dk;
      G(li.wv).noalias() += lc.a.transpose() * dv;
      G(li.bv).row(0) += dv.colwise().sum();
      Matrix<T> da = dk * W(li.wk).transpose() + dv * W(li.wv).transpose();
      da.topRows(R) += dq * W(li.wq).transpose();
      Matrix<T> dxin = nn::layer_norm_backward(da, W(li.ln1_g), lc.ln1, G(li.ln1_g), G(li.ln1_b));
      dxin.topRows(R) += dmid;
      dx = std::move(dxin);
    }
    if (dropout) dx.array() *= c.emb_mask.array();
    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
      G(tok_emb_).row(c.ids[static_cast<std::size_t>(i)]) += dx.row(i);
      G(pos_emb_).row(i) += dx.row(i);
    }
  }

  /// Returns the pre-activation output (logit or raw regression value).
  T run(const Example& ex, Pass& pass, Rng* rng) const {
    pass.pooled_a = trunk(ex.ids, pass.a, rng);
    if (cfg_.head != HeadKind::ruber) {
      return (pass.pooled_a * W(head_w_))(0, 0) + W(head_b_)(0, 0);
    }
    if (ex.ids_b.empty()) throw ConfigError("bi-encoder head needs a second segment");
    pass.pooled_b = trunk(ex.ids_b, pass.b, rng);
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    pass.features.resize(4 * d);
    pass.features.segment(0, d) = pass.pooled_a;
    pass.features.segment(d, d) = pass.pooled_b;
    pass.features.segment(2 * d, d) = pass.pooled_a.cwiseProduct(pass.pooled_b);
    pass.features.segment(3 * d, d) = (pass.pooled_a - pass.pooled_b).cwiseAbs();
    RowVec<T> pre = pass.features * W(head_w1_) + W(head_b1_).row(0);
    pass.hidden = pre.array().tanh();
    return (pass.hidden * W(head_w_))(0, 0) + W(head_b_)(0, 0);
  }

  void backward(const Pass& pass, T draw) {
    if (cfg_.head != HeadKind::ruber) {
      G(head_w_).col(0) += draw * pass.pooled_a.transpose();
      G(head_b_)(0, 0) += draw;
      trunk_backward(pass.a, draw * W(head_w_).col(0).transpose());
      return;
    }
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    G(head_w_).col(0) += draw * pass.hidden.transpose();
    G(head_b_)(0, 0) += draw;
    RowVec<T> dhidden = draw * W(head_w_).col(0).transpose();
    RowVec<T> dpre = dhidden.array() * (T(1) - pass.hidden.array().square());
    G(head_w1_).noalias() += pass.features.transpose() * dpre;
    G(head_b1_).row(0) += dpre;
    RowVec<T> df = dpre * W(head_w1_).transpose();
    const RowVec<T>& c = pass.pooled_a;
    const RowVec<T>& r = pass.pooled_b;
    RowVec<T> sign = (c - r).unaryExpr([](T v) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
    RowVec<T> dc = df.segment(0, d) + df.segment(2 * d, d).cwiseProduct(r) + df.segment(3 * d, d).cwiseProduct(sign);
    RowVec<T> dr = df.segment(d, d) + df.segment(2 * d, d).cwiseProduct(c) - df.segment(3 * d, d).cwiseProduct(sign);
    trunk_backward(pass.a, dc);
    trunk_backward(pass.b, dr);
  }

  EncoderConfig cfg_;
  std::vector<Tensor<T>> tensors_;
  std::vector<LayerIdx> layers_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0;
  std::size_t head_w_ = 0, head_b_ = 0, head_w1_ = 0, head_b1_ = 0;
  std::size_t out_shift_ = 0, out_scale_ = 0;
};

/// Copies parameter values between precisions (same config).
template <typename To, typename From>
Model<To> cast_model(const Model<From>& src) {
  Model<To> dst(src.config());
  for (std::size_t i = 0; i < src.tensors().size(); ++i) {
    dst.tensors()[i].value = src.tensors()[i].value.template cast<To>();
  }
  return dst;
}

}  // namespace dcpeval
