// Copyright 2026 The dcpeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "dcpeval/encoder.hpp"
#include "dcpeval/error.hpp"
#include "dcpeval/metrics.hpp"
#include "dcpeval/rng.hpp"

namespace dcpeval {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global-norm clip, 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
    if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be non-negative");
  }

  /// Pretrained-backbone fine-tuning settings: lr 3e-5, batch 64, 5 epochs
  /// (10 for regression).
  static TrainConfig fine_tuning_preset(bool regression) {
    TrainConfig c;
    c.learning_rate = 3e-5;
    c.batch_size = 64;
    c.epochs = regression ? 10 : 5;
    return c;
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"epochs", epochs},
            {"weight_decay", weight_decay},   {"grad_clip", grad_clip},   {"seed", seed}};
  }
};

template <typename T>
class AdamW {
 public:
  AdamW(const Model<T>& model, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& t : model.tensors()) {
      m_.push_back(Matrix<T>::Zero(t.value.rows(), t.value.cols()));
      v_.push_back(Matrix<T>::Zero(t.value.rows(), t.value.cols()));
    }
  }

  void step(Model<T>& model) {
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T c1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T c2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(cfg_.learning_rate);
    const T eps = static_cast<T>(cfg_.adam_eps);
    const T wd = static_cast<T>(cfg_.weight_decay);

    T scale = T(1);
    if (cfg_.grad_clip > 0.0) {
      T sq = T(0);
      for (const auto& t : model.tensors()) {
        if (t.trainable) sq += t.grad.squaredNorm();
      }
      const T norm = std::sqrt(sq);
      if (norm > static_cast<T>(cfg_.grad_clip)) scale = static_cast<T>(cfg_.grad_clip) / norm;
    }

    auto& tensors = model.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& t = tensors[i];
      if (!t.trainable) continue;
      if (t.decay && wd > T(0)) t.value *= (T(1) - lr * wd);
      m_[i] = b1 * m_[i] + (T(1) - b1) * scale * t.grad;
      v_[i] = b2 * v_[i] + (T(1) - b2) * (scale * t.grad).cwiseAbs2();
      t.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<Matrix<T>> m_, v_;
  std::size_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
};

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,train_loss,val_loss,val_metric\n";
  for (const auto& e : log) os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_metric << '\n';
  return os.str();
}

template <typename T>
struct TrainResult {
  Model<T> model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double best_val_metric = 0.0;
};

template <typename T>
double mean_loss(Model<T>& model, std::span<const Example> data, std::size_t chunk = 256) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); i += chunk) {
    const auto n = std::min(chunk, data.size() - i);
    total += static_cast<double>(model.loss_and_grad(data.subspan(i, n), false)) * static_cast<double>(n);
  }
  return total / static_cast<double>(data.size());
}

template <typename T>
std::vector<double> predict_all(const Model<T>& model, std::span<const Example> data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& e : data) out.push_back(static_cast<double>(model.predict(e)));
  return out;
}

/// Accuracy at 0.5 for probability heads, Pearson r for regression (0 when undefined).
template <typename T>
double validation_metric(const Model<T>& model, std::span<const Example> data) {
  const auto scores = predict_all(model, data);
  if (model.config().head == HeadKind::regression) {
    if (data.size() < 3) return 0.0;
    std::vector<double> ys;
    for (const auto& e : data) ys.push_back(e.target);
    return pearson(scores, ys).value_or(0.0);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += ((scores[i] >= 0.5) == (data[i].target >= 0.5f)) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mini-batch AdamW over seeded shuffles. Validation loss is measured after
/// every epoch and the lowest-loss epoch (earliest on ties) is returned. With
/// zero epochs the initial model is returned.
template <typename T>
TrainResult<T> train(Model<T> model, std::span<const Example> train_set, std::span<const Example> val_set,
                     const TrainConfig& cfg, const std::string& label = "model") {
  cfg.validate();
  if (train_set.empty()) throw TrainingError(label + ": empty training set");
  if (val_set.empty()) throw TrainingError(label + ": empty validation set");

  TrainResult<T> result{model, {}, 0, 0.0, 0.0};
  if (cfg.epochs == 0) {
    result.best_val_loss = mean_loss(model, val_set);
    result.best_val_metric = validation_metric(model, val_set);
    return result;
  }

  AdamW<T> opt(model, cfg);
  std::vector<std::size_t> order(train_set.size());
  std::vector<Example> batch;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, epoch));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      model.zero_grad();
      const std::uint64_t dropout_seed = derive_seed(derive_seed(cfg.seed, 0x64726f70 + epoch), step);
      const T loss = model.loss_and_grad(batch, true, &dropout_seed);
      if (!std::isfinite(static_cast<double>(loss))) {
        throw TrainingError(label + ": non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step) + " (try a lower learning rate)");
      }
      loss_sum += static_cast<double>(loss) * static_cast<double>(batch.size());
      opt.step(model);
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(train_set.size());
    e.val_loss = mean_loss(model, val_set);
    e.val_metric = validation_metric(model, val_set);
    if (!std::isfinite(e.val_loss)) {
      throw TrainingError(label + ": non-finite validation loss at epoch " + std::to_string(epoch));
    }
    spdlog::info("{} epoch {}/{}: train_loss={:.5f} val_loss={:.5f} val_metric={:.4f}", label, epoch, cfg.epochs,
                 e.train_loss, e.val_loss, e.val_metric);
    result.log.push_back(e);
    if (!have_best || e.val_loss < result.best_val_loss) {
      have_best = true;
      result.model = model;
      result.best_epoch = epoch;
      result.best_val_loss = e.val_loss;
      result.best_val_metric = e.val_metric;
    }
  }
  return result;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t n_checked = 0;
};

/// Compares analytic gradients of the mean batch loss with central differences
/// for every trainable parameter. Relative error uses max(|a|, |n|, 1e-6) as
/// the denominator.
inline GradCheckResult gradient_check(Model<double>& model, std::span<const Example> batch, double epsilon = 1e-5) {
  model.zero_grad();
  model.loss_and_grad(batch, true);
  GradCheckResult res;
  for (auto& t : model.tensors()) {
    if (!t.trainable) continue;
    const Matrix<double> analytic = t.grad;
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      double& p = t.value.data()[i];
      const double orig = p;
      p = orig + epsilon;
      const double up = model.loss_and_grad(batch, false);
      p = orig - epsilon;
      const double down = model.loss_and_grad(batch, false);
      p = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_tensor = t.name;
      }
      ++res.n_checked;
    }
  }
  return res;
}

/// Builds a tiny double-precision model with a randomised head and checks it.
inline GradCheckResult gradient_check(const EncoderConfig& cfg, std::span<const Example> batch, double epsilon = 1e-5) {
  EncoderConfig c = cfg;
  c.dropout = 0.0;
  Model<double> model(c);
  Rng rng(derive_seed(c.seed, 0x67636b));
  for (auto& t : model.tensors()) {
    if (t.trainable && t.name.starts_with("head.")) {
      for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = rng.normal(0.0, 0.5);
    }
  }
  return gradient_check(model, batch, epsilon);
}

}  // namespace dcpeval
