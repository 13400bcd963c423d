#ifndef LCNN_OPTIM_HPP
#define LCNN_OPTIM_HPP

// Mini-batch SGD with classical momentum for the three training modes:
//
//   Baseline  L = L_c                 (alpha forced to 0)
//   LCNN1     L = L_r                 (classification loss switched off)
//   LCNN2     L = L_c + alpha * L_r
//
// Both loss components are measured in every mode so the per-epoch record
// has the same columns; only the weighted ones drive the updates.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lcnn/classify.hpp"
#include "lcnn/data.hpp"
#include "lcnn/error.hpp"
#include "lcnn/label_consistency.hpp"
#include "lcnn/nn.hpp"
#include "lcnn/tensor.hpp"

namespace lcnn {

enum class TrainMode { Baseline, LCNN1, LCNN2 };

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::LCNN1: return "lcnn1";
    case TrainMode::LCNN2: return "lcnn2";
  }
  return "unknown";
}

inline std::optional<TrainMode> parse_mode(const std::string& s) {
  if (s == "baseline") return TrainMode::Baseline;
  if (s == "lcnn1") return TrainMode::LCNN1;
  if (s == "lcnn2") return TrainMode::LCNN2;
  return std::nullopt;
}

struct TrainConfig {
  TrainMode mode = TrainMode::LCNN2;
  double alpha = 0.05;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lr_decay_factor = 1.0;    // multiply the rate by this ...
  std::size_t lr_decay_every = 0;  // ... every this many epochs; 0 disables
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  std::size_t knn_k = 5;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be > 0");
    if (batch_size == 0) throw ArgumentError("batch size must be >= 1");
    if (epochs == 0) throw ArgumentError("epochs must be >= 1");
    if (!(alpha >= 0.0)) throw ArgumentError("alpha must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ArgumentError("weight decay must be >= 0");
    if (!(lr_decay_factor > 0.0)) throw ArgumentError("lr decay factor must be > 0");
    if (knn_k == 0) throw ArgumentError("knn_k must be >= 1");
  }
};

/// Weight of L_r in the objective actually optimised. LCNN1 trains on L_r
/// alone, so its weight is 1.
inline double effective_alpha(const TrainConfig& cfg) {
  switch (cfg.mode) {
    case TrainMode::Baseline: return 0.0;
    case TrainMode::LCNN1: return 1.0;
    case TrainMode::LCNN2: return cfg.alpha;
  }
  return cfg.alpha;
}

inline double classification_weight(const TrainConfig& cfg) {
  return cfg.mode == TrainMode::LCNN1 ? 0.0 : 1.0;
}

struct TrainRecord {
  std::vector<double> loss;       // weighted objective, epoch mean over batches
  std::vector<double> loss_c;
  std::vector<double> loss_r;
  std::vector<double> train_err;
  std::vector<double> test_err;   // NaN when the dataset has no test split
  std::vector<double> epoch_seconds;

  std::size_t epochs() const noexcept { return loss.size(); }
};

/// Equality of every recorded metric, bitwise; wall time is ignored.
inline bool same_metrics(const TrainRecord& a, const TrainRecord& b) {
  auto eq = [](const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::bit_cast<std::uint64_t>(x[i]) != std::bit_cast<std::uint64_t>(y[i]))
        return false;
    return true;
  };
  return eq(a.loss, b.loss) && eq(a.loss_c, b.loss_c) && eq(a.loss_r, b.loss_r) &&
         eq(a.train_err, b.train_err) && eq(a.test_err, b.test_err);
}

/// First epoch whose training error is at most `threshold`.
inline std::optional<std::size_t> epochs_to_threshold(const TrainRecord& record,
                                                      double threshold) {
  for (std::size_t e = 0; e < record.train_err.size(); ++e)
    if (record.train_err[e] <= threshold) return e;
  return std::nullopt;
}

inline void write_record_csv(const TrainRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training record '" + path + "'");
  out.precision(17);
  out << "epoch,loss,loss_c,loss_r,train_err,test_err\n";
  for (std::size_t e = 0; e < record.epochs(); ++e) {
    out << e << ',' << record.loss[e] << ',' << record.loss_c[e] << ','
        << record.loss_r[e] << ',' << record.train_err[e] << ',';
    if (!std::isnan(record.test_err[e])) out << record.test_err[e];
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Predictions under the scheme a mode evaluates with: argmax for Baseline
/// and LCNN2, k-NN against `bank` for LCNN1.
inline std::vector<int> predict_for_mode(const Network& net, const LabelConsistencyHead& head,
                                         TrainMode mode, const ReferenceBank* bank,
                                         const Matrix& x, std::size_t k) {
  if (mode != TrainMode::LCNN1) return predict_argmax(net, x);
  return knn_predict(*bank, embed(net, head, x), std::min(k, bank->size()));
}

struct TrainResult {
  Network net;
  LabelConsistencyHead head;
  TrainRecord record;
};

inline TrainResult train(Network net, LabelConsistencyHead head, const Dataset& data,
                         const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  head.validate_against(net);
  if (head.allocation.num_classes != data.num_classes)
    throw ShapeError("head allocation has " + std::to_string(head.allocation.num_classes) +
                     " classes but dataset has " + std::to_string(data.num_classes));
  if (net.input_dim() != data.dim())
    throw ShapeError("network input width " + std::to_string(net.input_dim()) +
                     " does not match dataset dimension " + std::to_string(data.dim()));
  if (cfg.mode != TrainMode::LCNN1 && net.output_dim() != data.num_classes)
    throw ShapeError("network output width " + std::to_string(net.output_dim()) +
                     " does not match " + std::to_string(data.num_classes) + " classes");

  head.alpha = effective_alpha(cfg);
  const double alpha = head.alpha;
  const double weight_c = classification_weight(cfg);
  const std::size_t l = head.attach_layer;

  const Dataset train_set = data.subset(Split::Train);
  const Dataset test_set = data.subset(Split::Test);
  const std::size_t n_train = train_set.size();

  std::vector<Matrix> vel_w, vel_b;
  for (const Layer& layer : net.layers()) {
    vel_w.emplace_back(layer.weight.rows(), layer.weight.cols());
    vel_b.emplace_back(layer.bias.rows(), 1);
  }
  Matrix vel_a(head.width(), head.width());

  auto step = [&](Matrix& param, Matrix& vel, const Matrix& grad, double lr) {
    auto p = param.data();
    auto v = vel.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = cfg.momentum * v[i] - lr * (g[i] + cfg.weight_decay * p[i]);
      p[i] += v[i];
    }
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainRecord rec;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double lr = cfg.learning_rate;
    if (cfg.lr_decay_every > 0)
      lr *= std::pow(cfg.lr_decay_factor, static_cast<double>(epoch / cfg.lr_decay_every));
    std::shuffle(order.begin(), order.end(), rng);

    double sum_loss = 0.0, sum_c = 0.0, sum_r = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size, ++batches) {
      const std::size_t end = std::min(n_train, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix x = gather_columns(train_set.features, idx);
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = train_set.labels[idx[i]];

      const ForwardTrace trace = forward(net, x);
      const Matrix& x_l = trace.activations[l];
      const Matrix q = build_ideal_codes(y, head.allocation);

      double lc = 0.0;
      Matrix out_grad(trace.output().rows(), trace.output().cols());
      if (net.output_dim() == data.num_classes) {
        XentResult xent = softmax_xent(trace.output(), y);
        lc = xent.loss;
        if (weight_c != 0.0) out_grad = std::move(xent.grad);
      }
      const double lr_term = representation_error(x_l, q, head);
      const double loss = combined_loss(weight_c * lc, lr_term, alpha);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + " (L_c = " +
                           std::to_string(lc) + ", L_r = " + std::to_string(lr_term) + ")");

      std::optional<HiddenGrad> extra;
      Matrix g_a;
      if (alpha != 0.0) {
        extra = HiddenGrad{l, grad_x(x_l, q, head)};
        g_a = grad_A(x_l, q, head);
      }
      const Gradients g = backward(net, trace, out_grad, extra);
      for (std::size_t i = 0; i < net.depth(); ++i) {
        step(net.layers()[i].weight, vel_w[i], g.weight[i], lr);
        step(net.layers()[i].bias, vel_b[i], g.bias[i], lr);
      }
      if (alpha != 0.0) step(head.transform, vel_a, g_a, lr);

      sum_loss += loss;
      sum_c += lc;
      sum_r += lr_term;
    }
    const auto nb = static_cast<double>(batches);
    rec.loss.push_back(sum_loss / nb);
    rec.loss_c.push_back(sum_c / nb);
    rec.loss_r.push_back(sum_r / nb);

    std::optional<ReferenceBank> bank;
    if (cfg.mode == TrainMode::LCNN1)
      bank = make_bank(embed(net, head, train_set.features), train_set.labels,
                       data.num_classes);
    const ReferenceBank* bank_ptr = bank ? &*bank : nullptr;
    rec.train_err.push_back(
        1.0 - accuracy(predict_for_mode(net, head, cfg.mode, bank_ptr, train_set.features,
                                        cfg.knn_k),
                       train_set.labels));
    rec.test_err.push_back(
        test_set.size() == 0
            ? std::nan("")
            : 1.0 - accuracy(predict_for_mode(net, head, cfg.mode, bank_ptr,
                                              test_set.features, cfg.knn_k),
                             test_set.labels));
    rec.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return {std::move(net), std::move(head), std::move(rec)};
}

}  // namespace lcnn

#endif  // LCNN_OPTIM_HPP
