#ifndef LCNN_NN_HPP
#define LCNN_NN_HPP

// Feed-forward network of affine layers, softmax cross-entropy and the
// explicit chain-rule backward pass.
//
// Indexing follows the usual layer convention: activation 0 is the input,
// activation i (1..n) is the output of layer i, so layers[i - 1] maps
// activation i - 1 to activation i.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lcnn/error.hpp"
#include "lcnn/tensor.hpp"

namespace lcnn {

enum class Activation : std::uint32_t { Identity = 0, ReLU = 1 };

inline const char* to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

struct Layer {
  Matrix weight;  // out_dim x in_dim
  Matrix bias;    // out_dim x 1
  Activation activation = Activation::ReLU;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

class Network {
 public:
  Network() = default;
  Network(std::size_t input_dim, std::vector<Layer> layers)
      : input_dim_(input_dim), layers_(std::move(layers)) {
    validate();
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t output_dim() const { return layers_.back().out_dim(); }

  /// Width of activation `i`; 0 is the input.
  std::size_t width(std::size_t i) const {
    if (i > layers_.size()) throw ArgumentError("layer index out of range");
    return i == 0 ? input_dim_ : layers_[i - 1].out_dim();
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }

  void validate() const {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    std::size_t prev = input_dim_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      if (l.in_dim() != prev) {
        throw ShapeError("layer " + std::to_string(i + 1) + " expects input width " +
                         std::to_string(l.in_dim()) + " but receives " +
                         std::to_string(prev));
      }
      if (l.bias.rows() != l.out_dim() || l.bias.cols() != 1) {
        throw ShapeError("layer " + std::to_string(i + 1) + " bias shape " +
                         l.bias.shape() + " does not match weight " + l.weight.shape());
      }
      prev = l.out_dim();
    }
  }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::size_t input_dim_ = 0;
  std::vector<Layer> layers_;
};

/// Builds a network with ReLU hidden layers and an Identity output layer.
/// `widths` lists every layer's output width, output layer last. Weights are
/// drawn from U(-s, s) with s = sqrt(6 / (in + out)); biases start at zero.
inline Network make_network(std::size_t input_dim, std::span<const std::size_t> widths,
                            std::uint64_t seed) {
  if (input_dim == 0 || widths.empty())
    throw ArgumentError("network needs an input width and at least one layer");
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  std::size_t prev = input_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] == 0) throw ArgumentError("layer widths must be positive");
    const double s = std::sqrt(6.0 / static_cast<double>(prev + widths[i]));
    std::uniform_real_distribution<double> dist(-s, s);
    Layer layer;
    layer.weight = Matrix(widths[i], prev);
    for (double& w : layer.weight.data()) w = dist(rng);
    layer.bias = Matrix(widths[i], 1);
    layer.activation = i + 1 == widths.size() ? Activation::Identity : Activation::ReLU;
    layers.push_back(std::move(layer));
    prev = widths[i];
  }
  return Network(input_dim, std::move(layers));
}

struct ForwardTrace {
  std::vector<Matrix> activations;      // x^(0) .. x^(n)
  std::vector<Matrix> pre_activations;  // z^(1) .. z^(n), stored at [i - 1]

  const Matrix& output() const { return activations.back(); }
};

inline ForwardTrace forward(const Network& net, const Matrix& x) {
  if (x.rows() != net.input_dim()) {
    throw ShapeError("forward: input " + x.shape() + " but network expects " +
                     std::to_string(net.input_dim()) + " rows");
  }
  ForwardTrace trace;
  trace.activations.reserve(net.depth() + 1);
  trace.pre_activations.reserve(net.depth());
  trace.activations.push_back(x);
  for (const Layer& layer : net.layers()) {
    Matrix z = matmul(layer.weight, trace.activations.back());
    for (std::size_t r = 0; r < z.rows(); ++r) {
      const double b = layer.bias(r, 0);
      for (double& v : z.row(r)) v += b;
    }
    Matrix a = z;
    if (layer.activation == Activation::ReLU) {
      for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
    }
    trace.pre_activations.push_back(std::move(z));
    trace.activations.push_back(std::move(a));
  }
  return trace;
}

struct XentResult {
  double loss = 0.0;  // mean over batch columns
  Matrix grad;        // dloss / dlogits
};

/// Column-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (std::size_t c = 0; c < logits.cols(); ++c) {
    double mx = logits(0, c);
    for (std::size_t r = 1; r < logits.rows(); ++r) mx = std::max(mx, logits(r, c));
    double sum = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      p(r, c) = std::exp(logits(r, c) - mx);
      sum += p(r, c);
    }
    for (std::size_t r = 0; r < logits.rows(); ++r) p(r, c) /= sum;
  }
  return p;
}

inline void check_labels(std::span<const int> labels, std::size_t num_classes,
                         const char* where) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ArgumentError(std::string(where) + ": label " + std::to_string(labels[i]) +
                          " at position " + std::to_string(i) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
  }
}

inline XentResult softmax_xent(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.cols()) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) +
                     " labels for logits " + logits.shape());
  }
  check_labels(labels, logits.rows(), "softmax_xent");
  const auto batch = static_cast<double>(logits.cols());
  XentResult out{0.0, Matrix(logits.rows(), logits.cols())};
  for (std::size_t c = 0; c < logits.cols(); ++c) {
    double mx = logits(0, c);
    for (std::size_t r = 1; r < logits.rows(); ++r) mx = std::max(mx, logits(r, c));
    double sum = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) sum += std::exp(logits(r, c) - mx);
    const double log_sum = std::log(sum);
    const auto y = static_cast<std::size_t>(labels[c]);
    // -log p_y = log sum exp(z - max) - (z_y - max)
    out.loss += log_sum - (logits(y, c) - mx);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const double p = std::exp(logits(r, c) - mx - log_sum);
      out.grad(r, c) = (p - (r == y ? 1.0 : 0.0)) / batch;
    }
  }
  out.loss /= batch;
  return out;
}

/// Extra gradient injected into dL/dx^(layer) during backward, used by the
/// label-consistency head.
struct HiddenGrad {
  std::size_t layer = 0;
  Matrix grad;
};

struct Gradients {
  std::vector<Matrix> weight;      // [i - 1] holds dL/dW^(i)
  std::vector<Matrix> bias;        // [i - 1] holds dL/db^(i)
  std::vector<Matrix> activation;  // [i] holds dL/dx^(i), i = 0..n
};

inline Gradients backward(const Network& net, const ForwardTrace& trace,
                          const Matrix& out_grad,
                          const std::optional<HiddenGrad>& extra = std::nullopt) {
  const std::size_t n = net.depth();
  if (trace.activations.size() != n + 1 || trace.pre_activations.size() != n) {
    throw ShapeError("backward: trace depth does not match network depth " +
                     std::to_string(n));
  }
  if (!out_grad.same_shape(trace.output())) {
    throw ShapeError("backward: output gradient " + out_grad.shape() +
                     " does not match network output " + trace.output().shape());
  }
  if (extra) {
    if (extra->layer == 0 || extra->layer > n)
      throw ArgumentError("backward: injected gradient layer must lie in [1, n]");
    if (!extra->grad.same_shape(trace.activations[extra->layer]))
      throw ShapeError("backward: injected gradient " + extra->grad.shape() +
                       " does not match activation " +
                       trace.activations[extra->layer].shape());
  }

  Gradients g;
  g.weight.resize(n);
  g.bias.resize(n);
  g.activation.resize(n + 1);
  g.activation[n] = out_grad;
  if (extra && extra->layer == n) g.activation[n] = g.activation[n] + extra->grad;

  for (std::size_t i = n; i >= 1; --i) {
    const Layer& layer = net.layer(i - 1);
    Matrix dz = g.activation[i];
    if (layer.activation == Activation::ReLU) {
      const auto z = trace.pre_activations[i - 1].data();
      auto d = dz.data();
      for (std::size_t k = 0; k < d.size(); ++k)
        if (!(z[k] > 0.0)) d[k] = 0.0;
    }
    g.weight[i - 1] = matmul(dz, transpose(trace.activations[i - 1]));
    g.bias[i - 1] = sum_columns(dz);
    g.activation[i - 1] = matmul(transpose(layer.weight), dz);
    if (extra && extra->layer == i - 1)
      g.activation[i - 1] = g.activation[i - 1] + extra->grad;
  }
  return g;
}

}  // namespace lcnn

#endif  // LCNN_NN_HPP
