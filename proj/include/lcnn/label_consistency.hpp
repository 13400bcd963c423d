#ifndef LCNN_LABEL_CONSISTENCY_HPP
#define LCNN_LABEL_CONSISTENCY_HPP

// Label-consistency head attached to a late hidden layer l.
//
// Every neuron of layer l is owned by one class. A sample of class c has the
// ideal binary code q with q_j = 1 iff neuron j is owned by c, and the head
// penalises the distance between that code and a linear transform of the
// layer's activations:
//
//     L_r = mean_b || q_b - A x_b ||^2,      L = L_c + alpha * L_r
//
//     dL/dx_b = dL_c/dx_b + (2 alpha / B) A^T (A x_b - q_b)
//     dL/dA   = (2 alpha / B) sum_b (A x_b - q_b) x_b^T
//
// B is the batch width; losses and gradients are batch means.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lcnn/error.hpp"
#include "lcnn/nn.hpp"
#include "lcnn/tensor.hpp"

namespace lcnn {

struct NeuronAllocation {
  std::size_t num_classes = 0;
  std::vector<int> owner;  // neuron index -> class index

  std::size_t num_neurons() const noexcept { return owner.size(); }

  std::size_t count(int cls) const {
    return static_cast<std::size_t>(std::count(owner.begin(), owner.end(), cls));
  }

  std::vector<std::size_t> neurons_of(int cls) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < owner.size(); ++j)
      if (owner[j] == cls) out.push_back(j);
    return out;
  }

  friend bool operator==(const NeuronAllocation&, const NeuronAllocation&) = default;
};

/// Gives every class floor(N/m) neurons and one extra neuron to each of the
/// first N mod m classes of `class_priority`. Each class owns one contiguous
/// index block; blocks are laid out in class-index order.
inline NeuronAllocation allocate_neurons(std::size_t num_neurons, std::size_t num_classes,
                                         std::span<const int> class_priority) {
  if (num_classes == 0) throw ArgumentError("allocate_neurons: need at least one class");
  if (num_neurons < num_classes) {
    throw ArgumentError("allocate_neurons: " + std::to_string(num_neurons) +
                        " neurons cannot cover " + std::to_string(num_classes) +
                        " classes");
  }
  if (class_priority.size() != num_classes)
    throw ArgumentError("allocate_neurons: class priority must list every class once");
  std::vector<bool> seen(num_classes, false);
  for (int c : class_priority) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes || seen[c])
      throw ArgumentError("allocate_neurons: class priority is not a permutation");
    seen[c] = true;
  }

  const std::size_t base = num_neurons / num_classes;
  const std::size_t surplus = num_neurons - num_classes * base;
  std::vector<std::size_t> counts(num_classes, base);
  for (std::size_t i = 0; i < surplus; ++i) ++counts[class_priority[i]];

  NeuronAllocation alloc;
  alloc.num_classes = num_classes;
  alloc.owner.reserve(num_neurons);
  for (std::size_t c = 0; c < num_classes; ++c)
    alloc.owner.insert(alloc.owner.end(), counts[c], static_cast<int>(c));
  return alloc;
}

/// Ideal code matrix Q (N_l x batch): column b is 1 exactly at the neurons
/// owned by labels[b].
inline Matrix build_ideal_codes(std::span<const int> labels,
                                const NeuronAllocation& alloc) {
  check_labels(labels, alloc.num_classes, "build_ideal_codes");
  Matrix q(alloc.num_neurons(), labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b)
    for (std::size_t j = 0; j < alloc.num_neurons(); ++j)
      if (alloc.owner[j] == labels[b]) q(j, b) = 1.0;
  return q;
}

struct LabelConsistencyHead {
  std::size_t attach_layer = 0;  // index of the supervised activation x^(l)
  Matrix transform;              // A, N_l x N_l
  double alpha = 0.0;
  NeuronAllocation allocation;

  std::size_t width() const noexcept { return transform.rows(); }

  void validate() const {
    if (transform.rows() != transform.cols())
      throw ShapeError("head transform must be square, got " + transform.shape());
    if (allocation.num_neurons() != transform.rows())
      throw ShapeError("head allocation covers " +
                       std::to_string(allocation.num_neurons()) +
                       " neurons but transform is " + transform.shape());
    if (!(alpha >= 0.0)) throw ArgumentError("head alpha must be nonnegative");
  }

  void validate_against(const Network& net) const {
    validate();
    if (attach_layer == 0 || attach_layer > net.depth())
      throw ArgumentError("attach layer " + std::to_string(attach_layer) +
                          " outside [1, " + std::to_string(net.depth()) + "]");
    if (net.width(attach_layer) != width())
      throw ShapeError("attach layer " + std::to_string(attach_layer) + " has width " +
                       std::to_string(net.width(attach_layer)) + " but head expects " +
                       std::to_string(width()));
  }

  friend bool operator==(const LabelConsistencyHead&,
                         const LabelConsistencyHead&) = default;
};

/// Head with an identity transform.
inline LabelConsistencyHead make_head(std::size_t attach_layer, NeuronAllocation alloc,
                                      double alpha) {
  LabelConsistencyHead head;
  head.attach_layer = attach_layer;
  head.transform = Matrix::identity(alloc.num_neurons());
  head.alpha = alpha;
  head.allocation = std::move(alloc);
  head.validate();
  return head;
}

namespace detail {
inline void check_head_inputs(const Matrix& x_l, const Matrix& q,
                              const LabelConsistencyHead& head, const char* op) {
  if (x_l.rows() != head.width() || q.rows() != head.width() ||
      x_l.cols() != q.cols()) {
    throw ShapeError(std::string(op) + ": representation " + x_l.shape() + ", codes " +
                     q.shape() + ", transform " + head.transform.shape());
  }
  if (x_l.cols() == 0) throw ShapeError(std::string(op) + ": empty batch");
}

// A x - q
inline Matrix residual(const Matrix& x_l, const Matrix& q, const LabelConsistencyHead& head) {
  return matmul(head.transform, x_l) - q;
}
}  // namespace detail

/// Batch mean of ||q_b - A x_b||^2. Does not include alpha.
inline double representation_error(const Matrix& x_l, const Matrix& q,
                                   const LabelConsistencyHead& head) {
  detail::check_head_inputs(x_l, q, head, "representation_error");
  return sq_l2(detail::residual(x_l, q, head)) / static_cast<double>(x_l.cols());
}

/// Gradient of alpha * L_r with respect to x^(l), in the shape of x^(l).
inline Matrix grad_x(const Matrix& x_l, const Matrix& q, const LabelConsistencyHead& head) {
  detail::check_head_inputs(x_l, q, head, "grad_x");
  const double s = 2.0 * head.alpha / static_cast<double>(x_l.cols());
  return scale(s, matmul(transpose(head.transform), detail::residual(x_l, q, head)));
}

/// Gradient of alpha * L_r with respect to A.
inline Matrix grad_A(const Matrix& x_l, const Matrix& q, const LabelConsistencyHead& head) {
  detail::check_head_inputs(x_l, q, head, "grad_A");
  const double s = 2.0 * head.alpha / static_cast<double>(x_l.cols());
  return scale(s, matmul(detail::residual(x_l, q, head), transpose(x_l)));
}

inline double combined_loss(double lc, double lr, double alpha) { return lc + alpha * lr; }

}  // namespace lcnn

#endif  // LCNN_LABEL_CONSISTENCY_HPP
