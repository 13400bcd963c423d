#ifndef LCNN_GRADCHECK_HPP
#define LCNN_GRADCHECK_HPP

// End-to-end check of the analytic gradients of L = L_c + alpha * L_r
// against central finite differences, for every weight, bias and the head
// transform, at randomly drawn networks and batches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lcnn/error.hpp"
#include "lcnn/label_consistency.hpp"
#include "lcnn/nn.hpp"
#include "lcnn/tensor.hpp"

namespace lcnn {

struct GradcheckOptions {
  std::vector<std::size_t> widths = {6, 9, 8, 4};  // input first, classes last
  std::size_t attach_layer = 2;
  std::size_t batch = 5;
  double alpha = 0.5;
  double step = 1e-6;
  double tolerance = 1e-5;
  double kink_margin = 1e-4;  // min |pre-activation| of a ReLU at a check point
  std::size_t points = 20;
  std::uint64_t seed = 7;
  bool flip_head_sign = false;  // negates both head gradient terms
};

struct BlockError {
  std::string name;
  std::size_t entries = 0;
  double max_rel_err = 0.0;
};

struct GradcheckReport {
  std::vector<BlockError> blocks;
  double max_rel_err = 0.0;
  bool passed = false;
  std::size_t points = 0;
};

/// A network, head and labelled batch at which gradients are compared.
struct GradcheckPoint {
  Network net;
  LabelConsistencyHead head;
  Matrix x;
  std::vector<int> labels;
};

inline double total_loss(const GradcheckPoint& p) {
  const ForwardTrace t = forward(p.net, p.x);
  const Matrix q = build_ideal_codes(p.labels, p.head.allocation);
  return combined_loss(softmax_xent(t.output(), p.labels).loss,
                       representation_error(t.activations[p.head.attach_layer], q, p.head),
                       p.head.alpha);
}

inline bool clear_of_kinks(const GradcheckPoint& p, double margin) {
  const ForwardTrace t = forward(p.net, p.x);
  for (std::size_t i = 0; i < p.net.depth(); ++i) {
    if (p.net.layer(i).activation != Activation::ReLU) continue;
    for (double z : t.pre_activations[i].data())
      if (std::abs(z) < margin) return false;
  }
  return true;
}

/// Draws a random check point; inputs are redrawn until every ReLU
/// pre-activation is at least `kink_margin` away from zero.
inline GradcheckPoint random_point(const GradcheckOptions& opt, std::uint64_t seed) {
  if (opt.widths.size() < 2) throw ArgumentError("gradcheck: need at least two widths");
  const std::size_t n = opt.widths.size() - 1;
  if (opt.attach_layer == 0 || opt.attach_layer > n)
    throw ArgumentError("gradcheck: attach layer outside [1, " + std::to_string(n) + "]");
  const std::size_t m = opt.widths.back();
  const std::size_t nl = opt.widths[opt.attach_layer];
  if (nl < m) throw ArgumentError("gradcheck: attach layer narrower than class count");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(m) - 1);

  GradcheckPoint p;
  const std::vector<std::size_t> layer_widths(opt.widths.begin() + 1, opt.widths.end());
  p.net = make_network(opt.widths.front(), layer_widths, rng());
  for (Layer& layer : p.net.layers())
    for (double& b : layer.bias.data()) b = 0.2 * u(rng);

  std::vector<int> priority(m);
  for (std::size_t c = 0; c < m; ++c) priority[c] = static_cast<int>(c);
  std::shuffle(priority.begin(), priority.end(), rng);
  p.head = make_head(opt.attach_layer, allocate_neurons(nl, m, priority), opt.alpha);
  for (double& a : p.head.transform.data()) a += 0.3 * u(rng);

  p.labels.resize(opt.batch);
  for (int& y : p.labels) y = cls(rng);
  p.x = Matrix(opt.widths.front(), opt.batch);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (double& v : p.x.data()) v = 2.0 * u(rng);
    if (clear_of_kinks(p, opt.kink_margin)) return p;
  }
  throw NumericError("gradcheck: could not draw a point clear of ReLU kinks");
}

struct AnalyticGradients {
  Gradients net;
  Matrix transform;
};

inline AnalyticGradients analytic_gradients(const GradcheckPoint& p, bool flip_head_sign) {
  const ForwardTrace t = forward(p.net, p.x);
  const Matrix q = build_ideal_codes(p.labels, p.head.allocation);
  const Matrix& x_l = t.activations[p.head.attach_layer];
  const double sign = flip_head_sign ? -1.0 : 1.0;
  const XentResult xent = softmax_xent(t.output(), p.labels);
  HiddenGrad extra{p.head.attach_layer, scale(sign, grad_x(x_l, q, p.head))};
  return {backward(p.net, t, xent.grad, extra), scale(sign, grad_A(x_l, q, p.head))};
}

namespace detail {
// Central difference on each entry of `param`, which must alias into `p`.
inline double compare_block(GradcheckPoint& p, Matrix& param, const Matrix& analytic,
                            double step) {
  double worst = 0.0;
  auto values = param.data();
  auto expected = analytic.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = total_loss(p);
    values[i] = saved - step;
    const double down = total_loss(p);
    values[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(expected[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}
}  // namespace detail

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  GradcheckReport report;
  const std::size_t n = opt.widths.size() - 1;
  for (std::size_t i = 1; i <= n; ++i) {
    report.blocks.push_back({"W(" + std::to_string(i) + ")", 0, 0.0});
    report.blocks.push_back({"bias(" + std::to_string(i) + ")", 0, 0.0});
  }
  report.blocks.push_back({"A(" + std::to_string(opt.attach_layer) + ")", 0, 0.0});

  std::mt19937_64 seeds(opt.seed);
  for (std::size_t k = 0; k < opt.points; ++k) {
    GradcheckPoint p = random_point(opt, seeds());
    const AnalyticGradients g = analytic_gradients(p, opt.flip_head_sign);
    for (std::size_t i = 0; i < n; ++i) {
      Layer& layer = p.net.layers()[i];
      auto& wb = report.blocks[2 * i];
      auto& bb = report.blocks[2 * i + 1];
      wb.entries += layer.weight.size();
      bb.entries += layer.bias.size();
      wb.max_rel_err = std::max(wb.max_rel_err,
                                detail::compare_block(p, layer.weight, g.net.weight[i], opt.step));
      bb.max_rel_err = std::max(bb.max_rel_err,
                                detail::compare_block(p, layer.bias, g.net.bias[i], opt.step));
    }
    auto& ab = report.blocks.back();
    ab.entries += p.head.transform.size();
    ab.max_rel_err = std::max(ab.max_rel_err,
                              detail::compare_block(p, p.head.transform, g.transform, opt.step));
  }
  report.points = opt.points;
  for (const auto& b : report.blocks) report.max_rel_err = std::max(report.max_rel_err, b.max_rel_err);
  report.passed = report.max_rel_err <= opt.tolerance;
  return report;
}

}  // namespace lcnn

#endif  // LCNN_GRADCHECK_HPP
