#ifndef LCNN_CLASSIFY_HPP
#define LCNN_CLASSIFY_HPP

// Two classification schemes: argmax over the network's output scores, and
// k-NN over transformed hidden representations A x^(l). Also converts k-NN
// neighbourhoods into class probabilities with a Gaussian kernel.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcnn/error.hpp"
#include "lcnn/label_consistency.hpp"
#include "lcnn/nn.hpp"
#include "lcnn/tensor.hpp"

namespace lcnn {

/// Per column, index of the largest entry; ties go to the lowest index.
inline std::vector<int> argmax_columns(const Matrix& scores) {
  std::vector<int> out(scores.cols(), 0);
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < scores.rows(); ++r)
      if (scores(r, c) > scores(best, c)) best = r;
    out[c] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> predict_argmax(const Network& net, const Matrix& x) {
  return argmax_columns(forward(net, x).output());
}

/// A x^(l) for every column of x.
inline Matrix embed(const Network& net, const LabelConsistencyHead& head, const Matrix& x) {
  head.validate_against(net);
  const ForwardTrace trace = forward(net, x);
  return matmul(head.transform, trace.activations[head.attach_layer]);
}

struct ReferenceBank {
  Matrix embeddings;  // N_l x num_train
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

inline ReferenceBank make_bank(Matrix embeddings, std::vector<int> labels,
                               std::size_t num_classes) {
  if (embeddings.cols() != labels.size())
    throw ShapeError("reference bank: " + std::to_string(labels.size()) +
                     " labels for embeddings " + embeddings.shape());
  check_labels(labels, num_classes, "reference bank");
  return {std::move(embeddings), std::move(labels), num_classes};
}

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

namespace detail {
inline void check_knn_args(const ReferenceBank& bank, std::size_t query_rows,
                           std::size_t k) {
  if (bank.size() == 0) throw ArgumentError("k-NN: empty reference bank");
  if (k == 0 || k > bank.size())
    throw ArgumentError("k-NN: k = " + std::to_string(k) + " outside [1, " +
                        std::to_string(bank.size()) + "]");
  if (query_rows != bank.embeddings.rows())
    throw ShapeError("k-NN: query has " + std::to_string(query_rows) +
                     " rows but bank embeddings have " +
                     std::to_string(bank.embeddings.rows()));
}
}  // namespace detail

/// The k nearest bank columns to `query` by Euclidean distance, nearest
/// first; equal distances are ordered by bank index.
inline std::vector<Neighbor> nearest_neighbors(const ReferenceBank& bank,
                                               std::span<const double> query,
                                               std::size_t k) {
  detail::check_knn_args(bank, query.size(), k);
  const Matrix& e = bank.embeddings;
  std::vector<double> d2(bank.size(), 0.0);
  for (std::size_t r = 0; r < e.rows(); ++r) {
    const auto row = e.row(r);
    const double q = query[r];
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double d = row[j] - q;
      d2[j] += d * d;
    }
  }
  std::vector<std::size_t> order(bank.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      return d2[a] < d2[b] || (d2[a] == d2[b] && a < b);
                    });
  std::vector<Neighbor> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = {order[i], std::sqrt(d2[order[i]])};
  return out;
}

/// Majority label among the k nearest neighbours; vote ties go to the
/// smallest class index.
inline std::vector<int> knn_predict(const ReferenceBank& bank, const Matrix& query,
                                    std::size_t k) {
  detail::check_knn_args(bank, query.rows(), k);
  std::vector<int> out(query.cols());
  std::vector<std::size_t> votes(bank.num_classes);
  for (std::size_t c = 0; c < query.cols(); ++c) {
    const auto q = query.col(c);
    std::fill(votes.begin(), votes.end(), 0);
    for (const Neighbor& n : nearest_neighbors(bank, q, k)) ++votes[bank.labels[n.index]];
    out[c] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

inline constexpr double kDefaultProbabilityFloor = 1e-6;

/// Class probabilities for one query. Each class seen among the k
/// neighbours is weighted by exp(-d_c^2 / (2 bandwidth^2)), d_c being the
/// distance to its nearest neighbour of that class; unseen classes get
/// `floor`. The weights are L1-normalised. Without an explicit bandwidth the
/// mean neighbour distance of the query is used.
inline std::vector<double> knn_probabilities(const ReferenceBank& bank,
                                             std::span<const double> query, std::size_t k,
                                             std::optional<double> bandwidth = std::nullopt,
                                             double floor = kDefaultProbabilityFloor) {
  if (bandwidth && !(*bandwidth > 0.0))
    throw ArgumentError("knn_probabilities: bandwidth must be positive");
  if (!(floor >= 0.0)) throw ArgumentError("knn_probabilities: floor must be >= 0");
  const auto neighbors = nearest_neighbors(bank, query, k);

  double sigma = 0.0;
  if (bandwidth) {
    sigma = *bandwidth;
  } else {
    for (const Neighbor& n : neighbors) sigma += n.distance;
    sigma /= static_cast<double>(neighbors.size());
    if (!(sigma > 0.0)) sigma = 1.0;  // every neighbour coincides with the query
  }

  std::vector<std::optional<double>> class_dist(bank.num_classes);
  for (const Neighbor& n : neighbors) {
    auto& d = class_dist[bank.labels[n.index]];
    if (!d || n.distance < *d) d = n.distance;
  }
  std::vector<double> p(bank.num_classes, floor);
  for (std::size_t c = 0; c < p.size(); ++c)
    if (class_dist[c]) p[c] = std::exp(-(*class_dist[c]) * (*class_dist[c]) / (2 * sigma * sigma));

  double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(total > 0.0)) {
    // Every kernel weight underflowed and floor is zero: fall back to the
    // class of the nearest neighbour.
    std::fill(p.begin(), p.end(), 0.0);
    p[bank.labels[neighbors.front().index]] = 1.0;
    total = 1.0;
  }
  for (double& v : p) v /= total;
  return p;
}

struct EvalMetrics {
  double accuracy = 0.0;
  std::vector<double> class_accuracy;              // NaN-free; 0 for absent classes
  std::vector<std::size_t> class_count;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

  friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

inline EvalMetrics compute_metrics(std::span<const int> predicted, std::span<const int> truth,
                                   std::size_t num_classes) {
  if (predicted.size() != truth.size())
    throw ShapeError("compute_metrics: prediction and label counts differ");
  check_labels(predicted, num_classes, "compute_metrics");
  check_labels(truth, num_classes, "compute_metrics");
  EvalMetrics m;
  m.class_accuracy.assign(num_classes, 0.0);
  m.class_count.assign(num_classes, 0);
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.confusion[truth[i]][predicted[i]];
    ++m.class_count[truth[i]];
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = truth.empty() ? 0.0
                             : static_cast<double>(correct) / static_cast<double>(truth.size());
  for (std::size_t c = 0; c < num_classes; ++c)
    if (m.class_count[c] > 0)
      m.class_accuracy[c] = static_cast<double>(m.confusion[c][c]) /
                            static_cast<double>(m.class_count[c]);
  return m;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw ShapeError("accuracy: prediction and label counts differ");
  if (truth.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

inline void write_predictions_csv(const std::string& path, std::span<const int> predicted,
                                  std::span<const int> truth) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions '" + path + "'");
  out << "sample_id,predicted,true,correct\n";
  for (std::size_t i = 0; i < predicted.size(); ++i)
    out << i << ',' << predicted[i] << ',' << truth[i] << ','
        << (predicted[i] == truth[i] ? 1 : 0) << '\n';
}

inline void write_probabilities_csv(const std::string& path,
                                    const std::vector<std::vector<double>>& probs,
                                    std::size_t num_classes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write probabilities '" + path + "'");
  out.precision(17);
  out << "sample_id";
  for (std::size_t c = 0; c < num_classes; ++c) out << ",p" << c;
  out << '\n';
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out << i;
    for (double v : probs[i]) out << ',' << v;
    out << '\n';
  }
}

/// Rows `kind,true,predicted,value` with kind in {accuracy, class_accuracy,
/// confusion}; unused key cells are left empty.
inline void write_metrics_csv(const std::string& path, const EvalMetrics& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics '" + path + "'");
  out.precision(17);
  out << "kind,true,predicted,value\n";
  out << "accuracy,,," << m.accuracy << '\n';
  for (std::size_t c = 0; c < m.class_accuracy.size(); ++c)
    out << "class_accuracy," << c << ",," << m.class_accuracy[c] << '\n';
  for (std::size_t t = 0; t < m.confusion.size(); ++t)
    for (std::size_t p = 0; p < m.confusion[t].size(); ++p)
      out << "confusion," << t << ',' << p << ',' << m.confusion[t][p] << '\n';
}

}  // namespace lcnn

#endif  // LCNN_CLASSIFY_HPP
