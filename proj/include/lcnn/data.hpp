#ifndef LCNN_DATA_HPP
#define LCNN_DATA_HPP

// Labeled datasets: synthetic cluster generator, CSV import/export,
// standardization and the class-priority ranking used for neuron allocation.
//
// CSV layout: comma separated, optional header row. One column holds integer
// class labels (selected by index or header name). When the header names a
// column "split", its cells must be "train" or "test"; otherwise every row is
// a training row. All remaining columns are numeric features.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lcnn/error.hpp"
#include "lcnn/tensor.hpp"

namespace lcnn {

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct Dataset {
  Matrix features;  // dim x num_samples
  std::vector<int> labels;
  std::vector<Split> split;
  std::size_t num_classes = 0;

  std::size_t dim() const noexcept { return features.rows(); }
  std::size_t size() const noexcept { return labels.size(); }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }

  /// Samples of one split, in original order.
  Dataset subset(Split s) const {
    const auto idx = indices(s);
    Dataset out;
    out.features = gather_columns(features, idx);
    out.num_classes = num_classes;
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) out.labels.push_back(labels[i]);
    out.split.assign(idx.size(), s);
    return out;
  }

  void validate() const {
    if (features.cols() != labels.size() || split.size() != labels.size())
      throw ShapeError("dataset: " + std::to_string(labels.size()) + " labels, " +
                       std::to_string(split.size()) + " split tags, features " +
                       features.shape());
    std::vector<bool> present(num_classes, false);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
        throw ArgumentError("dataset: label out of range at sample " + std::to_string(i));
      if (split[i] == Split::Train) present[labels[i]] = true;
    }
    for (std::size_t c = 0; c < num_classes; ++c)
      if (!present[c])
        throw ArgumentError("dataset: class " + std::to_string(c) +
                            " has no training samples");
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Gaussian clusters, one per class. Centers are standard-normal draws
/// rescaled so the closest pair of centers is exactly distance 1 apart.
/// Class c has per-dimension standard deviation spread * (1 + c / m), so
/// intra-class variation grows with the class index. The last
/// round(per_class * test_fraction) samples of every class are tagged Test.
inline Dataset gen_synthetic_clusters(std::size_t num_classes, std::size_t dim,
                                      std::size_t per_class, double spread,
                                      std::uint64_t seed, double test_fraction = 0.25) {
  if (num_classes < 2) throw ArgumentError("gen_synthetic_clusters: need m >= 2");
  if (dim < 2) throw ArgumentError("gen_synthetic_clusters: need dim >= 2");
  if (per_class == 0) throw ArgumentError("gen_synthetic_clusters: need per_class >= 1");
  if (!(spread >= 0.0)) throw ArgumentError("gen_synthetic_clusters: spread must be >= 0");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ArgumentError("gen_synthetic_clusters: test fraction must lie in [0, 1)");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix centers(dim, num_classes);
  for (double& v : centers.data()) v = normal(rng);
  double min_dist = INFINITY;
  for (std::size_t a = 0; a < num_classes; ++a)
    for (std::size_t b = a + 1; b < num_classes; ++b) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = centers(k, a) - centers(k, b);
        d2 += d * d;
      }
      min_dist = std::min(min_dist, std::sqrt(d2));
    }
  for (double& v : centers.data()) v /= min_dist;

  const auto n_test = static_cast<std::size_t>(
      std::lround(static_cast<double>(per_class) * test_fraction));
  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = Matrix(dim, num_classes * per_class);
  ds.labels.reserve(num_classes * per_class);
  ds.split.reserve(num_classes * per_class);
  std::size_t col = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double sd =
        spread * (1.0 + static_cast<double>(c) / static_cast<double>(num_classes));
    for (std::size_t s = 0; s < per_class; ++s, ++col) {
      for (std::size_t k = 0; k < dim; ++k)
        ds.features(k, col) = centers(k, c) + sd * normal(rng);
      ds.labels.push_back(static_cast<int>(c));
      ds.split.push_back(s + n_test >= per_class ? Split::Test : Split::Train);
    }
  }
  return ds;
}

/// Trace of each class's feature covariance over the training split
/// (population normalization).
inline std::vector<double> class_covariance_traces(const Dataset& data) {
  const std::size_t dim = data.dim();
  std::vector<double> traces(data.num_classes, 0.0);
  std::vector<std::size_t> counts(data.num_classes, 0);
  Matrix sums(dim, data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.split[i] != Split::Train) continue;
    const auto c = static_cast<std::size_t>(data.labels[i]);
    ++counts[c];
    for (std::size_t k = 0; k < dim; ++k) sums(k, c) += data.features(k, i);
  }
  for (std::size_t c = 0; c < data.num_classes; ++c)
    if (counts[c] == 0)
      throw ArgumentError("class_priority: class " + std::to_string(c) +
                          " has no training samples");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.split[i] != Split::Train) continue;
    const auto c = static_cast<std::size_t>(data.labels[i]);
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = data.features(k, i) - sums(k, c) / static_cast<double>(counts[c]);
      traces[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < data.num_classes; ++c)
    traces[c] /= static_cast<double>(counts[c]);
  return traces;
}

/// Classes ordered by descending intra-class variation; ties by class index.
inline std::vector<int> class_priority(const Dataset& data) {
  const auto traces = class_covariance_traces(data);
  std::vector<int> order(data.num_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return traces[a] > traces[b]; });
  return order;
}

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;  // 0 marks a constant feature, mapped to 0
};

inline constexpr double kStdFloor = 1e-12;

/// Standardizes every feature with the training split's mean and standard
/// deviation; constant features become zero.
inline Standardization standardize(Dataset& data) {
  const std::size_t dim = data.dim();
  const auto train = data.indices(Split::Train);
  if (train.empty()) throw ArgumentError("standardize: no training samples");
  Standardization st{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  for (std::size_t k = 0; k < dim; ++k) {
    double mean = 0.0;
    for (std::size_t i : train) mean += data.features(k, i);
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (std::size_t i : train) {
      const double d = data.features(k, i) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(train.size()));
    st.mean[k] = mean;
    st.stddev[k] = sd < kStdFloor ? 0.0 : sd;
    for (double& v : data.features.row(k))
      v = st.stddev[k] == 0.0 ? 0.0 : (v - mean) / st.stddev[k];
  }
  return st;
}

/// FNV-1a over labels, split tags and the bit patterns of the features.
inline std::uint64_t fingerprint(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(data.dim());
  mix(data.size());
  mix(data.num_classes);
  for (double v : data.features.data()) mix(std::bit_cast<std::uint64_t>(v));
  for (int l : data.labels) mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(l)));
  for (Split s : data.split) mix(static_cast<std::uint64_t>(s));
  return h;
}

namespace detail {
inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos
                                                ? std::string_view::npos
                                                : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}
}  // namespace detail

/// Label column selector: zero-based index or header name.
using LabelColumn = std::variant<std::size_t, std::string>;

struct CsvOptions {
  bool standardize = true;
};

inline Dataset load_csv(const std::string& path, const LabelColumn& label_column,
                        const CsvOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  for (std::size_t ln = 1; std::getline(in, line); ++ln) {
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split_csv_line(line));
    line_numbers.push_back(ln);
  }
  if (rows.empty()) throw ParseError(path + ": empty file");

  bool has_header = false;
  for (const auto& cell : rows.front())
    if (!detail::parse_double(cell)) has_header = true;

  const std::size_t ncols = rows.front().size();
  std::optional<std::size_t> split_col;
  std::size_t label_col = 0;
  if (has_header) {
    const auto& header = rows.front();
    for (std::size_t j = 0; j < ncols; ++j)
      if (header[j] == "split") split_col = j;
  }
  if (const auto* idx = std::get_if<std::size_t>(&label_column)) {
    label_col = *idx;
  } else {
    const auto& name = std::get<std::string>(label_column);
    if (!has_header) throw ParseError(path + ": label column '" + name +
                                      "' given by name but file has no header");
    const auto& header = rows.front();
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw ParseError(path + ": no column named '" + name + "' in header");
    label_col = static_cast<std::size_t>(it - header.begin());
  }
  if (label_col >= ncols)
    throw ParseError(path + ": label column " + std::to_string(label_col) +
                     " out of range for " + std::to_string(ncols) + " columns");
  if (split_col && *split_col == label_col)
    throw ParseError(path + ": label column cannot be the split column");

  std::vector<std::size_t> feature_cols;
  for (std::size_t j = 0; j < ncols; ++j)
    if (j != label_col && (!split_col || j != *split_col)) feature_cols.push_back(j);
  if (feature_cols.empty()) throw ParseError(path + ": no feature columns");

  const std::size_t first = has_header ? 1 : 0;
  const std::size_t n = rows.size() - first;
  if (n == 0) throw ParseError(path + ": no data rows");

  Matrix features(feature_cols.size(), n);
  std::vector<long long> raw_labels(n);
  std::vector<Split> split(n, Split::Train);
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = path + ":" + std::to_string(line_numbers[r]);
    if (row.size() != ncols)
      throw ParseError(where + ": expected " + std::to_string(ncols) + " cells, found " +
                       std::to_string(row.size()));
    const std::size_t i = r - first;
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const auto v = detail::parse_double(row[feature_cols[k]]);
      if (!v || !std::isfinite(*v))
        throw ParseError(where + ": non-numeric cell '" + row[feature_cols[k]] +
                         "' in column " + std::to_string(feature_cols[k]));
      features(k, i) = *v;
    }
    const auto lab = detail::parse_int(row[label_col]);
    if (!lab) throw ParseError(where + ": label '" + row[label_col] + "' is not an integer");
    raw_labels[i] = *lab;
    if (split_col) {
      const auto& s = row[*split_col];
      if (s == "train") split[i] = Split::Train;
      else if (s == "test") split[i] = Split::Test;
      else throw ParseError(where + ": split must be 'train' or 'test', found '" + s + "'");
    }
  }

  std::map<long long, int> dense;
  for (std::size_t i = 0; i < n; ++i)
    if (split[i] == Split::Train) dense.emplace(raw_labels[i], 0);
  if (dense.empty()) throw ParseError(path + ": no training rows");
  int next = 0;
  for (auto& [raw, idx] : dense) idx = next++;

  Dataset ds;
  ds.features = std::move(features);
  ds.split = std::move(split);
  ds.num_classes = dense.size();
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = dense.find(raw_labels[i]);
    if (it == dense.end())
      throw ParseError(path + ":" + std::to_string(line_numbers[i + first]) +
                       ": test label " + std::to_string(raw_labels[i]) +
                       " never appears in the training split");
    ds.labels[i] = it->second;
  }
  if (opts.standardize) standardize(ds);
  return ds;
}

/// Writes `f0..f{d-1},label,split` with shortest round-trip formatting.
inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  for (std::size_t k = 0; k < data.dim(); ++k) out << 'f' << k << ',';
  out << "label,split\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data.dim(); ++k)
      out << detail::format_double(data.features(k, i)) << ',';
    out << data.labels[i] << ',' << (data.split[i] == Split::Test ? "test" : "train")
        << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace lcnn

#endif  // LCNN_DATA_HPP
