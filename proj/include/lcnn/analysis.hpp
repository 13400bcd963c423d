#ifndef LCNN_ANALYSIS_HPP
#define LCNN_ANALYSIS_HPP

// Representation diagnostics for a hidden layer:
//  - per class, the mean representation and the Shannon entropy (bits) of
//    that mean after L1 normalisation; lower entropy means the class
//    concentrates its activation on fewer neurons;
//  - per neuron, the distribution of its mean activation across classes and
//    the peakedness (largest probability) of that distribution.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "lcnn/data.hpp"
#include "lcnn/error.hpp"
#include "lcnn/label_consistency.hpp"
#include "lcnn/nn.hpp"
#include "lcnn/tensor.hpp"

namespace lcnn {

struct ClassProfile {
  int class_id = 0;
  std::size_t count = 0;
  std::vector<double> mean_representation;
  double entropy_bits = 0.0;
  bool empty = false;      // no samples of this class
  bool zero_mass = false;  // mean is all zero after clamping; entropy reported as 0

  friend bool operator==(const ClassProfile&, const ClassProfile&) = default;
};

struct NeuronProfile {
  std::size_t neuron_id = 0;
  int owner_class = 0;
  std::vector<double> class_distribution;
  double peakedness = 0.0;
  bool dead = false;  // never activates; distribution left all zero

  friend bool operator==(const NeuronProfile&, const NeuronProfile&) = default;
};

/// Shannon entropy in bits of `weights` after L1 normalisation. Entries must
/// be nonnegative and sum to a positive value.
inline double entropy_bits(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ArgumentError("entropy_bits: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw ArgumentError("entropy_bits: zero total mass");
  double h = 0.0;
  for (double w : weights) {
    if (w <= 0.0) continue;
    const double p = w / total;
    h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

inline std::vector<ClassProfile> class_profiles(const Matrix& representations,
                                                std::span<const int> labels,
                                                std::size_t num_classes,
                                                bool clamp_negative = true) {
  if (representations.cols() != labels.size())
    throw ShapeError("class_profiles: " + std::to_string(labels.size()) +
                     " labels for representations " + representations.shape());
  check_labels(labels, num_classes, "class_profiles");
  const std::size_t dim = representations.rows();

  std::vector<ClassProfile> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    out[c].class_id = static_cast<int>(c);
    out[c].mean_representation.assign(dim, 0.0);
  }
  for (std::size_t b = 0; b < labels.size(); ++b) {
    ClassProfile& p = out[labels[b]];
    ++p.count;
    for (std::size_t j = 0; j < dim; ++j) p.mean_representation[j] += representations(j, b);
  }
  for (ClassProfile& p : out) {
    if (p.count == 0) {
      p.empty = true;
      continue;
    }
    for (double& v : p.mean_representation) v /= static_cast<double>(p.count);
    std::vector<double> mass = p.mean_representation;
    for (double& v : mass) {
      if (v < 0.0) {
        if (!clamp_negative)
          throw ArgumentError("class_profiles: negative mean activation for class " +
                              std::to_string(p.class_id) + " with clamping disabled");
        v = 0.0;
      }
    }
    if (std::all_of(mass.begin(), mass.end(), [](double v) { return v == 0.0; })) {
      p.zero_mass = true;
      continue;
    }
    p.entropy_bits = entropy_bits(mass);
  }
  return out;
}

/// Per neuron, the L1-normalised vector of per-class mean activations
/// (negative activations clamped to zero).
inline std::vector<NeuronProfile> neuron_profiles(const Matrix& representations,
                                                  std::span<const int> labels,
                                                  const NeuronAllocation& alloc) {
  if (representations.cols() != labels.size())
    throw ShapeError("neuron_profiles: " + std::to_string(labels.size()) +
                     " labels for representations " + representations.shape());
  if (representations.rows() != alloc.num_neurons())
    throw ShapeError("neuron_profiles: representations have " +
                     std::to_string(representations.rows()) + " neurons, allocation " +
                     std::to_string(alloc.num_neurons()));
  const std::size_t m = alloc.num_classes;
  check_labels(labels, m, "neuron_profiles");

  std::vector<std::size_t> counts(m, 0);
  for (int y : labels) ++counts[y];

  std::vector<NeuronProfile> out(alloc.num_neurons());
  for (std::size_t j = 0; j < alloc.num_neurons(); ++j) {
    NeuronProfile& p = out[j];
    p.neuron_id = j;
    p.owner_class = alloc.owner[j];
    p.class_distribution.assign(m, 0.0);
    for (std::size_t b = 0; b < labels.size(); ++b)
      p.class_distribution[labels[b]] += std::max(representations(j, b), 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      if (counts[c] > 0) p.class_distribution[c] /= static_cast<double>(counts[c]);
      total += p.class_distribution[c];
    }
    if (!(total > 0.0)) {
      p.dead = true;
      continue;
    }
    for (double& v : p.class_distribution) v /= total;
    p.peakedness = *std::max_element(p.class_distribution.begin(), p.class_distribution.end());
  }
  return out;
}

/// Mean entropy over non-empty, non-degenerate classes.
inline double mean_entropy(std::span<const ClassProfile> profiles) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : profiles)
    if (!p.empty && !p.zero_mass) {
      sum += p.entropy_bits;
      ++n;
    }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Mean peakedness over live neurons.
inline double mean_peakedness(std::span<const NeuronProfile> profiles) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : profiles)
    if (!p.dead) {
      sum += p.peakedness;
      ++n;
    }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// Report files. Doubles use shortest round-trip formatting so a parsed
// report reproduces the profiles exactly.
//
//   class report:  class_id,count,empty,zero_mass,entropy_bits,mean_0..mean_{N-1}
//   neuron report: neuron_id,owner_class,dead,peakedness,p_0..p_{m-1}

inline void export_class_report(std::span<const ClassProfile> profiles,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write class report '" + path + "'");
  const std::size_t dim = profiles.empty() ? 0 : profiles.front().mean_representation.size();
  out << "class_id,count,empty,zero_mass,entropy_bits";
  for (std::size_t j = 0; j < dim; ++j) out << ",mean_" << j;
  out << '\n';
  for (const auto& p : profiles) {
    out << p.class_id << ',' << p.count << ',' << p.empty << ',' << p.zero_mass << ','
        << detail::format_double(p.entropy_bits);
    for (double v : p.mean_representation) out << ',' << detail::format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void export_neuron_report(std::span<const NeuronProfile> profiles,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write neuron report '" + path + "'");
  const std::size_t m = profiles.empty() ? 0 : profiles.front().class_distribution.size();
  out << "neuron_id,owner_class,dead,peakedness";
  for (std::size_t c = 0; c < m; ++c) out << ",p_" << c;
  out << '\n';
  for (const auto& p : profiles) {
    out << p.neuron_id << ',' << p.owner_class << ',' << p.dead << ','
        << detail::format_double(p.peakedness);
    for (double v : p.class_distribution) out << ',' << detail::format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

namespace detail {
inline std::vector<std::vector<std::string>> read_csv_body(const std::string& path,
                                                           std::size_t fixed_cols) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing header");
  const std::size_t ncols = split_csv_line(line).size();
  if (ncols < fixed_cols) throw ParseError(path + ": malformed header");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != ncols)
      throw ParseError(path + ":" + std::to_string(ln) + ": expected " +
                       std::to_string(ncols) + " cells");
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline double report_double(const std::string& s, const std::string& path) {
  auto v = parse_double(s);
  if (!v) throw ParseError(path + ": bad number '" + s + "'");
  return *v;
}

inline long long report_int(const std::string& s, const std::string& path) {
  auto v = parse_int(s);
  if (!v) throw ParseError(path + ": bad integer '" + s + "'");
  return *v;
}
}  // namespace detail

inline std::vector<ClassProfile> read_class_report(const std::string& path) {
  std::vector<ClassProfile> out;
  for (const auto& row : detail::read_csv_body(path, 5)) {
    ClassProfile p;
    p.class_id = static_cast<int>(detail::report_int(row[0], path));
    p.count = static_cast<std::size_t>(detail::report_int(row[1], path));
    p.empty = detail::report_int(row[2], path) != 0;
    p.zero_mass = detail::report_int(row[3], path) != 0;
    p.entropy_bits = detail::report_double(row[4], path);
    for (std::size_t j = 5; j < row.size(); ++j)
      p.mean_representation.push_back(detail::report_double(row[j], path));
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<NeuronProfile> read_neuron_report(const std::string& path) {
  std::vector<NeuronProfile> out;
  for (const auto& row : detail::read_csv_body(path, 4)) {
    NeuronProfile p;
    p.neuron_id = static_cast<std::size_t>(detail::report_int(row[0], path));
    p.owner_class = static_cast<int>(detail::report_int(row[1], path));
    p.dead = detail::report_int(row[2], path) != 0;
    p.peakedness = detail::report_double(row[3], path);
    for (std::size_t c = 4; c < row.size(); ++c)
      p.class_distribution.push_back(detail::report_double(row[c], path));
    out.push_back(std::move(p));
  }
  return out;
}

inline void export_summary(std::span<const ClassProfile> classes,
                           std::span<const NeuronProfile> neurons, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write summary '" + path + "'");
  out.precision(17);
  out << "classes=" << classes.size() << '\n'
      << "neurons=" << neurons.size() << '\n'
      << "mean_entropy_bits=" << mean_entropy(classes) << '\n'
      << "mean_peakedness=" << mean_peakedness(neurons) << '\n'
      << "dead_neurons="
      << std::count_if(neurons.begin(), neurons.end(), [](const auto& p) { return p.dead; })
      << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace lcnn

#endif  // LCNN_ANALYSIS_HPP
