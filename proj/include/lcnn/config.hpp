#ifndef LCNN_CONFIG_HPP
#define LCNN_CONFIG_HPP

// Flat `key = value` run configuration. Blank lines and lines starting with
// '#' are ignored. Recognised keys:
//
//   mode           baseline | lcnn1 | lcnn2
//   alpha          weight of the representation error (LCNN-2)
//   lr             learning rate
//   momentum       classical momentum coefficient
//   weight_decay   L2 penalty folded into the update
//   lr_decay       step-decay factor
//   lr_decay_every epochs between decays (0 disables)
//   batch          mini-batch size
//   epochs         number of passes over the training split
//   seed           seeds initialisation and shuffling
//   attach_layer   supervised activation index; 0 means the last hidden layer
//   knn_k          neighbours used by the k-NN scheme
//   hidden         comma-separated hidden layer widths, e.g. 64,40

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lcnn/data.hpp"
#include "lcnn/error.hpp"
#include "lcnn/optim.hpp"

namespace lcnn {

struct RunConfig {
  TrainConfig train;
  std::vector<std::size_t> hidden = {64, 40};
  std::size_t attach_layer = 0;

  /// Attach index for a network with `hidden.size()` hidden layers.
  std::size_t resolved_attach_layer() const {
    const std::size_t l = attach_layer == 0 ? hidden.size() : attach_layer;
    if (l == 0 || l > hidden.size() + 1)
      throw ArgumentError("attach_layer " + std::to_string(l) + " outside [1, " +
                          std::to_string(hidden.size() + 1) + "]");
    return l;
  }
};

namespace detail {
inline std::size_t config_count(const std::string& key, const std::string& v) {
  auto n = parse_int(v);
  if (!n || *n < 0) throw ParseError("config key '" + key + "': expected a count, got '" + v + "'");
  return static_cast<std::size_t>(*n);
}

inline double config_real(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d) throw ParseError("config key '" + key + "': expected a number, got '" + v + "'");
  return *d;
}
}  // namespace detail

/// Applies one key/value pair; unknown keys are an error.
inline void apply_config_value(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::config_count;
  using detail::config_real;
  if (key == "mode") {
    auto m = parse_mode(value);
    if (!m) throw ParseError("config key 'mode': expected baseline, lcnn1 or lcnn2, got '" +
                             value + "'");
    cfg.train.mode = *m;
  } else if (key == "alpha") {
    cfg.train.alpha = config_real(key, value);
  } else if (key == "lr") {
    cfg.train.learning_rate = config_real(key, value);
  } else if (key == "momentum") {
    cfg.train.momentum = config_real(key, value);
  } else if (key == "weight_decay") {
    cfg.train.weight_decay = config_real(key, value);
  } else if (key == "lr_decay") {
    cfg.train.lr_decay_factor = config_real(key, value);
  } else if (key == "lr_decay_every") {
    cfg.train.lr_decay_every = config_count(key, value);
  } else if (key == "batch") {
    cfg.train.batch_size = config_count(key, value);
  } else if (key == "epochs") {
    cfg.train.epochs = config_count(key, value);
  } else if (key == "seed") {
    cfg.train.seed = config_count(key, value);
  } else if (key == "attach_layer") {
    cfg.attach_layer = config_count(key, value);
  } else if (key == "knn_k") {
    cfg.train.knn_k = config_count(key, value);
  } else if (key == "hidden") {
    cfg.hidden.clear();
    for (const auto& cell : detail::split_csv_line(value)) {
      const std::size_t w = config_count(key, cell);
      if (w == 0) throw ParseError("config key 'hidden': widths must be positive");
      cfg.hidden.push_back(w);
    }
    if (cfg.hidden.empty()) throw ParseError("config key 'hidden': need at least one width");
  } else {
    throw ParseError("unknown config key '" + key + "'");
  }
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
  RunConfig cfg;
  std::string line;
  for (std::size_t ln = 1; std::getline(in, line); ++ln) {
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(source + ":" + std::to_string(ln) + ": expected key = value");
    try {
      apply_config_value(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    } catch (const ParseError& e) {
      throw ParseError(source + ":" + std::to_string(ln) + ": " + e.what());
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

/// The config as `key=value` lines, parseable by parse_config.
inline std::string format_config(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "mode=" << to_string(cfg.train.mode) << '\n'
      << "alpha=" << cfg.train.alpha << '\n'
      << "lr=" << cfg.train.learning_rate << '\n'
      << "momentum=" << cfg.train.momentum << '\n'
      << "weight_decay=" << cfg.train.weight_decay << '\n'
      << "lr_decay=" << cfg.train.lr_decay_factor << '\n'
      << "lr_decay_every=" << cfg.train.lr_decay_every << '\n'
      << "batch=" << cfg.train.batch_size << '\n'
      << "epochs=" << cfg.train.epochs << '\n'
      << "seed=" << cfg.train.seed << '\n'
      << "attach_layer=" << cfg.attach_layer << '\n'
      << "knn_k=" << cfg.train.knn_k << '\n'
      << "hidden=";
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) out << (i ? "," : "") << cfg.hidden[i];
  out << '\n';
  return out.str();
}

}  // namespace lcnn

#endif  // LCNN_CONFIG_HPP
