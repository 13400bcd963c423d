// lcnn command-line front end.
//
//   lcnn gen-data  --out data.csv [--classes 10 --dim 32 --per-class 200 ...]
//   lcnn train     --data data.csv --out run/ [--config run.cfg] [--init-model m.bin]
//   lcnn eval      --model run/model.bin --data data.csv --scheme knn --k 5 --out metrics.csv
//   lcnn gradcheck [--seed 7 --sizes 6,9,8,4 --attach 2]
//   lcnn analyze   --model run/model.bin --data data.csv --out report/
//
// Failures print exactly one line, `error: <category>: <message>`, to stderr
// and exit nonzero.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lcnn/lcnn.hpp"

namespace fs = std::filesystem;
using namespace lcnn;

namespace {

struct DataArgs {
  std::string path;
  std::string label = "label";
  bool raw = false;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--data", d.path, "Dataset CSV")->required();
  cmd->add_option("--label", d.label, "Label column: header name or 0-based index");
  cmd->add_flag("--no-standardize", d.raw, "Use features as stored");
}

Dataset load_data(const DataArgs& d) {
  LabelColumn col = d.label;
  std::size_t idx = 0;
  const auto* end = d.label.data() + d.label.size();
  if (auto [p, ec] = std::from_chars(d.label.data(), end, idx); ec == std::errc{} && p == end)
    col = idx;
  return load_csv(d.path, col, {.standardize = !d.raw});
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ArgumentError("--split must be train or test, got '" + s + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const fs::path& dir, const char* name) { return (dir / name).string(); }

// --- gen-data --------------------------------------------------------------

struct GenArgs {
  std::size_t classes = 10, dim = 32, per_class = 200;
  double spread = 0.2, test_fraction = 0.25;
  std::uint64_t seed = 1000;
  std::string out;
};

void run_gen(const GenArgs& a) {
  const Dataset d =
      gen_synthetic_clusters(a.classes, a.dim, a.per_class, a.spread, a.seed, a.test_fraction);
  save_csv(d, a.out);
  std::cout << "wrote " << d.size() << " samples (" << d.indices(Split::Train).size()
            << " train) to " << a.out << '\n';
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  DataArgs data;
  std::string config, out, init_model;
  // flag overrides, applied after the config file in this order
  std::vector<std::pair<std::string, std::string>> overrides;
};

bool config_sets_key(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    const auto eq = t.find('=');
    if (!t.empty() && t.front() != '#' && eq != std::string::npos &&
        detail::trim(t.substr(0, eq)) == key)
      return true;
  }
  return false;
}

void run_train(const TrainArgs& a) {
  RunConfig cfg;
  bool alpha_explicit = false;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw IoError("cannot open config '" + a.config + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    std::istringstream body(ss.str());
    cfg = parse_config(body, a.config);
    alpha_explicit = config_sets_key(ss.str(), "alpha");
  }
  for (const auto& [key, value] : a.overrides) {
    try {
      apply_config_value(cfg, key, value);
    } catch (const ParseError& e) {
      std::string msg = e.what();
      const std::string prefix = "config key '" + key + "': ";
      if (msg.starts_with(prefix)) msg.erase(0, prefix.size());
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      throw ParseError(flag + ": " + msg);
    }
    alpha_explicit |= key == "alpha";
  }
  cfg.train.validate();
  if (cfg.train.mode == TrainMode::Baseline && alpha_explicit && cfg.train.alpha != 0.0)
    std::cerr << "warning: alpha is ignored in baseline mode; training with alpha = 0\n";

  const Dataset data = load_data(a.data);
  Network net;
  LabelConsistencyHead head;
  if (!a.init_model.empty()) {
    Model init = load_model(a.init_model);
    net = std::move(init.net);
    if (init.head) {
      head = std::move(*init.head);
    } else {
      const std::size_t l = net.depth() - 1;
      head = make_head(l, allocate_neurons(net.width(l), data.num_classes, class_priority(data)),
                       cfg.train.alpha);
    }
  } else {
    std::vector<std::size_t> widths = cfg.hidden;
    widths.push_back(data.num_classes);
    net = make_network(data.dim(), widths, cfg.train.seed);
    const std::size_t l = cfg.resolved_attach_layer();
    if (l < 1 || l > cfg.hidden.size())
      throw ArgumentError("attach_layer " + std::to_string(l) + " must lie in [1, " +
                          std::to_string(cfg.hidden.size()) + "]");
    head = make_head(l, allocate_neurons(net.width(l), data.num_classes, class_priority(data)),
                     cfg.train.alpha);
  }

  ensure_dir(a.out);
  const fs::path dir(a.out);
  save_model(join(dir, "init_model.bin"), net, &head);
  const TrainResult result = train(std::move(net), std::move(head), data, cfg.train);
  save_model(join(dir, "model.bin"), result.net, &result.head);
  write_record_csv(result.record, join(dir, "train_record.csv"));

  // final accuracies under the mode's own classification scheme
  const Dataset tr = data.subset(Split::Train);
  const ReferenceBank bank =
      make_bank(embed(result.net, result.head, tr.features), tr.labels, data.num_classes);
  auto acc = [&](Split s) {
    const Dataset part = data.subset(s);
    if (part.size() == 0) return std::nan("");
    return accuracy(predict_for_mode(result.net, result.head, cfg.train.mode, &bank,
                                     part.features, cfg.train.knn_k),
                    part.labels);
  };
  const auto& r = result.record;
  const auto conv = epochs_to_threshold(r, 0.1);

  std::ofstream m(join(dir, "manifest.txt"));
  if (!m) throw IoError("cannot write manifest in '" + a.out + "'");
  m.precision(17);
  m << "# config\n" << format_config(cfg) << "# run\n"
    << "mode=" << to_string(cfg.train.mode) << '\n'
    << "seed=" << cfg.train.seed << '\n'
    << "effective_alpha=" << effective_alpha(cfg.train) << '\n'
    << "attach_layer=" << result.head.attach_layer << '\n'
    << "dataset=" << a.data.path << '\n'
    << "dataset_fingerprint=" << std::hex << fingerprint(data) << std::dec << '\n'
    << "init_model=" << (a.init_model.empty() ? join(dir, "init_model.bin") : a.init_model)
    << '\n'
    << "model=" << join(dir, "model.bin") << '\n'
    << "record=" << join(dir, "train_record.csv") << '\n'
    << "# metrics\n"
    << "final_loss=" << r.loss.back() << '\n'
    << "final_train_err=" << r.train_err.back() << '\n'
    << "final_test_err=" << r.test_err.back() << '\n'
    << "train_accuracy=" << acc(Split::Train) << '\n'
    << "test_accuracy=" << acc(Split::Test) << '\n'
    << "epochs_to_0.1=" << (conv ? std::to_string(*conv) : "never") << '\n';
  if (!m) throw IoError("write failed for manifest in '" + a.out + "'");

  std::cout << to_string(cfg.train.mode) << ": " << r.epochs() << " epochs, train_err "
            << r.train_err.back() << ", test_err " << r.test_err.back() << '\n';
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  DataArgs data;
  std::string model, scheme = "argmax", split = "test", out, predictions, probabilities;
  std::size_t k = 5;
};

void run_eval(const EvalArgs& a) {
  const Model model = load_model(a.model);
  const Dataset data = load_data(a.data);
  if (model.net.input_dim() != data.dim())
    throw ShapeError("model expects " + std::to_string(model.net.input_dim()) +
                     " features but dataset has " + std::to_string(data.dim()));
  const Dataset part = data.subset(parse_split(a.split));
  if (part.size() == 0) throw ArgumentError("split '" + a.split + "' is empty");

  std::vector<int> pred;
  std::vector<std::vector<double>> probs;
  if (a.scheme == "argmax") {
    if (model.net.output_dim() != data.num_classes)
      throw ShapeError("model has " + std::to_string(model.net.output_dim()) +
                       " outputs but dataset has " + std::to_string(data.num_classes) +
                       " classes");
    const Matrix scores = forward(model.net, part.features).output();
    pred = argmax_columns(scores);
    for (std::size_t i = 0; i < part.size(); ++i) probs.push_back(softmax(scores).col(i));
  } else if (a.scheme == "knn") {
    if (!model.head) throw FormatError("model '" + a.model + "' has no embedding head");
    const LabelConsistencyHead& head = *model.head;
    head.validate_against(model.net);
    const Dataset tr = data.subset(Split::Train);
    const ReferenceBank bank =
        make_bank(embed(model.net, head, tr.features), tr.labels, data.num_classes);
    if (a.k == 0 || a.k > bank.size())
      throw ArgumentError("--k must lie in [1, " + std::to_string(bank.size()) + "]");
    const Matrix q = embed(model.net, head, part.features);
    pred = knn_predict(bank, q, a.k);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto col = q.col(i);
      probs.push_back(knn_probabilities(bank, col, a.k));
    }
  } else {
    throw ArgumentError("--scheme must be argmax or knn, got '" + a.scheme + "'");
  }

  const EvalMetrics m = compute_metrics(pred, part.labels, data.num_classes);
  write_metrics_csv(a.out, m);
  if (!a.predictions.empty()) write_predictions_csv(a.predictions, pred, part.labels);
  if (!a.probabilities.empty()) write_probabilities_csv(a.probabilities, probs, data.num_classes);
  std::cout.precision(6);
  std::cout << a.scheme << (a.scheme == "knn" ? " k=" + std::to_string(a.k) : "") << " on "
            << a.split << ": accuracy " << m.accuracy << '\n';
}

// --- gradcheck -------------------------------------------------------------

struct GradArgs {
  GradcheckOptions opt;
  std::vector<std::size_t> sizes;
};

void run_gradcheck_cmd(GradArgs a) {
  if (!a.sizes.empty()) a.opt.widths = a.sizes;
  const GradcheckReport rep = run_gradcheck(a.opt);
  std::printf("%-10s %8s %14s\n", "block", "entries", "max_rel_err");
  for (const BlockError& b : rep.blocks)
    std::printf("%-10s %8zu %14.3e\n", b.name.c_str(), b.entries, b.max_rel_err);
  std::printf("points %zu, max_rel_err %.3e, tolerance %.1e: %s\n", rep.points, rep.max_rel_err,
              a.opt.tolerance, rep.passed ? "PASS" : "FAIL");
  if (!rep.passed) {
    std::ostringstream msg;
    msg << "max relative error " << rep.max_rel_err << " exceeds tolerance " << a.opt.tolerance;
    throw NumericError(msg.str());
  }
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  DataArgs data;
  std::string model, split = "test", out;
  std::size_t layer = 0;
};

void run_analyze(const AnalyzeArgs& a) {
  const Model model = load_model(a.model);
  const Dataset data = load_data(a.data);
  if (model.net.input_dim() != data.dim())
    throw ShapeError("model expects " + std::to_string(model.net.input_dim()) +
                     " features but dataset has " + std::to_string(data.dim()));
  std::size_t l = a.layer;
  if (l == 0) l = model.head ? model.head->attach_layer : model.net.depth() - 1;
  if (l < 1 || l > model.net.depth())
    throw ArgumentError("--layer must lie in [1, " + std::to_string(model.net.depth()) + "]");

  NeuronAllocation alloc;
  if (model.head && model.head->attach_layer == l &&
      model.head->allocation.num_classes == data.num_classes)
    alloc = model.head->allocation;
  else
    alloc = allocate_neurons(model.net.width(l), data.num_classes, class_priority(data));

  const Dataset part = data.subset(parse_split(a.split));
  if (part.size() == 0) throw ArgumentError("split '" + a.split + "' is empty");
  const Matrix reps = forward(model.net, part.features).activations[l];
  const auto classes = class_profiles(reps, part.labels, data.num_classes);
  const auto neurons = neuron_profiles(reps, part.labels, alloc);

  ensure_dir(a.out);
  const fs::path dir(a.out);
  export_class_report(classes, join(dir, "class_profiles.csv"));
  export_neuron_report(neurons, join(dir, "neuron_profiles.csv"));
  export_summary(classes, neurons, join(dir, "summary.txt"));
  std::cout << "layer " << l << ": mean entropy " << mean_entropy(classes)
            << " bits, mean peakedness " << mean_peakedness(neurons) << '\n';
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int fail(const std::string& category, const std::string& msg) {
  std::cerr << "error: " << category << ": " << one_line(msg) << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label consistent neural network trainer"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write a synthetic Gaussian-cluster dataset");
  g->add_option("--out", gen.out, "Output CSV")->required();
  g->add_option("--classes", gen.classes, "Number of classes");
  g->add_option("--dim", gen.dim, "Feature dimension");
  g->add_option("--per-class", gen.per_class, "Samples per class");
  g->add_option("--spread", gen.spread, "Cluster spread relative to centre separation");
  g->add_option("--test-fraction", gen.test_fraction, "Fraction of each class held out");
  g->add_option("--seed", gen.seed, "Generator seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network and write model, record and manifest");
  add_data_options(t, tr.data);
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--config", tr.config, "key=value config file");
  t->add_option("--init-model", tr.init_model, "Start from this model instead of a fresh one");
  for (const char* key : {"mode", "alpha", "lr", "momentum", "weight_decay", "lr_decay",
                          "lr_decay_every", "batch", "epochs", "seed", "attach_layer", "knn_k",
                          "hidden"}) {
    std::string flag = std::string("--") + key;
    for (char& c : flag)
      if (c == '_') c = '-';
    t->add_option_function<std::string>(
        flag, [&tr, key](const std::string& v) { tr.overrides.emplace_back(key, v); },
        std::string("Override config key '") + key + "'");
  }

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a model with argmax or k-NN classification");
  add_data_options(e, ev.data);
  e->add_option("--model", ev.model, "Model file")->required();
  e->add_option("--out", ev.out, "Metrics CSV")->required();
  e->add_option("--scheme", ev.scheme, "argmax or knn");
  e->add_option("--k", ev.k, "Neighbours for knn");
  e->add_option("--split", ev.split, "train or test");
  e->add_option("--predictions", ev.predictions, "Per-sample predictions CSV");
  e->add_option("--probabilities", ev.probabilities, "Per-sample class probabilities CSV");

  GradArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  c->add_option("--seed", gc.opt.seed, "Seed for the random check points");
  c->add_option("--sizes", gc.sizes, "Layer widths, input first")->delimiter(',');
  c->add_option("--attach", gc.opt.attach_layer, "Layer carrying the embedding head");
  c->add_option("--points", gc.opt.points, "Number of check points");
  c->add_option("--batch", gc.opt.batch, "Samples per check point");
  c->add_option("--alpha", gc.opt.alpha, "Weight of the representation loss");
  c->add_option("--tolerance", gc.opt.tolerance, "Max allowed relative error");
  c->add_flag("--flip-head-sign", gc.opt.flip_head_sign)->group("");

  AnalyzeArgs an;
  auto* a = app.add_subcommand("analyze", "Export class entropy and neuron peakedness reports");
  add_data_options(a, an.data);
  a->add_option("--model", an.model, "Model file")->required();
  a->add_option("--out", an.out, "Output directory")->required();
  a->add_option("--split", an.split, "train or test");
  a->add_option("--layer", an.layer, "Layer to analyse (default: the head's layer)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return fail("usage", ex.what());
  }

  try {
    if (*g) run_gen(gen);
    if (*t) run_train(tr);
    if (*e) run_eval(ev);
    if (*c) run_gradcheck_cmd(gc);
    if (*a) run_analyze(an);
  } catch (const Error& ex) {
    return fail(to_string(ex.kind()), ex.what());
  } catch (const std::exception& ex) {
    return fail("internal", ex.what());
  }
  return 0;
}
