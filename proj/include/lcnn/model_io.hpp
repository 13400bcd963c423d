#ifndef LCNN_MODEL_IO_HPP
#define LCNN_MODEL_IO_HPP

// Binary model file. All integers are uint32 little-endian, all scalars
// IEEE-754 binary64 little-endian.
//
//   magic        8 bytes  "LCNNMODL"
//   version      u32      1
//   layer_count  u32
//   per layer:   in_dim u32, out_dim u32, activation u32 (0 identity, 1 relu),
//                weight f64[out_dim * in_dim] (row-major), bias f64[out_dim]
//   has_head     u32      0 or 1
//   head:        attach_layer u32, alpha f64, neurons u32, classes u32,
//                owner u32[neurons], transform f64[neurons * neurons]

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "lcnn/error.hpp"
#include "lcnn/label_consistency.hpp"
#include "lcnn/nn.hpp"

namespace lcnn {

inline constexpr std::array<char, 8> kModelMagic = {'L', 'C', 'N', 'N', 'M', 'O', 'D', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

struct Model {
  Network net;
  std::optional<LabelConsistencyHead> head;

  friend bool operator==(const Model&, const Model&) = default;
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  void expect_raw(const char* p, std::size_t n, const char* what) {
    need(n);
    if (!std::equal(p, p + n, bytes_.begin() + static_cast<std::ptrdiff_t>(pos_)))
      throw FormatError(source_ + ": " + what);
    pos_ += n;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(source_ + ": truncated model file at byte " + std::to_string(pos_));
  }
  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw FormatError(std::string(what) + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::vector<char> encode_model(const Network& net, const LabelConsistencyHead* head) {
  net.validate();
  detail::ByteWriter w;
  w.raw(kModelMagic.data(), kModelMagic.size());
  w.u32(kModelVersion);
  w.u32(detail::checked_u32(net.depth(), "layer count"));
  for (const Layer& layer : net.layers()) {
    w.u32(detail::checked_u32(layer.in_dim(), "layer width"));
    w.u32(detail::checked_u32(layer.out_dim(), "layer width"));
    w.u32(static_cast<std::uint32_t>(layer.activation));
    for (double v : layer.weight.data()) w.f64(v);
    for (double v : layer.bias.data()) w.f64(v);
  }
  w.u32(head ? 1 : 0);
  if (head) {
    head->validate_against(net);
    w.u32(detail::checked_u32(head->attach_layer, "attach layer"));
    w.f64(head->alpha);
    w.u32(detail::checked_u32(head->width(), "head width"));
    w.u32(detail::checked_u32(head->allocation.num_classes, "class count"));
    for (int c : head->allocation.owner) w.u32(static_cast<std::uint32_t>(c));
    for (double v : head->transform.data()) w.f64(v);
  }
  return w.bytes();
}

inline Model decode_model(std::vector<char> bytes, const std::string& source = "model") {
  detail::ByteReader r(std::move(bytes), source);
  r.expect_raw(kModelMagic.data(), kModelMagic.size(), "not a model file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw FormatError(source + ": unsupported model version " + std::to_string(version));

  // Reject sizes that cannot fit in the remaining bytes before allocating.
  auto check_payload = [&](std::uint64_t scalars) {
    if (scalars > r.remaining() / 8)
      throw FormatError(source + ": declared sizes exceed file length");
  };

  const std::uint32_t n = r.u32();
  if (n == 0) throw FormatError(source + ": model has no layers");
  std::vector<Layer> layers;
  std::size_t input_dim = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t in = r.u32();
    const std::uint32_t out = r.u32();
    const std::uint32_t tag = r.u32();
    if (tag > 1) throw FormatError(source + ": unknown activation tag " + std::to_string(tag));
    check_payload(static_cast<std::uint64_t>(in) * out + out);
    Layer layer;
    layer.activation = static_cast<Activation>(tag);
    layer.weight = Matrix(out, in);
    for (double& v : layer.weight.data()) v = r.f64();
    layer.bias = Matrix(out, 1);
    for (double& v : layer.bias.data()) v = r.f64();
    if (i == 0) input_dim = in;
    layers.push_back(std::move(layer));
  }
  Model model;
  try {
    model.net = Network(input_dim, std::move(layers));
  } catch (const ShapeError& e) {
    throw FormatError(source + ": inconsistent layers: " + e.what());
  }

  const std::uint32_t has_head = r.u32();
  if (has_head > 1) throw FormatError(source + ": bad head flag");
  if (has_head == 1) {
    LabelConsistencyHead head;
    head.attach_layer = r.u32();
    head.alpha = r.f64();
    const std::uint32_t neurons = r.u32();
    const std::uint32_t classes = r.u32();
    if (static_cast<std::uint64_t>(neurons) * 4 > r.remaining())
      throw FormatError(source + ": declared sizes exceed file length");
    head.allocation.num_classes = classes;
    head.allocation.owner.resize(neurons);
    for (int& c : head.allocation.owner) {
      const std::uint32_t v = r.u32();
      if (v >= classes) throw FormatError(source + ": neuron owner out of range");
      c = static_cast<int>(v);
    }
    check_payload(static_cast<std::uint64_t>(neurons) * neurons);
    head.transform = Matrix(neurons, neurons);
    for (double& v : head.transform.data()) v = r.f64();
    try {
      head.validate_against(model.net);
    } catch (const Error& e) {
      throw FormatError(source + ": inconsistent head: " + e.what());
    }
    model.head = std::move(head);
  }
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after model");
  return model;
}

inline void save_model(const std::string& path, const Network& net,
                       const LabelConsistencyHead* head = nullptr) {
  const auto bytes = encode_model(net, head);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_model(std::move(bytes), path);
}

}  // namespace lcnn

#endif  // LCNN_MODEL_IO_HPP
