#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "condense/condensation.hpp"
#include "condense/model.hpp"
#include "condense/text.hpp"

// Byte layout of a model file (all integers and floats little-endian, no
// padding). See FORMAT.md for the annotated table.
//
//   magic        4 bytes  "CNNC"
//   version      u16      1
//   flags        u16      bit 0: quantized payloads
//   layer_count  u16
//   layer_count x { kind u8, input_width u32, units u32, hdim u32,
//                   dropout_rate f32, masking u8 }
//   tensor_count u16
//   tensor_count x { name_len u16, name bytes, rank u8, dims u32 x rank,
//                    payload }
//     float payload:     f32 x product(dims)
//     quantized payload: min f32, scale f32, u8 x product(dims)

namespace condense {

inline constexpr char kModelMagic[4] = {'C', 'N', 'N', 'C'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint16_t kFlagQuantized = 1;

enum class FormatErrorCode { bad_magic, version_mismatch, truncated_payload, inconsistent_layers, malformed };

inline const char* format_error_name(FormatErrorCode code) {
  switch (code) {
    case FormatErrorCode::bad_magic: return "bad magic";
    case FormatErrorCode::version_mismatch: return "version mismatch";
    case FormatErrorCode::truncated_payload: return "truncated payload";
    case FormatErrorCode::inconsistent_layers: return "inconsistent layer widths";
    case FormatErrorCode::malformed: return "malformed file";
  }
  return "format error";
}

class FormatError : public Error {
 public:
  FormatError(FormatErrorCode code, const std::string& detail)
      : Error(std::string(format_error_name(code)) + (detail.empty() ? "" : ": " + detail)), code_(code) {}
  FormatErrorCode code() const { return code_; }

 private:
  FormatErrorCode code_;
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { bytes_.append(s); }
  const std::string& bytes() const { return bytes_; }
  std::string take() { return std::move(bytes_); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void need(std::size_t n) const {
    if (n > remaining()) {
      throw FormatError(FormatErrorCode::truncated_payload,
                        "needed " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", " +
                            std::to_string(remaining()) + " left");
    }
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

namespace detail {

inline void write_tensor_header(ByteWriter& w, const std::string& name, const Shape& shape) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.raw(name);
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
}

struct TensorHeader {
  std::string name;
  Shape shape;
  std::size_t count = 0;
};

/// Reads name and dims, rejecting element counts that could not fit in the
/// remaining bytes at `bytes_per_element`, before anything is allocated.
inline TensorHeader read_tensor_header(ByteReader& r, std::size_t bytes_per_element, std::size_t fixed_bytes) {
  TensorHeader h;
  const std::uint16_t name_len = r.u16();
  h.name = std::string(r.raw(name_len));
  const std::uint8_t rank = r.u8();
  if (rank == 0) throw FormatError(FormatErrorCode::malformed, "tensor " + h.name + " has rank 0");
  r.need(4u * rank);
  std::size_t count = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    const std::uint32_t d = r.u32();
    if (d == 0) throw FormatError(FormatErrorCode::malformed, "tensor " + h.name + " has a zero dimension");
    if (count > r.remaining() / d) {
      throw FormatError(FormatErrorCode::truncated_payload, "tensor " + h.name + " is larger than the file");
    }
    count *= d;
    h.shape.push_back(d);
  }
  if (count > (std::numeric_limits<std::size_t>::max() - fixed_bytes) / bytes_per_element) {
    throw FormatError(FormatErrorCode::truncated_payload, "tensor " + h.name + " is larger than the file");
  }
  r.need(fixed_bytes + count * bytes_per_element);
  h.count = count;
  return h;
}

inline void write_spec(ByteWriter& w, const ModelSpec& spec) {
  w.u16(static_cast<std::uint16_t>(spec.layers.size()));
  for (const auto& l : spec.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u32(l.input_width);
    w.u32(l.units);
    w.u32(l.hdim);
    w.f32(l.dropout_rate);
    w.u8(l.masking ? 1 : 0);
  }
}

inline ModelSpec read_spec(ByteReader& r) {
  ModelSpec spec;
  const std::uint16_t n = r.u16();
  r.need(static_cast<std::size_t>(n) * 18);
  for (std::uint16_t i = 0; i < n; ++i) {
    LayerSpec l;
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::dropout)) {
      throw FormatError(FormatErrorCode::malformed, "unknown layer kind " + std::to_string(kind));
    }
    l.kind = static_cast<LayerKind>(kind);
    l.input_width = r.u32();
    l.units = r.u32();
    l.hdim = r.u32();
    l.dropout_rate = r.f32();
    const std::uint8_t masking = r.u8();
    if (masking > 1) throw FormatError(FormatErrorCode::malformed, "masking flag must be 0 or 1");
    l.masking = masking == 1;
    spec.layers.push_back(l);
  }
  try {
    validate(spec);
  } catch (const ModelError& e) {
    throw FormatError(FormatErrorCode::inconsistent_layers, e.what());
  }
  return spec;
}

inline std::vector<std::pair<std::string, Shape>> expected_tensors(const ModelSpec& spec) {
  std::vector<std::pair<std::string, Shape>> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    for (auto& [role, shape] : parameter_shapes(spec.layers[i])) out.emplace_back(parameter_name(i, role), shape);
  }
  return out;
}

inline void write_preamble(ByteWriter& w, std::uint16_t flags) {
  w.raw(std::string_view(kModelMagic, 4));
  w.u16(kFormatVersion);
  w.u16(flags);
}

}  // namespace detail

/// Canonical bytes of a float model: layers in graph order, tensors in
/// canonical order with gate blocks (i, f, c, o).
inline std::string encode_model(const Model<float>& model) {
  validate(model);
  for (const auto* t : parameter_tensors(model)) {
    if (!t->all_finite()) throw NumericError("cannot save a model with non-finite parameters");
  }
  ByteWriter w;
  detail::write_preamble(w, 0);
  detail::write_spec(w, model.spec);
  const auto tensors = parameter_tensors(model);
  w.u16(static_cast<std::uint16_t>(tensors.size()));
  const auto names = detail::expected_tensors(model.spec);
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    detail::write_tensor_header(w, names[k].first, tensors[k]->shape());
    for (float v : tensors[k]->data()) w.f32(v);
  }
  return w.take();
}

inline std::string encode_model(const QuantizedModel& model) {
  validate(model.spec);
  ByteWriter w;
  detail::write_preamble(w, kFlagQuantized);
  detail::write_spec(w, model.spec);
  const auto names = detail::expected_tensors(model.spec);
  if (names.size() != model.tensors.size()) throw ModelError("quantized model tensor count does not match spec");
  w.u16(static_cast<std::uint16_t>(model.tensors.size()));
  for (std::size_t k = 0; k < model.tensors.size(); ++k) {
    const auto& q = model.tensors[k];
    detail::write_tensor_header(w, names[k].first, q.shape);
    w.f32(q.min);
    w.f32(q.scale);
    w.raw(std::string_view(reinterpret_cast<const char*>(q.codes.data()), q.codes.size()));
  }
  return w.take();
}

using StoredModel = std::variant<Model<float>, QuantizedModel>;

inline StoredModel decode_model(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw FormatError(FormatErrorCode::bad_magic, "");
  }
  r.raw(4);
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion) {
    throw FormatError(FormatErrorCode::version_mismatch,
                      "file version " + std::to_string(version) + ", supported " + std::to_string(kFormatVersion));
  }
  const std::uint16_t flags = r.u16();
  if (flags & ~kFlagQuantized) throw FormatError(FormatErrorCode::malformed, "unknown flags");
  const bool quantized = (flags & kFlagQuantized) != 0;
  const ModelSpec spec = detail::read_spec(r);
  const auto expected = detail::expected_tensors(spec);
  const std::uint16_t count = r.u16();
  if (count != expected.size()) {
    throw FormatError(FormatErrorCode::inconsistent_layers, "file has " + std::to_string(count) +
                                                                " tensors, layers need " +
                                                                std::to_string(expected.size()));
  }
  std::vector<Tensor> floats;
  std::vector<QuantizedTensor> codes;
  for (const auto& [name, shape] : expected) {
    const auto h = quantized ? detail::read_tensor_header(r, 1, 8) : detail::read_tensor_header(r, 4, 0);
    if (h.name != name || h.shape != shape) {
      throw FormatError(FormatErrorCode::inconsistent_layers, "tensor " + h.name + " " + shape_string(h.shape) +
                                                                  " where layers need " + name + " " +
                                                                  shape_string(shape));
    }
    if (quantized) {
      QuantizedTensor q;
      q.shape = h.shape;
      q.min = r.f32();
      q.scale = r.f32();
      if (!std::isfinite(q.min) || !std::isfinite(q.scale) || q.scale < 0.0f) {
        throw FormatError(FormatErrorCode::malformed, "tensor " + name + " has an invalid scale");
      }
      const auto payload = r.raw(h.count);
      q.codes.assign(reinterpret_cast<const std::uint8_t*>(payload.data()),
                     reinterpret_cast<const std::uint8_t*>(payload.data()) + payload.size());
      codes.push_back(std::move(q));
    } else {
      std::vector<float> v(h.count);
      for (float& x : v) x = r.f32();
      floats.emplace_back(h.shape, std::move(v));
    }
  }
  if (!r.at_end()) throw FormatError(FormatErrorCode::malformed, std::to_string(r.remaining()) + " trailing bytes");

  if (quantized) return QuantizedModel{spec, std::move(codes)};
  Model<float> model{spec, {}};
  std::size_t next = 0;
  for (const auto& layer : spec.layers) {
    std::vector<Tensor> t;
    for (std::size_t k = 0; k < parameter_shapes(layer).size(); ++k) t.push_back(std::move(floats[next++]));
    model.params.push_back(make_layer_params<float>(layer.kind, std::move(t)));
  }
  return model;
}

template <typename M>
std::size_t save_model(const M& model, const std::filesystem::path& path) {
  const std::string bytes = encode_model(model);
  write_file_atomic(path, bytes);
  return bytes.size();
}

inline StoredModel load_model(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error&) {
    throw FormatError(FormatErrorCode::malformed, "cannot read " + path.string());
  }
  return decode_model(bytes);
}

/// Loads either kind of file; quantized parameters are dequantized eagerly.
inline Model<float> load_float_model(const std::filesystem::path& path) {
  auto stored = load_model(path);
  if (auto* q = std::get_if<QuantizedModel>(&stored)) return dequantize_model(*q);
  return std::get<Model<float>>(std::move(stored));
}

/// Bytes taken by parameter payloads alone (4 per float; 8 + 1 per element
/// for each quantized tensor).
inline std::size_t payload_bytes(const Model<float>& model) { return 4 * param_count(model); }

inline std::size_t payload_bytes(const QuantizedModel& model) {
  std::size_t n = 0;
  for (const auto& t : model.tensors) n += 8 + t.codes.size();
  return n;
}

inline std::size_t param_count(const StoredModel& m) {
  return std::visit([](const auto& x) { return param_count(x); }, m);
}

}  // namespace condense
