#pragma once

#include "pour/toy_model.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

// "POUR1" checkpoint container.
//
//   offset  size  field
//   0       5     magic "POUR1"
//   5       4     type tag (u32 LE): 1 frame, 2 features, 3 model
//   9       4     header word count h (u32 LE)
//   13      8h    header words (u64 LE), type specific
//   ..      8     payload byte length (u64 LE)
//   ..      len   payload: f64 LE values row-major (features append i64 labels)
//   ..      8     FNV-1a 64 checksum of the payload bytes (u64 LE)

namespace pour {

enum class CheckpointType : std::uint32_t { frame = 1, features = 2, model = 3 };

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buffer_.append(raw, sizeof(T));
  }
  void put_matrix(const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(m(r, c));
  }
  void put_vector(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(v(i));
  }
  const std::string& bytes() const { return buffer_; }

 private:
  std::string buffer_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size())
      throw Error(ErrorKind::checksum, "checkpoint truncated");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  Matrix get_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get<double>();
    return m;
  }
  Vector get_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = get<double>();
    return v;
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::checksum, "checkpoint truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline constexpr std::string_view checkpoint_magic = "POUR1";
inline constexpr std::uint64_t max_dim = 1u << 24;

inline std::string encode(CheckpointType type, const std::vector<std::uint64_t>& header,
                          const std::string& payload) {
  ByteWriter w;
  std::string out(checkpoint_magic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(type));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
  for (auto h : header) w.put<std::uint64_t>(h);
  w.put<std::uint64_t>(payload.size());
  out += w.bytes();
  out += payload;
  ByteWriter tail;
  tail.put<std::uint64_t>(fnv1a64(payload));
  out += tail.bytes();
  return out;
}

struct Decoded {
  std::vector<std::uint64_t> header;
  std::string payload;
};

inline Decoded decode(std::string_view bytes, CheckpointType expected) {
  if (bytes.substr(0, checkpoint_magic.size()) != checkpoint_magic)
    throw Error(ErrorKind::checksum, "bad magic (not a POUR1 checkpoint)");
  ByteReader r(bytes.substr(checkpoint_magic.size()));
  const auto type = r.get<std::uint32_t>();
  if (type != static_cast<std::uint32_t>(expected))
    throw Error(ErrorKind::shape_mismatch, "checkpoint holds type " + std::to_string(type) +
                                               ", expected " +
                                               std::to_string(static_cast<std::uint32_t>(expected)));
  const auto words = r.get<std::uint32_t>();
  if (words > 4096) throw Error(ErrorKind::checksum, "implausible header length");
  Decoded d;
  for (std::uint32_t i = 0; i < words; ++i) d.header.push_back(r.get<std::uint64_t>());
  const auto length = r.get<std::uint64_t>();
  if (length > bytes.size()) throw Error(ErrorKind::checksum, "checkpoint truncated");
  d.payload = std::string(r.take(static_cast<std::size_t>(length)));
  const auto stored = r.get<std::uint64_t>();
  if (stored != fnv1a64(d.payload)) throw Error(ErrorKind::checksum, "payload checksum mismatch");
  if (!r.at_end()) throw Error(ErrorKind::checksum, "trailing bytes after checksum");
  return d;
}

inline void check_dims(const std::vector<std::uint64_t>& header) {
  for (auto h : header)
    if (h > max_dim) throw Error(ErrorKind::checksum, "implausible dimension in header");
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace detail

// -- frames ----------------------------------------------------------------

inline std::string encode_frame(const EtfFrame& frame) {
  detail::ByteWriter payload;
  payload.put_matrix(frame.directions().transpose());
  return detail::encode(CheckpointType::frame,
                        {std::uint64_t(frame.class_count()), std::uint64_t(frame.ambient_dim())},
                        payload.bytes());
}

/// `expected_class_count` > 0 rejects frames with a different C.
inline EtfFrame decode_frame(std::string_view bytes, int expected_class_count = 0) {
  const auto d = detail::decode(bytes, CheckpointType::frame);
  if (d.header.size() != 2) throw Error(ErrorKind::checksum, "frame header malformed");
  detail::check_dims(d.header);
  const auto c = static_cast<Eigen::Index>(d.header[0]);
  const auto dim = static_cast<Eigen::Index>(d.header[1]);
  if (expected_class_count > 0 && c != expected_class_count)
    throw Error(ErrorKind::shape_mismatch, "frame has C=" + std::to_string(c) + ", expected " +
                                               std::to_string(expected_class_count));
  if (d.payload.size() != static_cast<std::size_t>(c * dim) * sizeof(double))
    throw Error(ErrorKind::shape_mismatch, "frame payload size does not match header");
  detail::ByteReader r(d.payload);
  return EtfFrame::from_directions(r.get_matrix(c, dim).transpose());
}

// -- feature matrices ------------------------------------------------------

inline std::string encode_features(const FeatureMatrix& f) {
  detail::ByteWriter payload;
  payload.put_matrix(f.rows);
  for (int label : f.labels) payload.put<std::int64_t>(label);
  return detail::encode(CheckpointType::features,
                        {std::uint64_t(f.size()), std::uint64_t(f.dim()), std::uint64_t(f.class_count)},
                        payload.bytes());
}

inline FeatureMatrix decode_features(std::string_view bytes, int expected_class_count = 0) {
  const auto d = detail::decode(bytes, CheckpointType::features);
  if (d.header.size() != 3) throw Error(ErrorKind::checksum, "feature header malformed");
  detail::check_dims(d.header);
  const auto n = static_cast<Eigen::Index>(d.header[0]);
  const auto p = static_cast<Eigen::Index>(d.header[1]);
  FeatureMatrix f;
  f.class_count = static_cast<int>(d.header[2]);
  if (expected_class_count > 0 && f.class_count != expected_class_count)
    throw Error(ErrorKind::shape_mismatch, "dataset has C=" + std::to_string(f.class_count) +
                                               ", expected " + std::to_string(expected_class_count));
  if (d.payload.size() != static_cast<std::size_t>(n * p + n) * 8)
    throw Error(ErrorKind::shape_mismatch, "feature payload size does not match header");
  detail::ByteReader r(d.payload);
  f.rows = r.get_matrix(n, p);
  for (Eigen::Index i = 0; i < n; ++i) f.labels.push_back(static_cast<int>(r.get<std::int64_t>()));
  f.validate();
  return f;
}

// -- models ----------------------------------------------------------------

inline std::string encode_model(const ToyModel& m) {
  m.validate();
  std::vector<std::uint64_t> header{std::uint64_t(m.class_count), std::uint64_t(m.feature_dim()),
                                    std::uint64_t(m.layers.size()), std::uint64_t(m.projection ? 1 : 0),
                                    std::uint64_t(m.forgotten_class ? *m.forgotten_class + 1 : 0)};
  detail::ByteWriter payload;
  for (const Layer& l : m.layers) {
    header.push_back(std::uint64_t(l.weight.rows()));
    header.push_back(std::uint64_t(l.weight.cols()));
    header.push_back(l.activation == Activation::tanh ? 1 : 0);
    payload.put_matrix(l.weight);
    payload.put_vector(l.bias);
  }
  payload.put_matrix(m.head);
  if (m.projection) {
    payload.put_matrix(m.projection->matrix());
    payload.put_vector(m.projection->removed_direction());
  }
  return detail::encode(CheckpointType::model, header, payload.bytes());
}

inline ToyModel decode_model(std::string_view bytes, int expected_class_count = 0) {
  const auto d = detail::decode(bytes, CheckpointType::model);
  if (d.header.size() < 5) throw Error(ErrorKind::checksum, "model header malformed");
  detail::check_dims(d.header);
  ToyModel m;
  m.class_count = static_cast<int>(d.header[0]);
  if (expected_class_count > 0 && m.class_count != expected_class_count)
    throw Error(ErrorKind::shape_mismatch, "model has C=" + std::to_string(m.class_count) +
                                               ", expected " + std::to_string(expected_class_count));
  const auto p = static_cast<Eigen::Index>(d.header[1]);
  const auto depth = static_cast<std::size_t>(d.header[2]);
  const bool has_projection = d.header[3] != 0;
  if (d.header[4] != 0) m.forgotten_class = static_cast<int>(d.header[4] - 1);
  if (d.header.size() != 5 + 3 * depth) throw Error(ErrorKind::checksum, "model header malformed");

  std::size_t expected = static_cast<std::size_t>(p * m.class_count);
  for (std::size_t l = 0; l < depth; ++l) {
    const auto rows = d.header[5 + 3 * l], cols = d.header[6 + 3 * l];
    expected += static_cast<std::size_t>(rows * cols + rows);
  }
  if (has_projection) expected += static_cast<std::size_t>(p * p + p);
  if (d.payload.size() != expected * sizeof(double))
    throw Error(ErrorKind::shape_mismatch, "model payload size does not match header");

  detail::ByteReader r(d.payload);
  for (std::size_t l = 0; l < depth; ++l) {
    const auto rows = static_cast<Eigen::Index>(d.header[5 + 3 * l]);
    const auto cols = static_cast<Eigen::Index>(d.header[6 + 3 * l]);
    Layer layer;
    layer.activation = d.header[7 + 3 * l] == 1 ? Activation::tanh : Activation::linear;
    layer.weight = r.get_matrix(rows, cols);
    layer.bias = r.get_vector(rows);
    m.layers.push_back(std::move(layer));
  }
  m.head = r.get_matrix(p, m.class_count);
  if (has_projection) {
    Matrix pm = r.get_matrix(p, p);
    Vector dir = r.get_vector(p);
    m.projection = Projector::from_parts(std::move(pm), std::move(dir));
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::shape_mismatch, e.what());
  }
  return m;
}

// -- file wrappers ---------------------------------------------------------

inline void save_checkpoint(const EtfFrame& frame, const std::filesystem::path& path) {
  detail::write_file(path, encode_frame(frame));
}
inline void save_checkpoint(const FeatureMatrix& features, const std::filesystem::path& path) {
  detail::write_file(path, encode_features(features));
}
inline void save_checkpoint(const ToyModel& model, const std::filesystem::path& path) {
  detail::write_file(path, encode_model(model));
}

inline EtfFrame load_frame(const std::filesystem::path& path, int expected_class_count = 0) {
  return decode_frame(detail::read_file(path), expected_class_count);
}
inline FeatureMatrix load_features(const std::filesystem::path& path, int expected_class_count = 0) {
  return decode_features(detail::read_file(path), expected_class_count);
}
inline ToyModel load_model(const std::filesystem::path& path, int expected_class_count = 0) {
  return decode_model(detail::read_file(path), expected_class_count);
}

}  // namespace pour
