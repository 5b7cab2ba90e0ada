#pragma once

// Model file layout, all integers and floats little-endian:
//
//   char[4]  magic "HGD1"
//   u32      format version (1)
//   i32 x 5  num_layers, hidden, input_dim, classes, subsample_stride
//   u32      tensor count
//   tensors  in zip_trainable order, then bn.running_mean, bn.running_var;
//            each: u32 rank, u32 dims[rank], f32 data (row-major)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "headgest/error.hpp"
#include "headgest/net.hpp"

namespace headgest {

inline constexpr std::array<char, 4> kModelMagic{'H', 'G', 'D', '1'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  static_assert(sizeof(T) == 4);
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <class T>
  T get() {
    static_assert(sizeof(T) == 4);
    if (pos_ + 4 > data_.size()) throw ModelFormatError("model file truncated");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return std::bit_cast<T>(bits);
  }

  std::string_view bytes(std::size_t n) {
    if (pos_ + n > data_.size()) throw ModelFormatError("model file truncated");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

template <class Tensor>
void put_tensor(std::string& out, const Tensor& t) {
  constexpr bool is_vector = Tensor::ColsAtCompileTime == 1;
  if constexpr (is_vector) {
    put_le<std::uint32_t>(out, 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) put_le<float>(out, static_cast<float>(t[i]));
  } else {
    put_le<std::uint32_t>(out, 2);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) put_le<float>(out, static_cast<float>(t(i, j)));
  }
}

template <class Tensor>
void get_tensor(ByteReader& in, Tensor& t, const std::string& name) {
  constexpr bool is_vector = Tensor::ColsAtCompileTime == 1;
  const auto rank = in.get<std::uint32_t>();
  if (rank != (is_vector ? 1u : 2u)) throw ModelFormatError("tensor " + name + ": unexpected rank");
  const auto rows = in.get<std::uint32_t>();
  const auto cols = is_vector ? 1u : in.get<std::uint32_t>();
  if (rows != static_cast<std::uint32_t>(t.rows()) || cols != static_cast<std::uint32_t>(t.cols())) {
    throw ModelFormatError("tensor " + name + ": shape does not match the configuration");
  }
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = static_cast<double>(in.get<float>());
}

}  // namespace detail

inline std::string serialize_model(const ModelParams& p) {
  std::string out(kModelMagic.begin(), kModelMagic.end());
  detail::put_le<std::uint32_t>(out, kModelFormatVersion);
  const NetConfig& c = p.config;
  for (int v : {c.num_layers, c.hidden, c.input_dim, c.classes, c.subsample_stride}) detail::put_le<std::int32_t>(out, v);
  std::uint32_t count = 2;
  zip_trainable([&](const std::string&, const auto&) { ++count; }, p);
  detail::put_le<std::uint32_t>(out, count);
  zip_trainable([&](const std::string&, const auto& t) { detail::put_tensor(out, t); }, p);
  detail::put_tensor(out, p.bn.running_mean);
  detail::put_tensor(out, p.bn.running_var);
  return out;
}

inline ModelParams deserialize_model(std::string_view data) {
  detail::ByteReader in(data);
  if (in.bytes(4) != std::string_view(kModelMagic.data(), 4)) throw ModelFormatError("not a model file (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw ModelFormatError("unsupported model format version " + std::to_string(version));
  }
  NetConfig c;
  c.num_layers = in.get<std::int32_t>();
  c.hidden = in.get<std::int32_t>();
  c.input_dim = in.get<std::int32_t>();
  c.classes = in.get<std::int32_t>();
  c.subsample_stride = in.get<std::int32_t>();
  try {
    c.validate();
  } catch (const InvalidConfig& e) {
    throw ModelFormatError(std::string("bad network configuration: ") + e.what());
  }
  ModelParams p = ModelParams::zeros(c);
  std::uint32_t expected = 2;
  zip_trainable([&](const std::string&, const auto&) { ++expected; }, p);
  if (in.get<std::uint32_t>() != expected) throw ModelFormatError("unexpected tensor count");
  zip_trainable([&](const std::string& name, auto& t) { detail::get_tensor(in, t, name); }, p);
  detail::get_tensor(in, p.bn.running_mean, "bn.running_mean");
  detail::get_tensor(in, p.bn.running_var, "bn.running_var");
  if (!in.done()) throw ModelFormatError("trailing bytes after model data");
  return p;
}

inline void save_model(const std::string& path, const ModelParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ModelFormatError("cannot open " + path + " for writing");
  const std::string bytes = serialize_model(p);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline ModelParams load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ModelFormatError("cannot open model " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return deserialize_model(ss.str());
}

/// Short identifier reported by the service, e.g. "HGD1-L2-H64".
inline std::string model_version(const ModelParams& p) {
  return std::string(kModelMagic.data(), 4) + "-L" + std::to_string(p.config.num_layers) + "-H" +
         std::to_string(p.config.hidden);
}

}  // namespace headgest
