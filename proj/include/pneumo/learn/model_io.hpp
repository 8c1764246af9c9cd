#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pneumo/learn/mlp.hpp"

namespace pneumo::learn {

/// Binary layout (little-endian):
///   magic "PNEUMLP1" (8 bytes), u32 version, u32 n_joints, i32 tau,
///   u32 n_dims, u32 dims[n_dims] (= in, hidden, out),
///   f64 x_mean[in], x_std[in], y_mean[out], y_std[out],
///   f64 W1[in*hidden], b1[hidden], W2[hidden*out], b2[out]   (row-major)
inline constexpr std::array<char, 8> kModelMagic{'P', 'N', 'E', 'U', 'M', 'L', 'P', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class T>
void put(std::vector<unsigned char>& buf, T v) {
  static_assert(std::is_arithmetic_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  buf.insert(buf.end(), b, b + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& buf) : buf_(buf) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw ModelFormatError("model file truncated");
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

template <class M>
void put_all(std::vector<unsigned char>& buf, const M& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put<double>(buf, m.data()[i]);
}

template <class M>
void get_all(Reader& r, M& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
}

}  // namespace detail

inline std::vector<unsigned char> serialize(const InverseModel& m) {
  std::vector<unsigned char> buf(kModelMagic.begin(), kModelMagic.end());
  detail::put<std::uint32_t>(buf, kModelVersion);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(m.n_joints));
  detail::put<std::int32_t>(buf, m.tau);
  detail::put<std::uint32_t>(buf, 3);
  for (auto d : {m.net.in(), m.net.hidden(), m.net.out()}) detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
  detail::put_all(buf, m.scale.x.mean);
  detail::put_all(buf, m.scale.x.std);
  detail::put_all(buf, m.scale.y.mean);
  detail::put_all(buf, m.scale.y.std);
  detail::put_all(buf, m.net.W1);
  detail::put_all(buf, m.net.b1);
  detail::put_all(buf, m.net.W2);
  detail::put_all(buf, m.net.b2);
  return buf;
}

inline InverseModel deserialize(const std::vector<unsigned char>& buf) {
  if (buf.size() < kModelMagic.size() || !std::equal(kModelMagic.begin(), kModelMagic.end(), buf.begin()))
    throw ModelFormatError("not a model file (bad magic)");
  std::vector<unsigned char> body(buf.begin() + kModelMagic.size(), buf.end());
  detail::Reader r(body);
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion) throw ModelFormatError("unsupported model version " + std::to_string(version));
  InverseModel m;
  m.n_joints = r.get<std::uint32_t>();
  m.tau = r.get<std::int32_t>();
  if (m.tau < 0) throw ModelFormatError("negative tau");
  if (r.get<std::uint32_t>() != 3) throw ModelFormatError("expected 3 layer dims");
  const Eigen::Index in = r.get<std::uint32_t>(), hid = r.get<std::uint32_t>(), out = r.get<std::uint32_t>();
  if (static_cast<std::size_t>(in) != input_dim(m.n_joints) || static_cast<std::size_t>(out) != output_dim(m.n_joints) ||
      hid < 1 || hid > (1 << 20))
    throw ModelFormatError("layer dims inconsistent with joint count");
  m.scale.x.mean.resize(in);
  m.scale.x.std.resize(in);
  m.scale.y.mean.resize(out);
  m.scale.y.std.resize(out);
  m.net = Mlp::zeros(in, hid, out);
  detail::get_all(r, m.scale.x.mean);
  detail::get_all(r, m.scale.x.std);
  detail::get_all(r, m.scale.y.mean);
  detail::get_all(r, m.scale.y.std);
  detail::get_all(r, m.net.W1);
  detail::get_all(r, m.net.b1);
  detail::get_all(r, m.net.W2);
  detail::get_all(r, m.net.b2);
  if (!r.done()) throw ModelFormatError("trailing bytes after model payload");
  return m;
}

inline void save_model(const InverseModel& m, const std::string& path) {
  const auto buf = serialize(m);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write model file '" + path + "'");
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("failed writing model file '" + path + "'");
}

inline InverseModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open model file '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(buf);
}

}  // namespace pneumo::learn
