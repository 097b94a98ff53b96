// Copyright 2026 The hdyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary container for checkpoints and datasets.
//
//   "HDYN"  u32 version
//   u64 length, UTF-8 header text (config snapshot plus __step / __rng lines)
//   u64 record count
//   per record: u64 name length, name, u64 rank, rank x u64 dims,
//               f64 payload
//
// All integers and floats are little-endian.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdyn/tensor.hpp"

namespace hdyn {

inline constexpr std::uint32_t kContainerVersion = 1;

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Container {
  std::string header;
  std::vector<std::pair<std::string, Tensor>> records;

  const Tensor& at(const std::string& name) const {
    for (const auto& [n, t] : records) {
      if (n == name) return t;
    }
    throw FormatError("container: missing record '" + name + "'");
  }
  bool contains(const std::string& name) const {
    for (const auto& [n, t] : records) {
      if (n == name) return true;
    }
    return false;
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::string& out, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > b_.size() - pos_) throw FormatError("container: truncated data");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_container(const Container& c) {
  std::string out = "HDYN";
  detail::put_le<std::uint32_t>(out, kContainerVersion);
  detail::put_le<std::uint64_t>(out, c.header.size());
  out += c.header;
  detail::put_le<std::uint64_t>(out, c.records.size());
  for (const auto& [name, t] : c.records) {
    detail::put_le<std::uint64_t>(out, name.size());
    out += name;
    detail::put_le<std::uint64_t>(out, t.rank());
    for (std::size_t d : t.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : t.data()) detail::put_le<double>(out, v);
  }
  return out;
}

inline Container decode_container(const std::string& bytes) {
  detail::Reader r(bytes);
  if (r.bytes(4) != "HDYN") throw FormatError("container: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw FormatError("container: unsupported version " + std::to_string(version));
  }
  Container c;
  c.header = r.bytes(r.get<std::uint64_t>());
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.bytes(r.get<std::uint64_t>());
    const auto rank = r.get<std::uint64_t>();
    if (rank > 8) throw FormatError("container: implausible rank in '" + name + "'");
    Shape shape;
    std::size_t size = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      shape.push_back(r.get<std::uint64_t>());
      if (shape.back() != 0 && size > r.remaining() / shape.back()) {
        throw FormatError("container: truncated data");
      }
      size *= shape.back();
    }
    if (size > r.remaining() / sizeof(double)) throw FormatError("container: truncated data");
    std::vector<double> data(size);
    for (double& v : data) v = r.get<double>();
    c.records.emplace_back(std::move(name), Tensor::wrap(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw FormatError("container: trailing bytes");
  return c;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void save_container(const std::string& path, const Container& c) {
  write_file(path, encode_container(c));
}
inline Container load_container(const std::string& path) { return decode_container(read_file(path)); }

// Header lines of the form "key = value".
inline std::string header_value(const std::string& header, const std::string& key) {
  std::istringstream is(header);
  std::string line;
  const std::string prefix = key + " = ";
  while (std::getline(is, line)) {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  throw FormatError("container: header has no '" + key + "'");
}

}  // namespace hdyn
