// Copyright 2026 The spdtsm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// On-disk formats (bit-exact; documented in the README):
//
// Tensor record:
//   bytes 0..7   magic "SPDTNSR\0"
//   byte  8      format version (1)
//   byte  9      number of dimensions
//   next         ndims x uint64, little-endian
//   next         prod(dims) x float64, little-endian, row-major
//
// Container (checkpoints and other multi-tensor artifacts):
//   bytes 0..7   magic "SPDTCNTR"
//   byte  8      format version (1)
//   next         uint64 LE: metadata byte length
//   next         metadata (UTF-8 JSON)
//   next         one tensor record per entry of metadata["tensors"], in order

#ifndef SPDTSM_TENSORIO_HPP
#define SPDTSM_TENSORIO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spdtsm/common.hpp"

namespace spdtsm {

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<double> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
  }
};

namespace io_detail {

inline constexpr char kTensorMagic[8] = {'S', 'P', 'D', 'T', 'N', 'S', 'R', 0};
inline constexpr char kContainerMagic[8] = {'S', 'P', 'D', 'T',
                                            'C', 'N', 'T', 'R'};
inline constexpr std::uint8_t kFormatVersion = 1;

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

inline std::uint64_t get_u64(std::istream& is, const std::string& context) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8))
    throw FormatError(context + ": truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

inline double get_f64(std::istream& is, const std::string& context) {
  const std::uint64_t bits = get_u64(is, context);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace io_detail

inline void write_tensor(std::ostream& os,
                         const std::vector<std::size_t>& dims,
                         const std::vector<double>& data) {
  os.write(io_detail::kTensorMagic, 8);
  os.put(static_cast<char>(io_detail::kFormatVersion));
  os.put(static_cast<char>(dims.size()));
  for (std::size_t d : dims) io_detail::put_u64(os, d);
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
  } else {
    for (double v : data) io_detail::put_f64(os, v);
  }
}

inline NamedTensor read_tensor(std::istream& is, const std::string& context) {
  char magic[8];
  if (!is.read(magic, 8) ||
      std::memcmp(magic, io_detail::kTensorMagic, 8) != 0)
    throw FormatError(context + ": bad tensor magic");
  const int version = is.get();
  if (version != io_detail::kFormatVersion)
    throw FormatError(context + ": unsupported tensor format version " +
                      std::to_string(version));
  const int ndims = is.get();
  if (ndims < 0 || ndims > 8)
    throw FormatError(context + ": implausible dimension count");
  NamedTensor t;
  std::size_t total = 1;
  for (int i = 0; i < ndims; ++i) {
    const std::uint64_t d = io_detail::get_u64(is, context);
    if (d == 0 || d > (1ull << 32))
      throw FormatError(context + ": implausible dimension size");
    t.dims.push_back(static_cast<std::size_t>(d));
    total *= static_cast<std::size_t>(d);
  }
  t.data.resize(total);
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(total * sizeof(double))))
      throw FormatError(context + ": truncated tensor data");
  } else {
    for (std::size_t i = 0; i < total; ++i)
      t.data[i] = io_detail::get_f64(is, context);
  }
  return t;
}

inline void write_tensor_file(const std::string& path,
                              const std::vector<std::size_t>& dims,
                              const std::vector<double>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  write_tensor(os, dims, data);
  if (!os) throw FormatError("write failed: " + path);
}

inline NamedTensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  return read_tensor(is, path);
}

/// Multi-tensor container with a JSON metadata header. The metadata must
/// carry a "tensors" array naming each record in file order.
inline void write_container(const std::string& path,
                            const std::string& metadata_json,
                            const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os.write(io_detail::kContainerMagic, 8);
  os.put(static_cast<char>(io_detail::kFormatVersion));
  io_detail::put_u64(os, metadata_json.size());
  os.write(metadata_json.data(),
           static_cast<std::streamsize>(metadata_json.size()));
  for (const NamedTensor& t : tensors) write_tensor(os, t.dims, t.data);
  if (!os) throw FormatError("write failed: " + path);
}

struct Container {
  std::string metadata_json;
  std::vector<NamedTensor> tensors;  // names restored by the caller
};

inline Container read_container(const std::string& path,
                                std::size_t tensor_count_hint = 0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  char magic[8];
  if (!is.read(magic, 8) ||
      std::memcmp(magic, io_detail::kContainerMagic, 8) != 0)
    throw FormatError(path + ": bad container magic");
  const int version = is.get();
  if (version != io_detail::kFormatVersion)
    throw FormatError(path + ": unsupported container version " +
                      std::to_string(version));
  const std::uint64_t meta_len = io_detail::get_u64(is, path);
  Container c;
  c.metadata_json.resize(meta_len);
  if (!is.read(c.metadata_json.data(), static_cast<std::streamsize>(meta_len)))
    throw FormatError(path + ": truncated metadata");
  if (tensor_count_hint) c.tensors.reserve(tensor_count_hint);
  while (is.peek() != std::char_traits<char>::eof())
    c.tensors.push_back(read_tensor(is, path));
  return c;
}

}  // namespace spdtsm

#endif  // SPDTSM_TENSORIO_HPP
