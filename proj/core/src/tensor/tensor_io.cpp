// SPDX-License-Identifier: Apache-2.0
#include "m3s/tensor/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "m3s/error.hpp"

namespace m3s {

namespace {

template <class U>
void put_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw DataError("tensor record truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

constexpr std::uint32_t kMaxRank = 16;

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic, sizeof(kTensorMagic));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_le<std::uint64_t>(os, d);
  for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw DataError("failed writing tensor record");
}

Tensor read_tensor(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic))) throw DataError("tensor record truncated (magic)");
  if (std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) throw DataError("bad tensor magic");
  const auto rank = get_le<std::uint32_t>(is);
  if (rank == 0 || rank > kMaxRank) throw DataError("unsupported tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = static_cast<std::size_t>(get_le<std::uint64_t>(is));
    if (d == 0) throw DataError("tensor record has a zero dimension");
  }
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
  return Tensor::from(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace m3s
