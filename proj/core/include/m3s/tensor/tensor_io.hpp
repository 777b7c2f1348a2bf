// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>

#include "m3s/tensor/tensor.hpp"

namespace m3s {

/// Flat binary record: 8-byte magic "M3STNSR1", u32 rank, rank x u64 dims,
/// then the row-major float64 payload. All integers and floats little-endian.
inline constexpr char kTensorMagic[8] = {'M', '3', 'S', 'T', 'N', 'S', 'R', '1'};

void write_tensor(std::ostream& os, const Tensor& t);
/// Throws DataError on a bad magic, truncated record, or zero dimension.
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace m3s
