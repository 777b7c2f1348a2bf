// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "m3s/tensor/tensor.hpp"

namespace m3s::data {

/// 8-bit RGB, row-major, channels interleaved.
struct Image {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> rgb;
};

/// Per-pixel class labels, row-major.
struct Mask {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> labels;
};

void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const Mask& mask);
/// Throws DataError on unreadable or malformed files.
Image read_png_rgb(const std::filesystem::path& path);
Mask read_png_mask(const std::filesystem::path& path);

/// Frames -> [F, 3, H, W] in [0, 1].
Tensor images_to_tensor(const std::vector<const Image*>& frames);
/// Masks -> one-hot [F, classes, H, W].
Tensor masks_to_onehot(const std::vector<const Mask*>& masks, std::size_t classes);

}  // namespace m3s::data
