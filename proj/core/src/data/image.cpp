// SPDX-License-Identifier: Apache-2.0
#include "m3s/data/image.hpp"

#include <png.h>

#include <cstring>

#include "m3s/error.hpp"

namespace m3s::data {
namespace {

void write_raw(const std::filesystem::path& path, std::size_t h, std::size_t w, png_uint_32 format,
               const std::uint8_t* pixels) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, pixels, 0, nullptr)) {
    throw DataError("cannot write " + path.string() + ": " + img.message);
  }
}

std::vector<std::uint8_t> read_raw(const std::filesystem::path& path, png_uint_32 format, std::size_t& h,
                                   std::size_t& w) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw DataError("cannot read " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("cannot decode " + path.string() + ": " + img.message);
  }
  h = img.height;
  w = img.width;
  return buf;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.rgb.size() != image.height * image.width * 3) throw ContractError("write_png: RGB buffer size mismatch");
  write_raw(path, image.height, image.width, PNG_FORMAT_RGB, image.rgb.data());
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  if (mask.labels.size() != mask.height * mask.width) throw ContractError("write_png: mask buffer size mismatch");
  write_raw(path, mask.height, mask.width, PNG_FORMAT_GRAY, mask.labels.data());
}

Image read_png_rgb(const std::filesystem::path& path) {
  Image im;
  im.rgb = read_raw(path, PNG_FORMAT_RGB, im.height, im.width);
  return im;
}

Mask read_png_mask(const std::filesystem::path& path) {
  Mask m;
  m.labels = read_raw(path, PNG_FORMAT_GRAY, m.height, m.width);
  return m;
}

Tensor images_to_tensor(const std::vector<const Image*>& frames) {
  if (frames.empty()) throw ContractError("images_to_tensor: no frames");
  const std::size_t H = frames[0]->height, W = frames[0]->width;
  Tensor out = Tensor::zeros({frames.size(), 3, H, W});
  auto d = out.mutable_data();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f]->height != H || frames[f]->width != W) throw ShapeError("images_to_tensor: frame sizes differ");
    const auto& px = frames[f]->rgb;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < H * W; ++i) d[(f * 3 + c) * H * W + i] = px[i * 3 + c] / 255.0;
    }
  }
  return out;
}

Tensor masks_to_onehot(const std::vector<const Mask*>& masks, std::size_t classes) {
  if (masks.empty()) throw ContractError("masks_to_onehot: no masks");
  const std::size_t H = masks[0]->height, W = masks[0]->width;
  Tensor out = Tensor::zeros({masks.size(), classes, H, W});
  auto d = out.mutable_data();
  for (std::size_t f = 0; f < masks.size(); ++f) {
    if (masks[f]->height != H || masks[f]->width != W) throw ShapeError("masks_to_onehot: mask sizes differ");
    for (std::size_t i = 0; i < H * W; ++i) {
      const std::size_t c = masks[f]->labels[i];
      if (c >= classes) throw DataError("mask label " + std::to_string(c) + " outside [0, " + std::to_string(classes) + ")");
      d[(f * classes + c) * H * W + i] = 1.0;
    }
  }
  return out;
}

}  // namespace m3s::data
