// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// 8-bit RGB PNG/JPEG decoding and PNG encoding to and from [0,1] images.

#pragma once

#include <png.h>
#include <stdio.h>  // jpeglib.h needs FILE and size_t first
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <string>
#include <vector>

#include "tgjar/core/digest.hpp"
#include "tgjar/core/error.hpp"
#include "tgjar/core/tensor.hpp"

namespace tgjar::data {

namespace detail {

template <class T>
Image<T> from_interleaved(const std::uint8_t* px, std::size_t h, std::size_t w) {
  Image<T> img({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<T>(px[(y * w + x) * 3 + c]) / T(255);
  return img;
}

inline bool has_png_signature(const std::string& b) {
  return b.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(b.data()), 0, 8) == 0;
}

inline bool has_jpeg_signature(const std::string& b) {
  return b.size() >= 3 && static_cast<unsigned char>(b[0]) == 0xFF && static_cast<unsigned char>(b[1]) == 0xD8 &&
         static_cast<unsigned char>(b[2]) == 0xFF;
}

template <class T>
Image<T> decode_png(const std::string& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw LoadError(std::string("PNG decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    png_image_free(&image);
    throw LoadError(std::string("PNG decode failed: ") + image.message);
  }
  return from_interleaved<T>(px.data(), image.height, image.width);
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Decodes into interleaved RGB; returns false (with `message` set) on error.
// Kept free of C++ objects with destructors because of the longjmp.
inline bool decode_jpeg_raw(const std::string& bytes, std::vector<std::uint8_t>& px, std::size_t& h, std::size_t& w,
                            std::string& message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    message = err.message;
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = cinfo.output_height;
  w = cinfo.output_width;
  px.resize(h * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

}  // namespace detail

// Decodes PNG or JPEG bytes (sniffed by signature) into a 3xHxW image.
template <class T = float>
Image<T> decode_image(const std::string& bytes) {
  if (detail::has_png_signature(bytes)) return detail::decode_png<T>(bytes);
  if (detail::has_jpeg_signature(bytes)) {
    std::vector<std::uint8_t> px;
    std::size_t h = 0, w = 0;
    std::string message;
    if (!detail::decode_jpeg_raw(bytes, px, h, w, message)) throw LoadError("JPEG decode failed: " + message);
    return detail::from_interleaved<T>(px.data(), h, w);
  }
  throw LoadError("unrecognized image format (expected PNG or JPEG)");
}

template <class T = float>
Image<T> read_image(const std::string& path) {
  try {
    return decode_image<T>(read_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

template <class T>
std::string encode_png(const Image<T>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("encode_png expects 3xHxW, got " + shape_str(img.shape()));
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::vector<std::uint8_t> px(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) px[(y * w + x) * 3 + c] = to_byte(static_cast<double>(img.at(c, y, x)));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

// Single-channel map in [0,1] (H x W) as a grayscale PNG.
template <class T>
std::string encode_gray_png(const Tensor<T>& map) {
  if (map.rank() != 2) throw ShapeError("encode_gray_png expects HxW");
  const std::size_t h = map.dim(0), w = map.dim(1);
  std::vector<std::uint8_t> px(h * w);
  for (std::size_t i = 0; i < h * w; ++i) px[i] = to_byte(static_cast<double>(map[i]));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

template <class T>
void write_png(const std::string& path, const Image<T>& img) {
  write_file(path, encode_png(img));
}

// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
template <class T>
Image<T> quantize_8bit(Image<T> img) {
  for (auto& v : img.storage()) v = static_cast<T>(to_byte(static_cast<double>(v))) / T(255);
  return img;
}

}  // namespace tgjar::data
