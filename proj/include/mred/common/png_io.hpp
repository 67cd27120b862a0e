#pragma once

#include <string>
#include <vector>

#include "mred/common/image.hpp"

namespace mred {

std::string encode_png(const Image& img);
/// Decodes any PNG libpng understands into RGB. Non-64x64 input throws.
Image decode_png(const std::string& bytes);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

/// Single-channel 8-bit PNG (silhouette masks, thumbnails).
std::string encode_gray_png(const std::vector<std::uint8_t>& gray, int width, int height);
void write_gray_png(const std::string& path, const std::vector<std::uint8_t>& gray, int width, int height);
std::vector<std::uint8_t> read_gray_png(const std::string& path, int& width, int& height);

}  // namespace mred
