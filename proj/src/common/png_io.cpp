#include "mred/common/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mred/common/error.hpp"

namespace mred {

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, -1.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround((c + 1.0f) * 127.5f));
}

torch::Tensor to_tensor(const Image& img) {
  auto t = torch::from_blob(const_cast<float*>(img.pixels.data()), {kImageSize, kImageSize, kImageChannels},
                            torch::kFloat32);
  return t.permute({2, 0, 1}).contiguous();
}

Image from_tensor(const torch::Tensor& t) {
  require(t.dim() == 3 && t.size(0) == kImageChannels && t.size(1) == kImageSize && t.size(2) == kImageSize,
              "expected [3,64,64] image tensor");
  auto hwc = t.detach().to(torch::kFloat32).clamp(-1.0, 1.0).permute({1, 2, 0}).contiguous().cpu();
  Image img;
  std::memcpy(img.pixels.data(), hwc.data_ptr<float>(), img.pixels.size() * sizeof(float));
  return img;
}

torch::Tensor stack_images(const std::vector<Image>& images) {
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const auto& im : images) ts.push_back(to_tensor(im));
  return torch::stack(ts);
}

std::vector<Image> unstack_images(const torch::Tensor& batch) {
  std::vector<Image> out;
  out.reserve(batch.size(0));
  for (int64_t i = 0; i < batch.size(0); ++i) out.push_back(from_tensor(batch[i]));
  return out;
}

namespace {

std::string encode_raw(const std::uint8_t* data, int width, int height, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data, 0, nullptr))
    throw Error(std::string("png encode failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr))
    throw Error(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> decode_raw(const std::string& bytes, png_uint_32 format, int& width, int& height) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw Error(std::string("png decode failed: ") + image.message);
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(std::string("png decode failed: ") + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::string encode_png(const Image& img) {
  std::vector<std::uint8_t> rgb(img.pixels.size());
  for (size_t i = 0; i < rgb.size(); ++i) rgb[i] = to_byte(img.pixels[i]);
  return encode_raw(rgb.data(), kImageSize, kImageSize, PNG_FORMAT_RGB);
}

Image decode_png(const std::string& bytes) {
  int w = 0, h = 0;
  auto rgb = decode_raw(bytes, PNG_FORMAT_RGB, w, h);
  if (w != kImageSize || h != kImageSize)
    throw Error("image must be " + std::to_string(kImageSize) + "x" + std::to_string(kImageSize) + ", got " +
                std::to_string(w) + "x" + std::to_string(h));
  Image img;
  for (size_t i = 0; i < rgb.size(); ++i) img.pixels[i] = from_byte(rgb[i]);
  return img;
}

void write_png(const std::string& path, const Image& img) { dump(path, encode_png(img)); }
Image read_png(const std::string& path) { return decode_png(slurp(path)); }

std::string encode_gray_png(const std::vector<std::uint8_t>& gray, int width, int height) {
  return encode_raw(gray.data(), width, height, PNG_FORMAT_GRAY);
}

void write_gray_png(const std::string& path, const std::vector<std::uint8_t>& gray, int width, int height) {
  dump(path, encode_gray_png(gray, width, height));
}

std::vector<std::uint8_t> read_gray_png(const std::string& path, int& width, int& height) {
  return decode_raw(slurp(path), PNG_FORMAT_GRAY, width, height);
}

}  // namespace mred
