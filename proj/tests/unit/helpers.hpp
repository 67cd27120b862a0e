#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "mred/diffusion/generator.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("mred-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

/// Narrow generator that keeps unit tests fast.
inline mred::diff::GeneratorConfig tiny_generator() {
  mred::diff::GeneratorConfig c;
  c.unet.channels = {8, 16, 16, 16};
  return c;
}

}  // namespace testing
