#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dipli/image.hpp"
#include "dipli/rng.hpp"

// Scratch directory removed when the test scope ends.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("dipli_test_" + std::to_string(rd()) + "_" +
            std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline dipli::Image random_image(int c, int h, int w, uint64_t seed) {
  dipli::Rng rng(seed);
  dipli::Image img(c, h, w);
  for (double& v : img.data) v = rng.uniform();
  return img;
}
