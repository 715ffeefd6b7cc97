#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <opencv2/imgcodecs.hpp>

#include "irisseg/mask.hpp"

namespace testing_util {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("irisseg_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline irisseg::Mask random_mask(std::mt19937_64& rng, int h, int w, double density,
                                 bool non_empty) {
  std::bernoulli_distribution on(density);
  irisseg::Mask m(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, on(rng));
  if (non_empty && m.count() == 0) {
    m.set(std::uniform_int_distribution<int>(0, h - 1)(rng),
          std::uniform_int_distribution<int>(0, w - 1)(rng), true);
  }
  return m;
}

}  // namespace testing_util
