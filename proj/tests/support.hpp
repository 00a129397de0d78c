#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "splatforge/numerics/params.hpp"
#include "splatforge/numerics/tensor.hpp"

namespace testing {

inline std::vector<double> uniform(splatforge::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline splatforge::Tensor random_tensor(splatforge::Rng& rng, splatforge::Shape shape, double lo = -1.0,
                                        double hi = 1.0) {
  const std::size_t n = splatforge::shape_numel(shape);
  return splatforge::Tensor::constant(std::move(shape), uniform(rng, n, lo, hi));
}

// Fixed random weights so a loss depends on every output element differently.
inline splatforge::Tensor readout(const splatforge::Tensor& x, std::uint64_t seed) {
  splatforge::Rng rng(seed);
  return random_tensor(rng, x.shape());
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("splatforge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
