#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

#include "urbanflux/features.hpp"
#include "urbanflux/rng.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("urbanflux_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Raw samples with random counts and random hourly demand.
inline std::vector<urbanflux::RawSample> random_raw(std::size_t n, std::uint64_t seed) {
  urbanflux::Rng rng(seed);
  std::vector<urbanflux::RawSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = out[i];
    s.sample_id = i;
    s.center = {110.2 + 0.001 * static_cast<double>(i), 20.0};
    s.density_proxy = 0;
    for (auto& c : s.poi_counts) {
      c = rng.between(0, 40);
      s.density_proxy += c;
    }
    if (s.density_proxy == 0) {
      s.poi_counts[0] = 1;
      s.density_proxy = 1;
    }
    s.vht_total = 0.0;
    for (auto& v : s.vht_by_hour) {
      v = rng.uniform(0.0, 5.0);
      s.vht_total += v;
    }
    s.orders_per_day = 60.0;
  }
  return out;
}

/// Dataset built from random_raw with 30 days.
inline urbanflux::Dataset random_dataset(std::size_t n, std::uint64_t seed) {
  auto raw = random_raw(n, seed);
  return urbanflux::normalize(raw, 30);
}

}  // namespace testutil
