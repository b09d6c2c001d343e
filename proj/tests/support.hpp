#pragma once

#include "ddpt/patchio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>
#include <string>
#include <vector>

namespace testing {

// Piecewise-smooth test image: gradient background, two slanted edges, a
// disc and a soft sinusoidal texture band.
inline ddpt::Image piecewise_smooth(int h, int w) {
  ddpt::Image img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double y = static_cast<double>(r) / h;
      const double x = static_cast<double>(c) / w;
      double v = 60.0 + 70.0 * x + 30.0 * y;
      if (x + 0.6 * y > 0.75) v += 55.0;
      if (y > 0.55 + 0.1 * x) v -= 40.0;
      const double dx = x - 0.3;
      const double dy = y - 0.3;
      if (dx * dx + dy * dy < 0.02) v = 215.0 - 40.0 * y;
      if (y > 0.75) v += 18.0 * std::sin(x * 22.0);
      img.at(r, c) = std::clamp(v, 0.0, 255.0);
    }
  }
  return img;
}

inline ddpt::Image rounded(ddpt::Image img) {
  for (auto& p : img.pixels) p = std::round(p);
  return img;
}

inline ddpt::Image random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> u(0, 255);
  ddpt::Image img(h, w);
  for (auto& p : img.pixels) p = u(gen);
  return img;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ddpt_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic two-sided critical value at significance 0.01.
inline double ks_critical_001(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::vector<std::uint8_t> out;
  if (FILE* f = std::fopen(p.string().c_str(), "rb")) {
    int c;
    while ((c = std::fgetc(f)) != EOF) out.push_back(static_cast<std::uint8_t>(c));
    std::fclose(f);
  }
  return out;
}

inline int run(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Runs cmd with stdout and stderr sent to the given files.
inline int run_to(const std::string& cmd, const std::filesystem::path& out, const std::filesystem::path& err) {
  const int status = std::system((cmd + " >" + out.string() + " 2>" + err.string()).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline std::string read_text(const std::filesystem::path& p) {
  const auto b = read_bytes(p);
  return {b.begin(), b.end()};
}

inline std::string cli() { return DDPT_CLI_PATH; }

}  // namespace testing
