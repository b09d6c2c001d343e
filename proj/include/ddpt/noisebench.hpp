#pragma once

#include "ddpt/patchio.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ddpt {

enum class NoiseKind { gaussian, heterogeneous, laplace, uniform, combined };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double level = 0.0;  // sigma, b, sigma or a; unused for combined
  std::uint64_t seed = 0;
  bool clip = true;
  /// Read the Laplace level as the scale parameter instead of the standard
  /// deviation.
  bool laplace_as_scale = false;

  void validate() const;
};

std::string_view noise_kind_name(NoiseKind k);
/// "gaussian", "heterogeneous", "laplace", "uniform" or "combined"; throws
/// DomainError otherwise.
NoiseKind parse_noise_kind(std::string_view name);

/// "family:l1,l2,..." groups separated by ';'. "combined" takes no levels.
std::vector<NoiseSpec> parse_noise_grid(std::string_view grid);

/// One zero-mean noise draw for a pixel of intensity x.
double draw_noise(NoiseKind kind, double level, double x, bool laplace_as_scale, std::uint64_t seed,
                  std::uint64_t pixel);

/// Pixel (r, c) draws from a generator keyed by (seed, r * W + c).
Image add_noise(const Image& image, const NoiseSpec& spec);

/// 10 log10(255^2 / MSE), 99 dB when the images are identical or closer.
double psnr(const Image& reference, const Image& test);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// C1 = (0.01 * 255)^2, C2 = (0.03 * 255)^2.
double ssim(const Image& reference, const Image& test);

}  // namespace ddpt
