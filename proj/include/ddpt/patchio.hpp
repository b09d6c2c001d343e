#pragma once

#include "ddpt/linalg.hpp"

#include <filesystem>
#include <vector>

namespace ddpt {

/// Grayscale image, row-major, intensities nominally in [0, 255].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return pixels.size(); }
};

struct PatchAnchor {
  int row = 0;
  int col = 0;
};

/// Vectorized patches (one row per patch, pixels row-major within the patch)
/// plus the geometry needed to put them back.
struct PatchSet {
  Mat data;
  std::vector<PatchAnchor> anchors;
  int patch_size = 0;
  int stride = 0;
  int height = 0;
  int width = 0;

  Eigen::Index count() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

/// Binary PGM (P5, maxval 255).
Image read_pgm(const std::filesystem::path& path);
/// Pixels are rounded to the nearest integer and clamped to [0, 255].
void write_pgm(const Image& image, const std::filesystem::path& path);

/// Binary PPM (P6, maxval 255), split into R, G, B planes.
std::vector<Image> read_ppm(const std::filesystem::path& path);
void write_ppm(const std::vector<Image>& channels, const std::filesystem::path& path);

/// Reads P5 or P6; P5 yields a single plane.
std::vector<Image> read_netpbm(const std::filesystem::path& path);

/// Sliding-window anchors {0, s, 2s, ...} plus the last position extent - p.
std::vector<int> anchor_positions(int extent, int patch_size, int stride);

PatchSet extract_patches(const Image& image, int patch_size, int stride);

/// Per-pixel uniform average of every estimate covering the pixel, clipped to
/// [0, 255] when clip is set. estimates has one row per anchor.
Image aggregate_patches(const Mat& estimates, const std::vector<PatchAnchor>& anchors,
                        int patch_size, int height, int width, bool clip = true);

}  // namespace ddpt
