#include "ddpt/patchio.hpp"

#include "ddpt/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace ddpt {

Image::Image(int h, int w, double fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& header,
                const std::vector<unsigned char>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

struct NetpbmHeader {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  std::size_t offset = 0;  // start of the raster
};

// Parses "P5|P6 <ws> width <ws> height <ws> maxval <single ws>", with '#'
// comments allowed between tokens.
NetpbmHeader parse_header(const std::vector<unsigned char>& buf) {
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6')) {
    throw FormatError("not a binary PGM/PPM file");
  }
  NetpbmHeader h;
  h.kind = static_cast<char>(buf[1]);
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    for (;;) {
      while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
      if (pos < buf.size() && buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= buf.size() || !std::isdigit(buf[pos])) throw FormatError("malformed header");
    long v = 0;
    while (pos < buf.size() && std::isdigit(buf[pos])) {
      v = v * 10 + (buf[pos] - '0');
      if (v > 1'000'000'000L) throw FormatError("header value too large");
      ++pos;
    }
    return v;
  };
  const long w = next_int();
  const long hgt = next_int();
  const long maxval = next_int();
  if (w < 1 || hgt < 1) throw FormatError("image dimensions must be positive");
  if (maxval != 255) throw FormatError("only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw FormatError("malformed header");
  ++pos;
  h.width = static_cast<int>(w);
  h.height = static_cast<int>(hgt);
  h.offset = pos;
  return h;
}

unsigned char to_byte(double v) {
  if (!std::isfinite(v)) throw FormatError("non-finite pixel value");
  return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

std::vector<Image> read_netpbm(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  const NetpbmHeader h = parse_header(buf);
  const std::size_t channels = h.kind == '5' ? 1 : 3;
  const std::size_t count = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
  if (buf.size() - h.offset < count * channels) throw FormatError("truncated raster");
  std::vector<Image> planes(channels, Image(h.height, h.width));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      planes[c].pixels[i] = buf[h.offset + i * channels + c];
    }
  }
  return planes;
}

Image read_pgm(const std::filesystem::path& path) {
  auto planes = read_netpbm(path);
  if (planes.size() != 1) throw FormatError("expected a P5 PGM file");
  return std::move(planes.front());
}

std::vector<Image> read_ppm(const std::filesystem::path& path) {
  auto planes = read_netpbm(path);
  if (planes.size() != 3) throw FormatError("expected a P6 PPM file");
  return planes;
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
  std::vector<unsigned char> body(image.size());
  std::transform(image.pixels.begin(), image.pixels.end(), body.begin(), to_byte);
  write_file(path, "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n",
             body);
}

void write_ppm(const std::vector<Image>& channels, const std::filesystem::path& path) {
  if (channels.size() != 3) throw DimensionError("write_ppm: need three planes");
  const Image& r = channels[0];
  for (const auto& c : channels) {
    if (c.height != r.height || c.width != r.width) throw DimensionError("write_ppm: plane sizes differ");
  }
  std::vector<unsigned char> body(r.size() * 3);
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) body[i * 3 + c] = to_byte(channels[c].pixels[i]);
  }
  write_file(path, "P6\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n", body);
}

std::vector<int> anchor_positions(int extent, int patch_size, int stride) {
  std::vector<int> out;
  const int last = extent - patch_size;
  for (int p = 0; p <= last; p += stride) out.push_back(p);
  if (out.back() != last) out.push_back(last);
  return out;
}

PatchSet extract_patches(const Image& image, int patch_size, int stride) {
  if (patch_size < 1 || stride < 1) throw DomainError("extract_patches: patch size and stride must be >= 1");
  if (image.height < patch_size || image.width < patch_size) {
    throw DimensionError("extract_patches: image smaller than patch");
  }
  const auto rows = anchor_positions(image.height, patch_size, stride);
  const auto cols = anchor_positions(image.width, patch_size, stride);
  PatchSet out;
  out.patch_size = patch_size;
  out.stride = stride;
  out.height = image.height;
  out.width = image.width;
  out.anchors.reserve(rows.size() * cols.size());
  for (int r : rows) {
    for (int c : cols) out.anchors.push_back({r, c});
  }
  const int d = patch_size * patch_size;
  out.data.resize(static_cast<Eigen::Index>(out.anchors.size()), d);
  for (std::size_t n = 0; n < out.anchors.size(); ++n) {
    const auto [r0, c0] = out.anchors[n];
    for (int dr = 0; dr < patch_size; ++dr) {
      for (int dc = 0; dc < patch_size; ++dc) {
        out.data(static_cast<Eigen::Index>(n), dr * patch_size + dc) = image.at(r0 + dr, c0 + dc);
      }
    }
  }
  return out;
}

Image aggregate_patches(const Mat& estimates, const std::vector<PatchAnchor>& anchors,
                        int patch_size, int height, int width, bool clip) {
  if (estimates.rows() != static_cast<Eigen::Index>(anchors.size()) ||
      estimates.cols() != patch_size * patch_size) {
    throw DimensionError("aggregate_patches: estimates do not match geometry");
  }
  Image sum(height, width, 0.0);
  std::vector<int> hits(sum.size(), 0);
  // Single writer, patches visited in anchor order.
  for (std::size_t n = 0; n < anchors.size(); ++n) {
    const auto [r0, c0] = anchors[n];
    if (r0 < 0 || c0 < 0 || r0 + patch_size > height || c0 + patch_size > width) {
      throw DimensionError("aggregate_patches: anchor outside the image");
    }
    for (int dr = 0; dr < patch_size; ++dr) {
      for (int dc = 0; dc < patch_size; ++dc) {
        sum.at(r0 + dr, c0 + dc) += estimates(static_cast<Eigen::Index>(n), dr * patch_size + dc);
        ++hits[static_cast<std::size_t>(r0 + dr) * width + c0 + dc];
      }
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (hits[i] == 0) throw DimensionError("aggregate_patches: pixel not covered by any patch");
    double v = sum.pixels[i] / hits[i];
    if (clip) v = std::clamp(v, 0.0, 255.0);
    sum.pixels[i] = v;
  }
  return sum;
}

}  // namespace ddpt
