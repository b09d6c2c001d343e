#include "ddpt/noisebench.hpp"

#include "ddpt/errors.hpp"
#include "ddpt/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

namespace ddpt {

namespace {

constexpr double kPsnrCap = 99.0;
constexpr int kWin = 11;
constexpr double kWinSigma = 1.5;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

double parse_level(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DomainError("noise grid: bad level '" + std::string(s) + "'");
  }
  return v;
}

void check_same(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width) throw DimensionError("image dimensions differ");
}

// Valid-region separable Gaussian filter.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
  const int oh = h - kWin + 1;
  const int ow = w - kWin + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int j = 0; j < kWin; ++j) s += k[static_cast<std::size_t>(j)] * img[static_cast<std::size_t>(r) * w + c + j];
      tmp[static_cast<std::size_t>(r) * ow + c] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int j = 0; j < kWin; ++j) s += k[static_cast<std::size_t>(j)] * tmp[static_cast<std::size_t>(r + j) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = s;
    }
  return out;
}

}  // namespace

void NoiseSpec::validate() const {
  if (kind != NoiseKind::combined && !(level > 0.0 && std::isfinite(level))) {
    throw DomainError("noise level must be positive");
  }
}

std::string_view noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::heterogeneous: return "heterogeneous";
    case NoiseKind::laplace: return "laplace";
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::combined: return "combined";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  for (auto k : {NoiseKind::gaussian, NoiseKind::heterogeneous, NoiseKind::laplace, NoiseKind::uniform,
                 NoiseKind::combined}) {
    if (noise_kind_name(k) == name) return k;
  }
  throw DomainError("unknown noise family '" + std::string(name) + "'");
}

std::vector<NoiseSpec> parse_noise_grid(std::string_view grid) {
  std::vector<NoiseSpec> out;
  while (!grid.empty()) {
    const auto semi = grid.find(';');
    const auto part = trim(grid.substr(0, semi));
    grid = semi == std::string_view::npos ? std::string_view{} : grid.substr(semi + 1);
    if (part.empty()) continue;
    const auto colon = part.find(':');
    const auto kind = parse_noise_kind(trim(part.substr(0, colon)));
    if (kind == NoiseKind::combined) {
      if (colon != std::string_view::npos && !trim(part.substr(colon + 1)).empty()) {
        throw DomainError("noise grid: combined takes no levels");
      }
      out.push_back({kind, 0.0});
      continue;
    }
    if (colon == std::string_view::npos) throw DomainError("noise grid: missing levels for " + std::string(part));
    auto levels = part.substr(colon + 1);
    while (!levels.empty()) {
      const auto comma = levels.find(',');
      NoiseSpec s{kind, parse_level(levels.substr(0, comma))};
      s.validate();
      out.push_back(s);
      levels = comma == std::string_view::npos ? std::string_view{} : levels.substr(comma + 1);
    }
  }
  if (out.empty()) throw DomainError("noise grid is empty");
  return out;
}

double draw_noise(NoiseKind kind, double level, double x, bool laplace_as_scale, std::uint64_t seed,
                  std::uint64_t pixel) {
  CounterRng rng(seed, pixel);
  switch (kind) {
    case NoiseKind::gaussian: return level * rng.normal();
    case NoiseKind::heterogeneous: return (x / level) * rng.normal();
    case NoiseKind::laplace: {
      const double scale = laplace_as_scale ? level : level / std::numbers::sqrt2;
      const double u = rng.uniform_open() - 0.5;
      return -scale * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
    }
    case NoiseKind::uniform: return level * (2.0 * rng.uniform() - 1.0);
    case NoiseKind::combined: break;
  }
  throw DomainError("draw_noise: combined is not a single family");
}

Image add_noise(const Image& image, const NoiseSpec& spec) {
  spec.validate();
  Image out = image;
  const int rh = (image.height + 1) / 2;
  const int cw = (image.width + 1) / 2;
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      NoiseKind kind = spec.kind;
      double level = spec.level;
      if (kind == NoiseKind::combined) {
        const bool top = r < rh;
        const bool left = c < cw;
        if (top && left) {
          kind = NoiseKind::heterogeneous;
          level = 4.0;
        } else if (top) {
          kind = NoiseKind::laplace;
          level = 30.0;
        } else if (left) {
          kind = NoiseKind::gaussian;
          level = 30.0;
        } else {
          kind = NoiseKind::uniform;
          level = 30.0;
        }
      }
      const auto pixel = static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(image.width) + static_cast<std::uint64_t>(c);
      double v = image.at(r, c) + draw_noise(kind, level, image.at(r, c), spec.laplace_as_scale, spec.seed, pixel);
      if (spec.clip) v = std::clamp(v, 0.0, 255.0);
      out.at(r, c) = v;
    }
  }
  return out;
}

double psnr(const Image& reference, const Image& test) {
  check_same(reference, test);
  if (reference.size() == 0) throw DimensionError("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double e = reference.pixels[i] - test.pixels[i];
    se += e * e;
  }
  const double mse = se / static_cast<double>(reference.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const Image& reference, const Image& test) {
  check_same(reference, test);
  const int h = reference.height;
  const int w = reference.width;
  if (h < kWin || w < kWin) throw DimensionError("ssim: image smaller than 11x11");
  std::vector<double> k(kWin);
  double ks = 0.0;
  for (int j = 0; j < kWin; ++j) {
    const double z = j - kWin / 2;
    k[static_cast<std::size_t>(j)] = std::exp(-z * z / (2.0 * kWinSigma * kWinSigma));
    ks += k[static_cast<std::size_t>(j)];
  }
  for (auto& v : k) v /= ks;
  const auto& x = reference.pixels;
  const auto& y = test.pixels;
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k);
  const auto my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k);
  const auto syy = filter_valid(yy, h, w, k);
  const auto sxy = filter_valid(xy, h, w, k);
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return sum / static_cast<double>(mx.size());
}

}  // namespace ddpt
