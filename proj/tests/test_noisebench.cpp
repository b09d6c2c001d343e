#include "ddpt/errors.hpp"
#include "ddpt/noisebench.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ddpt;

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::vector<double> noise_sample(const NoiseSpec& spec, int h, int w, double gray) {
  NoiseSpec s = spec;
  s.clip = false;
  const Image base(h, w, gray);
  const Image out = add_noise(base, s);
  std::vector<double> e(out.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = out.pixels[i] - gray;
  return e;
}

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

double sd_of_block(const Image& img, int r0, int r1, int c0, int c1, double gray) {
  std::vector<double> v;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) v.push_back(img.at(r, c) - gray);
  return std::sqrt(moments(v).var);
}

// Direct two-dimensional evaluation of mean SSIM, written independently of
// the separable implementation.
double ssim_direct(const Image& a, const Image& b) {
  const int win = 11;
  const double sigma = 1.5;
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);
  double wts[11][11];
  double total = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double di = i - 5;
      const double dj = j - 5;
      wts[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      total += wts[i][j];
    }
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + win <= a.height; ++r) {
    for (int c = 0; c + win <= a.width; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wv = wts[i][j] / total;
          const double x = a.at(r + i, c + j);
          const double y = b.at(r + i, c + j);
          mx += wv * x;
          my += wv * y;
          sxx += wv * x * x;
          syy += wv * y * y;
          sxy += wv * x * y;
        }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cxy = sxy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return acc / count;
}

}  // namespace

TEST_CASE("parse noise families and grids") {
  CHECK(parse_noise_kind("laplace") == NoiseKind::laplace);
  CHECK(noise_kind_name(NoiseKind::heterogeneous) == "heterogeneous");
  CHECK_THROWS_AS(parse_noise_kind("poisson"), DomainError);
  const auto g = parse_noise_grid("gaussian:15,30,45; uniform:5;combined");
  REQUIRE(g.size() == 5);
  CHECK(g[0].kind == NoiseKind::gaussian);
  CHECK(g[2].level == 45.0);
  CHECK(g[3].kind == NoiseKind::uniform);
  CHECK(g[4].kind == NoiseKind::combined);
  CHECK(parse_noise_grid("gaussian:15,30,45").size() == 3);
  CHECK_THROWS_AS(parse_noise_grid("gaussian"), DomainError);
  CHECK_THROWS_AS(parse_noise_grid("gaussian:-1"), DomainError);
  CHECK_THROWS_AS(parse_noise_grid("gaussian:abc"), DomainError);
  CHECK_THROWS_AS(parse_noise_grid("combined:3"), DomainError);
  CHECK_THROWS_AS(parse_noise_grid(""), DomainError);
  CHECK_THROWS_AS(NoiseSpec({NoiseKind::uniform, 0.0}).validate(), DomainError);
}

TEST_CASE("noise draws are keyed by seed and pixel") {
  const auto img = testing::random_image(17, 23, 2);
  const NoiseSpec spec{NoiseKind::gaussian, 12.0, 99, false};
  const auto a = add_noise(img, spec);
  const auto b = add_noise(img, spec);
  CHECK(a.pixels == b.pixels);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      CHECK(a.at(r, c) == img.at(r, c) + draw_noise(NoiseKind::gaussian, 12.0, img.at(r, c), false, 99,
                                                    static_cast<std::uint64_t>(r * img.width + c)));
  auto other = spec;
  other.seed = 100;
  CHECK(add_noise(img, other).pixels != a.pixels);
}

TEST_CASE("heterogeneous noise leaves a black image unchanged") {
  const Image black(20, 20, 0.0);
  const auto out = add_noise(black, {NoiseKind::heterogeneous, 4.0, 1, false});
  CHECK(out.pixels == black.pixels);
}

TEST_CASE("clipping keeps intensities in range") {
  const auto img = testing::random_image(40, 40, 3);
  const auto out = add_noise(img, {NoiseKind::laplace, 45.0, 5, true});
  for (double v : out.pixels) {
    CHECK(v >= 0.0);
    CHECK(v <= 255.0);
  }
  const auto tiny = add_noise(img, {NoiseKind::gaussian, 0.001, 5, true});
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::round(tiny.pixels[i]) == img.pixels[i]);
}

TEST_CASE("generators match their analytic distributions") {
  const double ks_crit = testing::ks_critical_001(100000);
  const double gray = 128.0;
  const auto gauss = noise_sample({NoiseKind::gaussian, 25.0, 11}, 250, 400, gray);
  CHECK(testing::ks_statistic(gauss, [](double x) { return phi(x / 25.0); }) < ks_crit);
  const auto het = noise_sample({NoiseKind::heterogeneous, 4.0, 12}, 250, 400, gray);
  CHECK(testing::ks_statistic(het, [&](double x) { return phi(x / (gray / 4.0)); }) < ks_crit);
  const auto lap = noise_sample({NoiseKind::laplace, 30.0, 13}, 250, 400, gray);
  const double s = 30.0 / std::numbers::sqrt2;
  auto laplace_cdf = [](double x, double b) { return x < 0 ? 0.5 * std::exp(x / b) : 1.0 - 0.5 * std::exp(-x / b); };
  CHECK(testing::ks_statistic(lap, [&](double x) { return laplace_cdf(x, s); }) < ks_crit);
  NoiseSpec as_scale{NoiseKind::laplace, 30.0, 14};
  as_scale.laplace_as_scale = true;
  const auto lap2 = noise_sample(as_scale, 250, 400, gray);
  CHECK(testing::ks_statistic(lap2, [&](double x) { return laplace_cdf(x, 30.0); }) < ks_crit);
  const auto uni = noise_sample({NoiseKind::uniform, 30.0, 15}, 250, 400, gray);
  CHECK(testing::ks_statistic(uni, [](double x) { return std::clamp((x + 30.0) / 60.0, 0.0, 1.0); }) < ks_crit);
  // The KS test has power: the wrong Laplace reading is rejected.
  CHECK(testing::ks_statistic(lap, [&](double x) { return laplace_cdf(x, 30.0); }) > ks_crit);
}

TEST_CASE("generators are zero mean with the stated variance") {
  const double gray = 128.0;
  struct Case {
    NoiseSpec spec;
    double var;
    double kurtosis;
  };
  const std::vector<Case> cases{
      {{NoiseKind::gaussian, 15.0, 21}, 225.0, 3.0},
      {{NoiseKind::heterogeneous, 5.0, 22}, (gray / 5.0) * (gray / 5.0), 3.0},
      {{NoiseKind::laplace, 45.0, 23}, 2025.0, 6.0},
      {{NoiseKind::uniform, 30.0, 24}, 300.0, 1.8},
  };
  for (const auto& c : cases) {
    const auto e = noise_sample(c.spec, 1000, 1000, gray);
    const auto m = moments(e);
    const double n = static_cast<double>(e.size());
    INFO(noise_kind_name(c.spec.kind));
    CHECK(std::abs(m.mean) <= 3.0 * std::sqrt(c.var / n));
    const double var_se = c.var * std::sqrt((c.kurtosis - 1.0) / n);
    CHECK(std::abs(m.var - c.var) <= 3.0 * var_se);
  }
}

TEST_CASE("combined noise quadrants") {
  const double gray = 128.0;
  NoiseSpec spec{NoiseKind::combined, 0.0, 31, false};
  const auto out = add_noise(Image(100, 100, gray), spec);
  CHECK(sd_of_block(out, 0, 50, 0, 50, gray) == doctest::Approx(gray / 4.0).epsilon(0.05));
  CHECK(sd_of_block(out, 0, 50, 50, 100, gray) == doctest::Approx(30.0).epsilon(0.05));
  CHECK(sd_of_block(out, 50, 100, 0, 50, gray) == doctest::Approx(30.0).epsilon(0.05));
  CHECK(sd_of_block(out, 50, 100, 50, 100, gray) == doctest::Approx(30.0 / std::sqrt(3.0)).epsilon(0.05));
  // Odd sizes put the extra row and column in the upper and left parts.
  const auto odd = add_noise(Image(5, 7, gray), spec);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 7; ++c) {
      const bool top = r < 3;
      const bool left = c < 4;
      const NoiseKind k = top ? (left ? NoiseKind::heterogeneous : NoiseKind::laplace)
                              : (left ? NoiseKind::gaussian : NoiseKind::uniform);
      const double level = (top && left) ? 4.0 : 30.0;
      CHECK(odd.at(r, c) == gray + draw_noise(k, level, gray, false, 31, static_cast<std::uint64_t>(r * 7 + c)));
    }
}

TEST_CASE("heterogeneous noise std grows as intensity over b") {
  for (double b : {3.0, 4.0, 5.0}) {
    const int rows = 4000;
    const int cols = 64;
    Image grad(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) grad.at(r, c) = 4.0 * c;
    const auto out = add_noise(grad, {NoiseKind::heterogeneous, b, 40, false});
    std::vector<double> xs, sds;
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int r = 0; r < rows; ++r) {
        const double e = out.at(r, c) - grad.at(r, c);
        s += e * e;
      }
      xs.push_back(grad.at(0, c));
      sds.push_back(std::sqrt(s / rows));
    }
    double mx = 0, my = 0;
    for (int c = 0; c < cols; ++c) {
      mx += xs[static_cast<std::size_t>(c)];
      my += sds[static_cast<std::size_t>(c)];
    }
    mx /= cols;
    my /= cols;
    double sxy = 0, sxx = 0;
    for (int c = 0; c < cols; ++c) {
      sxy += (xs[static_cast<std::size_t>(c)] - mx) * (sds[static_cast<std::size_t>(c)] - my);
      sxx += (xs[static_cast<std::size_t>(c)] - mx) * (xs[static_cast<std::size_t>(c)] - mx);
    }
    CHECK(sxy / sxx == doctest::Approx(1.0 / b).epsilon(0.02));
  }
}

TEST_CASE("psnr values") {
  const auto a = testing::random_image(16, 16, 1);
  CHECK(psnr(a, a) == 99.0);
  CHECK(psnr(Image(8, 8, 0.0), Image(8, 8, 255.0)) == doctest::Approx(0.0).epsilon(1e-12));
  Image b = a;
  for (auto& p : b.pixels) p += 1.0;
  CHECK(std::abs(psnr(a, b) - 20.0 * std::log10(255.0)) <= 1e-6);
  CHECK(std::abs(psnr(a, b) - 48.1308) <= 1e-4);
  const auto c = testing::random_image(16, 16, 2);
  CHECK(psnr(a, c) == psnr(c, a));
  CHECK_THROWS_AS(psnr(a, Image(16, 15)), DimensionError);
  // Circular translation of both images.
  Image as(16, 16), cs(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int col = 0; col < 16; ++col) {
      as.at((r + 3) % 16, (col + 7) % 16) = a.at(r, col);
      cs.at((r + 3) % 16, (col + 7) % 16) = c.at(r, col);
    }
  CHECK(psnr(as, cs) == doctest::Approx(psnr(a, c)).epsilon(1e-13));
}

TEST_CASE("ssim values") {
  const auto a = testing::random_image(64, 64, 5);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));
  const auto p = testing::piecewise_smooth(32, 40);
  CHECK(ssim(p, p) == doctest::Approx(1.0).epsilon(1e-14));
  const double C1 = (0.01 * 255) * (0.01 * 255);
  for (auto [u, v] : {std::pair{100.0, 140.0}, std::pair{0.0, 255.0}, std::pair{30.0, 31.0}}) {
    const double expect = (2 * u * v + C1) / (u * u + v * v + C1);
    CHECK(std::abs(ssim(Image(20, 20, u), Image(20, 20, v)) - expect) <= 1e-6);
  }
  const auto b = testing::random_image(64, 64, 6);
  CHECK(std::abs(ssim(a, b) - ssim_direct(a, b)) <= 1e-6);
  const auto noisy = add_noise(p, {NoiseKind::gaussian, 20.0, 2});
  CHECK(std::abs(ssim(p, noisy) - ssim_direct(p, noisy)) <= 1e-6);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-13));
  CHECK(ssim(a, b) >= -1.0);
  CHECK(ssim(a, b) <= 1.0);
  CHECK_THROWS_AS(ssim(Image(10, 30), Image(10, 30)), DimensionError);
  CHECK_THROWS_AS(ssim(a, Image(64, 63)), DimensionError);
}

TEST_CASE("ssim is translation equivariant") {
  // Period-16 content on a 58x58 canvas leaves 48x48 windows, three full
  // periods, so any circular shift of both images keeps the mean.
  const auto ta = testing::random_image(16, 16, 7);
  const auto tb = testing::random_image(16, 16, 8);
  auto tile = [](const Image& t, int dr, int dc) {
    Image out(58, 58);
    for (int r = 0; r < 58; ++r)
      for (int c = 0; c < 58; ++c) out.at(r, c) = t.at((r + dr) % 16, (c + dc) % 16);
    return out;
  };
  const double base = ssim(tile(ta, 0, 0), tile(tb, 0, 0));
  CHECK(ssim(tile(ta, 3, 5), tile(tb, 3, 5)) == doctest::Approx(base).epsilon(1e-12));
  CHECK(ssim(tile(ta, 11, 2), tile(tb, 11, 2)) == doctest::Approx(base).epsilon(1e-12));
}
