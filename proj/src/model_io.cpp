// Layout after the 4-byte magic "DDPT" and a u32 version (1), every value a
// little-endian float64, matrices row-major:
//   d, alpha, beta, mu0[d], Sigma0[d*d], c_a_sq[d], eps0[d], Omega0[d*d],
//   nu0, B0[d*d], T, K,
//   top sticks (a, b) x T,
//   per group: mu_mean[d], mu_cov[d*d], A_mean[d*d], A_col_cov[d*d] x d,
//   noise sticks (a, b) x T x K,
//   per (t, k): u_mean[d], u_cov[d*d], nu, B[d*d].
#include "ddpt/errors.hpp"
#include "ddpt/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ddpt {

namespace {

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  void vec(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  void mat(const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  std::vector<unsigned char> out;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : bytes_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("model file: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    const double v = std::bit_cast<double>(bits);
    if (!std::isfinite(v)) throw FormatError("model file: non-finite value");
    return v;
  }
  int count(const char* what, double limit) {
    const double v = f64();
    if (v < 1.0 || v > limit || v != std::floor(v)) {
      throw FormatError(std::string("model file: invalid ") + what);
    }
    return static_cast<int>(v);
  }
  Vec vec(int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = f64();
    return v;
  }
  Mat mat(int d) {
    Mat m(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = f64();
    return m;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_model(const Hyperparameters& hyper, const VariationalState& state) {
  hyper.validate();
  const int d = hyper.dim();
  const int tn = state.group_count();
  const int kn = state.component_count();
  if (state.dim() != d || tn < 1 || kn < 1) throw DimensionError("encode_model: state does not match hyperparameters");
  Writer w;
  w.raw("DDPT", 4);
  w.u32(kVersion);
  w.f64(d);
  w.f64(hyper.alpha);
  w.f64(hyper.beta);
  w.vec(hyper.mu0);
  w.mat(hyper.Sigma0);
  w.vec(hyper.c_a_sq);
  w.vec(hyper.eps0);
  w.mat(hyper.Omega0);
  w.f64(hyper.nu0);
  w.mat(hyper.B0);
  w.f64(tn);
  w.f64(kn);
  for (const auto& s : state.top_sticks) {
    w.f64(s.a);
    w.f64(s.b);
  }
  for (const auto& g : state.groups) {
    w.vec(g.mu_mean);
    w.mat(g.mu_cov);
    w.mat(g.A_mean);
    for (const auto& c : g.A_col_cov) w.mat(c);
  }
  for (const auto& row : state.noise_sticks) {
    for (const auto& s : row) {
      w.f64(s.a);
      w.f64(s.b);
    }
  }
  for (const auto& row : state.noise) {
    for (const auto& c : row) {
      w.vec(c.u_mean);
      w.mat(c.u_cov);
      w.f64(c.iw.dof);
      w.mat(c.iw.scale);
    }
  }
  return std::move(w.out);
}

ModelFile decode_model(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DDPT", 4) != 0) throw FormatError("model file: bad magic");
  Reader body(bytes.subspan(4));
  const auto version = body.u32();
  if (version != kVersion) throw FormatError("model file: unsupported version " + std::to_string(version));
  ModelFile f;
  auto& h = f.hyper;
  const int d = body.count("dimension", 4096);
  h.alpha = body.f64();
  h.beta = body.f64();
  h.mu0 = body.vec(d);
  h.Sigma0 = body.mat(d);
  h.c_a_sq = body.vec(d);
  h.eps0 = body.vec(d);
  h.Omega0 = body.mat(d);
  h.nu0 = body.f64();
  h.B0 = body.mat(d);
  h.T_max = body.count("T", 1e6);
  h.K_max = body.count("K", 1e6);
  try {
    h.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  const auto tn = static_cast<std::size_t>(h.T_max);
  const auto kn = static_cast<std::size_t>(h.K_max);
  const std::size_t dd = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
  const std::size_t expected =
      8 * (tn * 2 + tn * (d + dd + dd + dd * d) + tn * kn * 2 + tn * kn * (d + dd + 1 + dd));
  if (body.remaining() != expected) throw FormatError("model file: size does not match header");
  auto& s = f.state;
  for (std::size_t t = 0; t < tn; ++t) s.top_sticks.push_back({body.f64(), body.f64()});
  for (std::size_t t = 0; t < tn; ++t) {
    GroupPosterior g;
    g.mu_mean = body.vec(d);
    g.mu_cov = body.mat(d);
    g.A_mean = body.mat(d);
    for (int v = 0; v < d; ++v) g.A_col_cov.push_back(body.mat(d));
    s.groups.push_back(std::move(g));
  }
  s.noise_sticks.resize(tn);
  for (std::size_t t = 0; t < tn; ++t)
    for (std::size_t k = 0; k < kn; ++k) s.noise_sticks[t].push_back({body.f64(), body.f64()});
  s.noise.resize(tn);
  for (std::size_t t = 0; t < tn; ++t) {
    for (std::size_t k = 0; k < kn; ++k) {
      NoiseComponentPosterior c;
      c.u_mean = body.vec(d);
      c.u_cov = body.mat(d);
      c.iw.dof = body.f64();
      c.iw.scale = body.mat(d);
      s.noise[t].push_back(std::move(c));
    }
  }
  for (const auto& st : s.top_sticks)
    if (!(st.a > 0.0 && st.b > 0.0)) throw FormatError("model file: non-positive stick parameter");
  for (const auto& row : s.noise_sticks)
    for (const auto& st : row)
      if (!(st.a > 0.0 && st.b > 0.0)) throw FormatError("model file: non-positive stick parameter");
  attach_patches(s, 0);
  return f;
}

void save_model(const std::filesystem::path& path, const Hyperparameters& hyper,
                const VariationalState& state) {
  const auto bytes = encode_model(hyper, state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace ddpt
