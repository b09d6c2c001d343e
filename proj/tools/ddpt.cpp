#include "ddpt/errors.hpp"
#include "ddpt/kernels.hpp"
#include "ddpt/model.hpp"
#include "ddpt/noisebench.hpp"
#include "ddpt/patchio.hpp"
#include "ddpt/pipeline.hpp"
#include "ddpt/rng.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace ddpt;

struct Netpbm {
  std::vector<Image> channels;
  bool color = false;
};

Netpbm load(const std::string& path) {
  Netpbm n;
  n.channels = read_netpbm(path);
  n.color = n.channels.size() == 3;
  return n;
}

void save(const Netpbm& img, const std::string& path) {
  if (img.color) {
    write_ppm(img.channels, path);
  } else {
    write_pgm(img.channels.front(), path);
  }
}

Image stack(const std::vector<Image>& ch) {
  Image out(ch.front().height * static_cast<int>(ch.size()), ch.front().width);
  std::size_t off = 0;
  for (const auto& c : ch) {
    std::copy(c.pixels.begin(), c.pixels.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(off));
    off += c.size();
  }
  return out;
}

struct Metrics {
  double psnr = 0.0;
  double ssim = 0.0;
};

Metrics measure(const Netpbm& ref, const Netpbm& test) {
  if (ref.channels.size() != test.channels.size()) throw DimensionError("channel counts differ");
  for (std::size_t c = 0; c < ref.channels.size(); ++c) {
    if (ref.channels[c].height != test.channels[c].height || ref.channels[c].width != test.channels[c].width) {
      throw DimensionError("image dimensions differ");
    }
  }
  Metrics m;
  m.psnr = psnr(stack(ref.channels), stack(test.channels));
  for (std::size_t c = 0; c < ref.channels.size(); ++c) m.ssim += ssim(ref.channels[c], test.channels[c]);
  m.ssim /= static_cast<double>(ref.channels.size());
  return m;
}

std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string fmt_level(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw DomainError("bad integer list '" + s + "'");
    }
  }
  if (out.empty()) throw DomainError("empty integer list");
  return out;
}

struct DenoiseArgs {
  std::string input;
  std::string output;
  std::string save_model;
  std::string load_model;
  std::string trace;
  bool literal_sticks = false;
  bool literal_scatter = false;
  bool no_recenter = false;
  bool recenter_every_sweep = false;
  bool no_clip = false;
  bool verbose = false;
  DenoiseConfig config;
};

void add_model_options(CLI::App* cmd, DenoiseArgs& a) {
  auto& c = a.config;
  cmd->add_option("--patch-size", c.patch_size, "Patch side length")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--stride", c.stride, "Patch extraction stride")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--T-max", c.T_max, "Truncation of the group layer")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--K-max", c.K_max, "Truncation of the noise layer")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--alpha", c.alpha, "Group-layer concentration")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--beta", c.beta, "Noise-layer concentration")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--max-sweeps", c.inference.max_sweeps, "Maximum VB sweeps")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", c.inference.tol, "Relative ELBO change that stops the sweeps")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Initialization seed")->capture_default_str();
  cmd->add_flag("--paper-literal-sticks", a.literal_sticks, "Use bare psi(a)-psi(b) stick terms in the responsibilities");
  cmd->add_flag("--paper-literal-scatter", a.literal_scatter, "Halve the residual scatter in the noise scale update");
  cmd->add_flag("--no-recenter", a.no_recenter, "Keep noise means as fitted instead of moving their weighted mean into the group offset");
  cmd->add_flag("--recenter-every-sweep", a.recenter_every_sweep, "Recenter noise means after every sweep");
  cmd->add_flag("--no-clip", a.no_clip, "Do not clip the output to [0, 255]");
  cmd->add_flag("-v,--verbose", a.verbose, "Log the ELBO of every sweep");
}

void finish_config(DenoiseArgs& a) {
  auto& c = a.config;
  c.clip = !a.no_clip;
  c.inference.paper_literal_sticks = a.literal_sticks;
  c.inference.paper_literal_scatter = a.literal_scatter;
  c.inference.recenter = a.no_recenter ? RecenterMode::off
                         : a.recenter_every_sweep ? RecenterMode::every_sweep
                                                  : RecenterMode::on_output;
  if (a.verbose) {
    c.inference.on_sweep = [](int s, double e) { std::fprintf(stderr, "sweep %d\telbo %.10g\n", s, e); };
  }
}

int cmd_denoise(DenoiseArgs& a) {
  finish_config(a);
  auto img = load(a.input);
  if ((!a.save_model.empty() || !a.load_model.empty()) && img.color) {
    throw DomainError("--save-model and --load-model need a grayscale input");
  }
  if (!a.load_model.empty()) a.config.warm_start = load_model(a.load_model);
  Netpbm out;
  out.color = img.color;
  std::ofstream trace;
  if (!a.trace.empty()) {
    trace.open(a.trace);
    if (!trace) throw IoError("cannot open " + a.trace);
  }
  for (std::size_t c = 0; c < img.channels.size(); ++c) {
    const auto r = denoise_image(img.channels[c], a.config);
    out.channels.push_back(r.image);
    std::fprintf(stderr, "%selbo %.10g\tsweeps %d%s\n",
                 img.color ? ("channel " + std::to_string(c) + "\t").c_str() : "", r.vb.trace.back().elbo,
                 r.vb.sweeps, r.vb.converged ? "\tconverged" : "");
    if (trace.is_open()) write_elbo_trace(trace, r.vb.trace);
    if (!a.save_model.empty()) save_model(a.save_model, r.hyper, r.vb.state);
  }
  save(out, a.output);
  return 0;
}

struct NoiseArgs {
  std::string input;
  std::string output;
  std::string family = "gaussian";
  double level = 25.0;
  std::uint64_t seed = 0;
  bool no_clip = false;
  bool laplace_scale = false;
};

NoiseSpec make_spec(const NoiseArgs& a) {
  NoiseSpec s;
  s.kind = parse_noise_kind(a.family);
  s.level = a.level;
  s.seed = a.seed;
  s.clip = !a.no_clip;
  s.laplace_as_scale = a.laplace_scale;
  s.validate();
  return s;
}

// Channel c of a color image uses its own key so the planes are independent.
std::uint64_t channel_seed(std::uint64_t seed, std::size_t c) {
  return c == 0 ? seed : mix64(seed ^ mix64(0xC0102ULL + c));
}

Netpbm noisy_copy(const Netpbm& img, NoiseSpec spec) {
  Netpbm out;
  out.color = img.color;
  const auto base = spec.seed;
  for (std::size_t c = 0; c < img.channels.size(); ++c) {
    spec.seed = channel_seed(base, c);
    out.channels.push_back(add_noise(img.channels[c], spec));
  }
  return out;
}

int cmd_add_noise(const NoiseArgs& a) {
  const auto spec = make_spec(a);
  save(noisy_copy(load(a.input), spec), a.output);
  return 0;
}

int cmd_eval(const std::string& ref, const std::string& test) {
  const auto m = measure(load(ref), load(test));
  std::cout << "image\tpsnr_db\tssim\n" << test << '\t' << fmt(m.psnr, 4) << '\t' << fmt(m.ssim, 6) << '\n';
  return 0;
}

struct SynthArgs {
  int dim = 16;
  int groups = 1;
  std::string components = "1";
  std::string ranks = "2";
  long n = 1000;
  std::uint64_t seed = 0;
  double alpha = 3.0;
  double beta = 1e-3;
  double nu0 = 0.0;
  double noise_scale = 1.0;
  bool noiseless = false;
  std::string output;
};

int cmd_synth(const SynthArgs& a) {
  auto h = default_hyperparameters(a.dim);
  h.alpha = a.alpha;
  h.beta = a.beta;
  if (a.nu0 > 0.0) h.nu0 = a.nu0;
  h.B0 = a.noise_scale * Mat::Identity(a.dim, a.dim);
  h.T_max = std::max(h.T_max, a.groups);
  auto comps = parse_int_list(a.components);
  auto ranks = parse_int_list(a.ranks);
  if (comps.size() == 1) comps.assign(static_cast<std::size_t>(a.groups), comps.front());
  if (ranks.size() == 1) ranks.assign(static_cast<std::size_t>(a.groups), ranks.front());
  if (a.n < 1) throw DomainError("--n must be positive");
  GenerativeSample s;
  s.params = draw_generative_params(h, a.groups, comps, ranks, a.seed);
  if (a.noiseless) {
    for (auto& row : s.params.u)
      for (auto& u : row) u.setZero();
    for (auto& row : s.params.upsilon)
      for (auto& y : row) y.setZero();
  }
  s.patches = sample_from_params(s.params, a.n, a.seed);
  std::ofstream file;
  if (!a.output.empty()) {
    file.open(a.output);
    if (!file) throw IoError("cannot open " + a.output);
  }
  std::ostream& out = a.output.empty() ? std::cout : file;
  out << "z\tz_noise";
  for (int j = 1; j <= a.dim; ++j) out << "\tx" << j;
  out << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < s.patches.data.rows(); ++i) {
    out << s.patches.group[static_cast<std::size_t>(i)] + 1 << '\t' << s.patches.component[static_cast<std::size_t>(i)] + 1;
    for (int j = 0; j < a.dim; ++j) {
      std::snprintf(buf, sizeof buf, "\t%.17g", s.patches.data(i, j));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed");
  return 0;
}

constexpr const char* kDefaultGrid = "gaussian:15,30,45;heterogeneous:3,4,5;laplace:15,30,45;uniform:15,30,45;combined";

int cmd_bench(const std::vector<std::string>& images, const std::string& grid, DenoiseArgs& a,
              std::uint64_t noise_seed) {
  if (images.empty()) throw DomainError("bench needs at least one image");
  finish_config(a);
  const auto specs = parse_noise_grid(grid);
  std::cout << "image\tfamily\tlevel\tpsnr_noisy_db\tssim_noisy\tpsnr_db\tssim\n";
  for (const auto& path : images) {
    const auto clean = load(path);
    for (auto spec : specs) {
      spec.seed = noise_seed;
      const auto noisy = noisy_copy(clean, spec);
      Netpbm den;
      den.color = noisy.color;
      for (const auto& ch : noisy.channels) den.channels.push_back(denoise_image(ch, a.config).image);
      const auto mn = measure(clean, noisy);
      const auto md = measure(clean, den);
      std::cout << path << '\t' << noise_kind_name(spec.kind) << '\t'
                << (spec.kind == NoiseKind::combined ? std::string("-") : fmt_level(spec.level))
                << '\t' << fmt(mn.psnr, 4) << '\t' << fmt(mn.ssim, 6) << '\t' << fmt(md.psnr, 4) << '\t'
                << fmt(md.ssim, 6) << '\n';
      std::cout.flush();
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind image denoising with a two-layer dependent Dirichlet process tree"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: all available cores)")->capture_default_str();

  DenoiseArgs den;
  auto* denoise = app.add_subcommand("denoise", "Denoise a PGM/PPM image");
  denoise->add_option("-i,--input", den.input, "Noisy input image")->required();
  denoise->add_option("-o,--output", den.output, "Denoised output image")->required();
  denoise->add_option("--save-model", den.save_model, "Write the fitted posterior to this file");
  denoise->add_option("--load-model", den.load_model, "Start from a saved posterior");
  denoise->add_option("--trace", den.trace, "Write the per-sweep ELBO trace (TSV)");
  add_model_options(denoise, den);

  NoiseArgs na;
  auto* noise = app.add_subcommand("add-noise", "Add synthetic noise to an image");
  noise->add_option("-i,--input", na.input, "Clean input image")->required();
  noise->add_option("-o,--output", na.output, "Noisy output image")->required();
  noise->add_option("--family", na.family, "gaussian, heterogeneous, laplace, uniform or combined")->capture_default_str();
  noise->add_option("--level", na.level, "sigma, b, sigma or a of the family")->capture_default_str();
  noise->add_option("--seed", na.seed, "Noise seed")->capture_default_str();
  noise->add_flag("--no-clip", na.no_clip, "Do not clip to [0, 255]");
  noise->add_flag("--laplace-scale", na.laplace_scale, "Read the Laplace level as the scale instead of the standard deviation");

  std::string ref;
  std::string test;
  auto* eval = app.add_subcommand("eval", "PSNR and SSIM of a test image against a reference");
  eval->add_option("reference", ref, "Reference image")->required();
  eval->add_option("test", test, "Test image")->required();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Sample noisy patches from the generative model");
  synth->add_option("--dim", sa.dim, "Patch dimension")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--groups", sa.groups, "Number of groups")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--components", sa.components, "Noise components per group (one value or one per group)")->capture_default_str();
  synth->add_option("--ranks", sa.ranks, "Dictionary rank per group (one value or one per group)")->capture_default_str();
  synth->add_option("--n", sa.n, "Number of patches")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Sampling seed")->capture_default_str();
  synth->add_option("--alpha", sa.alpha, "Group-layer concentration")->capture_default_str();
  synth->add_option("--beta", sa.beta, "Noise-layer concentration")->capture_default_str();
  synth->add_option("--nu0", sa.nu0, "Inverse-Wishart dof (0: the patch dimension)")->capture_default_str();
  synth->add_option("--noise-scale", sa.noise_scale, "Inverse-Wishart scale B0 = s I")->capture_default_str();
  synth->add_flag("--noiseless", sa.noiseless, "Zero the noise means and covariances");
  synth->add_option("-o,--output", sa.output, "Output TSV (default: stdout)");

  DenoiseArgs bench_args;
  std::vector<std::string> images;
  std::string grid = kDefaultGrid;
  std::uint64_t noise_seed = 0;
  auto* bench = app.add_subcommand("bench", "Noise family x level grid over a set of clean images");
  bench->add_option("images", images, "Clean images");
  bench->add_option("--grid", grid, "family:levels groups separated by ';'")->capture_default_str();
  bench->add_option("--noise-seed", noise_seed, "Noise seed")->capture_default_str();
  add_model_options(bench, bench_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    set_thread_count(threads);
    if (*denoise) return cmd_denoise(den);
    if (*noise) {
      try {
        (void)parse_noise_kind(na.family);
      } catch (const DomainError& e) {
        std::cerr << e.what() << "\n\n" << noise->help();
        return 2;
      }
      return cmd_add_noise(na);
    }
    if (*eval) return cmd_eval(ref, test);
    if (*synth) return cmd_synth(sa);
    if (*bench) return cmd_bench(images, grid, bench_args, noise_seed);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
