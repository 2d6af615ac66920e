// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "mflow/csv.hpp"
#include "mflow/parallel.hpp"

namespace mflow {

// ---- 2-D point clouds --------------------------------------------------

const std::vector<std::string>& gen_2d_names() {
  static const std::vector<std::string> names = {"checkerboard", "two_moons", "ring"};
  return names;
}

bool checkerboard_cell_occupied(double x, double y) {
  if (x < -2.0 || x >= 2.0 || y < -2.0 || y >= 2.0) return false;
  const auto cx = static_cast<long>(std::floor(x));
  const auto cy = static_cast<long>(std::floor(y));
  return ((cx + cy) % 2 + 2) % 2 == 0;
}

namespace {

double truncated_normal(Rng& rng) {
  for (;;) {
    const double n = rng.normal();
    if (std::abs(n) <= 3.0) return n;
  }
}

}  // namespace

Tensor gen_2d(const std::string& name, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("gen_2d needs n >= 1");
  Tensor out({n, 2});
  constexpr double pi = std::numbers::pi;
  if (name == "ring") {
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(0.0, 2.0 * pi);
      const double r = kRingRadius + kPointNoise * truncated_normal(rng);
      out.at(i, 0) = r * std::cos(a);
      out.at(i, 1) = r * std::sin(a);
    }
  } else if (name == "two_moons") {
    for (std::size_t i = 0; i < n; ++i) {
      const bool lower = rng.index(2) == 1;
      const double a = rng.uniform(0.0, pi);
      double x = std::cos(a), y = std::sin(a);
      if (lower) {
        x = 1.0 - x;
        y = 0.5 - y;
      }
      out.at(i, 0) = x - 0.5 + kPointNoise * rng.normal();
      out.at(i, 1) = y - 0.25 + kPointNoise * rng.normal();
    }
  } else if (name == "checkerboard") {
    for (std::size_t i = 0; i < n; ++i) {
      // 8 occupied unit cells; cell k sits in row k/2 with parity offset.
      const std::size_t k = rng.index(8);
      const double row = static_cast<double>(k / 2);
      const double col = static_cast<double>(2 * (k % 2) + (k / 2) % 2);
      out.at(i, 0) = col - 2.0 + rng.uniform();
      out.at(i, 1) = row - 2.0 + rng.uniform();
    }
  } else {
    std::string valid;
    for (const std::string& v : gen_2d_names()) valid += (valid.empty() ? "" : " | ") + v;
    throw std::invalid_argument("unknown 2-D distribution '" + name + "' (expected " + valid + ")");
  }
  return out;
}

// ---- patterns ----------------------------------------------------------

StripeWave draw_stripe_wave(std::size_t height, Rng& rng) {
  const double h = static_cast<double>(height);
  StripeWave w;
  w.angle = rng.uniform(0.0, std::numbers::pi);
  w.period = rng.uniform(h / 4.0, h / 2.0);
  w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return w;
}

namespace {

Tensor stripes(std::size_t h, std::size_t w, Rng& rng) {
  const StripeWave wave = draw_stripe_wave(h, rng);
  const double kx = std::cos(wave.angle) * 2.0 * std::numbers::pi / wave.period;
  const double ky = std::sin(wave.angle) * 2.0 * std::numbers::pi / wave.period;
  Tensor img({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img.at(y, x) = 0.5 + 0.5 * std::sin(kx * static_cast<double>(x) +
                                          ky * static_cast<double>(y) + wave.phase);
  return img;
}

Tensor checker(std::size_t h, std::size_t w, Rng& rng) {
  const std::size_t cell = 4 + rng.index(5);
  const std::size_t ox = rng.index(cell);
  const std::size_t oy = rng.index(cell);
  const double lo = rng.uniform(0.0, 0.3);
  const double hi = rng.uniform(0.7, 1.0);
  Tensor img({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img.at(y, x) = (((x + ox) / cell + (y + oy) / cell) % 2 == 0) ? hi : lo;
  return img;
}

Tensor radial_dots(std::size_t h, std::size_t w, Rng& rng) {
  const double fh = static_cast<double>(h), fw = static_cast<double>(w);
  const double cx = rng.uniform(0.25, 0.75) * fw;
  const double cy = rng.uniform(0.25, 0.75) * fh;
  const double radius = rng.uniform(0.5, 1.0) * std::max(fh, fw);
  Tensor img({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double r = std::sqrt(dx * dx + dy * dy);
      img.at(y, x) = 0.1 + 0.8 * std::max(0.0, 1.0 - r / radius);
    }
  const std::size_t dots = 3 + rng.index(4);
  for (std::size_t d = 0; d < dots; ++d) {
    const double dx = rng.uniform(0.0, fw);
    const double dy = rng.uniform(0.0, fh);
    const double dr = rng.uniform(1.5, 3.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double ex = static_cast<double>(x) + 0.5 - dx, ey = static_cast<double>(y) + 0.5 - dy;
        if (ex * ex + ey * ey <= dr * dr) img.at(y, x) = 1.0;
      }
  }
  return img;
}

}  // namespace

Tensor gen_pattern(int label, const ConditionSpace& conditions, std::size_t height,
                   std::size_t width, Rng& rng) {
  if (conditions.role(label) != LabelRole::content) {
    throw std::invalid_argument("gen_pattern: label " + std::to_string(label) +
                                " is a conditioning label, not a content class");
  }
  if (height == 0 || width == 0) throw std::invalid_argument("gen_pattern needs a non-empty image");
  Tensor img;
  switch (label % 3) {
    case 0: img = stripes(height, width, rng); break;
    case 1: img = checker(height, width, rng); break;
    default: img = radial_dots(height, width, rng); break;
  }
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// ---- degradation -------------------------------------------------------

void DegradeParams::validate() const {
  if (!(blur_sigma >= 0.0)) throw std::invalid_argument("degrade.blur_sigma must be >= 0");
  if (scale < 1) throw std::invalid_argument("degrade.scale must be >= 1");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("degrade.noise_sigma must be >= 0");
  if (quant_levels == 1) throw std::invalid_argument("degrade.quant_levels must be 0 (off) or >= 2");
}

namespace {

void check_image(const Tensor& img, const char* what) {
  if (img.rank() != 2 || img.numel() == 0) {
    throw ShapeError(std::string(what) + " needs a non-empty [H,W] image, got " +
                     shape_str(img.shape()));
  }
}

// Half-sample symmetric index: -1 -> 0, n -> n-1, repeating with period 2n.
std::size_t reflect(long i, long n) {
  const long p = 2 * n;
  long m = ((i % p) + p) % p;
  if (m >= n) m = p - 1 - m;
  return static_cast<std::size_t>(m);
}

}  // namespace

Tensor gaussian_blur(const Tensor& img, double sigma) {
  check_image(img, "gaussian_blur");
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_blur needs sigma >= 0");
  if (sigma == 0.0) return img;
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = w;
    total += w;
  }
  for (double& w : kernel) w /= total;

  const long h = static_cast<long>(img.dim(0)), w = static_cast<long>(img.dim(1));
  const std::size_t taps = kernel.size();
  // Reflected source index of tap k for every output position along an axis.
  auto index_table = [&](long n) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(n) * taps);
    for (long i = 0; i < n; ++i)
      for (long k = -radius; k <= radius; ++k)
        idx[static_cast<std::size_t>(i) * taps + static_cast<std::size_t>(k + radius)] = reflect(i + k, n);
    return idx;
  };
  const std::vector<std::size_t> xs = index_table(w), ys = index_table(h);
  const std::size_t uw = static_cast<std::size_t>(w), uh = static_cast<std::size_t>(h);
  Tensor tmp(img.shape()), out(img.shape());
  const double* src = img.data().data();
  double* mid = tmp.data().data();
  double* dst = out.data().data();
  for (std::size_t y = 0; y < uh; ++y)
    for (std::size_t x = 0; x < uw; ++x) {
      double acc = 0.0;
      const std::size_t* ix = xs.data() + x * taps;
      for (std::size_t k = 0; k < taps; ++k) acc += kernel[k] * src[y * uw + ix[k]];
      mid[y * uw + x] = acc;
    }
  for (std::size_t y = 0; y < uh; ++y) {
    const std::size_t* iy = ys.data() + y * taps;
    for (std::size_t x = 0; x < uw; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < taps; ++k) acc += kernel[k] * mid[iy[k] * uw + x];
      dst[y * uw + x] = acc;
    }
  }
  return out;
}

Tensor block_mean_downsample(const Tensor& img, std::size_t k) {
  check_image(img, "block_mean_downsample");
  if (k == 0 || img.dim(0) % k != 0 || img.dim(1) % k != 0) {
    throw std::invalid_argument("scale " + std::to_string(k) + " does not divide image " +
                                shape_str(img.shape()));
  }
  const std::size_t oh = img.dim(0) / k, ow = img.dim(1) / k;
  Tensor out({oh, ow});
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t dy = 0; dy < k; ++dy)
        for (std::size_t dx = 0; dx < k; ++dx) acc += img.at(y * k + dy, x * k + dx);
      out.at(y, x) = acc * inv;
    }
  return out;
}

Tensor upsample_nearest(const Tensor& img, std::size_t k) {
  check_image(img, "upsample_nearest");
  if (k == 0) throw std::invalid_argument("upsample_nearest needs k >= 1");
  Tensor out({img.dim(0) * k, img.dim(1) * k});
  for (std::size_t y = 0; y < out.dim(0); ++y)
    for (std::size_t x = 0; x < out.dim(1); ++x) out.at(y, x) = img.at(y / k, x / k);
  return out;
}

Tensor degrade(const Tensor& hr, const DegradeParams& params, Rng& rng) {
  params.validate();
  check_image(hr, "degrade");
  if (hr.dim(0) % params.scale != 0 || hr.dim(1) % params.scale != 0) {
    throw std::invalid_argument("degrade: scale " + std::to_string(params.scale) +
                                " does not divide image " + shape_str(hr.shape()));
  }
  Tensor lr = block_mean_downsample(gaussian_blur(hr, params.blur_sigma), params.scale);
  if (params.quant_levels >= 2) {
    const double q = static_cast<double>(params.quant_levels - 1);
    for (double& v : lr.data()) v = std::round(std::clamp(v, 0.0, 1.0) * q) / q;
  }
  if (params.noise_sigma > 0.0) {
    for (double& v : lr.data()) v += params.noise_sigma * rng.normal();
  }
  for (double& v : lr.data()) v = std::clamp(v, 0.0, 1.0);
  return lr;
}

SrPair make_sr_pair(int label, std::size_t hr_size, const DegradeParams& params,
                    const ConditionSpace& conditions, std::uint64_t seed) {
  SrPair pair;
  pair.label = label;
  pair.seed = seed;
  Rng content(seed);
  pair.hr = gen_pattern(label, conditions, hr_size, hr_size, content);
  Rng noise(Rng::derive(seed, 1));
  pair.lr = degrade(pair.hr, params, noise);
  return pair;
}

Tensor pixels_to_latent(const Tensor& img) {
  Tensor z = img;
  for (double& v : z.data()) v = 2.0 * v - 1.0;
  return z;
}

Tensor latent_to_pixels(const Tensor& z) {
  Tensor img = z;
  for (double& v : img.data()) v = std::clamp(0.5 * (v + 1.0), 0.0, 1.0);
  return img;
}

// ---- PGM ---------------------------------------------------------------

void write_pgm(const std::filesystem::path& path, const Tensor& img) {
  check_image(img, "write_pgm");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  os << "P5\n" << img.dim(1) << ' ' << img.dim(0) << "\n255\n";
  for (double v : img.data()) {
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  if (!os) throw std::ios_base::failure("write failed: " + path.string());
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::ios_base::failure("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w == 0 || h == 0) {
    throw std::ios_base::failure(path.string() + " is not an 8-bit binary PGM");
  }
  is.get();
  Tensor img({h, w});
  for (double& v : img.data()) {
    const int c = is.get();
    if (c == EOF) throw std::ios_base::failure(path.string() + " is truncated");
    v = static_cast<double>(c) / 255.0;
  }
  return img;
}

// ---- tasks -------------------------------------------------------------

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::gaussian: return "gaussian";
    case TaskKind::gen2d: return "gen2d";
    case TaskKind::toysr: return "toysr";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "gaussian") return TaskKind::gaussian;
  if (name == "gen2d") return TaskKind::gen2d;
  if (name == "toysr") return TaskKind::toysr;
  throw std::invalid_argument("unknown task '" + name + "' (expected gaussian | gen2d | toysr)");
}

void TaskConfig::validate() const {
  auto prob = [](double p, const char* key) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(key) + " must lie in [0,1]");
  };
  prob(null_prob, "task.null_prob");
  prob(negative_prob, "task.negative_prob");
  if (null_prob + negative_prob > 1.0) {
    throw std::invalid_argument("task.null_prob + task.negative_prob must be <= 1");
  }
  switch (kind) {
    case TaskKind::gaussian: analytic().validate(); break;
    case TaskKind::gen2d: {
      const auto& names = gen_2d_names();
      if (std::find(names.begin(), names.end(), dist) == names.end()) {
        Rng probe(0);
        gen_2d(dist, 1, probe);  // raises with the list of valid names
      }
      break;
    }
    case TaskKind::toysr:
      degrade.validate();
      if (hr_size == 0 || hr_size % degrade.scale != 0) {
        throw std::invalid_argument("task.hr_size must be a positive multiple of degrade.scale");
      }
      if (num_classes == 0) throw std::invalid_argument("task.num_classes must be >= 1");
      if (!(negative_blur_sigma >= 0.0)) {
        throw std::invalid_argument("task.negative_blur_sigma must be >= 0");
      }
      break;
  }
}

std::size_t TaskConfig::data_dim() const {
  switch (kind) {
    case TaskKind::gaussian: return mu.size();
    case TaskKind::gen2d: return 2;
    case TaskKind::toysr: return hr_size * hr_size;
  }
  return 0;
}

std::size_t TaskConfig::lr_dim() const {
  if (kind != TaskKind::toysr) return 1;
  const std::size_t l = hr_size / degrade.scale;
  return l * l;
}

std::size_t TaskConfig::num_content() const {
  return kind == TaskKind::toysr ? num_classes : 1;
}

AnalyticFlow TaskConfig::analytic() const {
  if (kind != TaskKind::gaussian) throw std::logic_error("analytic flow exists only for the gaussian task");
  return AnalyticFlow{mu, sigma};
}

Task::Task(TaskConfig config) : config_(std::move(config)) { config_.validate(); }

Tensor Task::sample_data(std::size_t n, Rng& rng) const {
  switch (config_.kind) {
    case TaskKind::gaussian: {
      const std::size_t d = config_.mu.size();
      Tensor x = rng.normal_tensor({n, d});
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] = config_.mu[i % d] + config_.sigma * x[i];
      return x;
    }
    case TaskKind::gen2d: return gen_2d(config_.dist, n, rng);
    case TaskKind::toysr: {
      const std::vector<SrPair> pairs = sr_pairs(n, rng.next_u64());
      std::vector<Tensor> rows;
      rows.reserve(n);
      for (const SrPair& p : pairs) rows.push_back(pixels_to_latent(p.hr).reshape({p.hr.numel()}));
      return stack(rows);
    }
  }
  throw std::logic_error("unreachable task kind");
}

std::vector<SrPair> Task::sr_pairs(std::size_t n, std::uint64_t base_seed) const {
  if (config_.kind != TaskKind::toysr) throw std::logic_error("sr_pairs needs the toysr task");
  std::vector<SrPair> pairs(n);
  const ConditionSpace cond = conditions();
  parallel_for(n, 4, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint64_t seed = Rng::derive(base_seed, i);
      const int label = static_cast<int>(seed % config_.num_classes);
      pairs[i] = make_sr_pair(label, config_.hr_size, config_.degrade, cond, seed);
    }
  });
  return pairs;
}

namespace {

struct Draw {
  Tensor z1;
  Tensor z_lr;
  std::vector<int> labels;
};

Draw draw_data(const Task& task, std::size_t n, Rng& rng, bool teacher) {
  const TaskConfig& cfg = task.config();
  const ConditionSpace cond = task.conditions();
  Draw d;
  if (cfg.kind != TaskKind::toysr) {
    d.z1 = task.sample_data(n, rng);
    d.z_lr = Tensor({n, 1});
    d.labels.assign(n, 0);
    if (teacher && cfg.null_prob > 0.0) {
      for (int& l : d.labels)
        if (rng.uniform() < cfg.null_prob) l = cond.null_id();
    }
    return d;
  }
  const std::vector<SrPair> pairs = task.sr_pairs(n, rng.next_u64());
  const std::size_t dd = cfg.data_dim(), ld = cfg.lr_dim();
  d.z1 = Tensor({n, dd});
  d.z_lr = Tensor({n, ld});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SrPair& p = pairs[i];
    int label = p.label;
    const Tensor* hr = &p.hr;
    Tensor blurred;
    if (teacher) {
      const double coin = rng.uniform();
      if (coin < cfg.negative_prob) {
        label = cond.negative_id();
        blurred = gaussian_blur(p.hr, cfg.negative_blur_sigma);
        hr = &blurred;
      } else if (coin < cfg.negative_prob + cfg.null_prob) {
        label = cond.null_id();
      }
    }
    d.labels[i] = label;
    const Tensor z1 = pixels_to_latent(*hr);
    const Tensor zl = pixels_to_latent(p.lr);
    std::copy(z1.data().begin(), z1.data().end(), d.z1.data().begin() + static_cast<long>(i * dd));
    std::copy(zl.data().begin(), zl.data().end(), d.z_lr.data().begin() + static_cast<long>(i * ld));
  }
  return d;
}

FlowBatch assemble(Draw d, std::size_t n, Rng& rng, double ratio_r) {
  FlowBatch b;
  b.z0 = rng.normal_tensor(d.z1.shape());
  b.z1 = std::move(d.z1);
  b.z_lr = std::move(d.z_lr);
  b.labels = std::move(d.labels);
  b.times.reserve(n);
  for (std::size_t i = 0; i < n; ++i) b.times.push_back(sample_timesteps(rng, ratio_r));
  return b;
}

}  // namespace

FlowBatch Task::make_batch(std::size_t batch_size, Rng& rng, double ratio_r) const {
  if (batch_size == 0) throw std::invalid_argument("make_batch needs batch_size >= 1");
  return assemble(draw_data(*this, batch_size, rng, false), batch_size, rng, ratio_r);
}

FlowBatch Task::make_teacher_batch(std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0) throw std::invalid_argument("make_batch needs batch_size >= 1");
  return assemble(draw_data(*this, batch_size, rng, true), batch_size, rng, 0.0);
}

void write_sr_manifest(std::ostream& os, const std::vector<SrPair>& pairs,
                       const DegradeParams& params) {
  CsvWriter csv(os, {"seed", "class", "blur_sigma", "scale", "noise_sigma", "quant_levels"});
  for (const SrPair& p : pairs) {
    csv.row(p.seed, p.label, params.blur_sigma, params.scale, params.noise_sigma,
            params.quant_levels);
  }
}

}  // namespace mflow
