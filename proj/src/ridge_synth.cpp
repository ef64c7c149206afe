#include "fpgen/ridge_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fpgen/config.hpp"
#include "fpgen/digest.hpp"
#include "fpgen/error.hpp"
#include "fpgen/png_io.hpp"
#include "fpgen/random.hpp"

namespace fpgen {

namespace fs = std::filesystem;
using Eigen::Index;
using std::numbers::pi;

namespace {

// Independent RNG streams per synthesis stage keep each stage's output fixed
// when unrelated knobs change.
enum Stream : std::uint64_t { kShape = 1, kOrientation = 2, kDensity = 3, kImpulses = 4, kNoise = 5, kClasses = 6 };

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double wrap_pi(double a) {
  a = std::fmod(a, pi);
  return a < 0.0 ? a + pi : a;
}

// Sum of a few low-frequency sinusoids, normalised to unit peak amplitude.
struct SmoothNoise {
  struct Wave {
    double u, v, phase, amp;
  };
  std::vector<Wave> waves;
  double size;

  SmoothNoise(Rng& rng, double size, int count = 3, double max_cycles = 1.5) : size(size) {
    double total = 0.0;
    for (int i = 0; i < count; ++i) {
      Wave w{uniform(rng, -max_cycles, max_cycles), uniform(rng, -max_cycles, max_cycles), uniform(rng, 0.0, 2.0 * pi),
             uniform(rng, 0.5, 1.0)};
      total += w.amp;
      waves.push_back(w);
    }
    for (auto& w : waves) w.amp /= total;
  }

  double operator()(double x, double y) const {
    double s = 0.0;
    for (const auto& w : waves) s += w.amp * std::sin(2.0 * pi * (w.u * x + w.v * y) / size + w.phase);
    return s;
  }
};

struct GaborBank {
  int orientations;
  std::vector<double> freqs;
  int radius;
  std::vector<std::vector<float>> kernels;  // [freq * orientations + orientation]

  const std::vector<float>& pick(double theta, double f) const {
    const int oi = int(std::lround(wrap_pi(theta) / pi * orientations)) % orientations;
    int fi = 0;
    double best = 1e9;
    for (int i = 0; i < int(freqs.size()); ++i) {
      if (std::abs(freqs[i] - f) < best) {
        best = std::abs(freqs[i] - f);
        fi = i;
      }
    }
    return kernels[std::size_t(fi) * orientations + oi];
  }
};

GaborBank make_gabor_bank(double fmin, double fmax, int orientations = 32, int freq_bins = 6) {
  GaborBank bank;
  bank.orientations = orientations;
  for (int i = 0; i < freq_bins; ++i) {
    bank.freqs.push_back(freq_bins == 1 ? fmin : fmin + (fmax - fmin) * i / (freq_bins - 1));
  }
  const double sigma = 0.5 / fmin;
  bank.radius = int(std::ceil(2.0 * sigma));
  const int side = 2 * bank.radius + 1;
  for (double f : bank.freqs) {
    const double s = 0.5 / f;
    for (int o = 0; o < orientations; ++o) {
      const double theta = pi * o / orientations;
      // Ridge direction (cos, sin); the wave runs along the normal.
      const double nx = -std::sin(theta), ny = std::cos(theta);
      std::vector<float> k(std::size_t(side) * side);
      double mean = 0.0, wsum = 0.0;
      std::vector<double> env(k.size());
      for (int dy = -bank.radius; dy <= bank.radius; ++dy) {
        for (int dx = -bank.radius; dx <= bank.radius; ++dx) {
          const double across = dx * nx + dy * ny;
          const double along = dx * std::cos(theta) + dy * std::sin(theta);
          const double e = std::exp(-0.5 * (across * across + along * along) / (s * s));
          const std::size_t idx = std::size_t(dy + bank.radius) * side + (dx + bank.radius);
          env[idx] = e;
          k[idx] = float(e * std::cos(2.0 * pi * f * across));
          mean += k[idx];
          wsum += e;
        }
      }
      // Remove the DC response so the filter does not just blur.
      double energy = 0.0;
      for (std::size_t i = 0; i < k.size(); ++i) {
        k[i] = float(k[i] - mean / wsum * env[i]);
        energy += double(k[i]) * k[i];
      }
      const float norm = float(1.0 / std::sqrt(energy));
      for (auto& v : k) v *= norm;
      bank.kernels.push_back(std::move(k));
    }
  }
  return bank;
}

}  // namespace

void SynthConfig::validate() const {
  if (size != 64 && size != 256) throw ConfigError("size", "must be 64 or 256");
  if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
  if (!(noise_level >= 0.0 && noise_level <= 1.0)) throw ConfigError("noise_level", "must lie in [0,1]");
  if (pattern == NcicClass::S) throw ConfigError("class", "scar patterns cannot be synthesised");
  if (!(min_frequency >= kBandMinFrequency && max_frequency <= kBandMaxFrequency && min_frequency <= max_frequency)) {
    throw ConfigError("min_frequency", "ridge frequencies must lie within [1/16, 1/6] cycles/pixel");
  }
  if (!(frequency_variation >= 0.0 && frequency_variation < 0.4)) {
    throw ConfigError("frequency_variation", "must lie in [0, 0.4)");
  }
  if (!(impulse_density > 0.0 && impulse_density <= 1.0)) throw ConfigError("impulse_density", "must lie in (0,1]");
}

ShapeMask sample_shape_mask(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, kShape);
  const double s = cfg.size;
  const double cx = s / 2.0 + uniform(rng, -0.03, 0.03) * s;
  const double cy = s / 2.0 + uniform(rng, -0.03, 0.03) * s;
  const double left = uniform(rng, 0.36, 0.42) * s;
  const double right = uniform(rng, 0.36, 0.42) * s;
  const double top = uniform(rng, 0.42, 0.47) * s;
  const double bottom = uniform(rng, 0.40, 0.46) * s;

  // Four quarter-ellipses sharing a centre.
  ShapeMask out{Mask::Zero(cfg.size, cfg.size)};
  for (int r = 0; r < cfg.size; ++r) {
    for (int c = 0; c < cfg.size; ++c) {
      const double dx = (c + 0.5 - cx) / (c + 0.5 < cx ? left : right);
      const double dy = (r + 0.5 - cy) / (r + 0.5 < cy ? top : bottom);
      out.mask(r, c) = dx * dx + dy * dy <= 1.0 ? 1 : 0;
    }
  }
  return out;
}

OrientationField orientation_template(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, kOrientation);
  const double s = cfg.size;
  auto jitter = [&] { return uniform(rng, -cfg.singular_jitter, cfg.singular_jitter) * s; };
  auto point = [&](SingularPoint::Kind kind, double fx, double fy) {
    const double jx = jitter();
    const double jy = jitter();
    return SingularPoint{kind, fx * s + jx, fy * s + jy};
  };
  using K = SingularPoint::Kind;

  OrientationField field;
  switch (cfg.pattern) {
    case NcicClass::A: break;
    case NcicClass::L:
      field.singular_points = {point(K::Core, 0.46, 0.42), point(K::Delta, 0.70, 0.68)};
      break;
    case NcicClass::R:
      field.singular_points = {point(K::Core, 0.54, 0.42), point(K::Delta, 0.30, 0.68)};
      break;
    case NcicClass::T: {
      const SingularPoint core = point(K::Core, 0.50, 0.40);
      field.singular_points = {core, SingularPoint{K::Delta, core.x, core.y + 0.2 * s}};
      break;
    }
    case NcicClass::W:
      field.singular_points = {point(K::Core, 0.50, 0.38), point(K::Core, 0.50, 0.50), point(K::Delta, 0.24, 0.70),
                               point(K::Delta, 0.76, 0.70)};
      break;
    case NcicClass::S: throw Error(ErrorCode::UnknownClass, "scar patterns cannot be synthesised");
  }

  // Arch: gentle rise in the middle, no singularities.
  const double arch_amp = uniform(rng, 0.35, 0.55);
  const double arch_cy = s * uniform(rng, 0.45, 0.6);

  field.theta.resize(cfg.size, cfg.size);
  for (int r = 0; r < cfg.size; ++r) {
    for (int c = 0; c < cfg.size; ++c) {
      double theta = 0.0;
      if (field.singular_points.empty()) {
        const double wy = std::exp(-std::pow((r - arch_cy) / (0.5 * s), 2.0));
        theta = arch_amp * std::tanh((c - s / 2.0) / (0.25 * s)) * wy;
      } else {
        // Rational model: each core adds half its polar angle, each delta subtracts it.
        for (const auto& p : field.singular_points) {
          const double a = std::atan2(r - p.y, c - p.x);
          theta += (p.kind == K::Core ? 0.5 : -0.5) * a;
        }
      }
      field.theta(r, c) = wrap_pi(theta);
    }
  }
  return field;
}

OrientationField sample_orientation_field(const SynthConfig& cfg) {
  OrientationField field = orientation_template(cfg);
  Rng rng = make_rng(cfg.seed, kOrientation + 100);
  const SmoothNoise noise(rng, cfg.size);
  for (int r = 0; r < cfg.size; ++r) {
    for (int c = 0; c < cfg.size; ++c) {
      field.theta(r, c) = wrap_pi(field.theta(r, c) + cfg.perturbation_amplitude * noise(c, r));
    }
  }
  return field;
}

DensityMap sample_density_map(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, kDensity);
  const double base = uniform(rng, cfg.min_frequency, cfg.max_frequency);
  const SmoothNoise noise(rng, cfg.size, 2, 1.0);
  DensityMap dens{ImageD(cfg.size, cfg.size)};
  for (int r = 0; r < cfg.size; ++r) {
    for (int c = 0; c < cfg.size; ++c) {
      dens.freq(r, c) =
          std::clamp(base * (1.0 + cfg.frequency_variation * noise(c, r)), cfg.min_frequency, cfg.max_frequency);
    }
  }
  return dens;
}

ImageF render_ridges(const ShapeMask& mask, const OrientationField& orient, const DensityMap& dens,
                     const SynthConfig& cfg) {
  cfg.validate();
  const int n = cfg.size;
  for (const auto* m : {&orient.theta, &dens.freq}) {
    if (m->rows() != n || m->cols() != n) throw Error(ErrorCode::ShapeMismatch, "synthesis maps must match cfg.size");
  }
  if (mask.mask.rows() != n || mask.mask.cols() != n) throw Error(ErrorCode::ShapeMismatch, "mask must match cfg.size");

  const GaborBank bank = make_gabor_bank(cfg.min_frequency, cfg.max_frequency);
  const int rad = bank.radius;
  const int padded = n + 2 * rad;

  // Zero-padded working buffer; the interior holds the evolving ridge field.
  std::vector<float> field(std::size_t(padded) * padded, 0.0f);
  auto at = [&](int r, int c) -> float& { return field[std::size_t(r + rad) * padded + (c + rad)]; };

  Rng rng = make_rng(cfg.seed, kImpulses);
  std::bernoulli_distribution fire(cfg.impulse_density);
  std::bernoulli_distribution sign(0.5);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (fire(rng)) at(r, c) = sign(rng) ? 1.0f : -1.0f;
    }
  }

  std::vector<const std::vector<float>*> kernel(std::size_t(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) kernel[std::size_t(r) * n + c] = &bank.pick(orient.theta(r, c), dens.freq(r, c));
  }

  const int side = 2 * rad + 1;
  std::vector<float> next(std::size_t(n) * n);
  for (int it = 0; it < cfg.iterations; ++it) {
    double energy = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const float* k = kernel[std::size_t(r) * n + c]->data();
        float acc = 0.0f;
        for (int dy = 0; dy < side; ++dy) {
          const float* src = field.data() + std::size_t(r + dy) * padded + c;
          const float* kr = k + std::size_t(dy) * side;
          for (int dx = 0; dx < side; ++dx) acc += kr[dx] * src[dx];
        }
        next[std::size_t(r) * n + c] = acc;
        energy += double(acc) * acc;
      }
    }
    // Saturating renormalisation keeps ridge amplitude bounded between passes.
    const float inv_rms = float(1.0 / (std::sqrt(energy / double(n * n)) + 1e-12));
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) at(r, c) = std::tanh(2.0f * next[std::size_t(r) * n + c] * inv_rms);
    }
  }

  Rng noise_rng = make_rng(cfg.seed, kNoise);
  std::normal_distribution<float> speckle(0.0f, 0.2f);
  ImageF out(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (!mask.mask(r, c)) {
        out(r, c) = 1.0f;
        continue;
      }
      float v = 0.5f - 0.5f * std::tanh(3.0f * at(r, c));
      if (cfg.noise_level > 0.0) v += float(cfg.noise_level) * speckle(noise_rng);
      out(r, c) = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

ImageF synthesize_fingerprint(const SynthConfig& cfg) {
  return render_ridges(sample_shape_mask(cfg), sample_orientation_field(cfg), sample_density_map(cfg), cfg);
}

ClassMix ClassMix::restricted_to(const std::vector<NcicClass>& classes) {
  ClassMix base, out;
  out.weights.fill(0.0);
  for (auto c : classes) {
    if (c == NcicClass::S) throw Error(ErrorCode::UnknownClass, "scar patterns cannot be synthesised");
    out.weights[std::size_t(c)] = base.weights[std::size_t(c)];
  }
  return out;
}

std::vector<NcicClass> draw_classes(std::size_t n, const ClassMix& mix, std::uint64_t seed) {
  Rng rng = make_rng(seed, kClasses);
  std::discrete_distribution<int> dist(mix.weights.begin(), mix.weights.end());
  std::vector<NcicClass> out(n);
  for (auto& c : out) c = static_cast<NcicClass>(dist(rng));
  return out;
}

DatasetManifest generate_toy_corpus(std::size_t n, const SynthConfig& cfg_template, const fs::path& out_dir,
                                    const ClassMix& mix) {
  cfg_template.validate();
  if (n < 1) throw ConfigError("n", "must be >= 1");
  if (cfg_template.size != kHqSize) throw ConfigError("size", "corpus generation renders 256x256 HQ images");
  fs::create_directories(out_dir / "hq");
  fs::create_directories(out_dir / "lq");

  DatasetManifest manifest;
  manifest.source = "ridge-synth";
  nlohmann::json digest_src = to_json(cfg_template);
  digest_src["class_mix"] = mix.weights;
  manifest.config_digest = config_digest(digest_src);
  manifest.base_dir = out_dir;

  const auto classes = draw_classes(n, mix, cfg_template.seed);
  for (std::size_t i = 0; i < n; ++i) {
    SynthConfig cfg = cfg_template;
    cfg.seed = mix_seed(cfg_template.seed, 1000 + i);
    cfg.pattern = classes[i];
    const ImageU8 hq = quantize_u8(synthesize_fingerprint(cfg));
    const ImageU8 lq = derive_lq_u8(hq, kScaleFactor);

    char id[32];
    std::snprintf(id, sizeof id, "synth_%06zu", i);
    ManifestEntry e;
    e.id = id;
    e.hq_path = "hq/" + e.id + ".png";
    e.lq_path = "lq/" + e.id + ".png";
    e.subject = int(i / 10);
    e.finger = int(i % 10) + 1;
    e.impression = 1;
    e.ncic_class = classes[i];
    write_gray_png(out_dir / e.hq_path, hq);
    write_gray_png(out_dir / e.lq_path, lq);
    manifest.entries.push_back(std::move(e));
  }
  manifest.created_at = utc_timestamp();
  write_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace fpgen
