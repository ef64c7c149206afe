#include "doctest.h"

#include <complex>
#include <numbers>

#include "fpgen/png_io.hpp"
#include "fpgen/ridge_synth.hpp"
#include "test_support.hpp"

using namespace fpgen;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

SynthConfig cfg_for(NcicClass cls, std::uint64_t seed, int size = 256) {
  SynthConfig cfg;
  cfg.pattern = cls;
  cfg.seed = seed;
  cfg.size = size;
  return cfg;
}

// Difference of two ridge angles, folded into [0, pi/2].
double angle_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), pi);
  return std::min(d, pi - d);
}

// Signed difference folded into (-pi/2, pi/2].
double signed_gap(double a, double b) {
  double d = std::fmod(a - b, pi);
  if (d > pi / 2) d -= pi;
  if (d <= -pi / 2) d += pi;
  return d;
}

double poincare_index(const ImageD& theta, double x, double y, double radius, int steps = 64) {
  auto sample = [&](int k) {
    const double a = 2.0 * pi * k / steps;
    const int c = int(std::lround(x + radius * std::cos(a)));
    const int r = int(std::lround(y + radius * std::sin(a)));
    return theta(std::clamp(r, 0, int(theta.rows()) - 1), std::clamp(c, 0, int(theta.cols()) - 1));
  };
  double total = 0.0;
  for (int k = 0; k < steps; ++k) total += signed_gap(sample(k + 1), sample(k));
  return total;
}

double distance_to_singularity(const OrientationField& f, double x, double y) {
  double best = 1e9;
  for (const auto& p : f.singular_points) best = std::min(best, std::hypot(p.x - x, p.y - y));
  return best;
}

}  // namespace

TEST_CASE("shape mask is deterministic and seed dependent") {
  const auto a = sample_shape_mask(cfg_for(NcicClass::W, 4));
  const auto b = sample_shape_mask(cfg_for(NcicClass::W, 4));
  CHECK(a.mask == b.mask);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m1 = sample_shape_mask(cfg_for(NcicClass::W, s));
    const auto m2 = sample_shape_mask(cfg_for(NcicClass::W, s + 100));
    const double differing = (m1.mask.array() != m2.mask.array()).cast<double>().mean();
    CHECK(differing >= 0.01);
  }
}

TEST_CASE("shape mask ignores noise level and class") {
  SynthConfig quiet = cfg_for(NcicClass::L, 12);
  SynthConfig noisy = quiet;
  noisy.noise_level = 0.7;
  noisy.pattern = NcicClass::A;
  CHECK(sample_shape_mask(quiet).mask == sample_shape_mask(noisy).mask);
}

TEST_CASE("shape mask is one elliptical blob") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = sample_shape_mask(cfg_for(NcicClass::W, s));
    const auto [comp, size] = largest_component(m.mask);
    CHECK(size == m.mask.cast<Eigen::Index>().sum());
    CHECK(m.fraction() > 0.4);
    CHECK(m.fraction() < 0.8);
    // Every row of the silhouette is a single run (no concavities across rows).
    for (int r = 0; r < m.mask.rows(); ++r) {
      int runs = 0;
      for (int c = 0; c < m.mask.cols(); ++c) runs += m.mask(r, c) && (c == 0 || !m.mask(r, c - 1));
      CHECK(runs <= 1);
    }
  }
}

TEST_CASE("arch template has no singularities and varies slowly") {
  const OrientationField f = orientation_template(cfg_for(NcicClass::A, 3));
  CHECK(f.singular_points.empty());
  double worst = 0.0;
  for (int r = 0; r < 256; ++r) {
    for (int c = 0; c < 256; ++c) {
      if (c + 1 < 256) worst = std::max(worst, angle_gap(f.theta(r, c), f.theta(r, c + 1)));
      if (r + 1 < 256) worst = std::max(worst, angle_gap(f.theta(r, c), f.theta(r + 1, c)));
    }
  }
  CHECK(worst < 0.05);
}

TEST_CASE("whorl template has two cores and two deltas") {
  const OrientationField f = orientation_template(cfg_for(NcicClass::W, 8));
  int cores = 0, deltas = 0;
  for (const auto& p : f.singular_points) (p.kind == SingularPoint::Kind::Core ? cores : deltas)++;
  CHECK(cores == 2);
  CHECK(deltas == 2);
}

TEST_CASE("singular point counts per class") {
  CHECK(orientation_template(cfg_for(NcicClass::L, 1)).singular_points.size() == 2);
  CHECK(orientation_template(cfg_for(NcicClass::R, 1)).singular_points.size() == 2);
  CHECK(orientation_template(cfg_for(NcicClass::T, 1)).singular_points.size() == 2);
  CHECK_THROWS_AS(orientation_template(cfg_for(NcicClass::S, 1)), Error);
}

TEST_CASE("Poincare index of cores and deltas") {
  for (NcicClass cls : {NcicClass::L, NcicClass::R, NcicClass::T, NcicClass::W}) {
    for (std::uint64_t seed : {0u, 5u, 9u}) {
      const OrientationField f = sample_orientation_field(cfg_for(cls, seed));
      for (const auto& p : f.singular_points) {
        const double idx = poincare_index(f.theta, p.x, p.y, 6.0);
        const double expected = p.kind == SingularPoint::Kind::Core ? pi : -pi;
        CHECK(idx == doctest::Approx(expected).epsilon(0.05));
      }
    }
  }
}

TEST_CASE("orientation field is smooth away from singularities") {
  for (NcicClass cls : {NcicClass::A, NcicClass::L, NcicClass::R, NcicClass::T, NcicClass::W}) {
    const OrientationField f = sample_orientation_field(cfg_for(cls, 21));
    CHECK(f.theta.minCoeff() >= 0.0);
    CHECK(f.theta.maxCoeff() < pi);
    double worst = 0.0;
    for (int r = 0; r + 1 < 256; ++r) {
      for (int c = 0; c + 1 < 256; ++c) {
        if (distance_to_singularity(f, c, r) <= 6.0) continue;
        worst = std::max({worst, angle_gap(f.theta(r, c), f.theta(r, c + 1)), angle_gap(f.theta(r, c), f.theta(r + 1, c))});
      }
    }
    CHECK(worst < pi / 4);
  }
}

TEST_CASE("density map stays in band and varies smoothly") {
  const SynthConfig cfg = cfg_for(NcicClass::W, 17);
  const DensityMap d = sample_density_map(cfg);
  CHECK(d.freq.minCoeff() >= cfg.min_frequency);
  CHECK(d.freq.maxCoeff() <= cfg.max_frequency);
  CHECK(d.freq.minCoeff() >= kBandMinFrequency);
  CHECK(d.freq.maxCoeff() <= kBandMaxFrequency);
  double worst = 1.0;
  for (int r = 0; r + 1 < 256; ++r) {
    for (int c = 0; c + 1 < 256; ++c) {
      worst = std::max({worst, d.freq(r, c) / d.freq(r, c + 1), d.freq(r, c + 1) / d.freq(r, c),
                        d.freq(r, c) / d.freq(r + 1, c), d.freq(r + 1, c) / d.freq(r, c)});
    }
  }
  CHECK(worst < 1.5);
}

TEST_CASE("rendering is deterministic and white outside the mask") {
  const SynthConfig cfg = cfg_for(NcicClass::R, 33);
  const ImageF a = synthesize_fingerprint(cfg);
  const ImageF b = synthesize_fingerprint(cfg);
  CHECK(a == b);
  CHECK(a.minCoeff() >= 0.0f);
  CHECK(a.maxCoeff() <= 1.0f);
  const ShapeMask m = sample_shape_mask(cfg);
  for (int r = 0; r < 256; ++r) {
    for (int c = 0; c < 256; ++c) {
      if (!m.mask(r, c)) CHECK(a(r, c) >= 0.98f);
    }
  }
  // Ridges and valleys both present inside the print.
  const double dark = ((a.array() < 0.3f).cast<double>() * m.mask.array().cast<double>()).sum() / m.mask.cast<double>().sum();
  CHECK(dark > 0.2);
  CHECK(dark < 0.8);
}

TEST_CASE("noise changes the rendering but not its support") {
  SynthConfig cfg = cfg_for(NcicClass::L, 2, 64);
  const ImageF clean = synthesize_fingerprint(cfg);
  cfg.noise_level = 0.5;
  const ImageF noisy = synthesize_fingerprint(cfg);
  CHECK(mean_abs_diff(clean, noisy) > 0.0);
  CHECK(noisy == synthesize_fingerprint(cfg));
}

TEST_CASE("ridge spectrum peaks inside the density band") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SynthConfig cfg = cfg_for(NcicClass::L, seed);
    const ImageF img = synthesize_fingerprint(cfg);
    constexpr int N = 128;
    const int off = (256 - N) / 2;
    // Hann-windowed, mean-removed central patch.
    Eigen::MatrixXd patch = img.block(off, off, N, N).cast<double>();
    patch.array() -= patch.mean();
    for (int r = 0; r < N; ++r) {
      for (int c = 0; c < N; ++c) {
        patch(r, c) *= (0.5 - 0.5 * std::cos(2 * pi * r / N)) * (0.5 - 0.5 * std::cos(2 * pi * c / N));
      }
    }
    // Separable direct DFT.
    using cd = std::complex<double>;
    Eigen::MatrixXcd w(N, N);
    for (int k = 0; k < N; ++k) {
      for (int n = 0; n < N; ++n) w(k, n) = std::polar(1.0, -2.0 * pi * k * n / N);
    }
    const Eigen::MatrixXcd spec = w * patch.cast<cd>() * w.transpose();
    double best = -1.0, peak_freq = 0.0;
    for (int ky = 0; ky < N; ++ky) {
      for (int kx = 0; kx < N; ++kx) {
        const int fy = ky <= N / 2 ? ky : ky - N;
        const int fx = kx <= N / 2 ? kx : kx - N;
        const double radial = std::hypot(fx, fy) / N;
        if (radial < 2.0 / N) continue;
        if (std::abs(spec(ky, kx)) > best) {
          best = std::abs(spec(ky, kx));
          peak_freq = radial;
        }
      }
    }
    const double bin = 1.0 / N;
    CHECK(peak_freq >= cfg.min_frequency - bin);
    CHECK(peak_freq <= cfg.max_frequency + bin);
  }
}

TEST_CASE("rendered ridges follow the orientation field") {
  for (NcicClass cls : {NcicClass::A, NcicClass::W}) {
    const SynthConfig cfg = cfg_for(cls, 44);
    const ImageF img = synthesize_fingerprint(cfg);
    const OrientationField f = sample_orientation_field(cfg);
    const ShapeMask m = sample_shape_mask(cfg);
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(256, 256), gy = gx;
    for (int r = 1; r < 255; ++r) {
      for (int c = 1; c < 255; ++c) {
        gx(r, c) = 0.5 * (img(r, c + 1) - img(r, c - 1));
        gy(r, c) = 0.5 * (img(r + 1, c) - img(r - 1, c));
      }
    }
    constexpr int win = 5;
    long checked = 0, agreeing = 0;
    for (int r = 16; r < 240; r += 3) {
      for (int c = 16; c < 240; c += 3) {
        if (!m.mask.block(r - 12, c - 12, 25, 25).all()) continue;
        if (distance_to_singularity(f, c, r) < 16.0) continue;
        double jxx = 0, jyy = 0, jxy = 0;
        for (int dy = -win; dy <= win; ++dy) {
          for (int dx = -win; dx <= win; ++dx) {
            const double a = gx(r + dy, c + dx), b = gy(r + dy, c + dx);
            jxx += a * a;
            jyy += b * b;
            jxy += a * b;
          }
        }
        const double normal = 0.5 * std::atan2(2.0 * jxy, jxx - jyy);
        ++checked;
        agreeing += angle_gap(normal + pi / 2, f.theta(r, c)) < 15.0 * pi / 180.0;
      }
    }
    REQUIRE(checked > 100);
    CHECK(double(agreeing) / double(checked) >= 0.8);
  }
}

TEST_CASE("distinct seeds give visibly different prints") {
  std::vector<ImageF> prints;
  for (std::uint64_t s = 0; s < 100; ++s) prints.push_back(synthesize_fingerprint(cfg_for(NcicClass::W, s, 64)));
  double closest = 1e9;
  for (std::size_t i = 0; i < prints.size(); ++i) {
    for (std::size_t j = i + 1; j < prints.size(); ++j) closest = std::min(closest, mean_abs_diff(prints[i], prints[j]));
  }
  CHECK(closest > 0.05);
}

TEST_CASE("default class mix is dominated by W, L and R") {
  const auto classes = draw_classes(10000, ClassMix{}, 123);
  const auto wlr = std::count_if(classes.begin(), classes.end(), [](NcicClass c) {
    return c == NcicClass::W || c == NcicClass::L || c == NcicClass::R;
  });
  CHECK(double(wlr) / 10000.0 > 0.8);
  CHECK(std::none_of(classes.begin(), classes.end(), [](NcicClass c) { return c == NcicClass::S; }));
  const auto only_w = draw_classes(50, ClassMix::restricted_to({NcicClass::W}), 1);
  CHECK(std::all_of(only_w.begin(), only_w.end(), [](NcicClass c) { return c == NcicClass::W; }));
}

TEST_CASE("corpus generation writes n pairs") {
  test::TempDir tmp("corpus");
  SynthConfig cfg;
  cfg.iterations = 1;
  cfg.seed = 5;
  const DatasetManifest m = generate_toy_corpus(200, cfg, tmp.path());
  CHECK(m.size() == 200);
  std::size_t pngs = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp.path())) pngs += e.path().extension() == ".png";
  CHECK(pngs == 400);
  const DatasetManifest back = read_manifest(tmp / "manifest.jsonl");
  CHECK(back.source == "ridge-synth");
  for (const auto& e : back.entries) {
    CHECK(quantize_u8(downscale(to_unit<double>(read_gray_png(back.resolve(e.hq_path))))) ==
          read_gray_png(back.resolve(e.lq_path)));
  }
}

TEST_CASE("corpus generation is byte-identical for a fixed seed") {
  test::TempDir a("corpus_a"), b("corpus_b");
  SynthConfig cfg;
  cfg.seed = 77;
  const auto ma = generate_toy_corpus(4, cfg, a.path());
  const auto mb = generate_toy_corpus(4, cfg, b.path());
  CHECK(ma.config_digest == mb.config_digest);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(entry_record(ma.entries[i]) == entry_record(mb.entries[i]));
    CHECK(test::read_bytes(a / ma.entries[i].hq_path) == test::read_bytes(b / mb.entries[i].hq_path));
    CHECK(test::read_bytes(a / ma.entries[i].lq_path) == test::read_bytes(b / mb.entries[i].lq_path));
  }
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.size = 128;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.noise_level = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
