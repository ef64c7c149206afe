#include "doctest.h"

#include <random>

#include "fpgen/config.hpp"
#include "fpgen/pipeline.hpp"
#include "fpgen/png_io.hpp"
#include "fpgen/sr.hpp"
#include "fpgen/wgan.hpp"
#include "test_support.hpp"

using namespace fpgen;
namespace fs = std::filesystem;

namespace {

struct Checkpoints {
  fs::path gan, sr;
};

Checkpoints write_checkpoints(const fs::path& dir) {
  GeneratorConfig g;
  g.base_channels = 16;
  g.weight_init_scale = 0.2f;
  RRDBConfig r;
  r.n_blocks = 1;
  r.channels = 8;
  r.growth_channels = 4;
  const Generator gen = build_generator(g, 1);
  const SRGenerator sr = build_sr_generator(r, 2);
  Checkpoints out{dir / "gan.ckpt", dir / "sr.ckpt"};
  save_checkpoint(capture_checkpoint(gen, CheckpointRole::Generator, 0, 1, {{"generator", to_json(g)}}), out.gan);
  save_checkpoint(capture_checkpoint(sr, CheckpointRole::SrGenerator, 0, 2, {{"rrdb", to_json(r)}}), out.sr);
  return out;
}

GenerationRequest request(const Checkpoints& ck, const fs::path& out, int n, std::uint64_t seed) {
  GenerationRequest req;
  req.n = n;
  req.seed = seed;
  req.gan_checkpoint = ck.gan;
  req.sr_checkpoint = ck.sr;
  req.out_dir = out;
  return req;
}

std::vector<ImageF> random_images(int n, int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<ImageF> out;
  for (int i = 0; i < n; ++i) {
    ImageF img(side, side);
    for (Eigen::Index k = 0; k < img.size(); ++k) img.data()[k] = u(rng);
    out.push_back(img);
  }
  return out;
}

}  // namespace

TEST_CASE("generation writes n HQ images and a manifest") {
  test::TempDir tmp("gen10");
  const auto ck = write_checkpoints(tmp.path());
  const DatasetManifest m = generate_fingerprints(request(ck, tmp / "out", 10, 7));
  CHECK(m.size() == 10);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(tmp / "out" / "hq")) pngs += e.path().extension() == ".png";
  CHECK(pngs == 10);
  const DatasetManifest back = read_manifest(tmp / "out" / "manifest.jsonl");
  CHECK(back.source == "synthetic");
  CHECK(back.size() == 10);
  for (const auto& e : back.entries) {
    CHECK(e.lq_path.empty());
    const ImageU8 img = read_gray_png(back.resolve(e.hq_path));
    CHECK(img.rows() == 256);
    CHECK(img.cols() == 256);
  }
}

TEST_CASE("generation is byte-identical for a repeated request") {
  test::TempDir tmp("gen_det");
  const auto ck = write_checkpoints(tmp.path());
  const auto a = generate_fingerprints(request(ck, tmp / "a", 4, 3));
  auto req = request(ck, tmp / "b", 4, 3);
  req.batch_size = 3;  // sub-batching does not change the result
  const auto b = generate_fingerprints(req);
  CHECK(a.config_digest == b.config_digest);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(entry_record(a.entries[i]) == entry_record(b.entries[i]));
    CHECK(test::read_bytes(tmp / "a" / a.entries[i].hq_path) == test::read_bytes(tmp / "b" / b.entries[i].hq_path));
  }
}

TEST_CASE("different seeds give different corpora") {
  test::TempDir tmp("gen_seeds");
  const auto ck = write_checkpoints(tmp.path());
  const Checkpoint gan = load_checkpoint(ck.gan), sr = load_checkpoint(ck.sr);
  const auto a = generate_images(gan, sr, 3, 1);
  const auto b = generate_images(gan, sr, 3, 2);
  double closest = 1e9;
  for (const auto& x : a) {
    CHECK(x.rows() == 256);
    CHECK(x.minCoeff() >= 0.0f);
    CHECK(x.maxCoeff() <= 1.0f);
    for (const auto& y : b) closest = std::min(closest, mean_abs_diff(x, y));
  }
  CHECK(closest > 0.0);
}

TEST_CASE("incompatible checkpoints are rejected") {
  test::TempDir tmp("gen_compat");
  const auto ck = write_checkpoints(tmp.path());
  const Checkpoint gan = load_checkpoint(ck.gan), sr = load_checkpoint(ck.sr);
  auto code_of = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Format;
  };
  CHECK(code_of([&] { check_compatible(sr, gan); }) == ErrorCode::IncompatibleCheckpoints);
  CHECK(code_of([&] { check_compatible(gan, gan); }) == ErrorCode::IncompatibleCheckpoints);
  check_compatible(gan, sr);
  GenerationRequest bad = request(ck, tmp / "x", 0, 1);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("diversity of identical images") {
  const std::vector<ImageF> same(6, ImageF::Constant(8, 8, 0.3f));
  const DiversityReport r = diversity_report(same);
  CHECK(r.duplicate_count == 15);
  CHECK(r.min_nn_distance == 0.0);
  CHECK(r.mean_nn_distance == 0.0);
  CHECK(r.per_pixel_std_mean == doctest::Approx(0.0));
  CHECK(r.exact);
}

TEST_CASE("diversity of two images half a unit apart") {
  const std::vector<ImageF> two{ImageF::Constant(8, 8, 0.2f), ImageF::Constant(8, 8, 0.7f)};
  const DiversityReport r = diversity_report(two);
  CHECK(r.mean_nn_distance == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(r.min_nn_distance == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(r.duplicate_count == 0);
  CHECK(r.per_pixel_std_mean == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("diversity matches a brute-force scan") {
  auto images = random_images(30, 12, 4);
  images.push_back(images[3]);  // one exact duplicate
  const DiversityReport r = diversity_report(images);
  std::vector<double> nearest(images.size(), 1e9);
  std::size_t dups = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = 0; j < images.size(); ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (Eigen::Index k = 0; k < images[i].size(); ++k) s += std::abs(double(images[i].data()[k]) - images[j].data()[k]);
      const double d = s / double(images[i].size());
      nearest[i] = std::min(nearest[i], d);
      if (i < j && d < kDuplicateThreshold) ++dups;
    }
  }
  double mean = 0.0;
  for (double d : nearest) mean += d;
  mean /= double(nearest.size());
  CHECK(r.mean_nn_distance == doctest::Approx(mean).epsilon(1e-9));
  CHECK(r.min_nn_distance == doctest::Approx(*std::min_element(nearest.begin(), nearest.end())).epsilon(1e-9));
  CHECK(r.duplicate_count == dups);
  CHECK(r.duplicate_count == 1);
  CHECK(r.min_nn_distance <= r.mean_nn_distance);
}

TEST_CASE("large corpora are scanned on a seeded subsample") {
  const auto images = random_images(int(kExactDiversityLimit) + 5, 4, 5);
  const DiversityReport a = diversity_report(images, 1);
  const DiversityReport b = diversity_report(images, 1);
  CHECK(!a.exact);
  CHECK(a.n == kExactDiversityLimit + 5);
  CHECK(a.sample_size == kExactDiversityLimit);
  CHECK(a.mean_nn_distance == b.mean_nn_distance);
  CHECK(a.min_nn_distance <= a.mean_nn_distance);
  CHECK(a.min_nn_distance > 0.0);
}
