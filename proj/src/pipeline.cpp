#include "fpgen/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>

#include "fpgen/digest.hpp"
#include "fpgen/error.hpp"
#include "fpgen/png_io.hpp"
#include "fpgen/random.hpp"
#include "fpgen/sr.hpp"
#include "fpgen/wgan.hpp"

namespace fpgen {

namespace fs = std::filesystem;
using nn::Shape;
using nn::Tensor;

void GenerationRequest::validate() const {
  if (n < 1) throw ConfigError("n", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (gan_checkpoint.empty()) throw ConfigError("gan_checkpoint", "path required");
  if (sr_checkpoint.empty()) throw ConfigError("sr_checkpoint", "path required");
  if (out_dir.empty()) throw ConfigError("out_dir", "path required");
}

void check_compatible(const Checkpoint& gan, const Checkpoint& sr) {
  if (gan.role != CheckpointRole::Generator) {
    throw Error(ErrorCode::IncompatibleCheckpoints, "GAN checkpoint has role " + std::string(to_string(gan.role)));
  }
  if (sr.role != CheckpointRole::SrGenerator) {
    throw Error(ErrorCode::IncompatibleCheckpoints, "SR checkpoint has role " + std::string(to_string(sr.role)));
  }
  const int out = generator_from_checkpoint(gan).config().output_size();
  if (out != kLqSize) {
    throw Error(ErrorCode::IncompatibleCheckpoints,
                "GAN output " + std::to_string(out) + " does not match SR input " + std::to_string(kLqSize));
  }
}

std::vector<ImageF> generate_images(const Checkpoint& gan, const Checkpoint& sr, int n, std::uint64_t seed,
                                    int batch_size) {
  check_compatible(gan, sr);
  const Tensor low = generate_lowres(gan, n, seed);
  const SRGenerator sr_gen = sr_generator_from_checkpoint(sr);
  std::vector<ImageF> out;
  out.reserve(std::size_t(n));
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    Tensor chunk(Shape{count, 1, kLqSize, kLqSize});
    std::copy_n(low.sample(start), chunk.size(), chunk.data());
    const Tensor high = super_resolve(sr_gen, chunk);
    if (!(high.shape() == Shape{count, 1, kHqSize, kHqSize})) {
      throw Error(ErrorCode::ShapeMismatch, "SR output " + high.shape().str() + " is not 256x256");
    }
    for (int i = 0; i < count; ++i) out.push_back(unstack_image(high, i));
  }
  return out;
}

DatasetManifest generate_fingerprints(const GenerationRequest& req) {
  req.validate();
  const Checkpoint gan = load_checkpoint(req.gan_checkpoint);
  const Checkpoint sr = load_checkpoint(req.sr_checkpoint);
  const auto images = generate_images(gan, sr, req.n, req.seed, req.batch_size);

  fs::create_directories(req.out_dir / "hq");
  DatasetManifest manifest;
  manifest.source = "synthetic";
  manifest.base_dir = req.out_dir;
  manifest.config_digest = config_digest(
      {{"gan", gan.config_digest}, {"sr", sr.config_digest}, {"seed", req.seed}, {"n", req.n}});
  for (std::size_t i = 0; i < images.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "gen_%06zu", i);
    ManifestEntry e;
    e.id = id;
    e.hq_path = "hq/" + e.id + ".png";
    write_unit_png(req.out_dir / e.hq_path, images[i]);
    manifest.entries.push_back(std::move(e));
  }
  manifest.created_at = utc_timestamp();
  write_manifest(manifest, req.out_dir / "manifest.jsonl");
  spdlog::info("wrote {} synthetic fingerprints to {}", images.size(), req.out_dir.string());
  return manifest;
}

DiversityReport diversity_report(std::span<const ImageF> images, std::uint64_t seed) {
  if (images.empty()) throw Error(ErrorCode::EmptyBatch, "diversity_report: empty corpus");
  const std::size_t n = images.size();
  const auto rows = images[0].rows(), cols = images[0].cols();
  for (const auto& img : images) {
    if (img.rows() != rows || img.cols() != cols) throw Error(ErrorCode::ShapeMismatch, "corpus images differ in size");
  }

  DiversityReport r;
  r.n = n;

  Eigen::ArrayXXd sum = Eigen::ArrayXXd::Zero(rows, cols), sum_sq = Eigen::ArrayXXd::Zero(rows, cols);
  for (const auto& img : images) {
    const Eigen::ArrayXXd v = img.cast<double>().array();
    sum += v;
    sum_sq += v.square();
  }
  const Eigen::ArrayXXd mean = sum / double(n);
  r.per_pixel_std_mean = (sum_sq / double(n) - mean.square()).max(0.0).sqrt().mean();

  std::vector<std::size_t> pick(n);
  std::iota(pick.begin(), pick.end(), 0);
  if (n > kExactDiversityLimit) {
    Rng rng = make_rng(seed, 51);
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(kExactDiversityLimit);
    std::sort(pick.begin(), pick.end());
    r.exact = false;
  }
  const std::size_t m = pick.size();
  r.sample_size = m;
  if (m < 2) return r;

  std::vector<double> nn(m, std::numeric_limits<double>::infinity());
  std::size_t dups = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double d = mean_abs_diff(images[pick[i]], images[pick[j]]);
      nn[i] = std::min(nn[i], d);
      nn[j] = std::min(nn[j], d);
      if (d < kDuplicateThreshold) ++dups;
    }
  }
  r.mean_nn_distance = std::accumulate(nn.begin(), nn.end(), 0.0) / double(m);
  r.min_nn_distance = *std::min_element(nn.begin(), nn.end());
  if (r.exact) {
    r.duplicate_count = dups;
  } else {
    const double ratio = (double(n) * double(n - 1)) / (double(m) * double(m - 1));
    r.duplicate_count = std::size_t(std::llround(double(dups) * ratio));
  }
  return r;
}

DiversityReport diversity_report(const DatasetManifest& manifest, std::uint64_t seed) {
  std::vector<ImageF> images;
  images.reserve(manifest.size());
  for (const auto& e : manifest.entries) images.push_back(load_hq(manifest, e));
  return diversity_report(images, seed);
}

}  // namespace fpgen
