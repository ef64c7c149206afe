#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "fpgen/checkpoint.hpp"
#include "fpgen/image.hpp"
#include "fpgen/manifest.hpp"

namespace fpgen {

struct GenerationRequest {
  int n = 1;
  std::uint64_t seed = 0;
  std::filesystem::path gan_checkpoint;
  std::filesystem::path sr_checkpoint;
  std::filesystem::path out_dir;
  int batch_size = 8;  // SR sub-batch; does not affect the output

  void validate() const;
};

// Throws IncompatibleCheckpoints unless `gan` is a Phase-1 generator whose output
// size equals the SR generator's input size.
void check_compatible(const Checkpoint& gan, const Checkpoint& sr);

// seed -> latents -> 64x64 -> 256x256 -> PNGs under out_dir/hq plus
// out_dir/manifest.jsonl (source "synthetic", no LQ side).
DatasetManifest generate_fingerprints(const GenerationRequest& req);

// In-memory variant used by the file-based one.
std::vector<ImageF> generate_images(const Checkpoint& gan, const Checkpoint& sr, int n, std::uint64_t seed,
                                    int batch_size = 8);

inline constexpr double kDuplicateThreshold = 1e-3;
inline constexpr std::size_t kExactDiversityLimit = 2000;

struct DiversityReport {
  std::size_t n = 0;
  double mean_nn_distance = 0.0;
  double min_nn_distance = 0.0;
  std::size_t duplicate_count = 0;
  double per_pixel_std_mean = 0.0;
  bool exact = true;
  std::size_t sample_size = 0;  // images entering the pairwise scan
};

// Exact all-pairs scan when n <= kExactDiversityLimit. Larger corpora use a seeded
// uniform subsample of kExactDiversityLimit images: nearest-neighbour distances are
// taken within the subsample (an upper-bound estimate) and the duplicate count is
// scaled by the ratio of pair counts. per_pixel_std_mean always uses every image.
DiversityReport diversity_report(std::span<const ImageF> images, std::uint64_t seed = 0);
DiversityReport diversity_report(const DatasetManifest& manifest, std::uint64_t seed = 0);

}  // namespace fpgen
