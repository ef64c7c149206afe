#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fpgen/data_prep.hpp"
#include "fpgen/image.hpp"
#include "fpgen/manifest.hpp"

namespace fpgen {

struct SingularPoint {
  enum class Kind { Core, Delta };
  Kind kind;
  double x;
  double y;
};

// Ridge direction angle per pixel, in [0, pi), measured in image coordinates
// (x to the right, y down).
struct OrientationField {
  ImageD theta;
  std::vector<SingularPoint> singular_points;
};

// Ridge spatial frequency in cycles/pixel.
struct DensityMap {
  ImageD freq;
};

struct ShapeMask {
  Mask mask;
  double fraction() const { return mask.cast<double>().mean(); }
};

struct SynthConfig {
  int size = kHqSize;  // 64 or 256
  NcicClass pattern = NcicClass::W;
  double noise_level = 0.0;  // [0,1]
  int iterations = 8;
  std::uint64_t seed = 0;

  // Calibration constants for the geometric and ridge-flow models.
  double min_frequency = 1.0 / 11.0;
  double max_frequency = 1.0 / 8.0;
  double frequency_variation = 0.08;   // relative amplitude of the smooth density modulation
  double perturbation_amplitude = 0.12;  // radians, smooth orientation noise
  double singular_jitter = 0.03;         // fraction of size
  double impulse_density = 1.0 / 150.0;

  void validate() const;  // throws ConfigError
};

inline constexpr double kBandMinFrequency = 1.0 / 16.0;
inline constexpr double kBandMaxFrequency = 1.0 / 6.0;

ShapeMask sample_shape_mask(const SynthConfig& cfg);

// Class template (singular points + rational orientation model) without the
// seeded perturbation.
OrientationField orientation_template(const SynthConfig& cfg);
OrientationField sample_orientation_field(const SynthConfig& cfg);

DensityMap sample_density_map(const SynthConfig& cfg);

// Iterated, orientation-steered Gabor filtering of seeded impulses. Returns an
// image in [0,1] with dark ridges; pixels outside the mask are 1.
ImageF render_ridges(const ShapeMask& mask, const OrientationField& orient, const DensityMap& dens,
                     const SynthConfig& cfg);

// mask -> orientation -> density -> render, all from cfg.seed.
ImageF synthesize_fingerprint(const SynthConfig& cfg);

// Relative frequencies for the pattern classes in corpus generation, indexed by NcicClass (S unused).
struct ClassMix {
  std::array<double, 5> weights = {0.06, 0.30, 0.28, 0.06, 0.30};  // A, L, R, T, W

  static ClassMix restricted_to(const std::vector<NcicClass>& classes);
};

std::vector<NcicClass> draw_classes(std::size_t n, const ClassMix& mix, std::uint64_t seed);

// Writes n HQ/LQ pairs plus a manifest in the data-prep layout.
DatasetManifest generate_toy_corpus(std::size_t n, const SynthConfig& cfg_template, const std::filesystem::path& out_dir,
                                    const ClassMix& mix = {});

}  // namespace fpgen
