#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpgen/image.hpp"
#include "fpgen/manifest.hpp"

namespace fpgen {

struct ScanMetadata {
  std::optional<int> subject;
  std::optional<int> finger;      // 1-10
  std::optional<int> impression;  // 1-2
  std::optional<NcicClass> ncic_class;
};

struct RawScan {
  ImageU8 pixels;
  std::string source_path;
  ScanMetadata metadata;
};

enum class ThresholdMethod { Otsu, Fixed };
enum class PadMode { Replicate, White };

struct SegmentationConfig {
  ThresholdMethod threshold_method = ThresholdMethod::Otsu;
  int fixed_level = 128;  // foreground = pixel < level, used by ThresholdMethod::Fixed
  int morph_close_radius = 4;
  PadMode pad_mode = PadMode::White;
  int output_hq = kHqSize;
  int output_lq = kLqSize;
  double min_foreground_fraction = 0.2;
  double max_foreground_fraction = 0.95;
  double min_component_fraction = 0.02;

  void validate() const;  // throws ConfigError
};

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool operator==(const BoundingBox&) const = default;
};

struct SegmentedFingerprint {
  ImageF pixels_hq;  // output_hq x output_hq, [0,1]
  ImageF pixels_lq;  // output_lq x output_lq, [0,1]
  BoundingBox bbox;  // in source coordinates
  double foreground_fraction = 0.0;
  ScanMetadata record;
  std::string source_path;
};

// Parses `s<subject>_f<finger>_i<impression>_<class>` stems; other names yield empty metadata.
ScanMetadata parse_scan_filename(std::string_view stem);

RawScan load_raw_scan(const std::filesystem::path& path);

// Otsu threshold over a 256-bin histogram: values <= t form the lower class.
int otsu_threshold(const ImageU8& img);

using Mask = Image<std::uint8_t>;

// Closing with a (2r+1)^2 square element; the frame is treated as background
// for dilation and foreground for erosion so that closing is extensive.
Mask morph_close(const Mask& mask, int radius);

// 8-connected largest component; returns the component mask and its pixel count.
std::pair<Mask, Eigen::Index> largest_component(const Mask& mask);

SegmentedFingerprint segment(const RawScan& raw, const SegmentationConfig& cfg);

// LQ pixels as stored on disk: block mean of the stored 8-bit HQ image, re-quantised.
ImageU8 derive_lq_u8(const ImageU8& hq, int factor);

struct SkippedScan {
  std::string source_path;
  std::string reason;
};

struct BuildReport {
  DatasetManifest manifest;
  std::vector<SkippedScan> skipped;
};

// Writes <out>/hq/<id>.png, <out>/lq/<id>.png, <out>/manifest.jsonl and <out>/skipped.jsonl.
BuildReport build_databases(std::span<const RawScan> scans, const SegmentationConfig& cfg,
                            const std::filesystem::path& out_dir);

}  // namespace fpgen
