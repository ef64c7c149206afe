#include "fpgen/data_prep.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <regex>
#include <unordered_set>

#include "fpgen/config.hpp"
#include "fpgen/digest.hpp"
#include "fpgen/error.hpp"
#include "fpgen/png_io.hpp"
#include "json.hpp"

namespace fpgen {

namespace fs = std::filesystem;
using Eigen::Index;

void SegmentationConfig::validate() const {
  if (output_hq <= 0 || output_lq <= 0) throw ConfigError("output_hq", "output sizes must be positive");
  if (output_hq % output_lq != 0) throw ConfigError("output_lq", "must divide output_hq exactly");
  if (morph_close_radius < 0) throw ConfigError("morph_close_radius", "must be >= 0");
  if (fixed_level < 0 || fixed_level > 255) throw ConfigError("fixed_level", "must lie in [0,255]");
  if (!(min_foreground_fraction >= 0.0 && min_foreground_fraction < max_foreground_fraction &&
        max_foreground_fraction <= 1.0)) {
    throw ConfigError("min_foreground_fraction", "foreground fraction bounds must satisfy 0 <= min < max <= 1");
  }
  if (!(min_component_fraction >= 0.0 && min_component_fraction <= 1.0)) {
    throw ConfigError("min_component_fraction", "must lie in [0,1]");
  }
}

ScanMetadata parse_scan_filename(std::string_view stem) {
  static const std::regex pattern(R"(s(\d+)_f(\d+)_i(\d+)_([ALRTWS]))");
  ScanMetadata meta;
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(stem.begin(), stem.end(), m, pattern)) return meta;
  meta.subject = std::stoi(m[1].str());
  meta.finger = std::stoi(m[2].str());
  meta.impression = std::stoi(m[3].str());
  meta.ncic_class = parse_ncic_class(m[4].str()[0]);
  return meta;
}

RawScan load_raw_scan(const fs::path& path) {
  RawScan scan;
  scan.pixels = read_gray_png(path);
  if (scan.pixels.rows() < 64 || scan.pixels.cols() < 64) {
    throw Error(ErrorCode::ImageTooSmall, path.string() + " is smaller than 64x64");
  }
  scan.source_path = path.string();
  scan.metadata = parse_scan_filename(path.stem().string());
  return scan;
}

int otsu_threshold(const ImageU8& img) {
  std::array<double, 256> hist{};
  for (Index i = 0; i < img.size(); ++i) hist[img.data()[i]] += 1.0;
  const double total = double(img.size());
  double sum_all = 0.0;
  for (int v = 0; v < 256; ++v) sum_all += v * hist[v];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

// Separable running max (dilate) or min (erode) with a square element.
Mask rank_filter(const Mask& in, int radius, bool dilate) {
  const std::uint8_t outside = dilate ? 0 : 1;
  auto pass = [&](const Mask& src, bool horizontal) {
    Mask dst(src.rows(), src.cols());
    for (Index r = 0; r < src.rows(); ++r) {
      for (Index c = 0; c < src.cols(); ++c) {
        std::uint8_t acc = dilate ? 0 : 1;
        for (int d = -radius; d <= radius; ++d) {
          const Index rr = horizontal ? r : r + d;
          const Index cc = horizontal ? c + d : c;
          const bool inside = rr >= 0 && rr < src.rows() && cc >= 0 && cc < src.cols();
          const std::uint8_t v = inside ? src(rr, cc) : outside;
          acc = dilate ? std::max(acc, v) : std::min(acc, v);
        }
        dst(r, c) = acc;
      }
    }
    return dst;
  };
  return pass(pass(in, true), false);
}

}  // namespace

Mask morph_close(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  return rank_filter(rank_filter(mask, radius, true), radius, false);
}

std::pair<Mask, Index> largest_component(const Mask& mask) {
  const Index rows = mask.rows(), cols = mask.cols();
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels =
      Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(rows, cols);
  int next = 0, best_label = 0;
  Index best_size = 0;
  std::vector<std::pair<Index, Index>> stack;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!mask(r, c) || labels(r, c)) continue;
      const int label = ++next;
      Index size = 0;
      stack.assign(1, {r, c});
      labels(r, c) = label;
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        ++size;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const Index ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= rows || nx < 0 || nx >= cols) continue;
            if (mask(ny, nx) && !labels(ny, nx)) {
              labels(ny, nx) = label;
              stack.emplace_back(ny, nx);
            }
          }
        }
      }
      if (size > best_size) {
        best_size = size;
        best_label = label;
      }
    }
  }
  Mask out = Mask::Zero(rows, cols);
  if (best_label != 0) out = (labels.array() == best_label).cast<std::uint8_t>().matrix();
  return {out, best_size};
}

SegmentedFingerprint segment(const RawScan& raw, const SegmentationConfig& cfg) {
  cfg.validate();
  const ImageU8& px = raw.pixels;
  const Index rows = px.rows(), cols = px.cols();
  if (rows < 64 || cols < 64) throw Error(ErrorCode::ImageTooSmall, "scan smaller than 64x64");

  // Ridges are dark: threshold the inverted intensity.
  int level = cfg.fixed_level;
  if (cfg.threshold_method == ThresholdMethod::Otsu) {
    const ImageU8 inverted = (255 - px.array().cast<int>()).cast<std::uint8_t>().matrix();
    level = 255 - otsu_threshold(inverted);
  }
  const Mask fg = (px.array().cast<int>() < level).cast<std::uint8_t>();

  const auto [component, size] = largest_component(morph_close(fg, cfg.morph_close_radius));
  if (double(size) < cfg.min_component_fraction * double(rows * cols)) {
    throw Error(ErrorCode::NoForeground, raw.source_path + ": largest foreground component too small");
  }

  BoundingBox box{int(cols), int(rows), 0, 0};
  int x1 = -1, y1 = -1;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!component(r, c)) continue;
      box.x = std::min(box.x, int(c));
      box.y = std::min(box.y, int(r));
      x1 = std::max(x1, int(c));
      y1 = std::max(y1, int(r));
    }
  }
  box.w = x1 - box.x + 1;
  box.h = y1 - box.y + 1;

  const bool touches_all = box.x == 0 && box.y == 0 && x1 == cols - 1 && y1 == rows - 1;
  if (touches_all && (rows > cfg.output_hq || cols > cfg.output_hq)) {
    throw Error(ErrorCode::ForegroundTouchesAllBorders, raw.source_path + ": foreground spans the whole frame");
  }

  // Square crop centred on the box, padded as configured.
  const int side = std::max(box.w, box.h);
  const int x0 = box.x - (side - box.w) / 2;
  const int y0 = box.y - (side - box.h) / 2;
  ImageD crop(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const int sy = y0 + r, sx = x0 + c;
      const bool inside = sy >= 0 && sy < rows && sx >= 0 && sx < cols;
      if (inside) {
        crop(r, c) = px(sy, sx) / 255.0;
      } else if (cfg.pad_mode == PadMode::White) {
        crop(r, c) = 1.0;
      } else {
        crop(r, c) = px(std::clamp<Index>(sy, 0, rows - 1), std::clamp<Index>(sx, 0, cols - 1)) / 255.0;
      }
    }
  }

  SegmentedFingerprint out;
  out.pixels_hq = resample_bilinear(crop, cfg.output_hq, cfg.output_hq).cast<float>();
  out.pixels_lq = block_mean_downscale(out.pixels_hq, cfg.output_hq / cfg.output_lq);
  out.bbox = box;
  out.record = raw.metadata;
  out.source_path = raw.source_path;

  const float cut = float(level) / 255.0f;
  out.foreground_fraction = (out.pixels_hq.array() < cut).cast<double>().mean();
  if (out.foreground_fraction < cfg.min_foreground_fraction || out.foreground_fraction > cfg.max_foreground_fraction) {
    throw Error(ErrorCode::ForegroundFractionOutOfRange,
                raw.source_path + ": foreground fraction " + std::to_string(out.foreground_fraction) + " outside [" +
                    std::to_string(cfg.min_foreground_fraction) + ", " + std::to_string(cfg.max_foreground_fraction) +
                    "]");
  }
  return out;
}

ImageU8 derive_lq_u8(const ImageU8& hq, int factor) {
  return quantize_u8(block_mean_downscale(to_unit<double>(hq), factor));
}

BuildReport build_databases(std::span<const RawScan> scans, const SegmentationConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir / "hq");
  fs::create_directories(out_dir / "lq");

  BuildReport report;
  report.manifest.source = "real";
  report.manifest.config_digest = config_digest(to_json(cfg));
  report.manifest.base_dir = out_dir;
  std::unordered_set<std::string> used;

  for (std::size_t i = 0; i < scans.size(); ++i) {
    const RawScan& scan = scans[i];
    SegmentedFingerprint seg;
    try {
      seg = segment(scan, cfg);
    } catch (const Error& ex) {
      spdlog::warn("skipping {}: {}", scan.source_path, ex.what());
      report.skipped.push_back({scan.source_path, ex.what()});
      continue;
    }
    std::string id = scan.source_path.empty() ? "scan" : fs::path(scan.source_path).stem().string();
    if (used.contains(id)) id += "_" + std::to_string(i);
    used.insert(id);

    const ImageU8 hq = quantize_u8(seg.pixels_hq);
    const ImageU8 lq = derive_lq_u8(hq, cfg.output_hq / cfg.output_lq);
    ManifestEntry e;
    e.id = id;
    e.hq_path = "hq/" + id + ".png";
    e.lq_path = "lq/" + id + ".png";
    e.subject = seg.record.subject;
    e.finger = seg.record.finger;
    e.impression = seg.record.impression;
    e.ncic_class = seg.record.ncic_class;
    write_gray_png(out_dir / e.hq_path, hq);
    write_gray_png(out_dir / e.lq_path, lq);
    report.manifest.entries.push_back(std::move(e));
  }

  report.manifest.created_at = utc_timestamp();
  write_manifest(report.manifest, out_dir / "manifest.jsonl");

  std::ofstream skip_log(out_dir / "skipped.jsonl", std::ios::trunc);
  if (!skip_log) throw Error(ErrorCode::Io, "cannot write skip log in " + out_dir.string());
  for (const auto& s : report.skipped) {
    skip_log << nlohmann::json{{"source_path", s.source_path}, {"reason", s.reason}}.dump() << '\n';
  }
  return report;
}

}  // namespace fpgen
