#include "doctest.h"

#include <png.h>

#include <cstring>

#include "fpgen/data_prep.hpp"
#include "fpgen/png_io.hpp"
#include "test_support.hpp"

using namespace fpgen;
using fpgen::test::TempDir;
namespace fs = std::filesystem;

namespace {

void write_rgb_png(const fs::path& path, int w, int h) {
  std::vector<std::uint8_t> rgb(std::size_t(w) * h * 3, 128);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(w);
  image.height = png_uint_32(h);
  image.format = PNG_FORMAT_RGB;
  REQUIRE(png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), w * 3, nullptr));
}

std::vector<RawScan> ten_scans(int blank) {
  std::vector<RawScan> scans;
  for (int i = 0; i < 10; ++i) {
    ImageU8 px = i < blank ? ImageU8::Constant(320, 300, 255)
                           : test::ridge_disc(320, 300, 150 + 4 * i, 160 - 3 * i, 90 + 2 * i);
    scans.push_back(test::make_scan(std::move(px), "s" + std::to_string(i) + "_f1_i1_W.png"));
  }
  return scans;
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.path().extension() == ".png";
  return n;
}

}  // namespace

TEST_CASE("load_raw_scan reads 8-bit grayscale at native size") {
  TempDir tmp("load");
  ImageU8 px(768, 832);
  for (Eigen::Index i = 0; i < px.size(); ++i) px.data()[i] = std::uint8_t(i % 251);
  write_gray_png(tmp / "s12_f3_i2_L.png", px);
  const RawScan scan = load_raw_scan(tmp / "s12_f3_i2_L.png");
  CHECK(scan.pixels.rows() == 768);
  CHECK(scan.pixels.cols() == 832);
  CHECK(scan.pixels == px);
  CHECK(scan.metadata.subject == 12);
  CHECK(scan.metadata.finger == 3);
  CHECK(scan.metadata.impression == 2);
  CHECK(scan.metadata.ncic_class == NcicClass::L);
}

TEST_CASE("64x64 all-zero scan is accepted at load") {
  TempDir tmp("zero");
  write_gray_png(tmp / "z.png", ImageU8::Zero(64, 64));
  const RawScan scan = load_raw_scan(tmp / "z.png");
  CHECK(scan.pixels.rows() == 64);
  CHECK(!scan.metadata.subject);
}

TEST_CASE("load_raw_scan rejects colour and undersized images") {
  TempDir tmp("bad");
  write_rgb_png(tmp / "rgb.png", 80, 80);
  try {
    load_raw_scan(tmp / "rgb.png");
    FAIL("expected NonGrayscaleInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonGrayscaleInput);
  }
  write_gray_png(tmp / "small.png", ImageU8::Zero(63, 80));
  CHECK_THROWS_AS(load_raw_scan(tmp / "small.png"), Error);
  CHECK_THROWS_AS(load_raw_scan(tmp / "missing.png"), Error);
}

TEST_CASE("otsu separates a bimodal histogram") {
  ImageU8 img(10, 10);
  img.topRows(5).setConstant(40);
  img.bottomRows(5).setConstant(200);
  const int t = otsu_threshold(img);
  CHECK(t >= 40);
  CHECK(t < 200);
}

TEST_CASE("morphological close fills gaps narrower than the element") {
  Mask m = Mask::Zero(40, 40);
  for (int r = 10; r < 30; r += 4) m.row(r).segment(10, 20).setOnes();
  const Mask closed = morph_close(m, 2);
  CHECK((closed.block(10, 10, 17, 20).array() == 1).all());
  CHECK((closed.array() >= m.array()).all());
}

TEST_CASE("largest component keeps the biggest 8-connected blob") {
  Mask m = Mask::Zero(20, 20);
  m.block(1, 1, 3, 3).setOnes();
  m.block(10, 10, 5, 5).setOnes();
  m(15, 15) = 1;  // diagonal neighbour joins the big blob
  const auto [comp, size] = largest_component(m);
  CHECK(size == 26);
  CHECK(comp(2, 2) == 0);
  CHECK(comp(15, 15) == 1);
}

TEST_CASE("segment finds the bounding box of a ridge disc") {
  const double cx = 260.0, cy = 250.0, radius = 150.0;
  const RawScan scan = test::make_scan(test::ridge_disc(512, 512, cx, cy, radius), "disc.png");
  SegmentationConfig cfg;
  const SegmentedFingerprint seg = segment(scan, cfg);
  const int tol = cfg.morph_close_radius;
  CHECK(std::abs(seg.bbox.x - (cx - radius)) <= tol);
  CHECK(std::abs(seg.bbox.y - (cy - radius)) <= tol);
  CHECK(std::abs(seg.bbox.x + seg.bbox.w - (cx + radius)) <= tol);
  CHECK(std::abs(seg.bbox.y + seg.bbox.h - (cy + radius)) <= tol);
  CHECK(seg.bbox.x >= 0);
  CHECK(seg.bbox.y >= 0);
  CHECK(seg.bbox.x + seg.bbox.w <= 512);
  CHECK(seg.bbox.y + seg.bbox.h <= 512);
  CHECK(seg.pixels_hq.rows() == 256);
  CHECK(seg.pixels_hq.cols() == 256);
  CHECK(seg.pixels_lq == downscale(seg.pixels_hq));
  CHECK(seg.foreground_fraction >= 0.2);
  CHECK(seg.foreground_fraction <= 0.95);
}

TEST_CASE("segment rejects a blank scan") {
  const RawScan scan = test::make_scan(ImageU8::Constant(300, 300, 255), "blank.png");
  try {
    segment(scan, SegmentationConfig{});
    FAIL("expected NoForeground");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoForeground);
  }
}

TEST_CASE("a full-frame 256x256 print is passed through unchanged") {
  ImageU8 px(256, 256);
  for (int r = 0; r < 256; ++r) px.row(r).setConstant(r % 8 < 4 ? 30 : 235);
  const SegmentedFingerprint seg = segment(test::make_scan(px, "full.png"), SegmentationConfig{});
  CHECK(seg.bbox == BoundingBox{0, 0, 256, 256});
  CHECK((seg.pixels_hq - to_unit<float>(px)).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("a full-frame noisy scan larger than the output is rejected") {
  ImageU8 px(400, 400);
  for (int r = 0; r < 400; ++r) px.row(r).setConstant(r % 8 < 4 ? 30 : 235);
  try {
    segment(test::make_scan(px, "noise.png"), SegmentationConfig{});
    FAIL("expected ForegroundTouchesAllBorders");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ForegroundTouchesAllBorders);
  }
}

TEST_CASE("re-segmenting the HQ output is nearly idempotent") {
  SegmentationConfig cfg;
  const auto first = segment(test::make_scan(test::ridge_disc(480, 420, 200, 250, 140), "a.png"), cfg);
  const auto second = segment(test::make_scan(quantize_u8(first.pixels_hq), "b.png"), cfg);
  CHECK(mean_abs_diff(first.pixels_hq, second.pixels_hq) < 0.02);
}

TEST_CASE("build_databases writes one HQ/LQ pair per scan") {
  TempDir tmp("build10");
  const auto scans = ten_scans(0);
  const BuildReport rep = build_databases(scans, SegmentationConfig{}, tmp.path());
  CHECK(rep.manifest.size() == 10);
  CHECK(rep.skipped.empty());
  CHECK(count_files(tmp.path()) == 20);
  const DatasetManifest back = read_manifest(tmp / "manifest.jsonl");
  CHECK(back.size() == 10);
  CHECK(back.source == "real");
  CHECK(back.entries[3].subject == 3);
}

TEST_CASE("build_databases skips and logs failing scans") {
  TempDir tmp("build8");
  const BuildReport rep = build_databases(ten_scans(2), SegmentationConfig{}, tmp.path());
  CHECK(rep.manifest.size() == 8);
  CHECK(rep.skipped.size() == 2);
  std::ifstream log(tmp / "skipped.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 2);
  CHECK(count_files(tmp.path()) == 16);
}

TEST_CASE("preprocessing is byte-deterministic") {
  TempDir a("det_a"), b("det_b");
  const auto scans = ten_scans(1);
  const auto ra = build_databases(scans, SegmentationConfig{}, a.path());
  const auto rb = build_databases(scans, SegmentationConfig{}, b.path());
  REQUIRE(ra.manifest.size() == rb.manifest.size());
  CHECK(ra.manifest.config_digest == rb.manifest.config_digest);
  for (std::size_t i = 0; i < ra.manifest.size(); ++i) {
    const auto& ea = ra.manifest.entries[i];
    const auto& eb = rb.manifest.entries[i];
    CHECK(entry_record(ea) == entry_record(eb));
    CHECK(test::read_bytes(a / ea.hq_path) == test::read_bytes(b / eb.hq_path));
    CHECK(test::read_bytes(a / ea.lq_path) == test::read_bytes(b / eb.lq_path));
  }
}

TEST_CASE("stored LQ equals the downscale of stored HQ") {
  TempDir tmp("roundtrip");
  const auto rep = build_databases(ten_scans(0), SegmentationConfig{}, tmp.path());
  for (const auto& e : rep.manifest.entries) {
    const ImageD hq = to_unit<double>(read_gray_png(tmp / e.hq_path));
    CHECK(quantize_u8(downscale(hq)) == read_gray_png(tmp / e.lq_path));
  }
}

TEST_CASE("segmentation config validation") {
  SegmentationConfig cfg;
  cfg.output_lq = 60;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.morph_close_radius = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
