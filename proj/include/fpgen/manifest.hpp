#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fpgen/image.hpp"

namespace fpgen {

// NCIC pattern classes: arch, left loop, right loop, tented arch, whorl, scar.
enum class NcicClass { A, L, R, T, W, S };

char to_char(NcicClass c);
NcicClass parse_ncic_class(char c);  // throws UnknownClass

struct ManifestEntry {
  std::string id;
  std::string hq_path;  // relative to the manifest directory
  std::string lq_path;  // empty when only the HQ image is emitted
  std::optional<int> subject;
  std::optional<int> finger;
  std::optional<int> impression;
  std::optional<NcicClass> ncic_class;
};

// Line-delimited JSON. The first line is a header record
//   {"record":"header","version":1,"source":..,"config_digest":..,"created_at":..,"count":N}
// followed by N records
//   {"record":"entry","id":..,"hq_path":..,"lq_path":..,"subject":..,"finger":..,"impression":..,"ncic_class":..}
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string config_digest;
  std::string created_at;
  std::string source = "real";  // real | ridge-synth | synthetic
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
  std::size_t size() const { return entries.size(); }
};

std::string utc_timestamp();

// Validates id uniqueness and that every referenced file exists, then writes.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);
DatasetManifest read_manifest(const std::filesystem::path& file);

// Serialised entry line (no timestamp), used for determinism comparisons.
std::string entry_record(const ManifestEntry& entry);

ImageF load_hq(const DatasetManifest& manifest, const ManifestEntry& entry);
ImageF load_lq(const DatasetManifest& manifest, const ManifestEntry& entry);

}  // namespace fpgen
