#include "fpgen/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <unordered_set>

#include "fpgen/error.hpp"
#include "fpgen/png_io.hpp"
#include "json.hpp"

namespace fpgen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json optional_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

std::optional<int> read_optional_int(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<int>();
}

json entry_json(const ManifestEntry& e) {
  return json{{"record", "entry"},
              {"id", e.id},
              {"hq_path", e.hq_path},
              {"lq_path", e.lq_path},
              {"subject", optional_int(e.subject)},
              {"finger", optional_int(e.finger)},
              {"impression", optional_int(e.impression)},
              {"ncic_class", e.ncic_class ? json(std::string(1, to_char(*e.ncic_class))) : json(nullptr)}};
}

}  // namespace

char to_char(NcicClass c) {
  constexpr char names[] = {'A', 'L', 'R', 'T', 'W', 'S'};
  return names[static_cast<int>(c)];
}

NcicClass parse_ncic_class(char c) {
  switch (c) {
    case 'A': return NcicClass::A;
    case 'L': return NcicClass::L;
    case 'R': return NcicClass::R;
    case 'T': return NcicClass::T;
    case 'W': return NcicClass::W;
    case 'S': return NcicClass::S;
    default: throw Error(ErrorCode::UnknownClass, std::string("unknown NCIC class '") + c + "'");
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string entry_record(const ManifestEntry& entry) { return entry_json(entry).dump(); }

void write_manifest(const DatasetManifest& manifest, const fs::path& file) {
  const fs::path dir = file.parent_path().empty() ? fs::path(".") : file.parent_path();
  std::unordered_set<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (!ids.insert(e.id).second) throw Error(ErrorCode::Format, "duplicate manifest id " + e.id);
    for (const auto* rel : {&e.hq_path, &e.lq_path}) {
      if (!rel->empty() && !fs::exists(dir / *rel)) {
        throw Error(ErrorCode::Io, "manifest entry " + e.id + " references missing file " + (dir / *rel).string());
      }
    }
  }
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot write manifest " + file.string());
  const json header{{"record", "header"},
                    {"version", 1},
                    {"source", manifest.source},
                    {"config_digest", manifest.config_digest},
                    {"created_at", manifest.created_at.empty() ? utc_timestamp() : manifest.created_at},
                    {"count", manifest.entries.size()}};
  os << header.dump() << '\n';
  for (const auto& e : manifest.entries) os << entry_json(e).dump() << '\n';
  if (!os) throw Error(ErrorCode::Io, "failed writing manifest " + file.string());
}

DatasetManifest read_manifest(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw Error(ErrorCode::Io, "cannot open manifest " + file.string());
  DatasetManifest m;
  m.base_dir = file.parent_path().empty() ? fs::path(".") : file.parent_path();
  std::string line;
  std::size_t expected = 0;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::Format, file.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
    const auto record = j.value("record", "");
    if (record == "header") {
      have_header = true;
      m.source = j.value("source", "real");
      m.config_digest = j.value("config_digest", "");
      m.created_at = j.value("created_at", "");
      expected = j.value("count", std::size_t{0});
    } else if (record == "entry") {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.hq_path = j.value("hq_path", "");
      e.lq_path = j.value("lq_path", "");
      e.subject = read_optional_int(j, "subject");
      e.finger = read_optional_int(j, "finger");
      e.impression = read_optional_int(j, "impression");
      if (j.contains("ncic_class") && j["ncic_class"].is_string()) {
        const auto s = j["ncic_class"].get<std::string>();
        if (s.size() != 1) throw Error(ErrorCode::UnknownClass, "bad NCIC class " + s);
        e.ncic_class = parse_ncic_class(s[0]);
      }
      m.entries.push_back(std::move(e));
    } else {
      throw Error(ErrorCode::Format, file.string() + ":" + std::to_string(line_no) + ": unknown record type");
    }
  }
  if (!have_header) throw Error(ErrorCode::Format, file.string() + " has no header record");
  if (expected != m.entries.size()) {
    throw Error(ErrorCode::Format, file.string() + " declares " + std::to_string(expected) + " entries but holds " +
                                       std::to_string(m.entries.size()));
  }
  return m;
}

ImageF load_hq(const DatasetManifest& manifest, const ManifestEntry& entry) {
  return to_unit(read_gray_png(manifest.resolve(entry.hq_path)));
}

ImageF load_lq(const DatasetManifest& manifest, const ManifestEntry& entry) {
  if (entry.lq_path.empty()) throw Error(ErrorCode::Format, "manifest entry " + entry.id + " has no LQ image");
  return to_unit(read_gray_png(manifest.resolve(entry.lq_path)));
}

}  // namespace fpgen
