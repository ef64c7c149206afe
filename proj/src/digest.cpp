#include "fpgen/digest.hpp"

#include <cstdint>
#include <cstdio>

namespace fpgen {

std::string digest_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_digest(const nlohmann::json& config) { return digest_hex(config.dump()); }

}  // namespace fpgen
