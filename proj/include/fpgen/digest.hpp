#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

namespace fpgen {

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string digest_hex(std::string_view bytes);

// Digest of the canonical (key-sorted, compact) serialisation, so it does not
// depend on key order in the source document.
std::string config_digest(const nlohmann::json& config);

}  // namespace fpgen
