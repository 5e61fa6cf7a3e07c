#pragma once

#include "json.hpp"

#include <string>
#include <string_view>

namespace atlasdiffeo {

// Reads the key/value table format used by manifold and map description files:
// `[table]`, `[[array.of.tables]]`, `a.b = value` with strings, numbers, booleans,
// (nested, multi-line) arrays and inline tables; `#` starts a comment.
nlohmann::json parse_spec_text(std::string_view text);

std::string read_text_file(const std::string& path);

// FNV-1a 64-bit digest as 16 hex digits.
std::string content_hash(std::string_view bytes);

}  // namespace atlasdiffeo
