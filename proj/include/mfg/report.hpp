#pragma once

#include <json.hpp>
#include <string>

namespace mfg {

using Json = nlohmann::json;

// Deterministic JSON serialization: object keys sorted (nlohmann::json stores
// objects in key order already), floats rendered with a fixed "%.12e" format,
// two-space indentation.  Identical trees produce identical bytes on every
// platform and thread count.
std::string json_to_bytes(const Json& value);

enum class ReportFormat { json, text, csv };

// json: json_to_bytes.  text: indented "key: value" lines for humans.
// csv: one "path,value" line per scalar leaf, paths dotted (arrays as [i]),
// in the same deterministic order as the json output.
std::string emit_report(const Json& results, ReportFormat format);

}  // namespace mfg
