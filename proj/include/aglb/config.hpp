#pragma once

// Declarative run configuration: embedded defaults and schema, deep merge,
// dotted-path overrides and validation.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace aglb::config {

// Parsed copies of config/schema.json and config/default.json.
const nlohmann::json& schema();
const nlohmann::json& defaults();

// Violations of the schema subset used by the shipped schema: type, enum,
// properties, required, additionalProperties (false), items, minItems,
// maxItems, minimum, maximum, exclusiveMinimum, exclusiveMaximum. Each entry
// is "<path>: <reason>" with paths like $.train.lr.
std::vector<std::string> violations(const nlohmann::json& instance, const nlohmann::json& schema);

// Throws ValidationError whose items() are the offending paths.
void validate(const nlohmann::json& cfg);

// Objects merge key by key; anything else in `overlay` replaces `base`.
nlohmann::json merge(nlohmann::json base, const nlohmann::json& overlay);

// Sets a dotted path ("train.lr") to `value`, parsed as JSON when possible
// and kept as a string otherwise. Creates intermediate objects.
void set_path(nlohmann::json& cfg, std::string_view dotted, std::string_view value);

// Throws IoError or ValidationError (path "$") for unreadable or malformed files.
nlohmann::json load_file(const std::filesystem::path& path);

// defaults() <- file (if any) <- overrides, then validated.
nlohmann::json resolve(const std::filesystem::path* file,
                       const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace aglb::config
