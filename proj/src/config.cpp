#include "aglb/config.hpp"

#include <algorithm>
#include <cmath>

#include "aglb/artifacts.hpp"
#include "aglb/errors.hpp"

namespace aglb::config {

namespace detail {
extern const char* const kSchemaText;
extern const char* const kDefaultsText;
}  // namespace detail

namespace {

bool has_type(const nlohmann::json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    if (v.is_number_float()) {
      const double d = v.get<double>();
      return std::isfinite(d) && d == std::floor(d);
    }
    return false;
  }
  if (type == "number") return v.is_number();
  return false;
}

void check(const nlohmann::json& v, const nlohmann::json& s, const std::string& path,
           std::vector<std::string>& out) {
  if (s.contains("type")) {
    const auto& t = s["type"];
    bool ok = false;
    if (t.is_string()) ok = has_type(v, t.get<std::string>());
    else
      for (const auto& alt : t) ok |= has_type(v, alt.get<std::string>());
    if (!ok) {
      out.push_back(path + ": expected " + t.dump());
      return;
    }
  }
  if (s.contains("enum") &&
      std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end())
    out.push_back(path + ": not one of " + s["enum"].dump());
  if (v.is_number()) {
    const double d = v.get<double>();
    if (s.contains("minimum") && d < s["minimum"].get<double>())
      out.push_back(path + ": below minimum " + s["minimum"].dump());
    if (s.contains("maximum") && d > s["maximum"].get<double>())
      out.push_back(path + ": above maximum " + s["maximum"].dump());
    if (s.contains("exclusiveMinimum") && d <= s["exclusiveMinimum"].get<double>())
      out.push_back(path + ": must exceed " + s["exclusiveMinimum"].dump());
    if (s.contains("exclusiveMaximum") && d >= s["exclusiveMaximum"].get<double>())
      out.push_back(path + ": must be below " + s["exclusiveMaximum"].dump());
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& key : s["required"])
        if (!v.contains(key.get<std::string>()))
          out.push_back(path + "." + key.get<std::string>() + ": required");
    const nlohmann::json props = s.value("properties", nlohmann::json::object());
    const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
    for (const auto& [key, child] : v.items()) {
      if (props.contains(key)) check(child, props[key], path + "." + key, out);
      else if (closed) out.push_back(path + "." + key + ": unknown key");
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      out.push_back(path + ": fewer than " + s["minItems"].dump() + " items");
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
      out.push_back(path + ": more than " + s["maxItems"].dump() + " items");
    if (s.contains("items"))
      for (std::size_t k = 0; k < v.size(); ++k)
        check(v[k], s["items"], path + "[" + std::to_string(k) + "]", out);
  }
}

}  // namespace

const nlohmann::json& schema() {
  static const nlohmann::json s = nlohmann::json::parse(detail::kSchemaText);
  return s;
}

const nlohmann::json& defaults() {
  static const nlohmann::json d = nlohmann::json::parse(detail::kDefaultsText);
  return d;
}

std::vector<std::string> violations(const nlohmann::json& instance, const nlohmann::json& s) {
  std::vector<std::string> out;
  check(instance, s, "$", out);
  return out;
}

void validate(const nlohmann::json& cfg) {
  const auto v = violations(cfg, schema());
  if (v.empty()) return;
  std::vector<std::string> paths;
  std::string msg = "configuration does not match the schema:";
  for (const auto& e : v) {
    paths.push_back(e.substr(0, e.find(": ")));
    msg += "\n  " + e;
  }
  throw ValidationError(msg, paths);
}

nlohmann::json merge(nlohmann::json base, const nlohmann::json& overlay) {
  if (!base.is_object() || !overlay.is_object()) return overlay;
  for (const auto& [key, value] : overlay.items())
    base[key] = base.contains(key) ? merge(base[key], value) : value;
  return base;
}

void set_path(nlohmann::json& cfg, std::string_view dotted, std::string_view value) {
  if (dotted.empty()) throw ArgumentError("empty override path");
  nlohmann::json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key(dotted.substr(start, dot == std::string_view::npos ? dotted.npos : dot - start));
    if (key.empty()) throw ArgumentError("malformed override path '" + std::string(dotted) + "'");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string_view::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(std::string(value)) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

nlohmann::json load_file(const std::filesystem::path& path) {
  const std::string text = run::read_file(path);
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError(path.string() + " is not valid JSON", {"$"});
  return j;
}

nlohmann::json resolve(const std::filesystem::path* file,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  nlohmann::json cfg = defaults();
  if (file) {
    const nlohmann::json user = load_file(*file);
    // Validate the file alone first so errors point at what the user wrote.
    validate(merge(nlohmann::json{{"v", 1}}, user));
    cfg = merge(cfg, user);
  }
  for (const auto& [path, value] : overrides) set_path(cfg, path, value);
  validate(cfg);
  return cfg;
}

}  // namespace aglb::config
