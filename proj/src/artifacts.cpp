#include "aglb/artifacts.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <sstream>

#include "aglb/errors.hpp"

namespace aglb::run {

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw IoError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[digest[k] >> 4];
    out += hex[digest[k] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string RunManifest::config_hash() const { return sha256_hex(config.dump()); }

nlohmann::json RunManifest::to_json() const {
  return {{"v", 1},
          {"command", command},
          {"config", config},
          {"config_hash", config_hash()},
          {"seeds", seeds},
          {"inputs", inputs},
          {"checkpoints", checkpoints},
          {"tool_version", tool_version}};
}

std::string RunManifest::hash() const { return sha256_hex(to_json().dump()); }

std::filesystem::path run_directory(const std::filesystem::path& root, const RunManifest& m) {
  return root / (m.command + "-" + m.hash().substr(0, 12));
}

std::string banner(const std::string& hash) { return "# manifest " + hash + "\n"; }

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_banner(std::string_view content) {
  std::string out;
  std::size_t start = 0;
  while (start < content.size()) {
    const std::size_t end = std::min(content.find('\n', start), content.size());
    const std::string_view line = content.substr(start, end - start);
    if (!line.starts_with('#')) {
      out.append(line);
      if (end < content.size()) out += '\n';
    }
    start = end + 1;
  }
  return out;
}

}  // namespace aglb::run
