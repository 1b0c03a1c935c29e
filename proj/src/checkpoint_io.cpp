#include "aglb/checkpoint_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aglb/errors.hpp"

namespace aglb::lm {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;
constexpr std::size_t kPreamble = kMagicLen + 1 + 8;

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  return v;
}

void put_double(std::string& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

double get_double(const std::string& in, std::size_t pos) {
  return std::bit_cast<double>(get_u64(in, pos));
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"num_layers", c.num_layers},
          {"seed", c.seed}};
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.validate_shapes();
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& b : blocks(ckpt.params)) {
    manifest.push_back({{"name", b.name},
                        {"shape", b.shape},
                        {"offset", offset},
                        {"count", b.values.size()}});
    offset += b.values.size() * 8;
  }
  const nlohmann::json header = {{"config", config_json(ckpt.config)},
                                 {"vocab", ckpt.vocab.tokens()},
                                 {"gate_order", "ifgo"},
                                 {"dtype", "float64-le"},
                                 {"blocks", manifest},
                                 {"metadata", ckpt.metadata}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, kMagicLen);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& b : blocks(ckpt.params))
    for (double x : b.values) put_double(out, x);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kCheckpointMagic, kMagicLen) != 0)
    throw CheckpointVersionError("not a checkpoint file (bad magic)");
  if (bytes.size() < kMagicLen + 1)
    throw CheckpointTruncationError("preamble", "checkpoint truncated in preamble");
  const auto version = static_cast<std::uint8_t>(bytes[kMagicLen]);
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
  if (bytes.size() < kPreamble)
    throw CheckpointTruncationError("preamble", "checkpoint truncated in preamble");
  const std::uint64_t header_len = get_u64(bytes, kMagicLen + 1);
  if (header_len > bytes.size() - kPreamble)
    throw CheckpointTruncationError("header", "checkpoint truncated in header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreamble,
                                   bytes.begin() + kPreamble + static_cast<long>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointShapeError(std::string("malformed checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    const auto& c = header.at("config");
    ckpt.config.vocab_size = c.at("vocab_size").get<std::size_t>();
    ckpt.config.embed_dim = c.at("embed_dim").get<std::size_t>();
    ckpt.config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    ckpt.config.num_layers = c.at("num_layers").get<std::size_t>();
    ckpt.config.seed = c.at("seed").get<std::uint64_t>();
    ckpt.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
    if (header.value("gate_order", "ifgo") != "ifgo" ||
        header.value("dtype", "float64-le") != "float64-le")
      throw CheckpointShapeError("unsupported gate order or dtype");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointShapeError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ArgumentError& e) {
    throw CheckpointShapeError(e.what());
  }
  try {
    ckpt.config.validate();
  } catch (const ArgumentError& e) {
    throw CheckpointShapeError(e.what());
  }
  if (ckpt.vocab.size() != ckpt.config.vocab_size)
    throw CheckpointShapeError("vocabulary size does not match config");

  // Allocate the expected shapes from config, then fill from the manifest.
  const auto& cfg = ckpt.config;
  auto& p = ckpt.params;
  p.input_embedding = Matrix(cfg.vocab_size, cfg.embed_dim);
  for (std::size_t l = 0; l < cfg.num_layers; ++l)
    p.layers.push_back({Matrix(4 * cfg.hidden_dim, ckpt.input_dim(l)),
                        Matrix(4 * cfg.hidden_dim, cfg.hidden_dim),
                        Vector(4 * cfg.hidden_dim, 0.0)});
  p.output_embedding = Matrix(cfg.vocab_size, cfg.hidden_dim);
  p.output_bias.assign(cfg.vocab_size, 0.0);

  const auto& manifest = header.at("blocks");
  auto expected = blocks(p);
  if (!manifest.is_array() || manifest.size() != expected.size())
    throw CheckpointShapeError("block manifest does not match config");
  const std::size_t data_start = kPreamble + header_len;
  const std::size_t data_len = bytes.size() - data_start;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const auto& entry = manifest[k];
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0, count = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<std::vector<std::size_t>>();
      offset = entry.at("offset").get<std::size_t>();
      count = entry.at("count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointShapeError(std::string("malformed block manifest: ") + e.what());
    }
    if (name != expected[k].name || shape != expected[k].shape ||
        count != expected[k].values.size())
      throw CheckpointShapeError("block " + name + " inconsistent with config (expected " +
                                 expected[k].name + ")");
    if (offset > data_len || count * 8 > data_len - offset)
      throw CheckpointTruncationError(name, "checkpoint truncated in block " + name);
    for (std::size_t j = 0; j < count; ++j)
      expected[k].values[j] = get_double(bytes, data_start + offset + 8 * j);
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace aglb::lm
