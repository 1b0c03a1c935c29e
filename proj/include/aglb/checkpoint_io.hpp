#pragma once

// Portable checkpoint file:
//
//   bytes 0..8    magic "AGLB-CKPT"
//   byte  9       format version (currently 1)
//   bytes 10..17  header length N, unsigned 64-bit little-endian
//   next N bytes  UTF-8 JSON header: config, vocab, gate_order, metadata and
//                 a block manifest [{name, shape, offset, count}] where offset
//                 is in bytes from the start of the data section
//   remainder     data section: IEEE-754 binary64 little-endian, row-major,
//                 blocks in manifest order
//
// Block order: input_embedding, layer{l}.w_input, layer{l}.w_recurrent,
// layer{l}.bias for each layer, output_embedding, output_bias. Gate rows are
// stacked i, f, g, o.

#include <cstdint>
#include <filesystem>
#include <string>

#include "aglb/lstm.hpp"

namespace aglb::lm {

inline constexpr char kCheckpointMagic[] = "AGLB-CKPT";
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointVersionError, CheckpointShapeError or
// CheckpointTruncationError; never returns a partially filled checkpoint.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aglb::lm
