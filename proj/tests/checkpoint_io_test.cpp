#include "aglb/checkpoint_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "aglb/errors.hpp"

namespace aglb::lm {
namespace {

Checkpoint sample() {
  std::vector<std::string> tokens{"<eos>", "il", "ragazzo", "è", "l'"};
  Checkpoint ckpt = init_model(ModelConfig{5, 3, 4, 2, 42}, Vocabulary(tokens));
  ckpt.metadata["note"] = "sample";
  ckpt.params.output_bias[1] = 0.1 + 0.2;  // not exactly representable
  ckpt.params.input_embedding(0, 0) = -0.0;
  return ckpt;
}

TEST(CheckpointIo, RoundTripIsBitExact) {
  const Checkpoint ckpt = sample();
  const std::string bytes = serialize_checkpoint(ckpt);
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_TRUE(back.params == ckpt.params);
  EXPECT_EQ(back.config, ckpt.config);
  EXPECT_EQ(back.vocab, ckpt.vocab);
  EXPECT_EQ(back.metadata, ckpt.metadata);
  EXPECT_TRUE(std::signbit(back.params.input_embedding(0, 0)));
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(CheckpointIo, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "aglb_ckpt_test.bin";
  const Checkpoint ckpt = sample();
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(ckpt));
  std::filesystem::remove(path);
}

TEST(CheckpointIo, PreambleLayout) {
  const std::string bytes = serialize_checkpoint(sample());
  EXPECT_EQ(bytes.substr(0, 9), "AGLB-CKPT");
  EXPECT_EQ(static_cast<int>(bytes[9]), 1);
  std::uint64_t len = 0;
  for (int k = 0; k < 8; ++k)
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[10 + k])) << (8 * k);
  const auto header = nlohmann::json::parse(bytes.substr(18, len));
  EXPECT_EQ(header["blocks"][0]["name"], "input_embedding");
  EXPECT_EQ(header["blocks"][0]["offset"], 0);
  EXPECT_EQ(bytes.size(), 18 + len + 8 * parameter_count(sample().config));
}

TEST(CheckpointIo, CorruptMagic) {
  std::string bytes = serialize_checkpoint(sample());
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bytes), CheckpointVersionError);
}

TEST(CheckpointIo, WrongVersion) {
  std::string bytes = serialize_checkpoint(sample());
  bytes[9] = 7;
  EXPECT_THROW(deserialize_checkpoint(bytes), CheckpointVersionError);
}

TEST(CheckpointIo, TruncationNamesBlock) {
  const std::string bytes = serialize_checkpoint(sample());
  // Cut inside the last block (output_bias, 5 doubles).
  const std::string cut = bytes.substr(0, bytes.size() - 12);
  try {
    deserialize_checkpoint(cut);
    FAIL() << "expected truncation";
  } catch (const CheckpointTruncationError& e) {
    EXPECT_EQ(e.block(), "output_bias");
  }
  try {
    deserialize_checkpoint(bytes.substr(0, 30));
    FAIL() << "expected truncation";
  } catch (const CheckpointTruncationError& e) {
    EXPECT_EQ(e.block(), "header");
  }
}

TEST(CheckpointIo, ShapeInconsistency) {
  const std::string bytes = serialize_checkpoint(sample());
  std::uint64_t len = 0;
  for (int k = 0; k < 8; ++k)
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[10 + k])) << (8 * k);
  auto header = nlohmann::json::parse(bytes.substr(18, len));
  header["config"]["hidden_dim"] = 5;
  const std::string text = header.dump();
  std::string edited = bytes.substr(0, 10);
  for (int k = 0; k < 8; ++k) edited.push_back(static_cast<char>((text.size() >> (8 * k)) & 0xFF));
  edited += text + bytes.substr(18 + len);
  EXPECT_THROW(deserialize_checkpoint(edited), CheckpointShapeError);
}

}  // namespace
}  // namespace aglb::lm
