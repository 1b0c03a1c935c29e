#pragma once

// Two-layer LSTM language model with untied input/output embeddings.
//
// Cell (no peepholes), gate blocks stacked in the order i, f, g, o:
//   i = sigmoid(W_i x + U_i h + b_i)      f = sigmoid(W_f x + U_f h + b_f)
//   g = tanh(W_g x + U_g h + b_g)         o = sigmoid(W_o x + U_o h + b_o)
//   c' = f * c + i * g                    h' = o * tanh(c')
// Layer l > 0 consumes h of layer l - 1 directly. Logits are
// output_embedding * h(top) + output_bias.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aglb/numerics.hpp"
#include "json.hpp"

namespace aglb::lm {

using numerics::Matrix;
using numerics::Vector;
using TokenId = std::uint32_t;

inline constexpr std::string_view kBoundaryToken = "<eos>";

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 50;
  std::size_t hidden_dim = 50;
  std::size_t num_layers = 2;
  std::uint64_t seed = 0;

  // Throws ArgumentError if any dimension is zero.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  // Tokens must be unique; the index of each token is its position.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::optional<TokenId> find(std::string_view token) const;
  // Throws VocabularyError naming the token.
  TokenId at(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  std::optional<TokenId> boundary() const { return find(kBoundaryToken); }

  std::vector<TokenId> encode(std::span<const std::string> words) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct LstmLayer {
  Matrix w_input;      // 4H x input_dim
  Matrix w_recurrent;  // 4H x H
  Vector bias;         // 4H
  friend bool operator==(const LstmLayer&, const LstmLayer&) = default;
};

struct Parameters {
  Matrix input_embedding;   // V x E
  std::vector<LstmLayer> layers;
  Matrix output_embedding;  // V x H
  Vector output_bias;       // V

  // Same shapes, all zero.
  static Parameters zeros_like(const Parameters& p);
  std::size_t count() const;
  friend bool operator==(const Parameters&, const Parameters&) = default;
};

struct NamedBlock {
  std::string name;
  std::span<double> values;
  std::vector<std::size_t> shape;
};
struct ConstNamedBlock {
  std::string name;
  std::span<const double> values;
  std::vector<std::size_t> shape;
};

// Blocks in their canonical (serialisation) order.
std::vector<NamedBlock> blocks(Parameters& p);
std::vector<ConstNamedBlock> blocks(const Parameters& p);

struct Checkpoint {
  ModelConfig config;
  Vocabulary vocab;
  Parameters params;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t input_dim(std::size_t layer) const {
    return layer == 0 ? config.embed_dim : config.hidden_dim;
  }
  // Checks every block against config; throws CheckpointShapeError.
  void validate_shapes() const;
};

// Closed-form parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& config);

// Uniform weights in [-1/sqrt(H), 1/sqrt(H)], forget-gate bias 1, other
// biases 0. Throws ArgumentError if vocab.size() != config.vocab_size.
Checkpoint init_model(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed);
Checkpoint init_model(const ModelConfig& config, Vocabulary vocab);

struct UnitId {
  std::size_t layer = 0;
  std::size_t index = 0;
  friend auto operator<=>(const UnitId&, const UnitId&) = default;
};

enum class AblationMode {
  HiddenAndCell,  // clamp h and c (default)
  HiddenOnly,
};

class AblationMask {
 public:
  AblationMask() = default;
  explicit AblationMask(std::vector<UnitId> units,
                        AblationMode mode = AblationMode::HiddenAndCell);

  bool empty() const noexcept { return units_.empty(); }
  std::size_t size() const noexcept { return units_.size(); }
  const std::vector<UnitId>& units() const noexcept { return units_; }
  AblationMode mode() const noexcept { return mode_; }
  bool contains(UnitId u) const;
  // Throws ArgumentError for units outside the model.
  void validate(const ModelConfig& config) const;

 private:
  std::vector<UnitId> units_;  // sorted, unique
  AblationMode mode_ = AblationMode::HiddenAndCell;
};

struct LayerState {
  std::vector<Vector> h;
  std::vector<Vector> c;
  static LayerState zeros(const ModelConfig& config);
  friend bool operator==(const LayerState&, const LayerState&) = default;
};

// Activations of one layer at one timestep, after masking.
struct LayerGates {
  Vector i, f, g, o, c, h;
};
struct GateRecord {
  std::vector<LayerGates> layers;
};

struct StepOutput {
  LayerState state;
  Vector logits;
  GateRecord gates;
};

// One timestep. Throws ArgumentError for an out-of-range token.
StepOutput step(const Checkpoint& ckpt, const LayerState& state, TokenId token,
                const AblationMask& mask = {});

// Incremental runner used by evaluation and probing; avoids per-step
// allocation. Holds a reference to the checkpoint.
class Runner {
 public:
  Runner(const Checkpoint& ckpt, const AblationMask& mask);

  void reset();
  void set_state(LayerState state) { state_ = std::move(state); }
  // Consumes a token; fills `record` with all gate values when non-null.
  void advance(TokenId token, GateRecord* record = nullptr);
  // Logits from the current top-layer hidden state.
  Vector logits() const;
  const LayerState& state() const noexcept { return state_; }

 private:
  const Checkpoint& ckpt_;
  std::vector<std::vector<std::uint8_t>> masked_;
  bool clamp_cell_;
  LayerState state_;
  Vector preact_;
};

// Softmax of the logits after consuming `prefix` from the zero state.
Vector next_word_distribution(const Checkpoint& ckpt, std::span<const TokenId> prefix,
                              const AblationMask& mask = {});

// Sum over t >= 1 of log p(tokens[t] | tokens[0..t)), tokens[0] being the
// conditioning start symbol.
double sequence_log_prob(const Checkpoint& ckpt, std::span<const TokenId> tokens,
                         const AblationMask& mask = {});

}  // namespace aglb::lm
