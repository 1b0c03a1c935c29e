#include "aglb/lstm.hpp"

#include <algorithm>
#include <cmath>

#include "aglb/errors.hpp"

namespace aglb::lm {

using numerics::gemv_acc;
using numerics::sigmoid;

void ModelConfig::validate() const {
  if (vocab_size == 0 || embed_dim == 0 || hidden_dim == 0 || num_layers == 0)
    throw ArgumentError("model config: all dimensions must be >= 1");
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw ArgumentError("vocabulary: duplicate token '" + tokens_[i] + "'");
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::at(std::string_view token) const {
  if (auto id = find(token)) return *id;
  throw VocabularyError("token not in vocabulary: '" + std::string(token) + "'");
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<TokenId> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(at(w));
  return out;
}

Parameters Parameters::zeros_like(const Parameters& p) {
  Parameters z;
  z.input_embedding = Matrix(p.input_embedding.rows(), p.input_embedding.cols());
  for (const auto& l : p.layers)
    z.layers.push_back({Matrix(l.w_input.rows(), l.w_input.cols()),
                        Matrix(l.w_recurrent.rows(), l.w_recurrent.cols()),
                        Vector(l.bias.size(), 0.0)});
  z.output_embedding = Matrix(p.output_embedding.rows(), p.output_embedding.cols());
  z.output_bias.assign(p.output_bias.size(), 0.0);
  return z;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const auto& b : blocks(*this)) n += b.values.size();
  return n;
}

namespace {

template <class P, class Block>
std::vector<Block> blocks_impl(P& p) {
  std::vector<Block> out;
  out.push_back({"input_embedding", p.input_embedding.values(),
                 {p.input_embedding.rows(), p.input_embedding.cols()}});
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    out.push_back({prefix + "w_input", layer.w_input.values(),
                   {layer.w_input.rows(), layer.w_input.cols()}});
    out.push_back({prefix + "w_recurrent", layer.w_recurrent.values(),
                   {layer.w_recurrent.rows(), layer.w_recurrent.cols()}});
    out.push_back({prefix + "bias", layer.bias, {layer.bias.size()}});
  }
  out.push_back({"output_embedding", p.output_embedding.values(),
                 {p.output_embedding.rows(), p.output_embedding.cols()}});
  out.push_back({"output_bias", p.output_bias, {p.output_bias.size()}});
  return out;
}

}  // namespace

std::vector<NamedBlock> blocks(Parameters& p) {
  return blocks_impl<Parameters, NamedBlock>(p);
}
std::vector<ConstNamedBlock> blocks(const Parameters& p) {
  return blocks_impl<const Parameters, ConstNamedBlock>(p);
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t v = c.vocab_size, e = c.embed_dim, h = c.hidden_dim;
  std::size_t n = v * e + v * h + v;
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::size_t in = l == 0 ? e : h;
    n += 4 * h * in + 4 * h * h + 4 * h;
  }
  return n;
}

void Checkpoint::validate_shapes() const {
  config.validate();
  const std::size_t v = config.vocab_size, e = config.embed_dim, h = config.hidden_dim;
  auto fail = [](const std::string& what) {
    throw CheckpointShapeError("shape mismatch in block " + what);
  };
  if (vocab.size() != v) fail("vocabulary");
  if (params.input_embedding.rows() != v || params.input_embedding.cols() != e)
    fail("input_embedding");
  if (params.layers.size() != config.num_layers) fail("layers");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    if (layer.w_input.rows() != 4 * h || layer.w_input.cols() != input_dim(l))
      fail(p + "w_input");
    if (layer.w_recurrent.rows() != 4 * h || layer.w_recurrent.cols() != h)
      fail(p + "w_recurrent");
    if (layer.bias.size() != 4 * h) fail(p + "bias");
  }
  if (params.output_embedding.rows() != v || params.output_embedding.cols() != h)
    fail("output_embedding");
  if (params.output_bias.size() != v) fail("output_bias");
}

Checkpoint init_model(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed) {
  config.validate();
  if (vocab.size() != config.vocab_size)
    throw ArgumentError("init_model: vocabulary has " + std::to_string(vocab.size()) +
                        " tokens but config declares " +
                        std::to_string(config.vocab_size));
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.config.seed = seed;
  ckpt.vocab = std::move(vocab);

  const std::size_t v = config.vocab_size, e = config.embed_dim, h = config.hidden_dim;
  auto& p = ckpt.params;
  p.input_embedding = Matrix(v, e);
  for (std::size_t l = 0; l < config.num_layers; ++l)
    p.layers.push_back({Matrix(4 * h, l == 0 ? e : h), Matrix(4 * h, h), Vector(4 * h)});
  p.output_embedding = Matrix(v, h);
  p.output_bias.assign(v, 0.0);

  numerics::Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (auto& b : blocks(p)) {
    if (b.name.ends_with("bias")) continue;
    for (double& x : b.values) x = rng.uniform(-bound, bound);
  }
  for (auto& layer : p.layers)
    std::fill(layer.bias.begin() + h, layer.bias.begin() + 2 * h, 1.0);
  return ckpt;
}

Checkpoint init_model(const ModelConfig& config, Vocabulary vocab) {
  return init_model(config, std::move(vocab), config.seed);
}

AblationMask::AblationMask(std::vector<UnitId> units, AblationMode mode)
    : units_(std::move(units)), mode_(mode) {
  std::sort(units_.begin(), units_.end());
  units_.erase(std::unique(units_.begin(), units_.end()), units_.end());
}

bool AblationMask::contains(UnitId u) const {
  return std::binary_search(units_.begin(), units_.end(), u);
}

void AblationMask::validate(const ModelConfig& config) const {
  for (const auto& u : units_)
    if (u.layer >= config.num_layers || u.index >= config.hidden_dim)
      throw ArgumentError("ablation mask: unit (" + std::to_string(u.layer) + ", " +
                          std::to_string(u.index) + ") out of range");
}

LayerState LayerState::zeros(const ModelConfig& config) {
  LayerState s;
  s.h.assign(config.num_layers, Vector(config.hidden_dim, 0.0));
  s.c.assign(config.num_layers, Vector(config.hidden_dim, 0.0));
  return s;
}

Runner::Runner(const Checkpoint& ckpt, const AblationMask& mask)
    : ckpt_(ckpt),
      masked_(ckpt.config.num_layers, std::vector<std::uint8_t>(ckpt.config.hidden_dim, 0)),
      clamp_cell_(mask.mode() == AblationMode::HiddenAndCell),
      state_(LayerState::zeros(ckpt.config)),
      preact_(4 * ckpt.config.hidden_dim) {
  mask.validate(ckpt.config);
  for (const auto& u : mask.units()) masked_[u.layer][u.index] = 1;
}

void Runner::reset() { state_ = LayerState::zeros(ckpt_.config); }

void Runner::advance(TokenId token, GateRecord* record) {
  const auto& cfg = ckpt_.config;
  if (token >= cfg.vocab_size)
    throw ArgumentError("token index " + std::to_string(token) + " out of range");
  const std::size_t h = cfg.hidden_dim;
  if (record) record->layers.resize(cfg.num_layers);

  std::span<const double> x = ckpt_.params.input_embedding.row(token);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& layer = ckpt_.params.layers[l];
    std::copy(layer.bias.begin(), layer.bias.end(), preact_.begin());
    gemv_acc(layer.w_input, x, preact_);
    gemv_acc(layer.w_recurrent, state_.h[l], preact_);

    Vector& c = state_.c[l];
    Vector& hv = state_.h[l];
    const auto& mask = masked_[l];
    LayerGates* rec = record ? &record->layers[l] : nullptr;
    if (rec) {
      rec->i.resize(h);
      rec->f.resize(h);
      rec->g.resize(h);
      rec->o.resize(h);
      rec->c.resize(h);
      rec->h.resize(h);
    }
    for (std::size_t u = 0; u < h; ++u) {
      const double ig = sigmoid(preact_[u]);
      const double fg = sigmoid(preact_[h + u]);
      const double gg = std::tanh(preact_[2 * h + u]);
      const double og = sigmoid(preact_[3 * h + u]);
      double cn = fg * c[u] + ig * gg;
      double hn = og * std::tanh(cn);
      if (mask[u]) {
        hn = 0.0;
        if (clamp_cell_) cn = 0.0;
      }
      c[u] = cn;
      hv[u] = hn;
      if (rec) {
        rec->i[u] = ig;
        rec->f[u] = fg;
        rec->g[u] = gg;
        rec->o[u] = og;
        rec->c[u] = cn;
        rec->h[u] = hn;
      }
    }
    x = hv;
  }
}

Vector Runner::logits() const {
  Vector out = ckpt_.params.output_bias;
  gemv_acc(ckpt_.params.output_embedding, state_.h.back(), out);
  return out;
}

StepOutput step(const Checkpoint& ckpt, const LayerState& state, TokenId token,
                const AblationMask& mask) {
  const auto& cfg = ckpt.config;
  if (state.h.size() != cfg.num_layers || state.c.size() != cfg.num_layers)
    throw ArgumentError("step: state layer count does not match config");
  for (std::size_t l = 0; l < cfg.num_layers; ++l)
    if (state.h[l].size() != cfg.hidden_dim || state.c[l].size() != cfg.hidden_dim)
      throw ArgumentError("step: state width does not match config");

  Runner runner(ckpt, mask);
  runner.set_state(state);
  StepOutput out;
  runner.advance(token, &out.gates);
  out.state = runner.state();
  out.logits = runner.logits();
  return out;
}

Vector next_word_distribution(const Checkpoint& ckpt, std::span<const TokenId> prefix,
                              const AblationMask& mask) {
  if (prefix.empty()) throw ArgumentError("next_word_distribution: empty prefix");
  Runner runner(ckpt, mask);
  for (TokenId t : prefix) runner.advance(t);
  return numerics::softmax(runner.logits());
}

double sequence_log_prob(const Checkpoint& ckpt, std::span<const TokenId> tokens,
                         const AblationMask& mask) {
  if (tokens.empty()) throw ArgumentError("sequence_log_prob: empty sequence");
  Runner runner(ckpt, mask);
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    runner.advance(tokens[t]);
    const Vector lp = numerics::log_softmax(runner.logits());
    if (tokens[t + 1] >= lp.size()) throw ArgumentError("token index out of range");
    total += lp[tokens[t + 1]];
  }
  return total;
}

}  // namespace aglb::lm
