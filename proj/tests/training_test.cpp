#include "aglb/training.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "aglb/errors.hpp"

namespace aglb::lm {
namespace {

Vocabulary toy_vocab(std::size_t n) {
  std::vector<std::string> tokens{std::string(kBoundaryToken)};
  for (std::size_t k = 1; k < n; ++k) tokens.push_back("w" + std::to_string(k));
  return Vocabulary(tokens);
}

Checkpoint small_model(std::size_t vocab, std::size_t embed, std::size_t hidden,
                       std::uint64_t seed) {
  return init_model(ModelConfig{vocab, embed, hidden, 2, seed}, toy_vocab(vocab));
}

std::vector<Sequence> random_batch(std::size_t count, std::size_t len, std::size_t vocab,
                                   std::uint64_t seed, std::size_t max_token = 0) {
  numerics::Rng rng(seed);
  const std::size_t top = max_token ? max_token : vocab;
  std::vector<Sequence> out;
  for (std::size_t k = 0; k < count; ++k) {
    Sequence s{0};
    for (std::size_t t = 0; t < len; ++t) s.push_back(1 + static_cast<TokenId>(rng.below(top - 1)));
    s.push_back(0);
    out.push_back(s);
  }
  return out;
}

TEST(SplitSentences, WrapsWithBoundaries) {
  const std::vector<TokenId> stream{0, 3, 4, 0, 5, 0, 0, 6};
  const auto seqs = split_sentences(stream, 0);
  ASSERT_EQ(seqs.size(), 3u);
  EXPECT_EQ(seqs[0], (Sequence{0, 3, 4, 0}));
  EXPECT_EQ(seqs[1], (Sequence{0, 5, 0}));
  EXPECT_EQ(seqs[2], (Sequence{0, 6, 0}));
}

TEST(GradientCheck, TwoByEightVocabTwenty) {
  const auto start = std::chrono::steady_clock::now();
  const Checkpoint ckpt = small_model(20, 8, 8, 17);
  const auto batch = random_batch(3, 6, 20, 5);
  const auto report = gradient_check(ckpt, batch, 1e-5);
  for (const auto& b : report.blocks) EXPECT_LT(b.max_relative_error, 1e-4) << b.block;
  EXPECT_LT(report.max_relative_error, 1e-4);
  EXPECT_EQ(report.parameters_checked, ckpt.params.count());
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::minutes(1));
}

TEST(GradientCheck, WindowAtLeastSequenceIsUntruncated) {
  const Checkpoint ckpt = small_model(10, 4, 5, 3);
  const auto batch = random_batch(2, 9, 10, 8);
  EXPECT_LT(gradient_check(ckpt, batch, 1e-5, 10).max_relative_error, 1e-4);
  Parameters full, window;
  const double a = loss_and_gradient(ckpt, batch, 35, &full);
  const double b = loss_and_gradient(ckpt, batch, 10, &window);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(full == window);
}

TEST(Gradient, TruncationKeepsLossButCutsGradient) {
  const Checkpoint ckpt = small_model(10, 4, 5, 3);
  const auto batch = random_batch(2, 9, 10, 8);
  Parameters full, cut;
  EXPECT_NEAR(loss_and_gradient(ckpt, batch, 35, &full),
              loss_and_gradient(ckpt, batch, 3, &cut), 1e-12);
  EXPECT_FALSE(full == cut);
}

TEST(Gradient, UnusedEmbeddingRowIsExactlyZero) {
  const Checkpoint ckpt = small_model(20, 8, 8, 2);
  // Tokens drawn from 1..9 only, so rows 10..19 of the input embedding are unused.
  const auto batch = random_batch(2, 5, 20, 1, 10);
  Parameters grad;
  loss_and_gradient(ckpt, batch, 35, &grad);
  for (std::size_t r = 10; r < 20; ++r)
    for (double g : grad.input_embedding.row(r)) EXPECT_EQ(g, 0.0);
}

TEST(Gradient, MeanOverBatchIsMeanOfParts) {
  const Checkpoint ckpt = small_model(15, 6, 6, 4);
  const auto batch = random_batch(2, 7, 15, 21);  // equal lengths
  Parameters both, first, second;
  loss_and_gradient(ckpt, batch, 35, &both);
  loss_and_gradient(ckpt, std::span(batch).first(1), 35, &first);
  loss_and_gradient(ckpt, std::span(batch).last(1), 35, &second);
  const auto b = blocks(both), f = blocks(first), s = blocks(second);
  for (std::size_t k = 0; k < b.size(); ++k)
    for (std::size_t j = 0; j < b[k].values.size(); ++j)
      EXPECT_NEAR(b[k].values[j], 0.5 * (f[k].values[j] + s[k].values[j]), 1e-10);

  // Duplicating a sequence leaves the mean-loss gradient unchanged.
  std::vector<Sequence> doubled{batch[0], batch[0]};
  Parameters dup;
  loss_and_gradient(ckpt, doubled, 35, &dup);
  const auto d = blocks(dup);
  for (std::size_t k = 0; k < d.size(); ++k)
    for (std::size_t j = 0; j < d[k].values.size(); ++j)
      EXPECT_NEAR(d[k].values[j], f[k].values[j], 1e-10);
}

TEST(Train, MemorisesOneSentence) {
  Checkpoint ckpt = small_model(12, 10, 16, 7);
  const std::vector<Sequence> corpus{{0, 3, 7, 1, 9, 4, 11, 0}};
  TrainHyper hyper;
  hyper.lr = 0.1;
  hyper.epochs = 500;
  hyper.max_steps = 500;
  hyper.batch_size = 1;
  TrainReport report;
  ckpt = train(ckpt, corpus, hyper, &report);
  EXPECT_EQ(report.steps, 500u);
  const double loss = loss_and_gradient(ckpt, corpus, 35, nullptr);
  EXPECT_LT(loss, 0.05);
  // Greedy reconstruction: argmax at each position is the next token.
  Runner runner(ckpt, {});
  for (std::size_t t = 0; t + 1 < corpus[0].size(); ++t) {
    runner.advance(corpus[0][t]);
    const Vector p = numerics::softmax(runner.logits());
    const auto argmax = std::max_element(p.begin(), p.end()) - p.begin();
    EXPECT_EQ(static_cast<TokenId>(argmax), corpus[0][t + 1]) << "position " << t;
  }
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  const Checkpoint ckpt = small_model(12, 4, 5, 3);
  const auto corpus = random_batch(10, 5, 12, 2);
  TrainHyper hyper;
  hyper.lr = 0.0;
  hyper.epochs = 2;
  const Checkpoint out = train(ckpt, corpus, hyper);
  EXPECT_TRUE(out.params == ckpt.params);
}

TEST(Train, ClippingBoundsEveryStep) {
  const Checkpoint ckpt = small_model(12, 4, 5, 3);
  const auto corpus = random_batch(40, 6, 12, 9);
  TrainHyper hyper;
  hyper.lr = 0.5;
  hyper.clip = 0.05;
  hyper.epochs = 2;
  hyper.batch_size = 4;
  std::size_t clipped_steps = 0;
  train(ckpt, corpus, hyper, nullptr, [&](const StepInfo& s) {
    EXPECT_LE(s.clipped_norm, hyper.clip + 1e-9);
    if (s.grad_norm > hyper.clip) ++clipped_steps;
  });
  EXPECT_GT(clipped_steps, 0u);
}

TEST(Train, DeterministicUnderSeed) {
  const Checkpoint ckpt = small_model(12, 4, 5, 3);
  const auto corpus = random_batch(30, 6, 12, 9);
  TrainHyper hyper;
  hyper.epochs = 2;
  hyper.batch_size = 4;
  hyper.seed = 5;
  EXPECT_TRUE(train(ckpt, corpus, hyper).params == train(ckpt, corpus, hyper).params);
}

TEST(Train, Errors) {
  const Checkpoint ckpt = small_model(12, 4, 5, 3);
  EXPECT_THROW(train(ckpt, std::vector<Sequence>{}, TrainHyper{}), ArgumentError);
  Checkpoint broken = ckpt;
  broken.params.output_bias[2] = NAN;
  try {
    train(broken, random_batch(4, 4, 12, 1), TrainHyper{});
    FAIL() << "expected divergence";
  } catch (const DivergedTrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
  }
}

}  // namespace
}  // namespace aglb::lm
