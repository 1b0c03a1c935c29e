#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aglb/lstm.hpp"

namespace aglb::lm {

using Sequence = std::vector<TokenId>;

// Splits a boundary-delimited stream into per-sentence sequences of the form
// [boundary, w1, ..., wn, boundary]. Empty sentences are dropped.
std::vector<Sequence> split_sentences(std::span<const TokenId> stream, TokenId boundary);

struct TrainHyper {
  double lr = 1.0;
  double lr_decay = 1.0;     // multiplied into lr after every epoch
  double clip = 5.0;         // global-norm threshold; <= 0 disables
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::size_t bptt = 35;     // truncation length in timesteps
  std::size_t max_steps = 0; // 0 = no cap
  std::uint64_t seed = 0;    // shuffling
};

struct StepInfo {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double clipped_norm = 0.0;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-token cross-entropy
  std::size_t steps = 0;
  double max_clipped_norm = 0.0;
};

// Mean per-token cross-entropy over every prediction in `batch`. Each
// sequence starts from the zero state; state is carried across truncation
// windows of `bptt` steps but gradients are not. When `grad` is non-null it
// is overwritten with the gradient of the mean loss.
double loss_and_gradient(const Checkpoint& ckpt, std::span<const Sequence> batch,
                         std::size_t bptt, Parameters* grad);

double global_norm(const Parameters& p);

// Plain SGD with global-norm clipping. Throws ArgumentError on an empty
// corpus and DivergedTrainingError naming the step on a non-finite loss.
Checkpoint train(Checkpoint ckpt, std::span<const Sequence> corpus, const TrainHyper& hyper,
                 TrainReport* report = nullptr,
                 const std::function<void(const StepInfo&)>& observer = {});

struct BlockCheck {
  std::string block;
  double max_relative_error = 0.0;  // ||a - n|| / max(||a||, ||n||, floor) over the block
  double max_elementwise_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t worst_index = 0;  // index of the worst elementwise error
};

struct GradientCheckReport {
  std::vector<BlockCheck> blocks;
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
};

// Compares every analytic gradient entry with the central difference
// (L(p + eps) - L(p - eps)) / (2 eps). Block relative error is
// ||a - n|| / max(||a||, ||n||, floor); the elementwise figure is reported too.
GradientCheckReport gradient_check(const Checkpoint& ckpt, std::span<const Sequence> batch,
                                   double epsilon, std::size_t bptt = 35,
                                   double floor = 1e-8);

}  // namespace aglb::lm
