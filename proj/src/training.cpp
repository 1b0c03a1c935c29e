#include "aglb/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aglb/errors.hpp"

namespace aglb::lm {

using numerics::gemv_acc;
using numerics::gemv_t_acc;
using numerics::outer_acc;
using numerics::sigmoid;

std::vector<Sequence> split_sentences(std::span<const TokenId> stream, TokenId boundary) {
  std::vector<Sequence> out;
  Sequence current;
  for (TokenId t : stream) {
    if (t == boundary) {
      if (!current.empty()) {
        Sequence s;
        s.reserve(current.size() + 2);
        s.push_back(boundary);
        s.insert(s.end(), current.begin(), current.end());
        s.push_back(boundary);
        out.push_back(std::move(s));
        current.clear();
      }
    } else {
      current.push_back(t);
    }
  }
  if (!current.empty()) {
    Sequence s{boundary};
    s.insert(s.end(), current.begin(), current.end());
    s.push_back(boundary);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// Forward activations for one truncation window.
struct WindowCache {
  std::size_t steps = 0, layers = 0, hidden = 0, vocab = 0;
  std::vector<double> i, f, g, o, c, tc, h;  // [t][l][u]
  std::vector<double> h0, c0;                // [l][u], state entering the window
  std::vector<double> probs;                 // [t][v]

  void resize(std::size_t t, std::size_t l, std::size_t hid, std::size_t v) {
    steps = t, layers = l, hidden = hid, vocab = v;
    const std::size_t n = t * l * hid;
    for (auto* buf : {&i, &f, &g, &o, &c, &tc, &h}) buf->assign(n, 0.0);
    h0.assign(l * hid, 0.0);
    c0.assign(l * hid, 0.0);
    probs.assign(t * v, 0.0);
  }
  std::size_t at(std::size_t t, std::size_t l) const { return (t * layers + l) * hidden; }
  std::span<double> span(std::vector<double>& b, std::size_t t, std::size_t l) {
    return {b.data() + at(t, l), hidden};
  }
  std::span<const double> span(const std::vector<double>& b, std::size_t t,
                               std::size_t l) const {
    return {b.data() + at(t, l), hidden};
  }
};

class SequenceWorker {
 public:
  explicit SequenceWorker(const Checkpoint& ckpt) : ckpt_(ckpt) {
    const auto& cfg = ckpt.config;
    preact_.resize(4 * cfg.hidden_dim);
    da_.resize(4 * cfg.hidden_dim);
    dh_.resize(cfg.hidden_dim);
    dc_.resize(cfg.hidden_dim);
    dx_.resize(std::max(cfg.hidden_dim, cfg.embed_dim));
    dlogits_.resize(cfg.vocab_size);
  }

  // Returns the summed cross-entropy; accumulates scale * gradient.
  double run(const Sequence& seq, std::size_t bptt, Parameters* grad, double scale) {
    const auto& cfg = ckpt_.config;
    const std::size_t L = cfg.num_layers, H = cfg.hidden_dim;
    std::vector<double> carry_h(L * H, 0.0), carry_c(L * H, 0.0);
    double total = 0.0;
    const std::size_t transitions = seq.size() - 1;
    for (std::size_t start = 0; start < transitions; start += bptt) {
      const std::size_t len = std::min(bptt, transitions - start);
      total += window(seq, start, len, carry_h, carry_c, grad, scale);
    }
    return total;
  }

 private:
  double window(const Sequence& seq, std::size_t start, std::size_t len,
                std::vector<double>& carry_h, std::vector<double>& carry_c,
                Parameters* grad, double scale) {
    const auto& cfg = ckpt_.config;
    const auto& P = ckpt_.params;
    const std::size_t L = cfg.num_layers, H = cfg.hidden_dim, V = cfg.vocab_size;
    cache_.resize(len, L, H, V);
    cache_.h0 = carry_h;
    cache_.c0 = carry_c;

    double loss = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const TokenId tok = seq[start + t];
      if (tok >= V) throw ArgumentError("token index out of range in training data");
      std::span<const double> x = P.input_embedding.row(tok);
      for (std::size_t l = 0; l < L; ++l) {
        const auto& layer = P.layers[l];
        std::span<const double> hp = t == 0 ? std::span<const double>(cache_.h0.data() + l * H, H)
                                            : cache_.span(cache_.h, t - 1, l);
        std::span<const double> cp = t == 0 ? std::span<const double>(cache_.c0.data() + l * H, H)
                                            : cache_.span(cache_.c, t - 1, l);
        std::copy(layer.bias.begin(), layer.bias.end(), preact_.begin());
        gemv_acc(layer.w_input, x, preact_);
        gemv_acc(layer.w_recurrent, hp, preact_);
        auto ig = cache_.span(cache_.i, t, l), fg = cache_.span(cache_.f, t, l),
             gg = cache_.span(cache_.g, t, l), og = cache_.span(cache_.o, t, l),
             cc = cache_.span(cache_.c, t, l), tc = cache_.span(cache_.tc, t, l),
             hh = cache_.span(cache_.h, t, l);
        for (std::size_t u = 0; u < H; ++u) {
          ig[u] = sigmoid(preact_[u]);
          fg[u] = sigmoid(preact_[H + u]);
          gg[u] = std::tanh(preact_[2 * H + u]);
          og[u] = sigmoid(preact_[3 * H + u]);
          cc[u] = fg[u] * cp[u] + ig[u] * gg[u];
          tc[u] = std::tanh(cc[u]);
          hh[u] = og[u] * tc[u];
        }
        x = hh;
      }
      std::span<double> probs(cache_.probs.data() + t * V, V);
      std::copy(P.output_bias.begin(), P.output_bias.end(), probs.begin());
      gemv_acc(P.output_embedding, x, probs);
      const double m = *std::max_element(probs.begin(), probs.end());
      double sum = 0.0;
      for (double& p : probs) {
        p = std::exp(p - m);
        sum += p;
      }
      const TokenId target = seq[start + t + 1];
      if (target >= V) throw ArgumentError("token index out of range in training data");
      loss += -(std::log(probs[target] / sum));
      for (double& p : probs) p /= sum;
    }
    for (std::size_t l = 0; l < L; ++l) {
      std::copy_n(cache_.h.begin() + cache_.at(len - 1, l), H, carry_h.begin() + l * H);
      std::copy_n(cache_.c.begin() + cache_.at(len - 1, l), H, carry_c.begin() + l * H);
    }
    if (grad) backward(seq, start, len, *grad, scale);
    return loss;
  }

  void backward(const Sequence& seq, std::size_t start, std::size_t len, Parameters& G,
                double scale) {
    const auto& cfg = ckpt_.config;
    const auto& P = ckpt_.params;
    const std::size_t L = cfg.num_layers, H = cfg.hidden_dim, V = cfg.vocab_size;
    std::vector<double> dh_next(L * H, 0.0), dc_next(L * H, 0.0);
    std::vector<double> dh_above(H, 0.0);

    for (std::size_t t = len; t-- > 0;) {
      std::span<const double> probs(cache_.probs.data() + t * V, V);
      for (std::size_t v = 0; v < V; ++v) dlogits_[v] = probs[v] * scale;
      dlogits_[seq[start + t + 1]] -= scale;
      auto htop = cache_.span(cache_.h, t, L - 1);
      outer_acc(G.output_embedding, dlogits_, htop);
      for (std::size_t v = 0; v < V; ++v) G.output_bias[v] += dlogits_[v];
      std::fill(dh_above.begin(), dh_above.end(), 0.0);
      gemv_t_acc(P.output_embedding, dlogits_, dh_above);

      for (std::size_t l = L; l-- > 0;) {
        const auto& layer = P.layers[l];
        auto& glayer = G.layers[l];
        auto ig = cache_.span(cache_.i, t, l), fg = cache_.span(cache_.f, t, l),
             gg = cache_.span(cache_.g, t, l), og = cache_.span(cache_.o, t, l),
             tc = cache_.span(cache_.tc, t, l);
        std::span<const double> cp = t == 0 ? std::span<const double>(cache_.c0.data() + l * H, H)
                                            : cache_.span(cache_.c, t - 1, l);
        std::span<const double> hp = t == 0 ? std::span<const double>(cache_.h0.data() + l * H, H)
                                            : cache_.span(cache_.h, t - 1, l);
        double* dhn = dh_next.data() + l * H;
        double* dcn = dc_next.data() + l * H;
        for (std::size_t u = 0; u < H; ++u) {
          const double dh = dh_above[u] + dhn[u];
          const double dc = dcn[u] + dh * og[u] * (1.0 - tc[u] * tc[u]);
          const double d_o = dh * tc[u];
          const double d_i = dc * gg[u];
          const double d_g = dc * ig[u];
          const double d_f = dc * cp[u];
          dcn[u] = dc * fg[u];
          da_[u] = d_i * ig[u] * (1.0 - ig[u]);
          da_[H + u] = d_f * fg[u] * (1.0 - fg[u]);
          da_[2 * H + u] = d_g * (1.0 - gg[u] * gg[u]);
          da_[3 * H + u] = d_o * og[u] * (1.0 - og[u]);
        }
        std::span<const double> x =
            l == 0 ? P.input_embedding.row(seq[start + t]) : cache_.span(cache_.h, t, l - 1);
        outer_acc(glayer.w_input, da_, x);
        outer_acc(glayer.w_recurrent, da_, hp);
        for (std::size_t k = 0; k < 4 * H; ++k) glayer.bias[k] += da_[k];

        std::fill(dhn, dhn + H, 0.0);
        gemv_t_acc(layer.w_recurrent, da_, std::span<double>(dhn, H));
        if (l == 0) {
          gemv_t_acc(layer.w_input, da_, G.input_embedding.row(seq[start + t]));
        } else {
          std::fill(dh_above.begin(), dh_above.end(), 0.0);
          gemv_t_acc(layer.w_input, da_, dh_above);
        }
      }
    }
  }

  const Checkpoint& ckpt_;
  WindowCache cache_;
  std::vector<double> preact_, da_, dh_, dc_, dx_, dlogits_;
};

void zero(Parameters& p) {
  for (auto& b : blocks(p)) std::fill(b.values.begin(), b.values.end(), 0.0);
}

}  // namespace

double loss_and_gradient(const Checkpoint& ckpt, std::span<const Sequence> batch,
                         std::size_t bptt, Parameters* grad) {
  if (bptt == 0) throw ArgumentError("bptt must be >= 1");
  std::size_t predictions = 0;
  for (const auto& s : batch)
    if (s.size() >= 2) predictions += s.size() - 1;
  if (predictions == 0) throw ArgumentError("batch contains no predictions");
  if (grad) {
    if (grad->layers.size() != ckpt.params.layers.size())
      *grad = Parameters::zeros_like(ckpt.params);
    else
      zero(*grad);
  }
  const double scale = 1.0 / static_cast<double>(predictions);
  SequenceWorker worker(ckpt);
  double total = 0.0;
  for (const auto& s : batch)
    if (s.size() >= 2) total += worker.run(s, bptt, grad, scale);
  return total * scale;
}

double global_norm(const Parameters& p) {
  double s = 0.0;
  for (const auto& b : blocks(p))
    for (double x : b.values) s += x * x;
  return std::sqrt(s);
}

Checkpoint train(Checkpoint ckpt, std::span<const Sequence> corpus, const TrainHyper& hyper,
                 TrainReport* report, const std::function<void(const StepInfo&)>& observer) {
  std::vector<std::size_t> usable;
  for (std::size_t k = 0; k < corpus.size(); ++k)
    if (corpus[k].size() >= 2) usable.push_back(k);
  if (usable.empty()) throw ArgumentError("train: empty corpus");
  if (hyper.batch_size == 0) throw ArgumentError("train: batch_size must be >= 1");
  if (hyper.bptt == 0) throw ArgumentError("train: bptt must be >= 1");
  ckpt.validate_shapes();

  TrainReport local;
  Parameters grad = Parameters::zeros_like(ckpt.params);
  std::vector<Sequence> batch;
  double lr = hyper.lr;
  std::size_t step = 0;
  bool done = false;

  for (std::size_t epoch = 0; epoch < hyper.epochs && !done; ++epoch) {
    std::vector<std::size_t> order = usable;
    numerics::Rng rng(numerics::derive_seed(hyper.seed, epoch));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t b = 0; b < order.size() && !done; b += hyper.batch_size) {
      batch.clear();
      for (std::size_t k = b; k < std::min(order.size(), b + hyper.batch_size); ++k)
        batch.push_back(corpus[order[k]]);
      const double loss = loss_and_gradient(ckpt, batch, hyper.bptt, &grad);
      // Update on the per-sentence summed loss averaged over the batch.
      std::size_t predictions = 0;
      for (const auto& s : batch) predictions += s.size() - 1;
      const double per_sentence =
          static_cast<double>(predictions) / static_cast<double>(batch.size());
      for (auto& gblock : blocks(grad))
        for (double& x : gblock.values) x *= per_sentence;
      const double norm = global_norm(grad);
      if (!std::isfinite(loss) || !std::isfinite(norm))
        throw DivergedTrainingError("non-finite loss at step " + std::to_string(step) +
                                    " (epoch " + std::to_string(epoch) + ")");
      double factor = 1.0;
      if (hyper.clip > 0.0 && norm > hyper.clip) factor = hyper.clip / norm;
      const double clipped = norm * factor;
      auto gb = blocks(grad);
      auto pb = blocks(ckpt.params);
      const double step_size = lr * factor;
      for (std::size_t k = 0; k < pb.size(); ++k)
        for (std::size_t j = 0; j < pb[k].values.size(); ++j)
          pb[k].values[j] -= step_size * gb[k].values[j];

      local.max_clipped_norm = std::max(local.max_clipped_norm, clipped);
      epoch_loss += loss;
      ++epoch_batches;
      if (observer) observer({step, epoch, loss, norm, clipped});
      ++step;
      if (hyper.max_steps && step >= hyper.max_steps) done = true;
    }
    local.epoch_loss.push_back(epoch_loss / static_cast<double>(epoch_batches));
    lr *= hyper.lr_decay;
  }
  local.steps = step;

  nlohmann::json entry = {{"lr", hyper.lr},
                          {"lr_decay", hyper.lr_decay},
                          {"clip", hyper.clip},
                          {"epochs", hyper.epochs},
                          {"batch_size", hyper.batch_size},
                          {"bptt", hyper.bptt},
                          {"max_steps", hyper.max_steps},
                          {"seed", hyper.seed},
                          {"steps", local.steps},
                          {"sequences", usable.size()},
                          {"epoch_loss", local.epoch_loss}};
  ckpt.metadata["training"].push_back(entry);
  if (report) *report = std::move(local);
  return ckpt;
}

GradientCheckReport gradient_check(const Checkpoint& ckpt, std::span<const Sequence> batch,
                                   double epsilon, std::size_t bptt, double floor) {
  Parameters analytic;
  loss_and_gradient(ckpt, batch, bptt, &analytic);
  Checkpoint probe = ckpt;
  GradientCheckReport report;
  auto pb = blocks(probe.params);
  auto ab = blocks(analytic);
  for (std::size_t k = 0; k < pb.size(); ++k) {
    BlockCheck check{pb[k].name};
    double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;
    for (std::size_t j = 0; j < pb[k].values.size(); ++j) {
      double& param = pb[k].values[j];
      const double saved = param;
      param = saved + epsilon;
      const double plus = loss_and_gradient(probe, batch, bptt, nullptr);
      param = saved - epsilon;
      const double minus = loss_and_gradient(probe, batch, bptt, nullptr);
      param = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = ab[k].values[j];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > check.max_elementwise_relative_error) {
        check.max_elementwise_relative_error = rel;
        check.worst_index = j;
      }
      check.max_absolute_error = std::max(check.max_absolute_error, abs_err);
      diff2 += (a - numeric) * (a - numeric);
      analytic2 += a * a;
      numeric2 += numeric * numeric;
      ++report.parameters_checked;
    }
    check.max_relative_error =
        std::sqrt(diff2) / std::max({std::sqrt(analytic2), std::sqrt(numeric2), floor});
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.blocks.push_back(check);
  }
  return report;
}

}  // namespace aglb::lm
