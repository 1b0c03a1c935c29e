#pragma once

// Gate and state traces, efferent connectivity, embedding PCA and the
// short-range number unit detector. Every operation only reads the checkpoint.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aglb/lstm.hpp"
#include "aglb/stimuli.hpp"

namespace aglb::probing {

enum class Signal { I, F, G, O, C, H };

std::string_view signal_name(Signal s);  // "i", "f", "g", "o", "C", "h"
Signal parse_signal(std::string_view name);
double signal_value(const lm::LayerGates& g, Signal s, std::size_t index);

struct TraceSummary {
  std::string task;
  std::string condition;
  lm::UnitId unit;
  Signal signal = Signal::H;
  std::vector<std::string> tokens;  // labels of the first trial
  std::vector<double> mean, sd;     // per token, state after consuming it; sd is the sample sd
  std::size_t n = 0;
};

struct TraceOptions {
  std::vector<Signal> signals{Signal::I, Signal::F, Signal::C, Signal::H};
  lm::AblationMask mask;
  std::size_t threads = 1;
};

// One summary per (task, condition, unit, signal), in trial-group order, then
// unit order, then signal order. Every trial starts from the zero state and a
// boundary token. Throws AlignmentError when trials of one condition differ
// in length.
std::vector<TraceSummary> trace_conditions(const lm::Checkpoint& ckpt,
                                           std::span<const stimuli::Trial> trials,
                                           std::span<const lm::UnitId> units,
                                           const TraceOptions& opt = {});

struct FixedPointReport {
  bool converged = false;
  std::size_t steps = 0;   // steps run until the delta fell below tolerance
  double last_delta = 0.0; // max-abs change of (h, c) at the last step
};

// Feeds one token repeatedly and reports whether the state settles.
FixedPointReport fixed_point_check(const lm::Checkpoint& ckpt, lm::TokenId token,
                                   std::size_t max_steps = 50, double tolerance = 1e-6,
                                   const lm::AblationMask& mask = {});

// Mann-Whitney AUC: P(x > y) + 0.5 P(x == y). NaN when either side is empty.
double auc(std::span<const double> x, std::span<const double> y);

struct NumberSeparation {
  double auc = 0.5;              // plural vs singular over every timestep
  double direction = 0.0;        // +1 when plural is higher, -1 when lower, 0 at chance
  std::vector<double> step_auc;  // oriented by `direction`, one per timestep in range
  double min_auc = 0.5;          // minimum of step_auc
};

// Separation of one signal by the number of noun `noun_index` across trials,
// at every timestep from that noun through the token at `role`'s position.
NumberSeparation number_separation(const lm::Checkpoint& ckpt,
                                   std::span<const stimuli::Trial> trials, lm::UnitId unit,
                                   Signal signal, std::size_t noun_index = 0,
                                   const std::string& role = "main",
                                   const lm::AblationMask& mask = {});

inline constexpr double kSeparationCap = 1e12;

struct ConnectivityRecord {
  lm::UnitId unit;
  std::vector<std::string> words_a, words_b;
  std::vector<double> weights_a, weights_b;
  double mean_h = 0.0;
  std::vector<double> effective_a, effective_b;  // weight * mean_h
  double separation = 0.0;            // of the efferent weights
  double effective_separation = 0.0;  // of the effective weights
  bool perfect = false;               // pooled sd 0 with distinct means
};

// |mean_a - mean_b| / pooled sd. Pooled sd 0 gives 0 for equal means and
// kSeparationCap (with `perfect`) otherwise. Needs two values per side for a
// pooled variance; otherwise the spread is taken as 0.
std::pair<double, bool> separation(std::span<const double> a, std::span<const double> b);

// Output-embedding weights from a top-layer unit to two word sets. Throws
// ArgumentError for a unit outside the top layer or an empty set and
// VocabularyError for an unknown word.
ConnectivityRecord efferent_weights(const lm::Checkpoint& ckpt, lm::UnitId unit,
                                    std::span<const std::string> words_a,
                                    std::span<const std::string> words_b);

// Singular vs plural verb forms for number tasks, masculine vs feminine
// adjectives for NounPP-gender. Only forms present in `vocab` are kept.
std::pair<std::vector<std::string>, std::vector<std::string>> target_word_sets(
    const stimuli::Lexicon& lex, stimuli::Task task, const lm::Vocabulary& vocab);

// Mean h of each unit in the state from which the `role` target is
// predicted, over `trials`; records keep the order of `units`.
std::vector<ConnectivityRecord> effective_efferent(const lm::Checkpoint& ckpt,
                                                   std::span<const lm::UnitId> units,
                                                   std::span<const stimuli::Trial> trials,
                                                   const std::string& role,
                                                   std::span<const std::string> words_a,
                                                   std::span<const std::string> words_b,
                                                   const lm::AblationMask& mask = {});

enum class EmbeddingSide { Input, Output };

struct WordFeatures {
  char number = '?';  // S, P or ?
  char gender = '?';  // M, F or ?
};
WordFeatures word_features(const stimuli::Lexicon& lex, std::string_view word);

struct EmbeddingProjection {
  std::vector<std::string> words;
  std::vector<WordFeatures> features;
  std::size_t pc_x = 1, pc_y = 2;  // 1-based
  std::vector<double> x, y;
  double variance_x = 0.0, variance_y = 0.0;
};

// PCA over the selected embedding rows. Throws ArgumentError for fewer than 3
// words, a zero PC index or one beyond the embedding width.
EmbeddingProjection embedding_pca(const lm::Checkpoint& ckpt, const stimuli::Lexicon& lex,
                                  std::span<const std::string> words, EmbeddingSide side,
                                  std::size_t pc_x = 1, std::size_t pc_y = 2);

struct ShortRangeOptions {
  double theta_auc = 0.9;
  double theta_separation = 1.0;
  lm::AblationMask mask;
  std::size_t threads = 1;
};

struct ShortRangeDiagnostic {
  lm::UnitId unit;
  double number_auc = 0.5;   // oriented, h after every noun labelled by that noun
  double direction = 0.0;
  double switch_auc = 0.5;   // same orientation, after a noun of the opposite number
  std::optional<double> separation;  // efferent, top layer only
  bool flagged = false;
};

struct ShortRangeReport {
  double theta_auc = 0.9;
  double theta_separation = 1.0;
  std::vector<ShortRangeDiagnostic> units;  // every unit, by (layer, index)
  std::vector<lm::UnitId> flagged;
};

// Probe trials must contain at least one number switch between successive
// nouns. The efferent criterion uses singular vs plural verb forms.
ShortRangeReport find_short_range_units(const lm::Checkpoint& ckpt, const stimuli::Lexicon& lex,
                                        std::span<const stimuli::Trial> probe,
                                        const ShortRangeOptions& opt = {});

// NounPP-number trials over all four conditions.
std::vector<stimuli::Trial> short_range_probe(const stimuli::Lexicon& lex,
                                              std::size_t per_condition, std::uint64_t seed);

// task,condition,unit,signal,t,token,mean,sd
void write_traces_csv(std::ostream& out, std::span<const TraceSummary> traces,
                      std::size_t hidden_dim);
// unit,layer,index,set,word,weight,mean_h,effective
void write_connectivity_csv(std::ostream& out, std::span<const ConnectivityRecord> records,
                            std::size_t hidden_dim);
// word,number,gender,x,y
void write_projection_csv(std::ostream& out, const EmbeddingProjection& p);
nlohmann::json to_json(const ShortRangeReport& r);

}  // namespace aglb::probing
