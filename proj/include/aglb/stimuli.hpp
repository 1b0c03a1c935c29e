#pragma once

// Italian agreement stimuli: lexicon, task templates, trials, violations,
// fillers, behavioral sessions and synthetic training corpora.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aglb/lstm.hpp"
#include "json.hpp"

namespace aglb::stimuli {

enum class Number { Singular, Plural };
enum class Gender { Masculine, Feminine };

Number opposite(Number n);
Gender opposite(Gender g);

struct Noun {
  std::string lemma;
  Gender gender = Gender::Masculine;
  std::string singular, plural;

  const std::string& form(Number n) const { return n == Number::Singular ? singular : plural; }
};

struct Verb {
  std::string lemma;  // infinitive
  std::string sg3, pl3, sg1, pl1;

  const std::string& form(Number n) const { return n == Number::Singular ? sg3 : pl3; }
  const std::string& first_person(Number n) const { return n == Number::Singular ? sg1 : pl1; }
};

struct Adjective {
  std::string lemma;  // masculine singular
  std::string ms, fs, mp, fp;

  const std::string& form(Gender g, Number n) const;
};

struct Lexicon {
  std::vector<Noun> nouns;  // animate, usable as subjects
  std::vector<Noun> abstract_nouns;
  std::vector<Noun> inanimate_nouns;
  std::vector<Verb> verbs;  // transitive, 3rd person targets
  std::vector<Verb> matrix_verbs;
  Verb copula;
  std::vector<std::string> prepositions;  // each followed by contracted "a" + article
  std::vector<Adjective> adjectives;

  // Every surface form the lexicon and the templates can produce, sorted, unique.
  std::vector<std::string> forms() const;
  const Noun* find_noun(std::string_view lemma) const;  // any noun class
  const Verb* find_verb(std::string_view lemma) const;  // verbs, matrix verbs, copula
  const Adjective* find_adjective(std::string_view lemma) const;
  // Throws ArgumentError on an empty or non-lowercase form or a duplicate lemma.
  void validate() const;
};

// The inventory used for the main experiment and for model evaluation.
Lexicon build_lexicon();
// Content words disjoint from build_lexicon(); used for the practice block.
Lexicon build_training_lexicon();

// Definite article for a noun form, chosen by gender, number and onset.
std::string article(std::string_view noun_form, Gender g, Number n);
// "a" fused with an article: il -> al, lo -> allo, l' -> all', ...
std::string contract_a(std::string_view article);
// Pronouns, complementizer and other closed-class tokens.
std::vector<std::string> function_words();

enum class Task { NounPPNumber, NounPPGender, ShortSuccessive, LongSuccessive, ShortNested, LongNested };

std::string_view task_name(Task t);
Task parse_task(std::string_view name);  // ArgumentError on unknown names
std::span<const Task> all_tasks();
std::span<const Task> nesting_tasks();  // the four two-dependency constructions

enum class SlotKind { Det, Noun, Prep, Contr, Che, Verb, MatrixVerb, Copula, Adjective };

struct Slot {
  SlotKind kind;
  int ref = -1;      // noun index; for verbs and adjectives the controlling noun
  std::string role;  // "main" or "embedded" on target slots, empty otherwise
};

struct Template {
  Task task;
  std::vector<Slot> slots;
  std::size_t noun_count = 0;
  bool transitive_final = false;  // can take an object NP after the last slot

  std::optional<std::size_t> position(std::string_view role) const;
  std::vector<std::string> roles() const;
};

const Template& template_for(Task t);

struct Condition {
  Task task = Task::NounPPNumber;
  std::string features;  // one letter per noun slot: S/P, or M/F for NounPP-gender

  bool subjects_congruent() const { return features[0] == features[1]; }
  std::optional<bool> attractor_congruent() const;
  std::optional<char> attractor_feature() const;
  friend bool operator==(const Condition&, const Condition&) = default;
};

std::vector<Condition> conditions_for(Task t);
Condition parse_condition(Task t, std::string_view features);

struct Target {
  std::string role;
  std::size_t position = 0;
  std::string correct, wrong;
  friend bool operator==(const Target&, const Target&) = default;
};

struct Edit {
  std::size_t position = 0;
  std::string from, to;
  friend bool operator==(const Edit&, const Edit&) = default;
};

// Lexemes chosen for one sentence. Noun lemmas are in noun-index order; verb
// lemmas follow slot order.
struct LexemeChoice {
  std::vector<std::string> nouns;
  std::vector<std::string> verbs;
  std::string preposition;
  std::string adjective;
  std::optional<std::string> object;
  Number object_number = Number::Singular;
  std::vector<std::string> replacements;  // nouns introduced by fillers

  std::vector<std::string> all() const;  // sorted multiset of every lexeme
  friend bool operator==(const LexemeChoice&, const LexemeChoice&) = default;
};

struct Trial {
  std::string id;
  Task task = Task::NounPPNumber;
  Condition condition;
  std::vector<std::string> tokens;
  std::vector<Target> targets;
  std::string grammaticality = "acceptable";  // violation-main, violation-embedded, filler:<subtype>
  std::string base_id;
  std::uint64_t seed = 0;
  LexemeChoice lexemes;
  std::vector<Edit> edits;  // applied to the base, in order

  bool acceptable() const { return grammaticality == "acceptable"; }
  const Target& target(std::string_view role) const;  // ArgumentError if absent
  bool has_target(std::string_view role) const;
  std::string text() const;
};

nlohmann::json to_json(const Trial& t);
Trial trial_from_json(const nlohmann::json& j);
void write_jsonl(std::ostream& out, std::span<const Trial> trials);
// Skips blank lines and lines starting with '#'.
std::vector<Trial> read_jsonl(std::istream& in);

// Build one acceptable trial from explicit lexemes. Throws ArgumentError if a
// lemma is unknown or the choice does not fit the template.
Trial realize(Task t, const Condition& c, const Lexicon& lex, const LexemeChoice& choice,
              std::string id = {}, std::uint64_t seed = 0);

// Token positions of determiner->noun and controller->target links.
struct Dependency {
  std::size_t controller = 0;
  std::size_t target = 0;
  friend bool operator==(const Dependency&, const Dependency&) = default;
};
std::vector<Dependency> dependencies(const Trial& t);

struct ExpandOptions {
  bool with_object = false;
  bool exhaustive = false;  // require n distinct assignments or fail
};

// Number of distinct lexeme assignments for a task/condition.
std::uint64_t assignment_space(Task t, const Condition& c, const Lexicon& lex, bool with_object);

// One acceptable trial with lexemes drawn from rng; id left empty.
Trial random_trial(Task t, const Condition& c, const Lexicon& lex, numerics::Rng& rng,
                   bool with_object);

// n acceptable trials, distinct assignments while the space allows it.
std::vector<Trial> expand(Task t, const Condition& c, const Lexicon& lex, std::size_t n,
                          std::uint64_t seed, const ExpandOptions& opt = {});

Trial make_violation(const Trial& base, std::string_view role);

enum class FillerType {
  WrongPerson,
  NounForVerb,
  Infinitive,
  SemanticAbstract,
  SemanticInanimate,
  FelicitousAbstract,
  FelicitousInanimate
};

std::string_view filler_name(FillerType f);
FillerType parse_filler(std::string_view name);
std::span<const FillerType> all_fillers();

struct FillerOptions {
  std::uint64_t seed = 0;
  std::string role;         // verb to edit; default embedded if present, else main
  std::string replacement;  // noun lemma to insert; random if empty
};

Trial make_filler(const Trial& base, FillerType f, const Lexicon& lex,
                  const FillerOptions& opt = {});

// Undo the recorded edits of a violation or filler.
std::vector<std::string> reconstruct_base(const Trial& t);

struct DesignCell {
  std::string block;  // "main" or "training"
  std::string grammaticality;
  Task task = Task::ShortSuccessive;
  std::string condition;
  std::size_t count = 0;
  friend bool operator==(const DesignCell&, const DesignCell&) = default;
};

struct Session {
  std::string id;
  std::vector<std::string> training;
  std::vector<std::string> main;
};

struct SessionPlan {
  std::uint64_t seed = 0;
  std::vector<Session> sessions;
  std::vector<Trial> trials;
  std::vector<DesignCell> design;

  const Trial& trial(std::string_view id) const;  // ArgumentError if absent
};

SessionPlan assemble_sessions(const Lexicon& lex, const Lexicon& training_lex, std::uint64_t seed);
// Counts per design cell recomputed from the trials listed in the sessions.
std::vector<DesignCell> recount(const SessionPlan& plan);
nlohmann::json to_json(const SessionPlan& plan);
SessionPlan plan_from_json(const nlohmann::json& j);

struct CorpusSentence {
  std::vector<std::string> tokens;
  std::string kind;  // task name or filler shape
  std::vector<Dependency> dependencies;
};

// Sentences needed to cover every vocabulary form at least once.
std::vector<CorpusSentence> coverage_sentences(const Lexicon& lex);
// Smallest num_sentences for which every vocabulary form appears.
std::size_t coverage_floor(const Lexicon& lex);

// Coverage block first, then about 60% task sentences stratified over
// tasks and conditions, the rest simple SV/SVO/copula/pronoun sentences.
std::vector<CorpusSentence> synth_corpus(const Lexicon& lex, std::span<const Task> tasks,
                                         std::size_t num_sentences, std::uint64_t seed);

lm::Vocabulary corpus_vocabulary(const Lexicon& lex);
// <eos> s1 <eos> s2 <eos> ...
std::vector<lm::TokenId> to_stream(std::span<const CorpusSentence> corpus,
                                   const lm::Vocabulary& vocab);
void write_corpus(std::ostream& out, std::span<const CorpusSentence> corpus);
// One sentence per line; lines starting with '#' are skipped.
std::vector<std::vector<std::string>> read_corpus(std::istream& in);

}  // namespace aglb::stimuli
