#include <istream>
#include <ostream>
#include <sstream>

#include "aglb/errors.hpp"
#include "aglb/stimuli.hpp"

namespace aglb::stimuli {

namespace {

struct Builder {
  CorpusSentence s;

  explicit Builder(std::string kind) { s.kind = std::move(kind); }
  std::size_t add(const std::string& token) {
    s.tokens.push_back(token);
    return s.tokens.size() - 1;
  }
  // det + noun; returns the noun position.
  std::size_t np(const Noun& n, Number num, bool contracted = false) {
    const std::string art = article(n.form(num), n.gender, num);
    const std::size_t d = add(contracted ? contract_a(art) : art);
    const std::size_t p = add(n.form(num));
    link(p, d);
    return p;
  }
  void link(std::size_t controller, std::size_t target) {
    s.dependencies.push_back({controller, target});
  }
};

std::vector<const Verb*> all_verbs(const Lexicon& lex) {
  std::vector<const Verb*> out;
  for (const auto& v : lex.verbs) out.push_back(&v);
  for (const auto& v : lex.matrix_verbs) out.push_back(&v);
  return out;
}

std::vector<const Noun*> objects(const Lexicon& lex) {
  std::vector<const Noun*> out;
  for (const auto& n : lex.abstract_nouns) out.push_back(&n);
  for (const auto& n : lex.inanimate_nouns) out.push_back(&n);
  return out;
}

const Noun& other_noun(const Lexicon& lex, const Noun& n, std::size_t k) {
  const Noun* pick = &lex.nouns[k % lex.nouns.size()];
  if (pick->lemma == n.lemma) pick = &lex.nouns[(k + 1) % lex.nouns.size()];
  return *pick;
}

Number number_of(std::size_t k) { return k % 2 == 0 ? Number::Singular : Number::Plural; }

// Shapes shared by the coverage block and random fillers.
CorpusSentence noun_pp(const Noun& subj, Number num, const std::string& prep, const Noun& attr,
                       Number attr_num, const Verb& v) {
  Builder b("noun-pp");
  const std::size_t s = b.np(subj, num);
  b.add(prep);
  b.np(attr, attr_num, true);
  b.link(s, b.add(v.form(num)));
  return b.s;
}

CorpusSentence svo(const Noun& subj, Number num, const Verb& v, const Noun* obj, Number obj_num) {
  Builder b(obj ? "svo" : "sv");
  const std::size_t s = b.np(subj, num);
  b.link(s, b.add(v.form(num)));
  if (obj) b.np(*obj, obj_num);
  return b.s;
}

CorpusSentence pronoun(Number num, const Verb& v, const Noun& obj, Number obj_num) {
  Builder b("pronoun");
  const std::size_t p = b.add(num == Number::Singular ? "io" : "noi");
  b.link(p, b.add(v.first_person(num)));
  b.np(obj, obj_num);
  return b.s;
}

CorpusSentence copula(const Lexicon& lex, const Noun& subj, Number num, const Adjective& a) {
  Builder b("copula");
  const std::size_t s = b.np(subj, num);
  b.link(s, b.add(lex.copula.form(num)));
  b.link(s, b.add(a.form(subj.gender, num)));
  return b.s;
}

CorpusSentence pronoun_copula(const Lexicon& lex, Number num, const Adjective& a) {
  Builder b("pronoun");
  const std::size_t p = b.add(num == Number::Singular ? "io" : "noi");
  b.link(p, b.add(lex.copula.first_person(num)));
  b.add(a.form(Gender::Masculine, num));
  return b.s;
}

// subject matrix-verb "di" infinitive [object | adjective]
CorpusSentence infinitive(const Noun& subj, Number num, const Verb& mv,
                          const Verb& v, const Noun* obj, Number obj_num,
                          const Adjective* adj = nullptr) {
  Builder b("infinitive");
  const std::size_t s = b.np(subj, num);
  b.link(s, b.add(mv.form(num)));
  b.add("di");
  b.add(v.lemma);
  if (obj) b.np(*obj, obj_num);
  if (adj) b.link(s, b.add(adj->form(subj.gender, num)));
  return b.s;
}

CorpusSentence from_trial(const Trial& t) {
  return {t.tokens, std::string(task_name(t.task)), dependencies(t)};
}

}  // namespace

std::vector<CorpusSentence> coverage_sentences(const Lexicon& lex) {
  std::vector<CorpusSentence> out;
  const auto& nouns = lex.nouns;
  const auto verbs = all_verbs(lex);
  const auto objs = objects(lex);
  std::size_t k = 0;
  // Every animate noun form, article, preposition and contraction.
  for (std::size_t i = 0; i < nouns.size(); ++i)
    for (std::size_t n = 0; n < 2; ++n, ++k)
      out.push_back(noun_pp(nouns[i], number_of(n), lex.prepositions[k % lex.prepositions.size()],
                            nouns[(i + 1) % nouns.size()], number_of(n),
                            lex.verbs[k % lex.verbs.size()]));
  // Third-person forms of every verb, every object noun form.
  k = 0;
  for (const Verb* v : verbs)
    for (std::size_t n = 0; n < 2; ++n, ++k)
      out.push_back(svo(nouns[k % nouns.size()], number_of(n), *v, objs[k % objs.size()],
                        number_of(k / objs.size())));
  // First-person forms.
  k = 0;
  for (const Verb* v : verbs)
    for (std::size_t n = 0; n < 2; ++n, ++k)
      out.push_back(pronoun(number_of(n), *v, nouns[k % nouns.size()], number_of(k / 3)));
  // Infinitives.
  k = 0;
  for (const Verb* v : verbs) {
    const Verb* mv = &lex.matrix_verbs[k % lex.matrix_verbs.size()];
    if (mv->lemma == v->lemma) mv = &lex.matrix_verbs[(k + 1) % lex.matrix_verbs.size()];
    const Noun& subj = nouns[k % nouns.size()];
    out.push_back(infinitive(subj, number_of(k), *mv, *v, &other_noun(lex, subj, k + 7),
                             number_of(k / 2)));
    ++k;
  }
  // Adjectives in all four forms, both copula forms.
  k = 0;
  for (const auto& a : lex.adjectives)
    for (Gender g : {Gender::Masculine, Gender::Feminine})
      for (std::size_t n = 0; n < 2; ++n, ++k) {
        std::vector<const Noun*> pool;
        for (const auto& x : nouns)
          if (x.gender == g) pool.push_back(&x);
        out.push_back(copula(lex, *pool[k % pool.size()], number_of(n), a));
      }
  out.push_back(pronoun_copula(lex, Number::Singular, lex.adjectives[0]));
  out.push_back(pronoun_copula(lex, Number::Plural, lex.adjectives[1]));
  out.push_back(infinitive(nouns[0], Number::Singular, lex.matrix_verbs[0], lex.copula,
                           nullptr, Number::Singular, &lex.adjectives[2]));
  // Complementizer.
  numerics::Rng rng(0);
  out.push_back(from_trial(random_trial(Task::ShortSuccessive,
                                        conditions_for(Task::ShortSuccessive)[0], lex, rng,
                                        false)));
  return out;
}

std::size_t coverage_floor(const Lexicon& lex) { return coverage_sentences(lex).size(); }

std::vector<CorpusSentence> synth_corpus(const Lexicon& lex, std::span<const Task> tasks,
                                         std::size_t num_sentences, std::uint64_t seed) {
  if (num_sentences == 0) throw ArgumentError("synth_corpus: num_sentences must be >= 1");
  std::vector<CorpusSentence> out = coverage_sentences(lex);
  if (out.size() > num_sentences) out.resize(num_sentences);

  std::vector<Condition> cells;
  for (Task t : tasks)
    for (auto& c : conditions_for(t)) cells.push_back(c);
  numerics::Rng rng(seed);
  std::size_t next_cell = 0;
  while (out.size() < num_sentences) {
    if (!cells.empty() && rng.uniform() < 0.6) {
      const Condition& c = cells[next_cell++ % cells.size()];
      const bool obj = template_for(c.task).transitive_final && rng.below(2) == 1;
      out.push_back(from_trial(random_trial(c.task, c, lex, rng, obj)));
      continue;
    }
    const Noun& subj = lex.nouns[rng.below(lex.nouns.size())];
    const Number num = number_of(rng.below(2));
    const Verb& v = lex.verbs[rng.below(lex.verbs.size())];
    const Noun& obj = other_noun(lex, subj, rng.below(lex.nouns.size()));
    const Number obj_num = number_of(rng.below(2));
    switch (rng.below(6)) {
      case 0: out.push_back(svo(subj, num, v, nullptr, num)); break;
      case 1: out.push_back(svo(subj, num, v, &obj, obj_num)); break;
      case 2:
        out.push_back(copula(lex, subj, num, lex.adjectives[rng.below(lex.adjectives.size())]));
        break;
      case 3: out.push_back(pronoun(num, v, obj, obj_num)); break;
      case 4: {
        const Verb& mv = lex.matrix_verbs[rng.below(lex.matrix_verbs.size())];
        out.push_back(infinitive(subj, num, mv, v, &obj, obj_num));
        break;
      }
      default: {
        const std::string& prep = lex.prepositions[rng.below(lex.prepositions.size())];
        out.push_back(noun_pp(subj, num, prep, obj, obj_num, v));
        break;
      }
    }
  }
  rng.shuffle(out);
  return out;
}

lm::Vocabulary corpus_vocabulary(const Lexicon& lex) {
  std::vector<std::string> tokens{std::string(lm::kBoundaryToken)};
  for (auto& f : lex.forms()) tokens.push_back(std::move(f));
  return lm::Vocabulary(std::move(tokens));
}

std::vector<lm::TokenId> to_stream(std::span<const CorpusSentence> corpus,
                                   const lm::Vocabulary& vocab) {
  const lm::TokenId eos = vocab.at(lm::kBoundaryToken);
  std::vector<lm::TokenId> out{eos};
  for (const auto& s : corpus) {
    for (const auto& w : s.tokens) out.push_back(vocab.at(w));
    out.push_back(eos);
  }
  return out;
}

void write_corpus(std::ostream& out, std::span<const CorpusSentence> corpus) {
  for (const auto& s : corpus) {
    for (std::size_t k = 0; k < s.tokens.size(); ++k) out << (k ? " " : "") << s.tokens[k];
    out << '\n';
  }
}

std::vector<std::vector<std::string>> read_corpus(std::istream& in) {
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with('#')) continue;
    std::istringstream ss(line);
    std::vector<std::string> words;
    for (std::string w; ss >> w;) words.push_back(w);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

}  // namespace aglb::stimuli
