#include "aglb/stimuli.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "aglb/errors.hpp"

namespace aglb::stimuli {

namespace {

constexpr std::array<Task, 6> kTasks = {Task::NounPPNumber,    Task::NounPPGender,
                                        Task::ShortSuccessive, Task::LongSuccessive,
                                        Task::ShortNested,     Task::LongNested};

constexpr std::array<FillerType, 7> kFillers = {
    FillerType::WrongPerson,        FillerType::NounForVerb,        FillerType::Infinitive,
    FillerType::SemanticAbstract,   FillerType::SemanticInanimate,  FillerType::FelicitousAbstract,
    FillerType::FelicitousInanimate};

std::size_t task_index(Task t) {
  return static_cast<std::size_t>(std::find(kTasks.begin(), kTasks.end(), t) - kTasks.begin());
}

Template make_template(Task task) {
  using K = SlotKind;
  Template t{task, {}, 0, true};
  switch (task) {
    case Task::NounPPNumber:
      t.slots = {{K::Det, 0}, {K::Noun, 0}, {K::Prep}, {K::Contr, 1}, {K::Noun, 1},
                 {K::Verb, 0, "main"}};
      t.noun_count = 2;
      break;
    case Task::NounPPGender:
      t.slots = {{K::Det, 0},   {K::Noun, 0},    {K::Prep}, {K::Contr, 1},
                 {K::Noun, 1},  {K::Copula, 0},  {K::Adjective, 0, "main"}};
      t.noun_count = 2;
      t.transitive_final = false;
      break;
    case Task::ShortSuccessive:
      t.slots = {{K::Det, 0}, {K::Noun, 0}, {K::MatrixVerb, 0, "main"}, {K::Che},
                 {K::Det, 1}, {K::Noun, 1}, {K::Verb, 1, "embedded"}};
      t.noun_count = 2;
      break;
    case Task::LongSuccessive:
      t.slots = {{K::Det, 0},  {K::Noun, 0},   {K::MatrixVerb, 0, "main"}, {K::Che},
                 {K::Det, 1},  {K::Noun, 1},   {K::Prep},                  {K::Contr, 2},
                 {K::Noun, 2}, {K::Verb, 1, "embedded"}};
      t.noun_count = 3;
      break;
    case Task::ShortNested:
      t.slots = {{K::Det, 0},  {K::Noun, 0},  {K::Che}, {K::Det, 1},
                 {K::Noun, 1}, {K::Verb, 1, "embedded"}, {K::Verb, 0, "main"}};
      t.noun_count = 2;
      break;
    case Task::LongNested:
      t.slots = {{K::Det, 0},   {K::Noun, 0},  {K::Che},
                 {K::Det, 1},   {K::Noun, 1},  {K::Prep},
                 {K::Contr, 2}, {K::Noun, 2},  {K::Verb, 1, "embedded"},
                 {K::Verb, 0, "main"}};
      t.noun_count = 3;
      break;
  }
  return t;
}

bool is_verb_slot(SlotKind k) { return k == SlotKind::Verb || k == SlotKind::MatrixVerb; }

bool gender_task(Task t) { return t == Task::NounPPGender; }

Number slot_number(const Condition& c, std::size_t noun) {
  if (gender_task(c.task)) return Number::Singular;
  return c.features.at(noun) == 'S' ? Number::Singular : Number::Plural;
}

std::optional<Gender> slot_gender(const Condition& c, std::size_t noun) {
  if (!gender_task(c.task)) return std::nullopt;
  return c.features.at(noun) == 'M' ? Gender::Masculine : Gender::Feminine;
}

std::uint64_t falling(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::uint64_t j = 0; j < k; ++j) r *= (n - j);
  return r;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (k) out += sep;
    out += parts[k];
  }
  return out;
}

// Position of the k-th verb slot's lexeme in LexemeChoice::verbs.
std::optional<std::size_t> verb_index_at(const Template& tpl, std::size_t position) {
  std::size_t k = 0;
  for (std::size_t p = 0; p < tpl.slots.size(); ++p) {
    if (!is_verb_slot(tpl.slots[p].kind)) continue;
    if (p == position) return k;
    ++k;
  }
  return std::nullopt;
}

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::string> used_nouns(const LexemeChoice& c) {
  std::vector<std::string> out = c.nouns;
  if (c.object) out.push_back(*c.object);
  out.insert(out.end(), c.replacements.begin(), c.replacements.end());
  return out;
}

}  // namespace

std::string_view task_name(Task t) {
  switch (t) {
    case Task::NounPPNumber: return "NounPP-number";
    case Task::NounPPGender: return "NounPP-gender";
    case Task::ShortSuccessive: return "Short-Successive";
    case Task::LongSuccessive: return "Long-Successive";
    case Task::ShortNested: return "Short-Nested";
    case Task::LongNested: return "Long-Nested";
  }
  return "";
}

Task parse_task(std::string_view name) {
  for (Task t : kTasks)
    if (task_name(t) == name) return t;
  throw ArgumentError("unknown task: " + std::string(name));
}

std::span<const Task> all_tasks() { return kTasks; }

std::span<const Task> nesting_tasks() { return std::span<const Task>(kTasks).subspan(2); }

const Template& template_for(Task t) {
  static const std::array<Template, 6> templates = {
      make_template(kTasks[0]), make_template(kTasks[1]), make_template(kTasks[2]),
      make_template(kTasks[3]), make_template(kTasks[4]), make_template(kTasks[5])};
  return templates[task_index(t)];
}

std::optional<std::size_t> Template::position(std::string_view role) const {
  for (std::size_t p = 0; p < slots.size(); ++p)
    if (slots[p].role == role) return p;
  return std::nullopt;
}

std::vector<std::string> Template::roles() const {
  std::vector<std::string> out;
  for (const auto& s : slots)
    if (!s.role.empty()) out.push_back(s.role);
  return out;
}

std::optional<bool> Condition::attractor_congruent() const {
  switch (task) {
    case Task::NounPPNumber:
    case Task::NounPPGender: return features[0] == features[1];
    case Task::LongSuccessive:
    case Task::LongNested: return features[1] == features[2];
    default: return std::nullopt;
  }
}

std::optional<char> Condition::attractor_feature() const {
  switch (task) {
    case Task::NounPPNumber:
    case Task::NounPPGender: return features[1];
    case Task::LongSuccessive:
    case Task::LongNested: return features[2];
    default: return std::nullopt;
  }
}

std::vector<Condition> conditions_for(Task t) {
  const Template& tpl = template_for(t);
  const char a = gender_task(t) ? 'M' : 'S';
  const char b = gender_task(t) ? 'F' : 'P';
  std::vector<Condition> out;
  const std::size_t n = tpl.noun_count;
  for (std::size_t mask = 0; mask < (1u << n); ++mask) {
    std::string f(n, a);
    for (std::size_t k = 0; k < n; ++k)
      if (mask & (1u << (n - 1 - k))) f[k] = b;
    out.push_back({t, f});
  }
  return out;
}

Condition parse_condition(Task t, std::string_view features) {
  for (auto& c : conditions_for(t))
    if (c.features == features) return c;
  throw ArgumentError("condition " + std::string(features) + " is not valid for " +
                      std::string(task_name(t)));
}

std::vector<std::string> LexemeChoice::all() const {
  std::vector<std::string> out = nouns;
  out.insert(out.end(), verbs.begin(), verbs.end());
  if (!preposition.empty()) out.push_back(preposition);
  if (!adjective.empty()) out.push_back(adjective);
  if (object) out.push_back(*object);
  out.insert(out.end(), replacements.begin(), replacements.end());
  std::sort(out.begin(), out.end());
  return out;
}

const Target& Trial::target(std::string_view role) const {
  for (const auto& t : targets)
    if (t.role == role) return t;
  throw ArgumentError("trial " + id + " has no " + std::string(role) + " target");
}

bool Trial::has_target(std::string_view role) const {
  return std::any_of(targets.begin(), targets.end(),
                     [&](const Target& t) { return t.role == role; });
}

std::string Trial::text() const { return join(tokens, " "); }

Trial realize(Task task, const Condition& cond, const Lexicon& lex, const LexemeChoice& choice,
              std::string id, std::uint64_t seed) {
  const Template& tpl = template_for(task);
  if (cond.task != task) throw ArgumentError("condition belongs to another task");
  if (choice.nouns.size() != tpl.noun_count)
    throw ArgumentError("expected " + std::to_string(tpl.noun_count) + " nouns");
  std::size_t verb_slots = 0;
  bool has_prep = false, has_adj = false;
  for (const auto& s : tpl.slots) {
    verb_slots += is_verb_slot(s.kind);
    has_prep |= s.kind == SlotKind::Prep;
    has_adj |= s.kind == SlotKind::Adjective;
  }
  if (choice.verbs.size() != verb_slots)
    throw ArgumentError("expected " + std::to_string(verb_slots) + " verbs");
  if (has_prep != !choice.preposition.empty())
    throw ArgumentError("preposition does not fit the template");
  if (has_adj != !choice.adjective.empty())
    throw ArgumentError("adjective does not fit the template");
  if (choice.object && !tpl.transitive_final)
    throw ArgumentError(std::string(task_name(task)) + " takes no object");

  std::vector<const Noun*> nouns;
  for (std::size_t k = 0; k < choice.nouns.size(); ++k) {
    const Noun* n = nullptr;
    for (const auto& cand : lex.nouns)
      if (cand.lemma == choice.nouns[k]) n = &cand;
    if (!n) throw ArgumentError("unknown subject noun: " + choice.nouns[k]);
    if (auto g = slot_gender(cond, k); g && *g != n->gender)
      throw ArgumentError("noun " + n->lemma + " has the wrong gender for " + cond.features);
    nouns.push_back(n);
  }
  const auto used = used_nouns(choice);
  if (std::set<std::string>(used.begin(), used.end()).size() != used.size())
    throw ArgumentError("noun lexemes repeat within a sentence");
  if (has_prep && !contains(lex.prepositions, choice.preposition))
    throw ArgumentError("unknown preposition: " + choice.preposition);

  Trial trial;
  trial.id = std::move(id);
  trial.task = task;
  trial.condition = cond;
  trial.seed = seed;
  trial.lexemes = choice;
  std::size_t verb_k = 0;
  for (std::size_t p = 0; p < tpl.slots.size(); ++p) {
    const Slot& s = tpl.slots[p];
    const std::size_t ref = static_cast<std::size_t>(std::max(s.ref, 0));
    const Number num = slot_number(cond, ref);
    const Noun* noun = s.ref >= 0 ? nouns[ref] : nullptr;
    std::string token, wrong;
    switch (s.kind) {
      case SlotKind::Det: token = article(noun->form(num), noun->gender, num); break;
      case SlotKind::Noun: token = noun->form(num); break;
      case SlotKind::Prep: token = choice.preposition; break;
      case SlotKind::Contr:
        token = contract_a(article(noun->form(num), noun->gender, num));
        break;
      case SlotKind::Che: token = "che"; break;
      case SlotKind::Verb:
      case SlotKind::MatrixVerb: {
        const auto& pool = s.kind == SlotKind::Verb ? lex.verbs : lex.matrix_verbs;
        const std::string& lemma = choice.verbs[verb_k++];
        const auto it = std::find_if(pool.begin(), pool.end(),
                                     [&](const Verb& v) { return v.lemma == lemma; });
        if (it == pool.end()) throw ArgumentError("verb not usable in this slot: " + lemma);
        token = it->form(num);
        wrong = it->form(opposite(num));
        break;
      }
      case SlotKind::Copula: token = lex.copula.form(num); break;
      case SlotKind::Adjective: {
        const Adjective* a = lex.find_adjective(choice.adjective);
        if (!a) throw ArgumentError("unknown adjective: " + choice.adjective);
        token = a->form(noun->gender, num);
        wrong = a->form(opposite(noun->gender), num);
        break;
      }
    }
    trial.tokens.push_back(token);
    if (!s.role.empty()) trial.targets.push_back({s.role, p, token, wrong});
  }
  if (choice.object) {
    const Noun* obj = lex.find_noun(*choice.object);
    if (!obj) throw ArgumentError("unknown object noun: " + *choice.object);
    const Number num = choice.object_number;
    trial.tokens.push_back(article(obj->form(num), obj->gender, num));
    trial.tokens.push_back(obj->form(num));
  }
  if (std::set<std::string>(choice.verbs.begin(), choice.verbs.end()).size() !=
      choice.verbs.size())
    throw ArgumentError("verb lexemes repeat within a sentence");
  return trial;
}

std::vector<Dependency> dependencies(const Trial& t) {
  const Template& tpl = template_for(t.task);
  std::vector<std::size_t> noun_pos(tpl.noun_count, 0);
  for (std::size_t p = 0; p < tpl.slots.size(); ++p)
    if (tpl.slots[p].kind == SlotKind::Noun)
      noun_pos[static_cast<std::size_t>(tpl.slots[p].ref)] = p;
  std::vector<Dependency> out;
  for (std::size_t p = 0; p < tpl.slots.size(); ++p) {
    const Slot& s = tpl.slots[p];
    if (s.ref < 0 || s.kind == SlotKind::Noun) continue;
    out.push_back({noun_pos[static_cast<std::size_t>(s.ref)], p});
  }
  if (t.tokens.size() == tpl.slots.size() + 2)
    out.push_back({tpl.slots.size() + 1, tpl.slots.size()});
  return out;
}

std::uint64_t assignment_space(Task task, const Condition& cond, const Lexicon& lex,
                               bool with_object) {
  const Template& tpl = template_for(task);
  std::uint64_t space = 1;
  if (gender_task(task)) {
    std::size_t masc = 0, fem = 0;
    for (const auto& n : lex.nouns) (n.gender == Gender::Masculine ? masc : fem)++;
    const auto m = static_cast<std::uint64_t>(std::count(cond.features.begin(),
                                                         cond.features.end(), 'M'));
    space = falling(masc, m) * falling(fem, cond.features.size() - m);
  } else {
    space = falling(lex.nouns.size(), tpl.noun_count);
  }
  std::size_t regular = 0, matrix = 0;
  for (const auto& s : tpl.slots) {
    regular += s.kind == SlotKind::Verb;
    matrix += s.kind == SlotKind::MatrixVerb;
    if (s.kind == SlotKind::Prep) space *= lex.prepositions.size();
    if (s.kind == SlotKind::Adjective) space *= lex.adjectives.size();
  }
  space *= falling(lex.verbs.size(), regular) * falling(lex.matrix_verbs.size(), matrix);
  if (with_object && tpl.transitive_final)
    space *= 2 * (lex.nouns.size() >= tpl.noun_count ? lex.nouns.size() - tpl.noun_count : 0);
  return space;
}

namespace {

LexemeChoice sample_choice(const Template& tpl, const Condition& cond, const Lexicon& lex,
                           numerics::Rng& rng, bool with_object) {
  LexemeChoice c;
  auto pick_noun = [&](std::optional<Gender> g) {
    std::vector<const Noun*> pool;
    for (const auto& n : lex.nouns)
      if ((!g || n.gender == *g) && !contains(c.nouns, n.lemma) &&
          !(c.object && *c.object == n.lemma))
        pool.push_back(&n);
    if (pool.empty()) throw GenerationError("noun pool exhausted");
    return pool[rng.below(pool.size())]->lemma;
  };
  for (std::size_t k = 0; k < tpl.noun_count; ++k) c.nouns.push_back(pick_noun(slot_gender(cond, k)));
  for (const auto& s : tpl.slots) {
    if (is_verb_slot(s.kind)) {
      const auto& pool = s.kind == SlotKind::Verb ? lex.verbs : lex.matrix_verbs;
      std::vector<const Verb*> free;
      for (const auto& v : pool)
        if (!contains(c.verbs, v.lemma)) free.push_back(&v);
      if (free.empty()) throw GenerationError("verb pool exhausted");
      c.verbs.push_back(free[rng.below(free.size())]->lemma);
    } else if (s.kind == SlotKind::Prep) {
      c.preposition = lex.prepositions[rng.below(lex.prepositions.size())];
    } else if (s.kind == SlotKind::Adjective) {
      c.adjective = lex.adjectives[rng.below(lex.adjectives.size())].lemma;
    }
  }
  if (with_object && tpl.transitive_final) {
    c.object = pick_noun(std::nullopt);
    c.object_number = rng.below(2) ? Number::Plural : Number::Singular;
  }
  return c;
}

std::string choice_key(const LexemeChoice& c) {
  std::string key = join(c.nouns, ",") + "|" + join(c.verbs, ",") + "|" + c.preposition + "|" +
                    c.adjective;
  if (c.object) key += "|" + *c.object + (c.object_number == Number::Plural ? "P" : "S");
  return key;
}

}  // namespace

Trial random_trial(Task task, const Condition& cond, const Lexicon& lex, numerics::Rng& rng,
                   bool with_object) {
  return realize(task, cond, lex, sample_choice(template_for(task), cond, lex, rng, with_object));
}

std::vector<Trial> expand(Task task, const Condition& cond, const Lexicon& lex, std::size_t n,
                          std::uint64_t seed, const ExpandOptions& opt) {
  if (n == 0) throw ArgumentError("expand: n must be >= 1");
  const auto conds = conditions_for(task);
  const auto it = std::find(conds.begin(), conds.end(), cond);
  if (it == conds.end()) throw ArgumentError("condition does not belong to the task");
  const std::uint64_t space = assignment_space(task, cond, lex, opt.with_object);
  if (opt.exhaustive && n > space)
    throw ArgumentError("expand: " + std::to_string(n) + " trials requested but only " +
                        std::to_string(space) + " distinct assignments exist");
  const bool unique = space >= n;
  const Template& tpl = template_for(task);
  numerics::Rng rng(numerics::derive_seed(numerics::derive_seed(seed, task_index(task)),
                                          static_cast<std::uint64_t>(it - conds.begin())));
  std::unordered_set<std::string> seen;
  std::vector<Trial> out;
  out.reserve(n);
  while (out.size() < n) {
    LexemeChoice c = sample_choice(tpl, cond, lex, rng, opt.with_object);
    if (unique && !seen.insert(choice_key(c)).second) continue;
    const std::string id = std::string(task_name(task)) + ":" + cond.features + ":" +
                           std::to_string(seed) + ":" + std::to_string(out.size());
    out.push_back(realize(task, cond, lex, c, id, seed));
  }
  return out;
}

Trial make_violation(const Trial& base, std::string_view role) {
  const Template& tpl = template_for(base.task);
  const auto pos = tpl.position(role);
  if (!pos || !base.has_target(role))
    throw ArgumentError("no " + std::string(role) + " target in " +
                        std::string(task_name(base.task)));
  if (tpl.slots[*pos].kind == SlotKind::Adjective)
    throw UnsupportedTargetError("number violations apply to verbs, not to the adjective of " +
                                 std::string(task_name(base.task)));
  const Target& target = base.target(role);
  const std::string tag = "violation-" + std::string(role);
  if (base.grammaticality == tag) {
    Trial restored = base;
    restored.tokens[target.position] = target.correct;
    restored.grammaticality = "acceptable";
    restored.id = base.base_id;
    restored.base_id.clear();
    restored.edits.clear();
    return restored;
  }
  if (!base.acceptable())
    throw ArgumentError("make_violation expects an acceptable trial, got " + base.grammaticality);
  Trial v = base;
  v.tokens[target.position] = target.wrong;
  v.grammaticality = tag;
  v.base_id = base.id;
  v.id = base.id + ":" + tag;
  v.edits = {{target.position, target.correct, target.wrong}};
  return v;
}

std::string_view filler_name(FillerType f) {
  switch (f) {
    case FillerType::WrongPerson: return "wrong-person";
    case FillerType::NounForVerb: return "noun-for-verb";
    case FillerType::Infinitive: return "infinitive";
    case FillerType::SemanticAbstract: return "semantic-abstract";
    case FillerType::SemanticInanimate: return "semantic-inanimate";
    case FillerType::FelicitousAbstract: return "felicitous-abstract";
    case FillerType::FelicitousInanimate: return "felicitous-inanimate";
  }
  return "";
}

FillerType parse_filler(std::string_view name) {
  for (FillerType f : kFillers)
    if (filler_name(f) == name) return f;
  throw ArgumentError("unknown filler subtype: " + std::string(name));
}

std::span<const FillerType> all_fillers() { return kFillers; }

Trial make_filler(const Trial& base, FillerType f, const Lexicon& lex, const FillerOptions& opt) {
  if (!base.acceptable())
    throw ArgumentError("make_filler expects an acceptable trial, got " + base.grammaticality);
  const Template& tpl = template_for(base.task);
  numerics::Rng rng(numerics::derive_seed(opt.seed, fnv1a(base.id)));
  Trial out = base;
  out.base_id = base.id;
  out.grammaticality = "filler:" + std::string(filler_name(f));
  out.id = base.id + ":filler-" + std::string(filler_name(f));
  out.edits.clear();
  auto edit = [&](std::size_t pos, const std::string& to) {
    if (out.tokens[pos] != to) out.edits.push_back({pos, out.tokens[pos], to});
    out.tokens[pos] = to;
  };
  auto choose = [&](const std::vector<const Noun*>& pool) -> const Noun* {
    if (!opt.replacement.empty()) {
      for (const Noun* n : pool)
        if (n->lemma == opt.replacement) return n;
      throw GenerationError("replacement " + opt.replacement + " is not valid for " +
                            std::string(filler_name(f)));
    }
    if (pool.empty())
      throw GenerationError("no replacement available for " + std::string(filler_name(f)));
    return pool[rng.below(pool.size())];
  };
  const auto used = used_nouns(base.lexemes);

  switch (f) {
    case FillerType::WrongPerson:
    case FillerType::NounForVerb:
    case FillerType::Infinitive: {
      std::string role = opt.role;
      if (role.empty()) role = base.has_target("embedded") ? "embedded" : "main";
      const auto pos = tpl.position(role);
      const auto vk = pos ? verb_index_at(tpl, *pos) : std::nullopt;
      if (!vk) throw GenerationError("no verb to edit in " + std::string(task_name(base.task)));
      const Verb* v = lex.find_verb(base.lexemes.verbs[*vk]);
      if (!v) throw GenerationError("verb not in lexicon: " + base.lexemes.verbs[*vk]);
      const Number num = base.tokens[*pos] == v->sg3 ? Number::Singular : Number::Plural;
      if (f == FillerType::WrongPerson) {
        edit(*pos, v->first_person(num));
      } else if (f == FillerType::Infinitive) {
        edit(*pos, v->lemma);
      } else {
        std::set<std::string> verb_forms;
        for (const auto* group : {&lex.verbs, &lex.matrix_verbs})
          for (const auto& w : *group)
            for (const auto* s : {&w.lemma, &w.sg3, &w.pl3, &w.sg1, &w.pl1}) verb_forms.insert(*s);
        for (const auto* s : {&lex.copula.lemma, &lex.copula.sg3, &lex.copula.pl3,
                              &lex.copula.sg1, &lex.copula.pl1})
          verb_forms.insert(*s);
        std::vector<const Noun*> pool;
        for (const auto& n : lex.nouns)
          if (!contains(used, n.lemma) && !verb_forms.count(n.singular) &&
              !verb_forms.count(n.plural))
            pool.push_back(&n);
        const Noun* n = choose(pool);
        edit(*pos, n->form(num));
        out.lexemes.replacements.push_back(n->lemma);
      }
      break;
    }
    case FillerType::SemanticAbstract:
    case FillerType::SemanticInanimate: {
      const Noun* subject = lex.find_noun(base.lexemes.nouns.at(0));
      if (!subject) throw GenerationError("subject not in lexicon");
      // Det and noun of the main subject open every template.
      const Number num = base.tokens[1] == subject->singular ? Number::Singular : Number::Plural;
      const auto& group =
          f == FillerType::SemanticAbstract ? lex.abstract_nouns : lex.inanimate_nouns;
      std::vector<const Noun*> pool;
      for (const auto& n : group)
        if (n.gender == subject->gender && !contains(used, n.lemma)) pool.push_back(&n);
      const Noun* n = choose(pool);
      edit(0, article(n->form(num), n->gender, num));
      edit(1, n->form(num));
      out.lexemes.replacements.push_back(n->lemma);
      break;
    }
    case FillerType::FelicitousAbstract:
    case FillerType::FelicitousInanimate: {
      if (!base.lexemes.object || base.tokens.size() != tpl.slots.size() + 2)
        throw GenerationError("felicitous fillers need a trial with an object");
      const Number num = base.lexemes.object_number;
      const auto& group =
          f == FillerType::FelicitousAbstract ? lex.abstract_nouns : lex.inanimate_nouns;
      std::vector<const Noun*> pool;
      for (const auto& n : group)
        if (!contains(used, n.lemma)) pool.push_back(&n);
      const Noun* n = choose(pool);
      const std::size_t p = tpl.slots.size();
      edit(p, article(n->form(num), n->gender, num));
      edit(p + 1, n->form(num));
      out.lexemes.replacements.push_back(n->lemma);
      break;
    }
  }
  return out;
}

std::vector<std::string> reconstruct_base(const Trial& t) {
  std::vector<std::string> tokens = t.tokens;
  for (auto it = t.edits.rbegin(); it != t.edits.rend(); ++it) {
    if (it->position >= tokens.size() || tokens[it->position] != it->to)
      throw IntegrityError("edit log of " + t.id + " does not match its tokens");
    tokens[it->position] = it->from;
  }
  return tokens;
}

nlohmann::json to_json(const Trial& t) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& x : t.targets)
    targets.push_back(
        {{"role", x.role}, {"position", x.position}, {"correct", x.correct}, {"wrong", x.wrong}});
  nlohmann::json edits = nlohmann::json::array();
  for (const auto& e : t.edits)
    edits.push_back({{"position", e.position}, {"from", e.from}, {"to", e.to}});
  nlohmann::json lex = {{"nouns", t.lexemes.nouns},
                        {"verbs", t.lexemes.verbs},
                        {"preposition", t.lexemes.preposition},
                        {"adjective", t.lexemes.adjective},
                        {"replacements", t.lexemes.replacements}};
  if (t.lexemes.object) {
    lex["object"] = *t.lexemes.object;
    lex["object_number"] = t.lexemes.object_number == Number::Plural ? "P" : "S";
  }
  nlohmann::json j = {{"id", t.id},
                      {"task", task_name(t.task)},
                      {"condition", t.condition.features},
                      {"tokens", t.tokens},
                      {"targets", targets},
                      {"grammaticality", t.grammaticality},
                      {"base_id", t.base_id.empty() ? nlohmann::json() : nlohmann::json(t.base_id)},
                      {"seed", t.seed},
                      {"lexemes", lex},
                      {"edits", edits}};
  return j;
}

Trial trial_from_json(const nlohmann::json& j) {
  try {
    Trial t;
    t.id = j.at("id").get<std::string>();
    t.task = parse_task(j.at("task").get<std::string>());
    t.condition = parse_condition(t.task, j.at("condition").get<std::string>());
    t.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& x : j.at("targets"))
      t.targets.push_back({x.at("role").get<std::string>(), x.at("position").get<std::size_t>(),
                           x.at("correct").get<std::string>(), x.at("wrong").get<std::string>()});
    t.grammaticality = j.at("grammaticality").get<std::string>();
    if (j.contains("base_id") && !j["base_id"].is_null())
      t.base_id = j["base_id"].get<std::string>();
    t.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("lexemes")) {
      const auto& l = j["lexemes"];
      t.lexemes.nouns = l.value("nouns", std::vector<std::string>{});
      t.lexemes.verbs = l.value("verbs", std::vector<std::string>{});
      t.lexemes.preposition = l.value("preposition", "");
      t.lexemes.adjective = l.value("adjective", "");
      t.lexemes.replacements = l.value("replacements", std::vector<std::string>{});
      if (l.contains("object")) {
        t.lexemes.object = l["object"].get<std::string>();
        t.lexemes.object_number =
            l.value("object_number", "S") == "P" ? Number::Plural : Number::Singular;
      }
    }
    if (j.contains("edits"))
      for (const auto& e : j["edits"])
        t.edits.push_back({e.at("position").get<std::size_t>(), e.at("from").get<std::string>(),
                           e.at("to").get<std::string>()});
    for (const auto& x : t.targets)
      if (x.position >= t.tokens.size())
        throw ArgumentError("target position out of range in trial " + t.id);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed trial record: ") + e.what());
  }
}

void write_jsonl(std::ostream& out, std::span<const Trial> trials) {
  for (const auto& t : trials) out << to_json(t).dump() << '\n';
}

std::vector<Trial> read_jsonl(std::istream& in) {
  std::vector<Trial> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.starts_with('#')) continue;
    try {
      out.push_back(trial_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ArgumentError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace aglb::stimuli
