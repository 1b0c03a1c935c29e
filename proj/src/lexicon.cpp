#include <algorithm>
#include <cctype>
#include <set>

#include "aglb/errors.hpp"
#include "aglb/stimuli.hpp"

namespace aglb::stimuli {

namespace {

Noun masc(std::string sg, std::string pl) {
  return {sg, Gender::Masculine, sg, std::move(pl)};
}
Noun fem(std::string sg, std::string pl) {
  return {sg, Gender::Feminine, sg, std::move(pl)};
}

Adjective regular_adjective(const std::string& stem, const std::string& plural_stem) {
  return {stem + "o", stem + "o", stem + "a", plural_stem + "i", plural_stem + "e"};
}

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

// Onsets taking lo/gli in the masculine.
bool impure_onset(std::string_view w) {
  if (w.empty()) return false;
  if (w[0] == 'z' || w[0] == 'x' || w[0] == 'y') return true;
  if (w.size() < 2) return false;
  if (w[0] == 's' && !is_vowel(w[1])) return true;
  return w.starts_with("gn") || w.starts_with("ps") || w.starts_with("pn");
}

void check_form(const std::string& f, const std::string& owner) {
  if (f.empty()) throw ArgumentError("empty surface form in " + owner);
  for (unsigned char c : f)
    if (std::isupper(c)) throw ArgumentError("surface form not lowercase: " + f);
}

}  // namespace

Number opposite(Number n) { return n == Number::Singular ? Number::Plural : Number::Singular; }
Gender opposite(Gender g) {
  return g == Gender::Masculine ? Gender::Feminine : Gender::Masculine;
}

const std::string& Adjective::form(Gender g, Number n) const {
  if (g == Gender::Masculine) return n == Number::Singular ? ms : mp;
  return n == Number::Singular ? fs : fp;
}

std::string article(std::string_view noun_form, Gender g, Number n) {
  const bool vowel = !noun_form.empty() && is_vowel(noun_form[0]);
  if (g == Gender::Feminine) {
    if (n == Number::Plural) return "le";
    return vowel ? "l'" : "la";
  }
  if (n == Number::Plural) return (vowel || impure_onset(noun_form)) ? "gli" : "i";
  if (vowel) return "l'";
  return impure_onset(noun_form) ? "lo" : "il";
}

std::string contract_a(std::string_view art) {
  if (art == "il") return "al";
  if (art == "lo") return "allo";
  if (art == "l'") return "all'";
  if (art == "la") return "alla";
  if (art == "i") return "ai";
  if (art == "gli") return "agli";
  if (art == "le") return "alle";
  throw ArgumentError("not a definite article: " + std::string(art));
}

std::vector<std::string> function_words() { return {"che", "di", "io", "noi"}; }

Lexicon build_lexicon() {
  Lexicon lex;
  lex.nouns = {masc("fratello", "fratelli"),  masc("studente", "studenti"),
               masc("padre", "padri"),        masc("figlio", "figli"),
               masc("ragazzo", "ragazzi"),    masc("bambino", "bambini"),
               masc("amico", "amici"),        masc("uomo", "uomini"),
               masc("attore", "attori"),      masc("contadino", "contadini"),
               fem("sorella", "sorelle"),     fem("studentessa", "studentesse"),
               fem("madre", "madri"),         fem("figlia", "figlie"),
               fem("ragazza", "ragazze"),     fem("bambina", "bambine"),
               fem("amica", "amiche"),        fem("donna", "donne"),
               fem("attrice", "attrici"),     fem("contadina", "contadine")};
  lex.verbs = {
      {"accogliere", "accoglie", "accolgono", "accolgo", "accogliamo"},
      {"amare", "ama", "amano", "amo", "amiamo"},
      {"attrarre", "attrae", "attraggono", "attraggo", "attraiamo"},
      {"bloccare", "blocca", "bloccano", "blocco", "blocchiamo"},
      {"conoscere", "conosce", "conoscono", "conosco", "conosciamo"},
      {"criticare", "critica", "criticano", "critico", "critichiamo"},
      {"difendere", "difende", "difendono", "difendo", "difendiamo"},
      {"evitare", "evita", "evitano", "evito", "evitiamo"},
      {"fermare", "ferma", "fermano", "fermo", "fermiamo"},
      {"guardare", "guarda", "guardano", "guardo", "guardiamo"},
      {"ignorare", "ignora", "ignorano", "ignoro", "ignoriamo"},
      {"incontrare", "incontra", "incontrano", "incontro", "incontriamo"},
      {"indicare", "indica", "indicano", "indico", "indichiamo"},
      {"interrompere", "interrompe", "interrompono", "interrompo", "interrompiamo"},
      {"osservare", "osserva", "osservano", "osservo", "osserviamo"},
      {"salutare", "saluta", "salutano", "saluto", "salutiamo"}};
  lex.matrix_verbs = {{"ricordare", "ricorda", "ricordano", "ricordo", "ricordiamo"},
                      {"dire", "dice", "dicono", "dico", "diciamo"},
                      {"dichiarare", "dichiara", "dichiarano", "dichiaro", "dichiariamo"},
                      {"sognare", "sogna", "sognano", "sogno", "sogniamo"}};
  lex.copula = {"essere", "è", "sono", "sono", "siamo"};
  lex.prepositions = {"vicino", "dietro", "davanti", "accanto"};
  // "ricco" keeps its velar: ricchi, ricche.
  lex.adjectives = {regular_adjective("bell", "bell"),   regular_adjective("famos", "famos"),
                    regular_adjective("brutt", "brutt"), regular_adjective("ricc", "ricch"),
                    regular_adjective("pover", "pover"), regular_adjective("bass", "bass"),
                    regular_adjective("alt", "alt"),     regular_adjective("grass", "grass"),
                    regular_adjective("cattiv", "cattiv"), regular_adjective("buon", "buon"),
                    regular_adjective("lent", "lent"),   regular_adjective("nuov", "nuov")};
  lex.abstract_nouns = {fem("filosofia", "filosofie"), fem("teoria", "teorie"),
                        fem("giustizia", "giustizie"), masc("pensiero", "pensieri"),
                        masc("destino", "destini"),    masc("silenzio", "silenzi")};
  lex.inanimate_nouns = {fem("matita", "matite"), fem("sedia", "sedie"),
                         fem("penna", "penne"),   masc("tavolo", "tavoli"),
                         masc("libro", "libri"),  masc("sasso", "sassi")};
  return lex;
}

Lexicon build_training_lexicon() {
  Lexicon lex;
  lex.nouns = {masc("zio", "zii"),         masc("nonno", "nonni"),
               masc("cugino", "cugini"),   masc("maestro", "maestri"),
               masc("cuoco", "cuochi"),    masc("pittore", "pittori"),
               fem("zia", "zie"),          fem("nonna", "nonne"),
               fem("cugina", "cugine"),    fem("maestra", "maestre"),
               fem("cuoca", "cuoche"),     fem("pittrice", "pittrici")};
  lex.verbs = {{"aiutare", "aiuta", "aiutano", "aiuto", "aiutiamo"},
               {"chiamare", "chiama", "chiamano", "chiamo", "chiamiamo"},
               {"cercare", "cerca", "cercano", "cerco", "cerchiamo"},
               {"sentire", "sente", "sentono", "sento", "sentiamo"},
               {"seguire", "segue", "seguono", "seguo", "seguiamo"},
               {"lodare", "loda", "lodano", "lodo", "lodiamo"},
               {"premiare", "premia", "premiano", "premio", "premiamo"},
               {"visitare", "visita", "visitano", "visito", "visitiamo"}};
  lex.matrix_verbs = {{"pensare", "pensa", "pensano", "penso", "pensiamo"},
                      {"sapere", "sa", "sanno", "so", "sappiamo"},
                      {"credere", "crede", "credono", "credo", "crediamo"}};
  lex.copula = {"essere", "è", "sono", "sono", "siamo"};
  lex.prepositions = {"vicino", "dietro", "davanti", "accanto"};
  lex.adjectives = {regular_adjective("magr", "magr"),    regular_adjective("stanc", "stanch"),
                    regular_adjective("onest", "onest"),  regular_adjective("seri", "ser"),
                    regular_adjective("piccol", "piccol"), regular_adjective("allegr", "allegr")};
  lex.abstract_nouns = {fem("musica", "musiche"), fem("storia", "storie"),
                        masc("coraggio", "coraggi"), masc("tempo", "tempi")};
  lex.inanimate_nouns = {fem("lampada", "lampade"), fem("borsa", "borse"),
                         masc("bicchiere", "bicchieri"), masc("quaderno", "quaderni")};
  return lex;
}

std::vector<std::string> Lexicon::forms() const {
  std::set<std::string> out;
  std::set<std::string> articles;
  for (const auto* group : {&nouns, &abstract_nouns, &inanimate_nouns})
    for (const auto& n : *group)
      for (Number num : {Number::Singular, Number::Plural}) {
        out.insert(n.form(num));
        articles.insert(article(n.form(num), n.gender, num));
      }
  for (const auto& a : articles) {
    out.insert(a);
    out.insert(contract_a(a));
  }
  for (const auto* group : {&verbs, &matrix_verbs})
    for (const auto& v : *group)
      for (const auto* f : {&v.lemma, &v.sg3, &v.pl3, &v.sg1, &v.pl1}) out.insert(*f);
  for (const auto* f : {&copula.lemma, &copula.sg3, &copula.pl3, &copula.sg1, &copula.pl1})
    out.insert(*f);
  for (const auto& p : prepositions) out.insert(p);
  for (const auto& a : adjectives)
    for (const auto* f : {&a.ms, &a.fs, &a.mp, &a.fp}) out.insert(*f);
  for (auto& w : function_words()) out.insert(w);
  return {out.begin(), out.end()};
}

const Noun* Lexicon::find_noun(std::string_view lemma) const {
  for (const auto* group : {&nouns, &abstract_nouns, &inanimate_nouns})
    for (const auto& n : *group)
      if (n.lemma == lemma) return &n;
  return nullptr;
}

const Verb* Lexicon::find_verb(std::string_view lemma) const {
  for (const auto* group : {&verbs, &matrix_verbs})
    for (const auto& v : *group)
      if (v.lemma == lemma) return &v;
  if (copula.lemma == lemma) return &copula;
  return nullptr;
}

const Adjective* Lexicon::find_adjective(std::string_view lemma) const {
  for (const auto& a : adjectives)
    if (a.lemma == lemma) return &a;
  return nullptr;
}

void Lexicon::validate() const {
  std::set<std::string> lemmas;
  auto add = [&](const std::string& lemma) {
    if (!lemmas.insert(lemma).second) throw ArgumentError("duplicate lemma: " + lemma);
  };
  for (const auto* group : {&nouns, &abstract_nouns, &inanimate_nouns})
    for (const auto& n : *group) {
      add(n.lemma);
      check_form(n.singular, n.lemma);
      check_form(n.plural, n.lemma);
    }
  for (const auto* group : {&verbs, &matrix_verbs})
    for (const auto& v : *group) {
      add(v.lemma);
      for (const auto* f : {&v.lemma, &v.sg3, &v.pl3, &v.sg1, &v.pl1}) check_form(*f, v.lemma);
    }
  for (const auto& a : adjectives) {
    add(a.lemma);
    for (const auto* f : {&a.ms, &a.fs, &a.mp, &a.fp}) check_form(*f, a.lemma);
  }
  for (const auto& p : prepositions) check_form(p, "prepositions");
}

}  // namespace aglb::stimuli
