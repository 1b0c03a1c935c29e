#pragma once

// Agreement checker built from hand-typed reference forms, independent of
// the generator tables.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aglb/stimuli.hpp"

namespace aglb::test_support {

using namespace aglb::stimuli;

inline const char* kNounTable[] = {
    "fratello fratelli m", "studente studenti m", "padre padri m", "figlio figli m",
    "ragazzo ragazzi m", "bambino bambini m", "amico amici m", "uomo uomini m",
    "attore attori m", "contadino contadini m", "sorella sorelle f", "studentessa studentesse f",
    "madre madri f", "figlia figlie f", "ragazza ragazze f", "bambina bambine f",
    "amica amiche f", "donna donne f", "attrice attrici f", "contadina contadine f",
    "filosofia filosofie f", "teoria teorie f", "giustizia giustizie f", "pensiero pensieri m",
    "destino destini m", "silenzio silenzi m", "matita matite f", "sedia sedie f",
    "penna penne f", "tavolo tavoli m", "libro libri m", "sasso sassi m"};

// 3sg 3pl 1sg 1pl infinitive
inline const char* kVerbTable[] = {
    "accoglie accolgono accolgo accogliamo accogliere", "ama amano amo amiamo amare",
    "attrae attraggono attraggo attraiamo attrarre", "blocca bloccano blocco blocchiamo bloccare",
    "conosce conoscono conosco conosciamo conoscere",
    "critica criticano critico critichiamo criticare",
    "difende difendono difendo difendiamo difendere", "evita evitano evito evitiamo evitare",
    "ferma fermano fermo fermiamo fermare", "guarda guardano guardo guardiamo guardare",
    "ignora ignorano ignoro ignoriamo ignorare",
    "incontra incontrano incontro incontriamo incontrare",
    "indica indicano indico indichiamo indicare",
    "interrompe interrompono interrompo interrompiamo interrompere",
    "osserva osservano osservo osserviamo osservare", "saluta salutano saluto salutiamo salutare",
    "ricorda ricordano ricordo ricordiamo ricordare", "dice dicono dico diciamo dire",
    "dichiara dichiarano dichiaro dichiariamo dichiarare", "sogna sognano sogno sogniamo sognare"};

inline const char* kAdjectiveTable[] = {
    "bello bella belli belle",     "famoso famosa famosi famose", "brutto brutta brutti brutte",
    "ricco ricca ricchi ricche",   "povero povera poveri povere", "basso bassa bassi basse",
    "alto alta alti alte",         "grasso grassa grassi grasse", "cattivo cattiva cattivi cattive",
    "buono buona buoni buone",     "lento lenta lenti lente",     "nuovo nuova nuovi nuove"};

struct Features {
  char number = '?';  // S, P
  char gender = '?';  // M, F, ? when not marked
  char person = '3';
};

inline std::vector<std::string> words(const char* line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

class Oracle {
 public:
  Oracle() {
    for (const char* line : kNounTable) {
      const auto w = words(line);
      const char g = w[2] == "m" ? 'M' : 'F';
      nouns_[w[0]] = {'S', g};
      nouns_[w[1]] = {'P', g};
    }
    for (const char* line : kVerbTable) {
      const auto w = words(line);
      verbs_[w[0]] = {'S', '?', '3'};
      verbs_[w[1]] = {'P', '?', '3'};
      verbs_[w[2]] = {'S', '?', '1'};
      verbs_[w[3]] = {'P', '?', '1'};
      infinitives_.insert(w[4]);
    }
    verbs_["è"] = {'S', '?', '3'};
    verbs_["siamo"] = {'P', '?', '1'};
    for (const char* line : kAdjectiveTable) {
      const auto w = words(line);
      adjectives_[w[0]] = {'S', 'M'};
      adjectives_[w[1]] = {'S', 'F'};
      adjectives_[w[2]] = {'P', 'M'};
      adjectives_[w[3]] = {'P', 'F'};
    }
    const std::map<std::string, Features> arts = {
        {"il", {'S', 'M'}}, {"lo", {'S', 'M'}}, {"l'", {'S', '?'}}, {"la", {'S', 'F'}},
        {"i", {'P', 'M'}},  {"gli", {'P', 'M'}}, {"le", {'P', 'F'}}};
    const std::map<std::string, std::string> contracted = {
        {"il", "al"}, {"lo", "allo"}, {"l'", "all'"}, {"la", "alla"},
        {"i", "ai"},  {"gli", "agli"}, {"le", "alle"}};
    for (const auto& [a, f] : arts) {
      articles_[a] = f;
      articles_[contracted.at(a)] = f;
    }
  }

  std::optional<Features> noun(const std::string& w) const { return get(nouns_, w); }
  std::optional<Features> verb(const std::string& w) const { return get(verbs_, w); }
  std::optional<Features> adjective(const std::string& w) const { return get(adjectives_, w); }
  std::optional<Features> det(const std::string& w) const { return get(articles_, w); }
  bool is_infinitive(const std::string& w) const { return infinitives_.count(w) > 0; }

  // "sono" is both 3pl and 1sg of the copula.
  bool agrees(const std::string& controller, const std::string& target) const {
    if (controller == "io" || controller == "noi") {
      const char num = controller == "io" ? 'S' : 'P';
      if (target == "sono") return num == 'S';
      const auto v = verb(target);
      return v && v->person == '1' && v->number == num;
    }
    const auto n = noun(controller);
    if (!n) return false;
    if (target == "sono") return n->number == 'P';
    if (auto d = det(target)) return d->number == n->number && (d->gender == '?' || d->gender == n->gender);
    if (auto v = verb(target)) return v->person == '3' && v->number == n->number;
    if (auto a = adjective(target)) return a->number == n->number && a->gender == n->gender;
    return false;
  }

 private:
  static std::optional<Features> get(const std::map<std::string, Features>& m,
                                     const std::string& w) {
    const auto it = m.find(w);
    if (it == m.end()) return std::nullopt;
    return it->second;
  }
  std::map<std::string, Features> nouns_, verbs_, adjectives_, articles_;
  std::set<std::string> infinitives_;
};

inline const Oracle& oracle() {
  static const Oracle o;
  return o;
}

// Condition letters recovered from the surface noun forms.
inline std::string readback(const Trial& t) {
  const Template& tpl = template_for(t.task);
  std::string out(tpl.noun_count, '?');
  for (std::size_t p = 0; p < tpl.slots.size(); ++p) {
    if (tpl.slots[p].kind != SlotKind::Noun) continue;
    const auto f = oracle().noun(t.tokens[p]);
    if (!f) return "unknown noun " + t.tokens[p];
    out[static_cast<std::size_t>(tpl.slots[p].ref)] =
        t.task == Task::NounPPGender ? f->gender : f->number;
  }
  return out;
}

}  // namespace aglb::test_support
