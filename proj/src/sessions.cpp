#include <algorithm>
#include <map>
#include <tuple>

#include "aglb/errors.hpp"
#include "aglb/stimuli.hpp"

namespace aglb::stimuli {

namespace {

// Equal split of total over parts; the remainder goes to parts offset, offset+1, ...
std::vector<std::size_t> apportion(std::size_t total, std::size_t parts, std::size_t offset = 0) {
  std::vector<std::size_t> out(parts, total / parts);
  for (std::size_t k = 0; k < total % parts; ++k) ++out[(offset + k) % parts];
  return out;
}

struct Request {
  std::string grammaticality;
  Task task;
  Condition condition;
  std::size_t count;
  std::string role;  // violations
  FillerType filler = FillerType::WrongPerson;
};

void spread_conditions(std::vector<Request>& out, const std::string& gram, Task task,
                       std::size_t count, std::size_t offset, const std::string& role = {},
                       FillerType filler = FillerType::WrongPerson) {
  const auto conds = conditions_for(task);
  const auto per = apportion(count, conds.size(), offset);
  for (std::size_t k = 0; k < conds.size(); ++k)
    if (per[k]) out.push_back({gram, task, conds[k], per[k], role, filler});
}

std::vector<Request> block_requests(std::size_t acceptable, std::size_t violation,
                                    const std::vector<std::size_t>& filler_counts) {
  std::vector<Request> out;
  const auto tasks = nesting_tasks();
  const auto acc = apportion(acceptable, tasks.size());
  for (std::size_t c = 0; c < tasks.size(); ++c)
    spread_conditions(out, "acceptable", tasks[c], acc[c], c);

  // 8 cells (role x construction); extras alternate so both margins stay balanced.
  const std::size_t cells = 2 * tasks.size();
  const std::size_t base = violation / cells, extra = violation % cells;
  std::vector<std::size_t> count(cells, base);
  // Cell (c, r) with (c + r) even is served first.
  std::vector<std::size_t> priority;
  for (std::size_t cell = 0; cell < cells; ++cell)
    if (((cell / 2) + (cell % 2)) % 2 == 0) priority.push_back(cell);
  for (std::size_t cell = 0; cell < cells; ++cell)
    if (((cell / 2) + (cell % 2)) % 2 == 1) priority.push_back(cell);
  for (std::size_t k = 0; k < extra; ++k) ++count[priority[k]];
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::size_t c = cell / 2;
    const std::string role = cell % 2 == 0 ? "main" : "embedded";
    spread_conditions(out, "violation-" + role, tasks[c], count[cell], cell, role);
  }

  const auto fillers = all_fillers();
  for (std::size_t f = 0; f < fillers.size(); ++f) {
    const auto per_task = apportion(filler_counts[f], tasks.size(), f);
    for (std::size_t c = 0; c < tasks.size(); ++c)
      spread_conditions(out, "filler:" + std::string(filler_name(fillers[f])), tasks[c],
                        per_task[c], f + c, {}, fillers[f]);
  }
  return out;
}

// Realize every request; returns trials grouped by grammaticality class.
std::vector<std::vector<Trial>> realize_block(const std::vector<Request>& requests,
                                              const Lexicon& lex, std::uint64_t seed) {
  std::map<std::pair<Task, std::string>, std::size_t> needed;
  for (const auto& r : requests) needed[{r.task, r.condition.features}] += r.count;
  std::map<std::pair<Task, std::string>, std::vector<Trial>> pools;
  for (const auto& [key, n] : needed)
    pools[key] = expand(key.first, parse_condition(key.first, key.second), lex, n, seed,
                        {.with_object = true});
  std::map<std::pair<Task, std::string>, std::size_t> cursor;
  std::vector<std::vector<Trial>> classes(3);
  for (const auto& r : requests) {
    const std::pair<Task, std::string> key{r.task, r.condition.features};
    for (std::size_t k = 0; k < r.count; ++k) {
      const Trial& base = pools[key][cursor[key]++];
      if (r.grammaticality == "acceptable") {
        classes[0].push_back(base);
      } else if (!r.role.empty()) {
        classes[1].push_back(make_violation(base, r.role));
      } else {
        classes[2].push_back(make_filler(base, r.filler, lex, {.seed = seed}));
      }
    }
  }
  return classes;
}

bool same_lexemes(const Trial& a, const Trial& b) { return a.lexemes.all() == b.lexemes.all(); }

void order_session(std::vector<std::string>& ids, const std::map<std::string, const Trial*>& index,
                   numerics::Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    rng.shuffle(ids);
    bool ok = true;
    for (std::size_t k = 1; k < ids.size() && ok; ++k)
      ok = !same_lexemes(*index.at(ids[k - 1]), *index.at(ids[k]));
    if (ok) return;
  }
  throw GenerationError("could not order session without repeated adjacent lexemes");
}

using CellKey = std::tuple<std::string, std::string, Task, std::string>;

std::vector<DesignCell> cells_from(const std::map<CellKey, std::size_t>& counts) {
  std::vector<DesignCell> out;
  for (const auto& [k, n] : counts)
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), n});
  return out;
}

}  // namespace

const Trial& SessionPlan::trial(std::string_view id) const {
  for (const auto& t : trials)
    if (t.id == id) return t;
  throw ArgumentError("no trial " + std::string(id) + " in session plan");
}

SessionPlan assemble_sessions(const Lexicon& lex, const Lexicon& training_lex,
                              std::uint64_t seed) {
  SessionPlan plan;
  plan.seed = seed;
  plan.sessions = {{"s1", {}, {}}, {"s2", {}, {}}};

  // Syntactic fillers 30 each; abstract and inanimate 45 each, half felicitous.
  const std::vector<std::size_t> main_fillers{30, 30, 30, 22, 23, 23, 22};
  const std::vector<std::size_t> training_fillers{4, 4, 4, 4, 4, 3, 3};
  struct Block {
    std::string name;
    std::vector<Request> requests;
    const Lexicon* lexicon;
  };
  const std::vector<Block> blocks{{"main", block_requests(180, 180, main_fillers), &lex},
                                  {"training", block_requests(28, 26, training_fillers),
                                   &training_lex}};

  std::map<CellKey, std::size_t> design;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& block = blocks[b];
    for (const auto& r : block.requests)
      design[{block.name, r.grammaticality, r.task, r.condition.features}] += r.count;
    auto classes =
        realize_block(block.requests, *block.lexicon, numerics::derive_seed(seed, b + 1));
    for (auto& cls : classes)
      for (std::size_t k = 0; k < cls.size(); ++k) {
        auto& session = plan.sessions[k % 2];
        (block.name == "main" ? session.main : session.training).push_back(cls[k].id);
        plan.trials.push_back(std::move(cls[k]));
      }
  }
  plan.design = cells_from(design);

  std::map<std::string, const Trial*> index;
  for (const auto& t : plan.trials) index[t.id] = &t;
  numerics::Rng rng(numerics::derive_seed(seed, 99));
  for (auto& s : plan.sessions) {
    order_session(s.training, index, rng);
    order_session(s.main, index, rng);
  }
  return plan;
}

std::vector<DesignCell> recount(const SessionPlan& plan) {
  std::map<std::string, const Trial*> index;
  for (const auto& t : plan.trials) index[t.id] = &t;
  std::map<CellKey, std::size_t> counts;
  for (const auto& s : plan.sessions)
    for (const auto* list : {&s.main, &s.training}) {
      const std::string block = list == &s.main ? "main" : "training";
      for (const auto& id : *list) {
        const auto it = index.find(id);
        if (it == index.end()) throw IntegrityError("session lists unknown trial " + id);
        const Trial& t = *it->second;
        ++counts[{block, t.grammaticality, t.task, t.condition.features}];
      }
    }
  return cells_from(counts);
}

nlohmann::json to_json(const SessionPlan& plan) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& s : plan.sessions)
    sessions.push_back({{"id", s.id}, {"training", s.training}, {"main", s.main}});
  nlohmann::json design = nlohmann::json::array();
  for (const auto& c : plan.design)
    design.push_back({{"block", c.block},
                      {"grammaticality", c.grammaticality},
                      {"task", task_name(c.task)},
                      {"condition", c.condition},
                      {"count", c.count}});
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : plan.trials) trials.push_back(to_json(t));
  return {{"seed", plan.seed}, {"sessions", sessions}, {"design", design}, {"trials", trials}};
}

SessionPlan plan_from_json(const nlohmann::json& j) {
  try {
    SessionPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("sessions"))
      plan.sessions.push_back({s.at("id").get<std::string>(),
                               s.at("training").get<std::vector<std::string>>(),
                               s.at("main").get<std::vector<std::string>>()});
    for (const auto& c : j.at("design"))
      plan.design.push_back({c.at("block").get<std::string>(),
                             c.at("grammaticality").get<std::string>(),
                             parse_task(c.at("task").get<std::string>()),
                             c.at("condition").get<std::string>(), c.at("count").get<std::size_t>()});
    for (const auto& t : j.at("trials")) plan.trials.push_back(trial_from_json(t));
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed session plan: ") + e.what());
  }
}

}  // namespace aglb::stimuli
