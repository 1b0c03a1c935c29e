#include "aglb/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "aglb/ablation.hpp"
#include "aglb/artifacts.hpp"
#include "aglb/checkpoint_io.hpp"
#include "aglb/config.hpp"
#include "aglb/errors.hpp"
#include "aglb/evaluation.hpp"
#include "aglb/probing.hpp"
#include "aglb/report.hpp"
#include "aglb/service.hpp"
#include "aglb/stats.hpp"
#include "aglb/stimuli.hpp"
#include "aglb/training.hpp"

namespace aglb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fold(std::string s) {
  for (char& c : s) c = c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string json_string_list(const std::string& csv) {
  json arr = json::array();
  std::stringstream ss(csv);
  for (std::string part; std::getline(ss, part, ',');)
    if (!part.empty()) arr.push_back(part);
  return arr.dump();
}

// Flags shared by every command plus the overrides collected from command flags.
struct Invocation {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out_root;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::map<std::string, std::string> paths;  // file inputs by role

  json resolve() const {
    std::vector<std::pair<std::string, std::string>> all;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ArgumentError("--set expects path=value, got '" + s + "'");
      all.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    all.insert(all.end(), overrides.begin(), overrides.end());
    const fs::path file(config_file);
    return config::resolve(config_file.empty() ? nullptr : &file, all);
  }

  fs::path root() const {
    if (!out_root.empty()) return out_root;
    if (const char* env = std::getenv("AGLB_RUN_DIR"); env && *env) return env;
    return "runs";
  }

  const std::string& path(const std::string& role) const {
    const auto it = paths.find(role);
    if (it == paths.end() || it->second.empty()) throw ArgumentError("missing --" + role);
    return it->second;
  }
  bool has(const std::string& role) const {
    const auto it = paths.find(role);
    return it != paths.end() && !it->second.empty();
  }
};

class RunDir {
 public:
  RunDir(const Invocation& inv, std::string command, json cfg) {
    manifest_.command = std::move(command);
    manifest_.config = std::move(cfg);
    root_ = inv.root();
  }
  void seed(const std::string& role, std::uint64_t s) { manifest_.seeds[role] = s; }
  void input(const std::string& role, const fs::path& p) { manifest_.inputs[role] = run::sha256_file(p); }
  void checkpoint(const std::string& role, const fs::path& p) {
    manifest_.checkpoints[role] = run::sha256_file(p);
  }

  // Freezes the manifest and creates the directory.
  void open() {
    hash_ = manifest_.hash();
    dir_ = run::run_directory(root_, manifest_);
    fs::create_directories(dir_);
    json m = manifest_.to_json();
    m["hash"] = hash_;
    run::write_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }
  const std::string& hash() const { return hash_; }
  const fs::path& dir() const { return dir_; }

  void text(const std::string& name, const std::string& body) {
    run::write_file(dir_ / name, run::banner(hash_) + body);
  }
  void json_file(const std::string& name, json j) {
    j["manifest"] = hash_;
    run::write_file(dir_ / name, j.dump(2) + "\n");
  }
  void raw(const std::string& name, const std::string& body) { run::write_file(dir_ / name, body); }

 private:
  run::RunManifest manifest_;
  fs::path root_, dir_;
  std::string hash_;
};

std::size_t threads_of(const json& cfg) {
  const auto t = cfg.at("threads").get<std::size_t>();
  return t ? t : std::max(1u, std::thread::hardware_concurrency());
}

std::vector<stimuli::Trial> load_trials(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  auto trials = stimuli::read_jsonl(in);
  if (trials.empty()) throw ArgumentError(p.string() + " holds no trials");
  return trials;
}

json load_json(const fs::path& p) {
  json j = json::parse(run::read_file(p), nullptr, false);
  if (j.is_discarded()) throw ArgumentError(p.string() + " is not valid JSON");
  return j;
}

std::vector<eval::ConditionSummary> load_summaries(const fs::path& p, std::string* grouping) {
  const json j = load_json(p);
  if (!j.contains("summaries")) throw ArgumentError(p.string() + " has no summaries");
  std::vector<eval::ConditionSummary> out;
  for (const auto& s : j.at("summaries")) out.push_back(eval::summary_from_json(s));
  if (grouping) *grouping = j.value("grouping", std::string("task,condition,role"));
  return out;
}

lm::AblationMode mode_of(const json& cfg) {
  return cfg.at("ablation").at("mode") == "hidden_only" ? lm::AblationMode::HiddenOnly
                                                        : lm::AblationMode::HiddenAndCell;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

std::vector<std::string> word_set(const stimuli::Lexicon& lex, const lm::Vocabulary& vocab,
                                  const std::string& kind) {
  std::vector<std::string> words;
  auto add = [&](const std::string& w) {
    if (vocab.contains(w) && std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  };
  if (kind == "verbs") {
    for (const auto* group : {&lex.verbs, &lex.matrix_verbs})
      for (const auto& v : *group) add(v.sg3), add(v.pl3);
    add(lex.copula.sg3), add(lex.copula.pl3);
  } else if (kind == "nouns") {
    for (const auto& n : lex.nouns) add(n.singular), add(n.plural);
  } else if (kind == "adjectives") {
    for (const auto& a : lex.adjectives) add(a.ms), add(a.fs), add(a.mp), add(a.fp);
  } else {
    for (const char* a : {"il", "lo", "la", "l'", "i", "gli", "le"}) add(a);
  }
  return words;
}

lm::Vocabulary default_vocabulary() { return stimuli::corpus_vocabulary(stimuli::build_lexicon()); }

// --- commands -------------------------------------------------------------

void cmd_gen_stimuli(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  RunDir run(inv, "gen-stimuli", cfg);
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  run.seed("stimuli", seed);
  run.open();

  const auto& st = cfg.at("stimuli");
  const stimuli::Task task = stimuli::parse_task(st.at("task").get<std::string>());
  const auto n = st.at("n").get<std::size_t>();
  const auto lex = stimuli::build_lexicon();
  const auto conditions = stimuli::conditions_for(task);
  std::vector<stimuli::Trial> trials;
  for (std::size_t k = 0; k < conditions.size(); ++k) {
    const std::size_t share = n / conditions.size() + (k < n % conditions.size() ? 1 : 0);
    if (share == 0) continue;
    stimuli::ExpandOptions opt;
    opt.with_object = st.at("with_object").get<bool>();
    auto v = stimuli::expand(task, conditions[k], lex, share, seed + k, opt);
    trials.insert(trials.end(), v.begin(), v.end());
  }
  std::ostringstream body;
  stimuli::write_jsonl(body, trials);
  run.text("stimuli.jsonl", body.str());
  out << run.dir().string() << '\n';
}

void cmd_sessions(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  RunDir run(inv, "sessions", cfg);
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  run.seed("sessions", seed);
  run.open();
  const auto plan = stimuli::assemble_sessions(stimuli::build_lexicon(),
                                               stimuli::build_training_lexicon(), seed);
  run.json_file("sessions.json", stimuli::to_json(plan));
  out << run.dir().string() << '\n';
}

void cmd_synth_corpus(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  RunDir run(inv, "synth-corpus", cfg);
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  run.seed("corpus", seed);
  run.open();
  std::vector<stimuli::Task> tasks;
  for (const auto& t : cfg.at("corpus").at("tasks")) tasks.push_back(stimuli::parse_task(t.get<std::string>()));
  const auto corpus = stimuli::synth_corpus(stimuli::build_lexicon(), tasks,
                                            cfg.at("corpus").at("sentences").get<std::size_t>(), seed);
  std::ostringstream body;
  stimuli::write_corpus(body, corpus);
  run.text("corpus.txt", body.str());
  out << run.dir().string() << '\n';
}

void cmd_train(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  const fs::path corpus_path = inv.path("corpus");
  RunDir run(inv, "train", cfg);
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  run.seed("init", seed);
  run.seed("shuffle", seed);
  run.input("corpus", corpus_path);
  run.open();

  std::ifstream in(corpus_path);
  if (!in) throw IoError("cannot read " + corpus_path.string());
  std::vector<stimuli::CorpusSentence> corpus;
  for (auto& words : stimuli::read_corpus(in)) corpus.push_back({std::move(words), "", {}});
  const lm::Vocabulary vocab = default_vocabulary();
  const auto stream = stimuli::to_stream(corpus, vocab);
  const auto seqs = lm::split_sentences(stream, *vocab.boundary());

  const auto& m = cfg.at("model");
  lm::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = m.at("embed_dim").get<std::size_t>();
  mc.hidden_dim = m.at("hidden_dim").get<std::size_t>();
  mc.num_layers = m.at("num_layers").get<std::size_t>();
  mc.seed = seed;
  const auto& t = cfg.at("train");
  lm::TrainHyper hyper;
  hyper.lr = t.at("lr").get<double>();
  hyper.lr_decay = t.at("lr_decay").get<double>();
  hyper.clip = t.at("clip").get<double>();
  hyper.epochs = t.at("epochs").get<std::size_t>();
  hyper.batch_size = t.at("batch_size").get<std::size_t>();
  hyper.bptt = t.at("bptt").get<std::size_t>();
  hyper.max_steps = t.at("max_steps").get<std::size_t>();
  hyper.seed = seed;

  lm::TrainReport report;
  auto ckpt = lm::train(lm::init_model(mc, vocab, seed), seqs, hyper, &report);
  ckpt.metadata["manifest"] = run.hash();
  ckpt.metadata["epoch_loss"] = report.epoch_loss;
  ckpt.metadata["steps"] = report.steps;
  lm::save_checkpoint(ckpt, run.dir() / "model.ckpt");

  std::string log = "epoch,loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
    log += std::to_string(e) + "," + fmt(report.epoch_loss[e]) + "\n";
  run.text("train_log.csv", log);
  out << run.dir().string() << '\n';
}

void cmd_eval(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  const fs::path ckpt_path = inv.path("checkpoint"), stim_path = inv.path("stimuli");
  RunDir run(inv, "eval", cfg);
  run.checkpoint("model", ckpt_path);
  run.input("stimuli", stim_path);
  run.seed("bootstrap", cfg.at("seed").get<std::uint64_t>());
  const auto ckpt = lm::load_checkpoint(ckpt_path);
  const auto trials = load_trials(stim_path);
  const auto& e = cfg.at("eval");
  const auto mask = parse_mask(e.at("mask").get<std::string>());
  auto spec = eval::parse_grouping(e.at("grouping").get<std::string>());
  spec.resamples = e.at("resamples").get<std::size_t>();
  spec.seed = cfg.at("seed").get<std::uint64_t>();
  run.open();

  const auto records = eval::score_trials(ckpt, trials, e.at("role").get<std::string>(), mask, threads_of(cfg));
  const auto summaries = eval::aggregate(records, spec);
  std::string jsonl;
  for (const auto& r : records) jsonl += eval::to_json(r).dump() + "\n";
  run.text("records.jsonl", jsonl);
  std::ostringstream csv, sum_csv;
  eval::write_records_csv(csv, records);
  run.text("records.csv", csv.str());
  eval::write_summary_csv(sum_csv, summaries);
  run.text("summary.csv", sum_csv.str());
  json rows = json::array();
  for (const auto& s : summaries) rows.push_back(eval::to_json(s));
  run.json_file("summary.json", {{"v", 1}, {"grouping", e.at("grouping")}, {"mask", eval::describe(mask)},
                                 {"summaries", rows}});
  out << run.dir().string() << '\n';
}

void cmd_ablate_single(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  const fs::path ckpt_path = inv.path("checkpoint"), stim_path = inv.path("stimuli");
  RunDir run(inv, "ablate-single", cfg);
  run.checkpoint("model", ckpt_path);
  run.input("stimuli", stim_path);
  const auto ckpt = lm::load_checkpoint(ckpt_path);
  const auto trials = load_trials(stim_path);
  run.open();
  const auto& a = cfg.at("ablation");
  const auto study = ablation::single_unit_study(ckpt, trials, a.at("role").get<std::string>(),
                                                 threads_of(cfg), mode_of(cfg));
  const auto ranked = ablation::rank_units(study, a.at("criterion").get<std::vector<std::string>>());
  std::ostringstream csv;
  ablation::write_effects_csv(csv, study, ckpt.config.hidden_dim);
  run.text("effects.csv", csv.str());
  run.json_file("ranking.json", ablation::to_json(ranked));
  out << run.dir().string() << '\n';
}

void cmd_ablate_topk(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  const fs::path ckpt_path = inv.path("checkpoint"), stim_path = inv.path("stimuli"),
                 rank_path = inv.path("ranking");
  RunDir run(inv, "ablate-topk", cfg);
  run.checkpoint("model", ckpt_path);
  run.input("stimuli", stim_path);
  run.input("ranking", rank_path);
  const auto ckpt = lm::load_checkpoint(ckpt_path);
  const auto trials = load_trials(stim_path);
  const auto ranked = ablation::ranked_from_json(load_json(rank_path));
  run.open();
  const auto& a = cfg.at("ablation");
  const auto rows = ablation::topk_study(ckpt, ranked, a.at("k_max").get<std::size_t>(), trials,
                                         a.at("role").get<std::string>(), threads_of(cfg), mode_of(cfg));
  std::ostringstream csv;
  ablation::write_topk_csv(csv, rows);
  run.text("topk.csv", csv.str());
  run.raw("topk.svg", report::svg_topk(rows, run.hash()));
  out << run.dir().string() << '\n';
}

// Explicit units, else the `top` best-ranked ones (restricted to `layer` when set).
std::vector<lm::UnitId> probing_units(const Invocation& inv, const json& cfg, RunDir& run,
                                      std::size_t top, std::optional<std::size_t> layer = {}) {
  auto units = parse_units(cfg.at("probing").at("units").get<std::vector<std::string>>());
  if (units.empty() && inv.has("ranking")) {
    run.input("ranking", inv.path("ranking"));
    const auto ranked = ablation::ranked_from_json(load_json(inv.path("ranking")));
    for (const auto& u : ranked.units) {
      if (units.size() == top) break;
      if (!layer || u.layer == *layer) units.push_back(u);
    }
  }
  if (units.empty()) throw ArgumentError("no units: pass --units or --ranking");
  return units;
}

void cmd_trace(const Invocation& inv, std::size_t top, std::ostream& out) {
  const json cfg = inv.resolve();
  const fs::path ckpt_path = inv.path("checkpoint"), stim_path = inv.path("stimuli");
  RunDir run(inv, "trace", cfg);
  run.checkpoint("model", ckpt_path);
  run.input("stimuli", stim_path);
  const auto units = probing_units(inv, cfg, run, top);
  const auto ckpt = lm::load_checkpoint(ckpt_path);
  const auto trials = load_trials(stim_path);
  run.open();

  probing::TraceOptions opt;
  opt.signals.clear();
  for (const auto& s : cfg.at("probing").at("signals")) opt.signals.push_back(probing::parse_signal(s.get<std::string>()));
  opt.mask = parse_mask(cfg.at("eval").at("mask").get<std::string>());
  opt.threads = threads_of(cfg);
  const auto traces = probing::trace_conditions(ckpt, trials, units, opt);
  std::ostringstream csv;
  probing::write_traces_csv(csv, traces, ckpt.config.hidden_dim);
  run.text("traces.csv", csv.str());
  run.raw("traces.svg", report::svg_traces(traces, run.hash()));

  json sep = json::array();
  const bool number_task = std::all_of(trials.begin(), trials.end(), [](const stimuli::Trial& t) {
    return t.task != stimuli::Task::NounPPGender && t.has_target("main");
  });
  if (number_task)
    for (const auto& u : units)
      for (auto s : opt.signals) {
        const auto r = probing::number_separation(ckpt, trials, u, s, 0, "main", opt.mask);
        sep.push_back({{"layer", u.layer}, {"index", u.index}, {"signal", probing::signal_name(s)},
                       {"auc", r.auc}, {"direction", r.direction}, {"min_auc", r.min_auc},
                       {"step_auc", r.step_auc}});
      }
  const auto fp = probing::fixed_point_check(ckpt, *ckpt.vocab.boundary(), 50, 1e-6, opt.mask);
  run.json_file("trace_summary.json",
                {{"v", 1},
                 {"subject_number_separation", sep},
                 {"fixed_point", {{"converged", fp.converged}, {"steps", fp.steps}, {"last_delta", fp.last_delta}}}});
  out << run.dir().string() << '\n';
}

void cmd_connectivity(const Invocation& inv, std::size_t top, std::ostream& out) {
  const json cfg = inv.resolve();
  const fs::path ckpt_path = inv.path("checkpoint");
  RunDir run(inv, "connectivity", cfg);
  run.checkpoint("model", ckpt_path);
  const auto ckpt = lm::load_checkpoint(ckpt_path);
  const auto units = probing_units(inv, cfg, run, top, ckpt.config.num_layers - 1);
  std::vector<stimuli::Trial> trials;
  if (inv.has("stimuli")) {
    run.input("stimuli", inv.path("stimuli"));
    trials = load_trials(inv.path("stimuli"));
  }
  run.open();

  const auto lex = stimuli::build_lexicon();
  const auto task = stimuli::parse_task(cfg.at("stimuli").at("task").get<std::string>());
  const auto [a, b] = probing::target_word_sets(lex, task, ckpt.vocab);
  std::vector<probing::ConnectivityRecord> records;
  if (!trials.empty()) {
    records = probing::effective_efferent(ckpt, units, trials, cfg.at("ablation").at("role").get<std::string>(),
                                          a, b, parse_mask(cfg.at("eval").at("mask").get<std::string>()));
  } else {
    for (const auto& u : units) records.push_back(probing::efferent_weights(ckpt, u, a, b));
  }
  std::ostringstream csv;
  probing::write_connectivity_csv(csv, records, ckpt.config.hidden_dim);
  run.text("connectivity.csv", csv.str());
  json rows = json::array();
  for (const auto& r : records)
    rows.push_back({{"layer", r.unit.layer}, {"index", r.unit.index}, {"mean_h", r.mean_h},
                    {"separation", r.separation}, {"effective_separation", r.effective_separation},
                    {"perfect", r.perfect}});
  run.json_file("connectivity.json", {{"v", 1}, {"units", rows}, {"effective", !trials.empty()}});
  out << run.dir().string() << '\n';
}

void cmd_pca(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  const fs::path ckpt_path = inv.path("checkpoint");
  RunDir run(inv, "pca", cfg);
  run.checkpoint("model", ckpt_path);
  const auto ckpt = lm::load_checkpoint(ckpt_path);
  run.open();
  const auto& p = cfg.at("probing");
  const auto lex = stimuli::build_lexicon();
  const auto words = word_set(lex, ckpt.vocab, p.at("word_set").get<std::string>());
  const auto side = p.at("side") == "input" ? probing::EmbeddingSide::Input : probing::EmbeddingSide::Output;
  const auto proj = probing::embedding_pca(ckpt, lex, words, side, p.at("pcs")[0].get<std::size_t>(),
                                           p.at("pcs")[1].get<std::size_t>());
  std::ostringstream csv;
  probing::write_projection_csv(csv, proj);
  run.text("projection.csv", csv.str());
  run.raw("pca.svg", report::svg_pca(proj, run.hash()));
  out << run.dir().string() << '\n';
}

void cmd_find_short_range(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  const fs::path ckpt_path = inv.path("checkpoint");
  RunDir run(inv, "find-short-range", cfg);
  run.checkpoint("model", ckpt_path);
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  run.seed("probe", seed);
  const auto ckpt = lm::load_checkpoint(ckpt_path);
  run.open();
  const auto& p = cfg.at("probing");
  const auto lex = stimuli::build_lexicon();
  const auto probe = probing::short_range_probe(lex, p.at("probe_per_condition").get<std::size_t>(), seed);
  probing::ShortRangeOptions opt;
  opt.theta_auc = p.at("theta_auc").get<double>();
  opt.theta_separation = p.at("theta_separation").get<double>();
  opt.mask = parse_mask(cfg.at("eval").at("mask").get<std::string>());
  opt.threads = threads_of(cfg);
  run.json_file("short_range.json", probing::to_json(probing::find_short_range_units(ckpt, lex, probe, opt)));
  out << run.dir().string() << '\n';
}

std::vector<eval::EvalRecord> load_records(const fs::path& p) {
  std::vector<eval::EvalRecord> out;
  std::istringstream in(run::read_file(p));
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line.starts_with('#')) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ArgumentError(p.string() + ": malformed record line");
    out.push_back(eval::record_from_json(j));
  }
  return out;
}

struct HumanSide {
  std::vector<service::ResponseRecord> responses;
  stimuli::SessionPlan plan;
};

HumanSide load_human(const Invocation& inv, RunDir& run) {
  HumanSide h;
  const fs::path plan_path = inv.path("plan");
  run.input("plan", plan_path);
  const fs::path dir = inv.path("responses");
  h.responses = service::read_responses(dir);
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".jsonl") logs.push_back(entry.path());
  std::sort(logs.begin(), logs.end());
  for (const auto& l : logs) run.input("responses/" + l.filename().string(), l);
  h.plan = stimuli::plan_from_json(load_json(plan_path));
  return h;
}

void cmd_stats(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  RunDir run(inv, "stats", cfg);
  std::vector<stats::Observation> obs;
  if (inv.has("records")) {
    run.input("records", inv.path("records"));
    obs = eval::to_observations(load_records(inv.path("records")), "model");
  } else if (inv.has("responses")) {
    const auto h = load_human(inv, run);
    obs = eval::human_observations(h.responses, h.plan.trials).agreement;
  } else {
    throw ArgumentError("stats needs --records or --responses with --plan");
  }
  run.open();
  stats::ContrastSpec spec;
  spec.participant_effects = cfg.at("stats").at("participant_effects").get<bool>();
  spec.chance = cfg.at("stats").at("chance").get<double>();
  const auto report = stats::contrast_report(obs, spec);
  run.json_file("contrast.json", stats::to_json(report));
  run.text("contrast.txt", stats::to_text(report));
  out << run.dir().string() << '\n';
}

void cmd_compare(const Invocation& inv, std::ostream& out) {
  const json cfg = inv.resolve();
  RunDir run(inv, "compare", cfg);
  const fs::path model_path = inv.path("model");
  run.input("model", model_path);
  std::string grouping;
  const auto model = load_summaries(model_path, &grouping);
  std::vector<eval::ConditionSummary> human;
  if (inv.has("human")) {
    run.input("human", inv.path("human"));
    std::string human_grouping;
    human = load_summaries(inv.path("human"), &human_grouping);
    if (human_grouping != grouping)
      throw AlignmentError("model grouped by '" + grouping + "', human by '" + human_grouping + "'");
  } else if (inv.has("responses")) {
    const auto h = load_human(inv, run);
    auto spec = eval::parse_grouping(grouping);
    spec.resamples = cfg.at("eval").at("resamples").get<std::size_t>();
    spec.seed = cfg.at("seed").get<std::uint64_t>();
    human = eval::human_error_rates(h.responses, h.plan.trials, spec).agreement;
    // Keep only the groups the model side covers.
    std::set<std::string> keys;
    for (const auto& s : model) keys.insert(s.key());
    std::erase_if(human, [&](const eval::ConditionSummary& s) { return !keys.count(s.key()); });
  }
  run.open();
  const auto r = report::compare_model_human(model, human);
  run.json_file("comparison.json", report::to_json(r));
  run.text("comparison.txt", report::to_text(r));
  run.raw("comparison.svg", report::svg_comparison(r, run.hash()));
  out << run.dir().string() << '\n';
}

void cmd_serve(const Invocation& inv, const std::string& host_flag, int port_flag, std::ostream& out) {
  const json cfg = inv.resolve();
  const auto& s = cfg.at("service");
  service::ServiceConfig sc;
  sc.stimuli_dir = inv.path("stimuli-dir");
  sc.results_dir = inv.path("results-dir");
  const auto& t = s.at("timing");
  sc.timing = {t.at("fixation_ms").get<double>(), t.at("word_ms").get<double>(), t.at("blank_ms").get<double>(),
               t.at("post_sentence_ms").get<double>(), t.at("panel_ms").get<double>(),
               t.at("feedback_ms").get<double>()};
  sc.feedback = {s.at("feedback").at("correct").get<std::string>(),
                 s.at("feedback").at("incorrect").get<std::string>()};
  int port = s.at("port").get<int>();
  if (const char* env = std::getenv("AGLB_PORT"); env && *env) port = std::atoi(env);
  if (port_flag >= 0) port = port_flag;
  const std::string host = host_flag.empty() ? s.at("host").get<std::string>() : host_flag;

  service::ResponseService svc(sc);
  service::HttpServer server(svc);
  const int bound = server.bind(host, port);
  out << "listening on http://" << host << ":" << bound << std::endl;
  server.listen();
}

}  // namespace

std::string canonical_task(const std::string& name) {
  for (auto t : stimuli::all_tasks())
    if (fold(std::string(stimuli::task_name(t))) == fold(name)) return std::string(stimuli::task_name(t));
  throw ArgumentError("unknown task '" + name + "'");
}

lm::AblationMask parse_mask(const std::string& text) {
  if (text.empty() || text == "none") return {};
  std::string body = text;
  auto mode = lm::AblationMode::HiddenAndCell;
  if (body.ends_with("/h")) {
    body.resize(body.size() - 2);
    mode = lm::AblationMode::HiddenOnly;
  }
  std::vector<std::string> items;
  std::stringstream ss(body);
  for (std::string part; std::getline(ss, part, ',');) items.push_back(part);
  return lm::AblationMask(parse_units(items), mode);
}

std::vector<lm::UnitId> parse_units(const std::vector<std::string>& items) {
  std::vector<lm::UnitId> out;
  for (const auto& item : items) {
    const auto colon = item.find(':');
    std::size_t layer = 0, index = 0, used = 0;
    try {
      if (colon == std::string::npos) throw std::invalid_argument("");
      layer = std::stoul(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("");
      index = std::stoul(item.substr(colon + 1), &used);
      if (used != item.size() - colon - 1) throw std::invalid_argument("");
    } catch (const std::logic_error&) {
      throw ArgumentError("unit '" + item + "' is not layer:index");
    }
    out.push_back({layer, index});
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Agreement-mechanism toolkit: stimuli, LSTM language models, ablation, probing and reports",
               "aglb"};
  app.require_subcommand(1);
  Invocation inv;
  std::string task, criterion, units, signals, pcs, host;
  std::size_t top = 1;
  int port = -1;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", inv.config_file, "JSON configuration file");
    c->add_option("--set", inv.sets, "Override as dotted.path=value (repeatable)");
    c->add_option("--out-root", inv.out_root, "Output root (default $AGLB_RUN_DIR or ./runs)");
    c->add_option_function<std::size_t>("--threads", [&](const std::size_t& v) {
      inv.overrides.emplace_back("threads", std::to_string(v));
    }, "Worker threads (0 = all cores)");
  };
  auto value = [&](CLI::App* c, const std::string& flag, const std::string& path, const std::string& help) {
    c->add_option_function<std::string>(flag, [&inv, path](const std::string& v) {
      inv.overrides.emplace_back(path, v);
    }, help);
  };
  auto text_value = [&](CLI::App* c, const std::string& flag, const std::string& path, const std::string& help) {
    c->add_option_function<std::string>(flag, [&inv, path](const std::string& v) {
      inv.overrides.emplace_back(path, json(v).dump());
    }, help);
  };
  auto file = [&](CLI::App* c, const std::string& role, const std::string& help) {
    c->add_option("--" + role, inv.paths[role], help);
  };
  auto task_flag = [&](CLI::App* c) {
    c->add_option_function<std::string>("--task", [&inv](const std::string& v) {
      inv.overrides.emplace_back("stimuli.task", json(canonical_task(v)).dump());
    }, "Task, e.g. long_nested or NounPP-number");
  };
  auto seed_flag = [&](CLI::App* c) { value(c, "--seed", "seed", "Random seed"); };

  auto* gen = app.add_subcommand("gen-stimuli", "Generate acceptable trials for one task as JSONL");
  common(gen), task_flag(gen), seed_flag(gen);
  value(gen, "--n", "stimuli.n", "Total trials, spread evenly over conditions");
  gen->add_flag_function("--with-object", [&](std::int64_t) { inv.overrides.emplace_back("stimuli.with_object", "true"); },
                         "Append an object NP when the template allows it");

  auto* sess = app.add_subcommand("sessions", "Assemble the two behavioural sessions");
  common(sess), seed_flag(sess);

  auto* corpus = app.add_subcommand("synth-corpus", "Synthesize a training corpus");
  common(corpus), seed_flag(corpus);
  value(corpus, "--sentences", "corpus.sentences", "Number of sentences");

  auto* train = app.add_subcommand("train", "Train an LSTM language model on a corpus");
  common(train), seed_flag(train);
  file(train, "corpus", "corpus.txt from synth-corpus");
  value(train, "--epochs", "train.epochs", "Epochs");
  value(train, "--lr", "train.lr", "Initial learning rate");
  value(train, "--hidden", "model.hidden_dim", "Units per layer");
  value(train, "--layers", "model.num_layers", "Layers");
  value(train, "--max-steps", "train.max_steps", "Stop after this many updates (0 = no cap)");

  auto* ev = app.add_subcommand("eval", "Score trials and aggregate accuracy per group");
  common(ev), seed_flag(ev);
  file(ev, "checkpoint", "Model checkpoint");
  file(ev, "stimuli", "Trials JSONL");
  text_value(ev, "--role", "eval.role", "Target role (main, embedded; empty for all)");
  text_value(ev, "--mask", "eval.mask", "Ablated units, e.g. 1:12,1:40 or none");
  text_value(ev, "--grouping", "eval.grouping", "Grouping keys, e.g. task,condition,role");
  value(ev, "--resamples", "eval.resamples", "Bootstrap resamples");

  auto* single = app.add_subcommand("ablate-single", "Ablate every unit alone and rank the units");
  common(single);
  file(single, "checkpoint", "Model checkpoint");
  file(single, "stimuli", "Trials JSONL (one task)");
  text_value(single, "--role", "ablation.role", "Target role");
  single->add_option_function<std::string>("--criterion", [&](const std::string& v) {
    inv.overrides.emplace_back("ablation.criterion", json_string_list(v));
  }, "Conditions ranking the units, e.g. SP,PS");

  auto* topk = app.add_subcommand("ablate-topk", "Ablate the k most harmful units for k = 0..k_max");
  common(topk);
  file(topk, "checkpoint", "Model checkpoint");
  file(topk, "stimuli", "Trials JSONL (one task)");
  file(topk, "ranking", "ranking.json from ablate-single");
  text_value(topk, "--role", "ablation.role", "Target role");
  value(topk, "--k-max", "ablation.k_max", "Largest k");

  auto units_flag = [&](CLI::App* c) {
    c->add_option_function<std::string>("--units", [&](const std::string& v) {
      inv.overrides.emplace_back("probing.units", json_string_list(v));
    }, "Units as layer:index, comma-separated");
    file(c, "ranking", "ranking.json; the top units are used when --units is absent");
    c->add_option("--top", top, "Units taken from --ranking");
  };

  auto* trace = app.add_subcommand("trace", "Average gate and state traces per condition");
  common(trace);
  file(trace, "checkpoint", "Model checkpoint");
  file(trace, "stimuli", "Trials JSONL");
  units_flag(trace);
  trace->add_option_function<std::string>("--signals", [&](const std::string& v) {
    inv.overrides.emplace_back("probing.signals", json_string_list(v));
  }, "Signals among i,f,g,o,C,h");

  auto* conn = app.add_subcommand("connectivity", "Efferent and effective efferent weights");
  common(conn), task_flag(conn);
  file(conn, "checkpoint", "Model checkpoint");
  file(conn, "stimuli", "Trials JSONL for effective weights (optional)");
  units_flag(conn);

  auto* pca = app.add_subcommand("pca", "Project word embeddings on two principal components");
  common(pca);
  file(pca, "checkpoint", "Model checkpoint");
  text_value(pca, "--word-set", "probing.word_set", "verbs, nouns, articles or adjectives");
  text_value(pca, "--side", "probing.side", "input or output embeddings");
  pca->add_option_function<std::string>("--pcs", [&](const std::string& v) {
    inv.overrides.emplace_back("probing.pcs", "[" + v + "]");
  }, "Components, e.g. 1,2");

  auto* shortr = app.add_subcommand("find-short-range", "Flag units tracking the latest noun's number");
  common(shortr), seed_flag(shortr);
  file(shortr, "checkpoint", "Model checkpoint");

  auto* st = app.add_subcommand("stats", "Contrast battery over model records or human responses");
  common(st);
  file(st, "records", "records.jsonl from eval");
  file(st, "responses", "Directory of response logs");
  file(st, "plan", "sessions.json the responses refer to");

  auto* cmp = app.add_subcommand("compare", "Model versus human error-rate report");
  common(cmp);
  file(cmp, "model", "summary.json from eval");
  file(cmp, "human", "summary.json for the human side");
  file(cmp, "responses", "Directory of response logs (instead of --human)");
  file(cmp, "plan", "sessions.json the responses refer to");

  auto* serve = app.add_subcommand("serve", "Serve session plans and collect responses over HTTP");
  common(serve);
  file(serve, "stimuli-dir", "Directory holding sessions.json");
  file(serve, "results-dir", "Directory for response logs");
  serve->add_option("--port", port, "Port (default $AGLB_PORT or service.port)");
  serve->add_option("--host", host, "Bind address");

  auto report_error = [&](const std::string& code, const std::string& message,
                          const std::vector<std::string>& items, int status) {
    err << json{{"error", {{"code", code}, {"message", message}, {"items", items}}}}.dump() << '\n';
    return status;
  };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), {}, kUsage);
  } catch (const ArgumentError& e) {
    return report_error("usage", e.what(), {}, kUsage);
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-stimuli") cmd_gen_stimuli(inv, out);
    else if (name == "sessions") cmd_sessions(inv, out);
    else if (name == "synth-corpus") cmd_synth_corpus(inv, out);
    else if (name == "train") cmd_train(inv, out);
    else if (name == "eval") cmd_eval(inv, out);
    else if (name == "ablate-single") cmd_ablate_single(inv, out);
    else if (name == "ablate-topk") cmd_ablate_topk(inv, out);
    else if (name == "trace") cmd_trace(inv, top, out);
    else if (name == "connectivity") cmd_connectivity(inv, top, out);
    else if (name == "pca") cmd_pca(inv, out);
    else if (name == "find-short-range") cmd_find_short_range(inv, out);
    else if (name == "stats") cmd_stats(inv, out);
    else if (name == "compare") cmd_compare(inv, out);
    else if (name == "serve") cmd_serve(inv, host, port, out);
  } catch (const ListError& e) {
    return report_error(e.code(), e.what(), e.items(), e.code() == "validation" ? kInvalid : kFailure);
  } catch (const Error& e) {
    return report_error(e.code(), e.what(), {}, e.code() == "argument" ? kUsage : kFailure);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), {}, kFailure);
  }
  return kOk;
}

}  // namespace aglb::cli
