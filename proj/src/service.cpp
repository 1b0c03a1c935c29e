#include "aglb/service.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "aglb/errors.hpp"
#include "httplib.h"

namespace aglb::service {

namespace fs = std::filesystem;

struct ResponseService::SessionState {
  const stimuli::Session* session = nullptr;
  std::set<std::string> trials;
  fs::path log;
  mutable std::mutex mu;
  std::vector<ResponseRecord> records;                    // append order
  std::map<std::pair<std::string, std::string>, std::size_t> by_key;  // (participant, trial)
};

namespace {

HttpResult error(int status, const std::string& code, const std::string& message,
                 const std::vector<std::string>& fields = {}) {
  nlohmann::json body = {{"v", 1}, {"error", code}, {"message", message}};
  if (!fields.empty()) body["fields"] = fields;
  return {status, body};
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t end = std::min(path.find('/', start), path.size());
    if (end > start) parts.emplace_back(path.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

std::string expected_answer(const stimuli::Trial& t) {
  return t.acceptable() ? "correct" : "incorrect";
}

}  // namespace

nlohmann::json to_json(const Timing& t) {
  return {{"fixation_ms", t.fixation}, {"word_ms", t.word},   {"blank_ms", t.blank},
          {"post_sentence_ms", t.post_sentence}, {"panel_ms", t.panel}, {"feedback_ms", t.feedback}};
}

nlohmann::json to_json(const Feedback& f) {
  return {{"correct", f.correct}, {"incorrect", f.incorrect}};
}

ResponseService::ResponseService(ServiceConfig config) : config_(std::move(config)) {
  const fs::path plan_path = config_.stimuli_dir / "sessions.json";
  std::ifstream in(plan_path);
  if (!in) throw IoError("cannot read session plan " + plan_path.string());
  try {
    plan_ = stimuli::plan_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("malformed session plan " + plan_path.string() + ": " + e.what());
  }
  fs::create_directories(config_.results_dir);
  for (const auto& s : plan_.sessions) {
    auto state = std::make_unique<SessionState>();
    state->session = &s;
    state->trials.insert(s.training.begin(), s.training.end());
    state->trials.insert(s.main.begin(), s.main.end());
    state->log = config_.results_dir / ("responses-" + s.id + ".jsonl");
    if (std::ifstream log{state->log}) {
      std::size_t line_no = 0;
      for (std::string line; std::getline(log, line);) {
        ++line_no;
        if (line.empty()) continue;
        try {
          const ResponseRecord r = response_from_json(nlohmann::json::parse(line));
          state->by_key[{r.participant, r.trial}] = state->records.size();
          state->records.push_back(r);
        } catch (const std::exception& e) {
          throw IntegrityError(state->log.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
    }
    sessions_.emplace(s.id, std::move(state));
  }
}

ResponseService::~ResponseService() = default;

nlohmann::json ResponseService::session_payload(const std::string& id) const {
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ArgumentError("unknown session " + id);
  const stimuli::Session& s = *it->second->session;
  nlohmann::json trials = nlohmann::json::array();
  auto add = [&](const std::string& block, const std::vector<std::string>& ids) {
    for (const auto& tid : ids) {
      const stimuli::Trial& t = plan_.trial(tid);
      trials.push_back({{"id", t.id},
                        {"block", block},
                        {"tokens", t.tokens},
                        {"task", stimuli::task_name(t.task)},
                        {"condition", t.condition.features},
                        {"grammaticality", t.grammaticality},
                        {"expected", expected_answer(t)},
                        {"pre_panel_ms", config_.timing.pre_panel(t.tokens.size())}});
    }
  };
  add("training", s.training);
  add("main", s.main);
  return {{"v", 1},
          {"session", s.id},
          {"timing", to_json(config_.timing)},
          {"feedback", to_json(config_.feedback)},
          {"keys", {{"detect", "M"}, {"panel_left", "X"}, {"panel_right", "M"}}},
          {"trials", trials}};
}

std::vector<ResponseRecord> ResponseService::responses(const std::string& id) const {
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ArgumentError("unknown session " + id);
  std::lock_guard lock(it->second->mu);
  return it->second->records;
}

HttpResult ResponseService::post_response(SessionState& s, std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error(400, "validation", "body is not valid JSON", {"$"});
  }
  ResponseRecord r;
  try {
    r = response_from_json(j);
  } catch (const ValidationError& e) {
    return error(400, "validation", e.what(), e.items());
  }
  std::vector<std::string> bad;
  if (r.session != s.session->id) bad.push_back("session");
  if (!s.trials.count(r.trial)) bad.push_back("trial");
  if (!bad.empty()) return error(400, "validation", "response does not belong to this session", bad);

  std::lock_guard lock(s.mu);
  const auto key = std::make_pair(r.participant, r.trial);
  if (const auto it = s.by_key.find(key); it != s.by_key.end()) {
    if (s.records[it->second] == r) return {200, {{"v", 1}, {"status", "duplicate"}}};
    return error(409, "conflict",
                 "a different response for participant " + r.participant + " and trial " +
                     r.trial + " is already stored");
  }
  std::ofstream out(s.log, std::ios::app);
  out << to_json(r).dump() << '\n';
  out.flush();
  if (!out) return error(500, "io", "cannot append to " + s.log.string());
  s.by_key[key] = s.records.size();
  s.records.push_back(r);
  return {201, {{"v", 1}, {"status", "stored"}}};
}

HttpResult ResponseService::handle(std::string_view method, std::string_view path,
                                   std::string_view body) {
  try {
    const auto parts = split_path(path);
    if (parts.size() == 2 && parts[0] == "api" && parts[1] == "health") {
      if (method != "GET") return error(405, "method", "use GET");
      return {200, {{"v", 1}, {"status", "ok"}, {"sessions", sessions_.size()}}};
    }
    if (parts.size() < 3 || parts.size() > 4 || parts[0] != "api" || parts[1] != "sessions")
      return error(404, "not-found", "no route for " + std::string(path));
    const auto it = sessions_.find(parts[2]);
    if (it == sessions_.end()) return error(404, "unknown-session", "unknown session " + parts[2]);
    if (parts.size() == 3) {
      if (method != "GET") return error(405, "method", "use GET");
      return {200, session_payload(parts[2])};
    }
    if (parts[3] != "responses") return error(404, "not-found", "no route for " + std::string(path));
    if (method == "POST") return post_response(*it->second, body);
    if (method == "GET") {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& r : responses(parts[2])) list.push_back(to_json(r));
      return {200, {{"v", 1}, {"session", parts[2]}, {"responses", list}}};
    }
    return error(405, "method", "use GET or POST");
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

std::vector<ResponseRecord> read_responses(const fs::path& results_dir) {
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(results_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("responses-") && name.ends_with(".jsonl")) logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  std::vector<ResponseRecord> out;
  for (const auto& p : logs) {
    std::ifstream in(p);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (line.empty()) continue;
      try {
        out.push_back(response_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        throw IntegrityError(p.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  return out;
}

HttpServer::HttpServer(ResponseService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResult r = service_.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  };
  server_->Get(".*", route);
  server_->Post(".*", route);
  server_->Put(".*", route);
  server_->Delete(".*", route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

}  // namespace aglb::service
