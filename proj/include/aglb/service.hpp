#pragma once

// HTTP/JSON service that hands session plans to the experiment UI and stores
// the responses it posts back.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "aglb/responses.hpp"
#include "aglb/stimuli.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace aglb::service {

// Presentation constants in milliseconds.
struct Timing {
  double fixation = 600;
  double word = 250;
  double blank = 250;
  double post_sentence = 1500;
  double panel = 1500;
  double feedback = 500;

  // Fixation, every word frame and the post-sentence blank.
  double pre_panel(std::size_t tokens) const {
    return fixation + static_cast<double>(tokens) * (word + blank) + post_sentence;
  }
};

struct Feedback {
  std::string correct = "Bravo!";
  std::string incorrect = "Peccato…";
};

struct ServiceConfig {
  std::filesystem::path stimuli_dir;  // holds sessions.json
  std::filesystem::path results_dir;  // responses-<session>.jsonl
  Timing timing;
  Feedback feedback;
};

nlohmann::json to_json(const Timing& t);
nlohmann::json to_json(const Feedback& f);

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

class ResponseService {
 public:
  // Loads the session plan and replays stored responses. Throws IoError when
  // the plan is missing and IntegrityError for a corrupt response log.
  explicit ResponseService(ServiceConfig config);
  ~ResponseService();

  // Routes one request; never throws.
  HttpResult handle(std::string_view method, std::string_view path, std::string_view body);

  nlohmann::json session_payload(const std::string& id) const;
  std::vector<ResponseRecord> responses(const std::string& id) const;
  const stimuli::SessionPlan& plan() const noexcept { return plan_; }

 private:
  struct SessionState;
  HttpResult post_response(SessionState& s, std::string_view body);

  ServiceConfig config_;
  stimuli::SessionPlan plan_;
  std::map<std::string, std::unique_ptr<SessionState>> sessions_;
};

// Reads every stored response log in a results directory.
std::vector<ResponseRecord> read_responses(const std::filesystem::path& results_dir);

// Thin httplib wrapper. bind() returns the bound port (0 picks a free one).
class HttpServer {
 public:
  explicit HttpServer(ResponseService& service);
  ~HttpServer();
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  ResponseService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace aglb::service
