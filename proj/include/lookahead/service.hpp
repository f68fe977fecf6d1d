#pragma once

// Live chat sessions between a human (customer side, speaker A) and a
// trained agent (server side, speaker B), exposed over HTTP and through the
// terminal chat loop. Both front ends call the same ChatService handlers.

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lookahead/corpus.hpp"
#include "lookahead/engine.hpp"

namespace lookahead {

inline constexpr std::string_view kServiceVersion = "1.0.0";

struct ChatSession {
  std::string id;
  GoalVector agent_goals;
  std::optional<GoalVector> human_goals;
  std::vector<Turn> transcript;
  bool ended = false;
  double done_prob = 0.5;
  std::mutex mu;
};

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

class ChatService {
 public:
  explicit ChatService(Agent agent, std::uint64_t seed = 1, std::size_t max_turns = 20);

  HttpResponse create_session(std::string_view body);
  HttpResponse post_message(std::string_view id, std::string_view body);
  HttpResponse get_session(std::string_view id) const;
  HttpResponse model_info() const;
  HttpResponse health() const;

  /// Snapshot of a session in the corpus record format; outcome from the
  /// agreement oracle when the human goals are known, else 0.
  std::optional<DialogueSession> export_session(std::string_view id) const;

  const Agent& agent() const { return agent_; }

 private:
  std::shared_ptr<ChatSession> find(std::string_view id) const;

  Agent agent_;
  std::size_t max_turns_;
  mutable std::mutex store_mu_;
  std::map<std::string, std::shared_ptr<ChatSession>, std::less<>> sessions_;
  std::mt19937_64 rng_;
  std::uint64_t next_id_ = 1;
};

/// HTTP front end over a ChatService.
class HttpServer {
 public:
  explicit HttpServer(ChatService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to `host:port` (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();
  /// Blocks until the server accepts connections (for background use).
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Terminal chat loop: reads human lines from `in`, writes agent replies to
/// `out`. "/quit" or end of input stops it. Returns the session record.
DialogueSession run_chat(ChatService& service, const GoalVector& agent_goals,
                         const std::optional<GoalVector>& human_goals, std::istream& in,
                         std::ostream& out);

}  // namespace lookahead
