#include "lookahead/service.hpp"

#include <iostream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "lookahead/datagen.hpp"

namespace lookahead {

using json = nlohmann::json;

namespace {

HttpResponse error(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

// Parses a JSON array of 0/1 integers into a goal vector of the model's width.
std::optional<GoalVector> parse_goals(const json& value, std::size_t bits, std::string& why) {
  if (!value.is_array()) {
    why = "goals must be an array of 0/1";
    return std::nullopt;
  }
  if (value.size() != bits) {
    why = "goals must have " + std::to_string(bits) + " entries";
    return std::nullopt;
  }
  GoalVector g;
  for (const auto& b : value) {
    if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1)) {
      why = "goal entries must be 0 or 1";
      return std::nullopt;
    }
    g.bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
  }
  return g;
}

json turns_json(const std::vector<Turn>& turns) {
  json out = json::array();
  for (const auto& t : turns) {
    out.push_back({{"speaker", std::string(speaker_name(t.speaker))}, {"text", t.text}});
  }
  return out;
}

json labels_json(int role) {
  json out = json::array();
  for (auto l : goal_labels(role)) out.push_back(std::string(l));
  return out;
}

}  // namespace

ChatService::ChatService(Agent agent, std::uint64_t seed, std::size_t max_turns)
    : agent_(std::move(agent)), max_turns_(max_turns), rng_(seed) {}

std::shared_ptr<ChatSession> ChatService::find(std::string_view id) const {
  std::lock_guard lock(store_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

HttpResponse ChatService::create_session(std::string_view body) {
  json req = json::object();
  if (!body.empty()) {
    req = json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error(400, "body must be a JSON object");
  }
  const std::size_t bits = agent_.params.config.goal_bits;
  auto session = std::make_shared<ChatSession>();
  std::string why;
  if (req.contains("goals")) {
    auto g = parse_goals(req["goals"], bits, why);
    if (!g) return error(400, why);
    session->agent_goals = *g;
  }
  if (req.contains("human_goals")) {
    auto g = parse_goals(req["human_goals"], bits, why);
    if (!g) return error(400, "human_" + why);
    session->human_goals = *g;
  }

  std::lock_guard lock(store_mu_);
  if (!req.contains("goals")) {
    const GoalPool pool = GoalPool::standard();
    session->agent_goals = pool.server[rng_() % pool.server.size()];
  }
  if (req.value("sample_human_goals", false) && !session->human_goals) {
    const GoalPool pool = GoalPool::standard();
    session->human_goals = pool.customer[rng_() % pool.customer.size()];
  }
  std::ostringstream id;
  id << "s" << next_id_++;
  session->id = id.str();
  sessions_.emplace(session->id, session);

  json out = {{"id", session->id}, {"goals", session->agent_goals.bits}};
  if (session->human_goals) out["human_goals"] = session->human_goals->bits;
  return {201, out.dump()};
}

HttpResponse ChatService::post_message(std::string_view id, std::string_view body) {
  auto session = find(id);
  if (!session) return error(404, "unknown session");
  json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object() || !req.contains("text") ||
      !req["text"].is_string()) {
    return error(400, "body must be {\"text\": string}");
  }
  const std::string text = req["text"].get<std::string>();
  if (tokenize(text).empty()) return error(400, "text must contain at least one word");

  std::lock_guard lock(session->mu);
  if (session->ended) return error(409, "session has ended");
  session->transcript.push_back({Speaker::kA, text});
  AgentTurn reply = respond(agent_, session->agent_goals, session->transcript);
  session->transcript.push_back({Speaker::kB, reply.text});
  session->done_prob = reply.done_prob;
  if (reply.ends_session || is_farewell(text) || session->transcript.size() >= max_turns_) {
    session->ended = true;
  }
  json out = {{"reply", reply.text},
              {"done_prob", reply.done_prob},
              {"status", session->ended ? "ended" : "open"},
              {"attention", reply.attention}};
  return {200, out.dump()};
}

HttpResponse ChatService::get_session(std::string_view id) const {
  auto session = find(id);
  if (!session) return error(404, "unknown session");
  std::lock_guard lock(session->mu);
  json out = {{"id", session->id},
              {"status", session->ended ? "ended" : "open"},
              {"goals", session->agent_goals.bits},
              {"done_prob", session->done_prob},
              {"turns", turns_json(session->transcript)}};
  out["human_goals"] = session->human_goals ? json(session->human_goals->bits) : json(nullptr);
  return {200, out.dump()};
}

HttpResponse ChatService::model_info() const {
  const ModelConfig& c = agent_.params.config;
  json out = {
      {"k", c.lookahead_k},
      {"dims",
       {{"embed", c.embed_dim}, {"goal", c.goal_dim}, {"hidden", c.hidden_dim}}},
      {"vocab_size", c.vocab_size},
      {"version", std::string(kServiceVersion)},
      {"goal_bits", c.goal_bits},
      {"goal_labels", {{"agent", labels_json(kServer)}, {"human", labels_json(kCustomer)}}},
  };
  return {200, out.dump()};
}

HttpResponse ChatService::health() const { return {200, json{{"status", "ok"}}.dump()}; }

std::optional<DialogueSession> ChatService::export_session(std::string_view id) const {
  auto session = find(id);
  if (!session) return std::nullopt;
  std::lock_guard lock(session->mu);
  DialogueSession d;
  d.goals_b = session->agent_goals;
  d.goals_a = session->human_goals ? *session->human_goals
                                   : GoalVector(std::vector<std::uint8_t>(session->agent_goals.size(), 0));
  d.turns = session->transcript;
  d.outcome = session->human_goals ? agreement_oracle(d.goals_a, d.goals_b, d.turns) : 0;
  return d;
}

// ---------------------------------------------------------------------------
// HTTP

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(ChatService& service) : impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  auto reply = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  s.Get("/healthz", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.health());
  });
  s.Get("/model/info", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.model_info());
  });
  s.Post("/session", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.create_session(req.body));
  });
  s.Post(R"(/session/([^/]+)/message)",
         [&service, reply](const httplib::Request& req, httplib::Response& res) {
           reply(res, service.post_message(req.matches[1].str(), req.body));
         });
  s.Get(R"(/session/([^/]+))",
        [&service, reply](const httplib::Request& req, httplib::Response& res) {
          reply(res, service.get_session(req.matches[1].str()));
        });
  // CORS for browser clients.
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

// ---------------------------------------------------------------------------
// Terminal chat

DialogueSession run_chat(ChatService& service, const GoalVector& agent_goals,
                         const std::optional<GoalVector>& human_goals, std::istream& in,
                         std::ostream& out) {
  json req = {{"goals", agent_goals.bits}};
  if (human_goals) req["human_goals"] = human_goals->bits;
  const HttpResponse created = service.create_session(req.dump());
  if (created.status != 201) throw std::invalid_argument(json::parse(created.body)["error"]);
  const std::string id = json::parse(created.body)["id"];

  std::string line;
  while (out << "you> " << std::flush, std::getline(in, line)) {
    if (line == "/quit") break;
    if (tokenize(line).empty()) continue;
    const HttpResponse r = service.post_message(id, json{{"text", line}}.dump());
    const json body = json::parse(r.body);
    if (r.status != 200) {
      out << "[" << body["error"].get<std::string>() << "]\n";
      break;
    }
    out << "agent> " << body["reply"].get<std::string>() << "  (done_prob "
        << body["done_prob"].get<double>() << ")\n";
    if (body["status"] == "ended") {
      out << "[session ended]\n";
      break;
    }
  }
  return *service.export_session(id);
}

}  // namespace lookahead
