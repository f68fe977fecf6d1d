#include "lookahead/evaluation.hpp"

#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace lookahead {

using json = nlohmann::json;

std::string opening_utterance(const GoalVector& customer, std::uint64_t seed) {
  const RestaurantDomain& rd = restaurant_domain();
  std::mt19937_64 rng(seed);
  const SurfaceSlots slots = rd.draw_slots(customer, rng);
  return rd.realize(rd.domain().action_index("request_table"), slots, rng);
}

SessionResult self_play(const Agent& agent, const Agent& simulator, const GoalVector& goals_a,
                        const GoalVector& goals_b, std::uint64_t seed,
                        const SelfPlayOptions& options) {
  if (options.max_turns == 0) throw std::invalid_argument("self_play: max_turns must be positive");
  SessionResult r;
  r.session.goals_a = goals_a;
  r.session.goals_b = goals_b;
  auto& turns = r.session.turns;
  turns.push_back({Speaker::kA, opening_utterance(goals_a, seed)});
  r.end_reason = "max_turns";
  if (is_farewell(turns.back().text)) r.end_reason = "farewell";

  while (r.end_reason == "max_turns" && turns.size() < options.max_turns) {
    const bool agent_turn = turns.back().speaker == Speaker::kA;
    AgentTurn t = agent_turn
                      ? respond(agent, goals_b, turns, options.done_threshold)
                      : respond(simulator, goals_a, turns, options.done_threshold);
    turns.push_back({agent_turn ? Speaker::kB : Speaker::kA, t.text});
    if (is_farewell(t.text)) {
      r.end_reason = "farewell";
    } else if (agent_turn && t.ends_session) {
      r.end_reason = "agreement";
    }
  }
  r.achieved = agreement_oracle(goals_a, goals_b, turns) == 1;
  r.session.outcome = r.achieved ? 1 : 0;
  return r;
}

std::string EvalReport::to_json(bool include_transcripts) const {
  json j = {{"n_sessions", n_sessions}, {"achieved", achieved}, {"achieved_ratio", achieved_ratio},
            {"avg_turns", avg_turns},   {"seed", seed}};
  if (include_transcripts) {
    json list = json::array();
    for (const auto& s : sessions) {
      json rec = json::parse(session_to_json_line(s.session));
      rec["end_reason"] = s.end_reason;
      list.push_back(std::move(rec));
    }
    j["sessions"] = std::move(list);
  }
  return j.dump(2);
}

EvalReport evaluate(const Agent& agent, const Agent& simulator, std::size_t n, std::uint64_t seed,
                    const GoalPool& pool, const SelfPlayOptions& options) {
  if (n == 0) throw std::invalid_argument("evaluate: n must be at least 1");
  if (pool.customer.empty() || pool.server.empty()) {
    throw std::invalid_argument("evaluate: empty goal pool");
  }
  EvalReport report;
  report.n_sessions = n;
  report.seed = seed;
  std::size_t turns = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const auto& a = pool.customer[rng() % pool.customer.size()];
    const auto& b = pool.server[rng() % pool.server.size()];
    SessionResult r = self_play(agent, simulator, a, b, rng(), options);
    turns += r.session.turns.size();
    report.achieved += r.achieved ? 1 : 0;
    report.sessions.push_back(std::move(r));
  }
  report.achieved_ratio = static_cast<double>(report.achieved) / static_cast<double>(n);
  report.avg_turns = static_cast<double>(turns) / static_cast<double>(n);
  return report;
}

SweepParam parse_sweep_param(std::string_view name) {
  if (name == "K" || name == "k" || name == "lookahead_k") return SweepParam::kK;
  if (name == "hidden_dim") return SweepParam::kHiddenDim;
  throw std::invalid_argument("unknown sweep parameter \"" + std::string(name) +
                              "\" (expected K or hidden_dim)");
}

std::vector<SweepRow> sweep(const std::vector<DialogueSession>& corpus, const TrainConfig& base,
                            const Agent& simulator, SweepParam param,
                            const std::vector<std::size_t>& values, std::size_t n_eval,
                            std::uint64_t eval_seed) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  std::vector<SweepRow> rows;
  for (std::size_t v : values) {
    TrainConfig c = base;
    SweepRow row;
    if (param == SweepParam::kK) {
      c.lookahead_k = v;
      row.param = "K";
    } else {
      c.hidden_dim = v;
      row.param = "hidden_dim";
    }
    row.value = v;
    TrainResult tr = train(corpus, c);
    row.final_train_loss = tr.metrics.back().train_loss;
    const Agent agent{std::move(tr.params), std::move(tr.vocab)};
    row.report = evaluate(agent, simulator, n_eval, eval_seed);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "param\tvalue\tachieved_ratio\tavg_turns\tfinal_train_loss\n";
  for (const auto& r : rows) {
    out << r.param << '\t' << r.value << '\t' << r.report.achieved_ratio << '\t'
        << r.report.avg_turns << '\t' << r.final_train_loss << '\n';
  }
  return out.str();
}

}  // namespace lookahead
