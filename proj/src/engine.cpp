#include "lookahead/engine.hpp"

#include <stdexcept>

#include "lookahead/datagen.hpp"

namespace lookahead {

bool closes_session(std::string_view text, double done_prob, double threshold) {
  if (is_farewell(text)) return true;
  for (const auto& tok : tokenize(text)) {
    if (tok.starts_with("deal_") && done_prob > threshold) return true;
  }
  return false;
}

AgentTurn respond(const Agent& agent, const GoalVector& goals, const std::vector<Turn>& transcript,
                  double threshold) {
  if (transcript.empty()) throw std::invalid_argument("respond: empty transcript");
  std::vector<Utterance> history;
  history.reserve(transcript.size() - 1);
  for (std::size_t i = 0; i + 1 < transcript.size(); ++i) {
    history.push_back({transcript[i].speaker, agent.vocab.encode(transcript[i].text)});
  }
  const Turn& last = transcript.back();
  const Utterance current{last.speaker, agent.vocab.encode(last.text)};

  Reply reply = generate_reply(agent.params, goals, history, current);
  AgentTurn out;
  out.tokens = std::move(reply.tokens);
  out.text = agent.vocab.decode(out.tokens);
  out.done_prob = reply.done_prob;
  out.attention = std::move(reply.attention);
  out.ends_session = closes_session(out.text, out.done_prob, threshold);
  return out;
}

}  // namespace lookahead
