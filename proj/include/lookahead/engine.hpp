#pragma once

// A trained agent and the one reply path used by self-play, the terminal
// chat loop and the HTTP service.

#include <string>
#include <vector>

#include "lookahead/corpus.hpp"
#include "lookahead/model.hpp"

namespace lookahead {

struct Agent {
  ModelParams params;
  Vocabulary vocab;
};

struct AgentTurn {
  std::string text;
  std::vector<TokenId> tokens;
  double done_prob = 0.5;
  std::vector<double> attention;
  bool ends_session = false;
};

inline constexpr double kDoneThreshold = 0.5;

/// True when a reply closes the session: a farewell, or an agreement
/// statement the completion classifier believes in.
bool closes_session(std::string_view text, double done_prob, double threshold = kDoneThreshold);

/// Reply of the side holding `goals` to the last turn of `transcript`
/// (earlier turns form the history). The transcript must be nonempty.
AgentTurn respond(const Agent& agent, const GoalVector& goals, const std::vector<Turn>& transcript,
                  double threshold = kDoneThreshold);

}  // namespace lookahead
