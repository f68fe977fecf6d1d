#pragma once

// Self-play between a trained agent (server side, speaker B) and a
// goal-conditioned user simulator (customer side, speaker A).

#include <cstdint>
#include <string>
#include <vector>

#include "lookahead/corpus.hpp"
#include "lookahead/datagen.hpp"
#include "lookahead/engine.hpp"
#include "lookahead/training.hpp"

namespace lookahead {

struct SelfPlayOptions {
  std::size_t max_turns = 20;
  double done_threshold = kDoneThreshold;
};

struct SessionResult {
  DialogueSession session;  // outcome holds the achieved flag
  bool achieved = false;
  std::string end_reason;   // "farewell", "agreement", "max_turns"
};

/// The simulator's opening request, voiced from the customer goals.
std::string opening_utterance(const GoalVector& customer, std::uint64_t seed);

SessionResult self_play(const Agent& agent, const Agent& simulator, const GoalVector& goals_a,
                        const GoalVector& goals_b, std::uint64_t seed,
                        const SelfPlayOptions& options = {});

struct EvalReport {
  std::size_t n_sessions = 0;
  std::size_t achieved = 0;
  double achieved_ratio = 0.0;
  double avg_turns = 0.0;
  std::uint64_t seed = 0;
  std::vector<SessionResult> sessions;

  std::string to_json(bool include_transcripts = true) const;
};

EvalReport evaluate(const Agent& agent, const Agent& simulator, std::size_t n, std::uint64_t seed,
                    const GoalPool& pool = GoalPool::standard(),
                    const SelfPlayOptions& options = {});

enum class SweepParam { kK, kHiddenDim };
SweepParam parse_sweep_param(std::string_view name);

struct SweepRow {
  std::string param;
  std::size_t value = 0;
  double final_train_loss = 0.0;
  EvalReport report;
};

/// Trains one agent per value (other settings from `base`) and evaluates
/// each against the same simulator.
std::vector<SweepRow> sweep(const std::vector<DialogueSession>& corpus, const TrainConfig& base,
                            const Agent& simulator, SweepParam param,
                            const std::vector<std::size_t>& values, std::size_t n_eval,
                            std::uint64_t eval_seed);

std::string sweep_table(const std::vector<SweepRow>& rows);

}  // namespace lookahead
