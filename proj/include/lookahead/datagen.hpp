#pragma once

// Restaurant-reservation corpus synthesis. A customer (speaker A) and a
// restaurant server (speaker B) each hold a private goal vector; both are
// rule-based agents that replan with STRIPS search at every turn and voice
// the first planned action through a handcrafted template.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lookahead/corpus.hpp"
#include "lookahead/planner.hpp"

namespace lookahead {

/// Seating arrangements a reservation can settle on.
enum class Option : std::uint8_t { kTable = 0, kBar, kBigger, kPricier, kTime };
inline constexpr std::size_t kOptionCount = 5;
inline constexpr std::array<Option, kOptionCount> kAllOptions = {
    Option::kTable, Option::kBar, Option::kBigger, Option::kPricier, Option::kTime};

std::string_view option_slug(Option o);
std::optional<Option> parse_option(std::string_view slug);

/// Bit layout of the customer's goal vector.
namespace customer_bit {
inline constexpr std::size_t kAcceptsBar = 0;
inline constexpr std::size_t kAcceptsBigger = 1;
inline constexpr std::size_t kAcceptsPricier = 2;
inline constexpr std::size_t kAcceptsOtherTime = 3;
inline constexpr std::size_t kLargeParty = 4;
inline constexpr std::size_t kEarlySlot = 5;
}  // namespace customer_bit

/// Bit layout of the server's goal vector.
namespace server_bit {
inline constexpr std::size_t kEarlyTableFree = 0;
inline constexpr std::size_t kLateTableFree = 1;
inline constexpr std::size_t kHasBar = 2;
inline constexpr std::size_t kVipRoomFree = 3;
inline constexpr std::size_t kMayRaisePrice = 4;
inline constexpr std::size_t kSeatsLargeParties = 5;
}  // namespace server_bit

inline constexpr std::size_t kGoalBits = 6;
inline constexpr int kCustomer = 0;
inline constexpr int kServer = 1;

/// Human-readable meaning of each goal bit for a role.
const std::array<std::string_view, kGoalBits>& goal_labels(int role);

/// Whether the customer would take `o`.
bool customer_accepts(Option o, const GoalVector& customer);
/// Whether the server can provide `o` to this customer's party and time.
bool server_provides(Option o, const GoalVector& customer, const GoalVector& server);
bool compatible(Option o, const GoalVector& customer, const GoalVector& server);

/// Token that marks a confirmed reservation, e.g. "deal_bar".
std::string agreement_marker(Option o);
/// The option named by the last agreement marker spoken by the server.
std::optional<Option> agreed_option(const std::vector<Turn>& turns);
/// 1 iff the server stated an agreement and the agreed option satisfies
/// both goal vectors.
int agreement_oracle(const GoalVector& customer, const GoalVector& server,
                     const std::vector<Turn>& turns);
/// True when an utterance carries the farewell token.
bool is_farewell(std::string_view text);

struct GoalPool {
  std::vector<GoalVector> customer;
  std::vector<GoalVector> server;

  static GoalPool standard();
};

/// Values substituted into templates: party size and the two time slots.
struct SurfaceSlots {
  std::string people;
  std::string time;
  std::string alt_time;
};

class RestaurantDomain {
 public:
  RestaurantDomain();

  const Domain& domain() const { return domain_; }
  PropMask goal() const { return goal_; }
  PlanningState initial_state(const GoalVector& customer, const GoalVector& server) const;

  std::size_t on_satisfied(int actor) const { return actor == kCustomer ? say_bye_ : server_bye_; }
  std::size_t on_unreachable(int actor) const { return actor == kCustomer ? give_up_ : server_end_; }
  /// Option confirmed by an action, if it is one of the confirm actions.
  std::optional<Option> confirms(std::size_t action) const;
  bool ends_dialogue(std::size_t action) const;

  SurfaceSlots draw_slots(const GoalVector& customer, std::mt19937_64& rng) const;
  std::string realize(std::size_t action, const SurfaceSlots& slots, std::mt19937_64& rng) const;

 private:
  Domain domain_;
  PropMask goal_ = 0;
  std::size_t say_bye_ = 0, give_up_ = 0, server_bye_ = 0, server_end_ = 0;
  std::array<std::size_t, kOptionCount> confirm_{};
};

const RestaurantDomain& restaurant_domain();

/// Per-turn record of the planner's view, for oracle checks.
struct PlannerTrace {
  std::vector<PlanningState> states;  // state before each turn
  std::vector<std::size_t> actions;
};

DialogueSession generate_dialogue(const GoalVector& customer, const GoalVector& server,
                                  std::uint64_t seed, std::size_t max_turns = 20,
                                  PlannerTrace* trace = nullptr);

struct CorpusStats {
  std::size_t dialogues = 0;
  double avg_turns = 0.0;
  double avg_words_per_turn = 0.0;
  std::size_t words = 0;
  double pct_goal_achieved = 0.0;

  std::string to_json() const;
};

CorpusStats corpus_stats(const std::vector<DialogueSession>& sessions);

struct GeneratedCorpus {
  std::vector<DialogueSession> sessions;
  CorpusStats stats;
};

GeneratedCorpus generate_corpus(std::size_t n_dialogues, std::uint64_t seed,
                                const GoalPool& pool = GoalPool::standard(),
                                std::size_t max_turns = 20);

/// Sub-seed for item `index` of a seeded run (splitmix64 finaliser).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace lookahead
