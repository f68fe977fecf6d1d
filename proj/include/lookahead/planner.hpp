#pragma once

// STRIPS planning over a closed universe of at most 64 ground propositions.
// States and proposition sets are bitmasks; plans are minimum-length action
// sequences found by A* under the admissible h_max heuristic, with ties
// broken by lexicographic action name.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lookahead {

using PropMask = std::uint64_t;

struct PlanningState {
  PropMask props = 0;

  bool holds(PropMask mask) const { return (props & mask) == mask; }
  bool operator==(const PlanningState&) const = default;
  auto operator<=>(const PlanningState&) const = default;
};

struct PlannerAction {
  std::string name;
  int actor = 0;  // which agent may take this action
  PropMask pre = 0;
  PropMask add = 0;
  PropMask del = 0;
  /// Subset of `add` describing the partner's anticipated reply. Planning
  /// treats these as effects; executing the utterance does not.
  PropMask expected = 0;
  std::vector<std::string> templates;
};

class Domain {
 public:
  /// Registers a proposition and returns its single-bit mask.
  PropMask declare(std::string name);
  PropMask prop(std::string_view name) const;
  PropMask props(std::initializer_list<std::string_view> names) const;
  std::size_t proposition_count() const { return names_.size(); }
  const std::vector<std::string>& proposition_names() const { return names_; }
  std::string describe(PropMask mask) const;

  /// Adds an action. Actions are kept sorted by name.
  void add_action(PlannerAction action);
  const std::vector<PlannerAction>& actions() const { return actions_; }
  const PlannerAction& action(std::size_t index) const { return actions_.at(index); }
  std::size_t action_index(std::string_view name) const;

  bool applicable(const PlanningState& s, const PlannerAction& a) const { return s.holds(a.pre); }
  /// Planning transition: full STRIPS effects.
  PlanningState apply(const PlanningState& s, const PlannerAction& a) const;
  /// Execution transition: effects minus anticipated partner replies.
  PlanningState execute(const PlanningState& s, const PlannerAction& a) const;

  /// Indices of the actions available to `actor`, in name order.
  std::vector<std::size_t> actions_of(int actor) const;

 private:
  std::vector<std::string> names_;
  std::vector<PlannerAction> actions_;
};

/// Minimum-length plan for `actor` from `state` to any state holding `goal`,
/// as action indices; std::nullopt when the goal is unreachable. Among
/// shortest plans the lexicographically smallest name sequence is returned.
std::optional<std::vector<std::size_t>> plan(const Domain& domain, const PlanningState& state,
                                             PropMask goal, int actor);

/// Delete-relaxation h_max estimate; nullopt when the relaxed problem is
/// already unsolvable.
std::optional<int> h_max(const Domain& domain, const PlanningState& state, PropMask goal,
                         const std::vector<std::size_t>& usable);

/// First step towards `goal`. A satisfied goal yields `on_satisfied`, an
/// unreachable one yields `on_unreachable`.
std::size_t next_action(const Domain& domain, const PlanningState& state, PropMask goal, int actor,
                        std::size_t on_satisfied, std::size_t on_unreachable);

}  // namespace lookahead
