#include "lookahead/planner.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>
#include <stdexcept>

namespace lookahead {

PropMask Domain::declare(std::string name) {
  if (names_.size() >= 64) throw std::length_error("planning universe is limited to 64 propositions");
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw std::invalid_argument("duplicate proposition " + name);
  }
  names_.push_back(std::move(name));
  return PropMask{1} << (names_.size() - 1);
}

PropMask Domain::prop(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::invalid_argument("unknown proposition " + std::string(name));
  return PropMask{1} << static_cast<unsigned>(it - names_.begin());
}

PropMask Domain::props(std::initializer_list<std::string_view> names) const {
  PropMask mask = 0;
  for (auto n : names) mask |= prop(n);
  return mask;
}

std::string Domain::describe(PropMask mask) const {
  std::string out = "{";
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if ((mask >> i) & 1U) {
      if (out.size() > 1) out += ", ";
      out += names_[i];
    }
  }
  return out + "}";
}

void Domain::add_action(PlannerAction action) {
  if ((action.add & action.del) != 0) {
    throw std::invalid_argument("action " + action.name + " adds and deletes the same proposition");
  }
  if ((action.expected & ~action.add) != 0) {
    throw std::invalid_argument("action " + action.name + ": expected effects must be adds");
  }
  const PropMask universe =
      names_.size() == 64 ? ~PropMask{0} : (PropMask{1} << names_.size()) - 1;
  if (((action.pre | action.add | action.del) & ~universe) != 0) {
    throw std::invalid_argument("action " + action.name + " uses undeclared propositions");
  }
  if (action.templates.empty()) {
    throw std::invalid_argument("action " + action.name + " needs at least one template");
  }
  auto pos = std::lower_bound(actions_.begin(), actions_.end(), action.name,
                              [](const PlannerAction& a, const std::string& n) { return a.name < n; });
  if (pos != actions_.end() && pos->name == action.name) {
    throw std::invalid_argument("duplicate action " + action.name);
  }
  actions_.insert(pos, std::move(action));
}

std::size_t Domain::action_index(std::string_view name) const {
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    if (actions_[i].name == name) return i;
  }
  throw std::invalid_argument("unknown action " + std::string(name));
}

PlanningState Domain::apply(const PlanningState& s, const PlannerAction& a) const {
  if (!applicable(s, a)) throw std::logic_error("preconditions of " + a.name + " do not hold");
  return {(s.props & ~a.del) | a.add};
}

PlanningState Domain::execute(const PlanningState& s, const PlannerAction& a) const {
  if (!applicable(s, a)) throw std::logic_error("preconditions of " + a.name + " do not hold");
  return {(s.props & ~a.del) | (a.add & ~a.expected)};
}

std::vector<std::size_t> Domain::actions_of(int actor) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    if (actions_[i].actor == actor) out.push_back(i);
  }
  return out;
}

std::optional<int> h_max(const Domain& domain, const PlanningState& state, PropMask goal,
                         const std::vector<std::size_t>& usable) {
  constexpr int kInf = std::numeric_limits<int>::max();
  const std::size_t n = domain.proposition_count();
  std::vector<int> cost(n, kInf);
  for (std::size_t p = 0; p < n; ++p) {
    if ((state.props >> p) & 1U) cost[p] = 0;
  }
  auto mask_cost = [&](PropMask mask) {
    int worst = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if ((mask >> p) & 1U) worst = std::max(worst, cost[p]);
    }
    return worst;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto idx : usable) {
      const auto& a = domain.action(idx);
      const int c = mask_cost(a.pre);
      if (c == kInf) continue;
      for (std::size_t p = 0; p < n; ++p) {
        if (((a.add >> p) & 1U) && c + 1 < cost[p]) {
          cost[p] = c + 1;
          changed = true;
        }
      }
    }
  }
  const int h = mask_cost(goal);
  if (h == kInf) return std::nullopt;
  return h;
}

namespace {

struct Frontier {
  int f;
  std::vector<std::size_t> path;  // action indices; index order == name order
  PlanningState state;
};

struct FrontierAfter {
  bool operator()(const Frontier& a, const Frontier& b) const {
    if (a.f != b.f) return a.f > b.f;
    return a.path > b.path;
  }
};

}  // namespace

std::optional<std::vector<std::size_t>> plan(const Domain& domain, const PlanningState& state,
                                             PropMask goal, int actor) {
  const auto usable = domain.actions_of(actor);
  // With a consistent heuristic the first time a state is popped it carries
  // its optimal cost, and ordering equal-f entries by path yields the
  // lexicographically first optimal path.
  std::priority_queue<Frontier, std::vector<Frontier>, FrontierAfter> open;
  std::set<PropMask> closed;
  if (auto h = h_max(domain, state, goal, usable)) {
    open.push({*h, {}, state});
  }
  while (!open.empty()) {
    Frontier top = open.top();
    open.pop();
    if (top.state.holds(goal)) return top.path;
    if (!closed.insert(top.state.props).second) continue;
    for (auto idx : usable) {
      const auto& a = domain.action(idx);
      if (!domain.applicable(top.state, a)) continue;
      PlanningState next = domain.apply(top.state, a);
      if (closed.contains(next.props)) continue;
      auto h = h_max(domain, next, goal, usable);
      if (!h) continue;
      Frontier child{static_cast<int>(top.path.size()) + 1 + *h, top.path, next};
      child.path.push_back(idx);
      open.push(std::move(child));
    }
  }
  return std::nullopt;
}

std::size_t next_action(const Domain& domain, const PlanningState& state, PropMask goal, int actor,
                        std::size_t on_satisfied, std::size_t on_unreachable) {
  if (state.holds(goal)) return on_satisfied;
  auto steps = plan(domain, state, goal, actor);
  if (!steps || steps->empty()) return on_unreachable;
  return steps->front();
}

}  // namespace lookahead
