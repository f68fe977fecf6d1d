#include <deque>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "doctest.h"
#include "oracles.hpp"
#include "lookahead/datagen.hpp"
#include "lookahead/planner.hpp"

using namespace lookahead;
using oracles::bfs_length;

namespace {

Domain toy() {
  Domain d;
  d.declare("a");
  d.declare("b");
  d.declare("c");
  d.declare("g");
  d.add_action({"zeta", 0, d.prop("a"), d.prop("g"), 0, 0, {"x"}});
  d.add_action({"alpha", 0, d.prop("a"), d.prop("g"), 0, 0, {"x"}});
  d.add_action({"make_a", 0, 0, d.prop("a"), 0, 0, {"x"}});
  d.add_action({"make_b", 0, d.prop("a"), d.prop("b"), d.prop("a"), 0, {"x"}});
  d.add_action({"other", 1, 0, d.prop("c"), 0, 0, {"x"}});
  return d;
}

}  // namespace

TEST_CASE("goal already satisfied gives an empty plan") {
  Domain d = toy();
  auto p = plan(d, {d.prop("g")}, d.prop("g"), 0);
  REQUIRE(p.has_value());
  CHECK(p->empty());
}

TEST_CASE("unreachable goal gives nullopt") {
  Domain d = toy();
  CHECK_FALSE(plan(d, {}, d.prop("c"), 0).has_value());
  CHECK(plan(d, {}, d.prop("c"), 1).has_value());
}

TEST_CASE("ties break towards the lexicographically smaller name") {
  Domain d = toy();
  auto p = plan(d, {}, d.prop("g"), 0);
  REQUIRE(p.has_value());
  REQUIRE(p->size() == 2);
  CHECK(d.action((*p)[0]).name == "make_a");
  CHECK(d.action((*p)[1]).name == "alpha");
}

TEST_CASE("delete effects are honoured") {
  Domain d = toy();
  PlanningState s = d.apply({d.prop("a")}, d.action(d.action_index("make_b")));
  CHECK(s.props == d.prop("b"));
}

TEST_CASE("expected effects apply when planning but not when executing") {
  Domain d;
  d.declare("asked");
  d.declare("answered");
  d.add_action({"ask", 0, 0, d.props({"asked", "answered"}), 0, d.prop("answered"), {"x"}});
  const auto& ask = d.action(0);
  CHECK(d.apply({}, ask).props == d.props({"asked", "answered"}));
  CHECK(d.execute({}, ask).props == d.prop("asked"));
}

TEST_CASE("next_action handles satisfied and unreachable goals") {
  Domain d = toy();
  CHECK(next_action(d, {d.prop("g")}, d.prop("g"), 0, 100, 200) == 100);
  CHECK(next_action(d, {}, d.prop("c"), 0, 100, 200) == 200);
  CHECK(d.action(next_action(d, {}, d.prop("g"), 0, 100, 200)).name == "make_a");
}

TEST_CASE("h_max is admissible on the toy domain") {
  Domain d = toy();
  auto h = h_max(d, {}, d.prop("g"), d.actions_of(0));
  REQUIRE(h.has_value());
  CHECK(*h <= bfs_length(d, {}, d.prop("g"), 0));
  CHECK_FALSE(h_max(d, {}, d.prop("c"), d.actions_of(0)).has_value());
}

TEST_CASE("declaring more than 64 propositions fails") {
  Domain d;
  for (int i = 0; i < 64; ++i) d.declare("p" + std::to_string(i));
  CHECK_THROWS(d.declare("overflow"));
}

TEST_CASE("restaurant domain: plan length equals BFS on sampled initial states") {
  const RestaurantDomain& rd = restaurant_domain();
  const auto pool = GoalPool::standard();
  for (std::size_t i = 0; i < pool.customer.size(); i += 7) {
    for (std::size_t j = 0; j < pool.server.size(); j += 5) {
      const PlanningState s = rd.initial_state(pool.customer[i], pool.server[j]);
      for (int actor : {kCustomer, kServer}) {
        const int expected = bfs_length(rd.domain(), s, rd.goal(), actor);
        const auto p = plan(rd.domain(), s, rd.goal(), actor);
        if (expected < 0) {
          CHECK_FALSE(p.has_value());
        } else {
          REQUIRE(p.has_value());
          CHECK(static_cast<int>(p->size()) == expected);
        }
      }
    }
  }
}
