#include "lookahead/datagen.hpp"

#include <cctype>
#include <stdexcept>

#include <json.hpp>

namespace lookahead {

namespace {

constexpr std::array<std::string_view, kOptionCount> kSlugs = {"table", "bar", "bigger", "pricier",
                                                              "time"};

bool bit(const GoalVector& g, std::size_t i) {
  if (g.size() != kGoalBits) throw std::invalid_argument("restaurant goal vectors have 6 bits");
  return g[i];
}

// Template text per action name. Slots: {people}, {time}, {alt}.
struct TemplateSet {
  std::string_view action;
  std::vector<std::string> lines;
};

std::vector<std::string> templates_for(std::string_view action) {
  static const std::vector<TemplateSet> kTemplates = {
      {"request_table",
       {"may i reserve a table for {people} people at {time} tomorrow ?",
        "can you help me book a table for {people} people at {time} ?",
        "i would like a table for {people} at {time} please ."}},
      {"ask_bar",
       {"can we sit at the bar then ?", "can i reserve the seats at the bar instead ?",
        "is there room at the bar ?"}},
      {"ask_bigger",
       {"in this case , can i reserve a bigger table ?", "could we get a bigger table ?",
        "do you have a larger room ?"}},
      {"ask_pricier",
       {"can i have more expensive tables then ?", "i can pay more for a better table .",
        "is there a premium table available ?"}},
      {"ask_time",
       {"could we come at {alt} instead ?", "is {alt} possible then ?", "what about {alt} ?"}},
      {"accept", {"i want that .", "great , i will take it .", "that works for me ."}},
      {"say_bye", {"bye .", "thanks , bye .", "perfect , bye ."}},
      {"give_up", {"never mind then , bye .", "that does not work for me , bye ."}},
      {"offer_table", {"yes , we have a table for you .", "sure , a table is available ."}},
      {"offer_bar", {"yes , there are seats at the bar .", "sure , the bar has room for you ."}},
      {"offer_bigger",
       {"yes , we have vip rooms but more expensive .", "we can give you a bigger table ."}},
      {"offer_pricier",
       {"yes , we have premium tables at a higher price .", "sure , a better table costs more ."}},
      {"offer_time", {"yes , {alt} is free .", "sure , we have a table at {alt} ."}},
      {"refuse_table",
       {"sorry , we do not have a table at this point .", "sorry , we are fully booked then ."}},
      {"refuse_bar",
       {"we do not have a bar in the restaurant .", "sorry , the bar is not available ."}},
      {"refuse_bigger", {"sorry , there is no bigger table .", "our vip rooms are taken ."}},
      {"refuse_pricier",
       {"my apologies , we are required not to do that .", "sorry , we can not raise the price ."}},
      {"refuse_time", {"sorry , {alt} is also full .", "no , {alt} does not work either ."}},
      {"propose_table", {"we do have a regular table for you .", "a regular table just opened up ."}},
      {"propose_bar", {"how about a seat at the bar ?", "would the bar work for you ?"}},
      {"propose_bigger", {"how about a bigger table ?", "we could offer you a vip room ."}},
      {"propose_pricier",
       {"how about a premium table at a higher price ?", "a better table is free if you pay more ."}},
      {"propose_time", {"how about {alt} instead ?", "we could seat you at {alt} ."}},
      {"confirm", {"ok . {deal}", "done , see you then . {deal}", "ok , it is booked . {deal}"}},
      {"server_bye", {"see you , bye .", "thank you , bye ."}},
      {"server_end", {"sorry , we can not help you . bye .", "sorry , nothing is free . bye ."}},
  };
  for (const auto& t : kTemplates) {
    if (t.action == action) return t.lines;
  }
  throw std::logic_error("no templates for " + std::string(action));
}

void replace_all(std::string& text, std::string_view from, std::string_view to) {
  for (std::size_t pos = text.find(from); pos != std::string::npos;
       pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
}

}  // namespace

std::string_view option_slug(Option o) { return kSlugs[static_cast<std::size_t>(o)]; }

std::optional<Option> parse_option(std::string_view slug) {
  for (auto o : kAllOptions) {
    if (option_slug(o) == slug) return o;
  }
  return std::nullopt;
}

const std::array<std::string_view, kGoalBits>& goal_labels(int role) {
  static const std::array<std::string_view, kGoalBits> customer = {
      "accepts a bar seat",       "accepts a bigger room",  "accepts a higher price",
      "accepts another time",     "large party",            "early time slot"};
  static const std::array<std::string_view, kGoalBits> server = {
      "early table free",         "late table free",        "has a bar",
      "VIP room free",            "may raise the price",    "seats large parties"};
  return role == kCustomer ? customer : server;
}

bool customer_accepts(Option o, const GoalVector& c) {
  switch (o) {
    case Option::kTable:
      return true;
    case Option::kBar:
      return bit(c, customer_bit::kAcceptsBar);
    case Option::kBigger:
      return bit(c, customer_bit::kAcceptsBigger);
    case Option::kPricier:
      return bit(c, customer_bit::kAcceptsPricier);
    case Option::kTime:
      return bit(c, customer_bit::kAcceptsOtherTime);
  }
  return false;
}

bool server_provides(Option o, const GoalVector& c, const GoalVector& s) {
  const bool large = bit(c, customer_bit::kLargeParty);
  const bool early = bit(c, customer_bit::kEarlySlot);
  const bool party_ok = !large || bit(s, server_bit::kSeatsLargeParties);
  const bool slot_free = early ? bit(s, server_bit::kEarlyTableFree) : bit(s, server_bit::kLateTableFree);
  const bool other_free = early ? bit(s, server_bit::kLateTableFree) : bit(s, server_bit::kEarlyTableFree);
  switch (o) {
    case Option::kTable:
      return slot_free && party_ok;
    case Option::kBar:
      return bit(s, server_bit::kHasBar) && !large;
    case Option::kBigger:
      return bit(s, server_bit::kVipRoomFree);
    case Option::kPricier:
      return bit(s, server_bit::kMayRaisePrice) && party_ok;
    case Option::kTime:
      return other_free && party_ok;
  }
  return false;
}

bool compatible(Option o, const GoalVector& c, const GoalVector& s) {
  return customer_accepts(o, c) && server_provides(o, c, s);
}

std::string agreement_marker(Option o) { return "deal_" + std::string(option_slug(o)); }

std::optional<Option> agreed_option(const std::vector<Turn>& turns) {
  std::optional<Option> found;
  for (const auto& turn : turns) {
    if (turn.speaker != Speaker::kB) continue;
    for (const auto& token : tokenize(turn.text)) {
      if (token.rfind("deal_", 0) == 0) {
        if (auto o = parse_option(std::string_view(token).substr(5))) found = o;
      }
    }
  }
  return found;
}

int agreement_oracle(const GoalVector& customer, const GoalVector& server,
                     const std::vector<Turn>& turns) {
  auto o = agreed_option(turns);
  return o && compatible(*o, customer, server) ? 1 : 0;
}

bool is_farewell(std::string_view text) {
  for (const auto& token : tokenize(text)) {
    if (token == "bye") return true;
  }
  return false;
}

GoalPool GoalPool::standard() {
  GoalPool pool;
  for (unsigned v = 0; v < (1U << kGoalBits); ++v) {
    std::vector<std::uint8_t> bits(kGoalBits);
    for (std::size_t i = 0; i < kGoalBits; ++i) bits[i] = (v >> i) & 1U;
    pool.customer.emplace_back(bits);
    pool.server.emplace_back(bits);
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Domain

RestaurantDomain::RestaurantDomain() {
  Domain& d = domain_;
  // Customer-private propositions derived from its goal vector.
  for (auto o : kAllOptions) d.declare("acc_" + std::string(option_slug(o)));
  // Server-private propositions derived from its goal vector and the
  // party/time facts the customer reveals with its first request.
  for (auto o : kAllOptions) d.declare("can_" + std::string(option_slug(o)));
  for (auto o : kAllOptions) d.declare("cannot_" + std::string(option_slug(o)));
  // Public dialogue facts.
  d.declare("fresh");
  d.declare("requested");
  d.declare("undecided");
  d.declare("free");
  for (auto o : kAllOptions) {
    const std::string s(option_slug(o));
    if (o != Option::kTable) d.declare("untried_" + s);
    d.declare("asked_" + s);
    d.declare("offered_" + s);
    d.declare("unoffered_" + s);
    d.declare("accepted_" + s);
  }
  d.declare("reserved");
  d.declare("closed");
  goal_ = d.prop("reserved");

  auto p = [&](const std::string& name) { return d.prop(name); };

  for (auto o : kAllOptions) {
    const std::string s(option_slug(o));
    // Customer asks; it anticipates an offer in reply.
    PlannerAction ask;
    ask.actor = kCustomer;
    if (o == Option::kTable) {
      ask.name = "request_table";
      ask.pre = p("fresh");
      ask.del = p("fresh") | p("free");
    } else {
      ask.name = "ask_" + s;
      ask.pre = p("requested") | p("acc_" + s) | p("untried_" + s);
      ask.del = p("untried_" + s) | p("free");
    }
    ask.add = p("asked_" + s) | p("offered_" + s);
    if (o == Option::kTable) ask.add |= p("requested");
    ask.expected = p("offered_" + s);
    ask.templates = templates_for(ask.name);
    d.add_action(ask);

    // Customer accepts an offer; it anticipates the reservation.
    PlannerAction accept;
    accept.name = "accept_" + s;
    accept.actor = kCustomer;
    accept.pre = p("offered_" + s) | p("acc_" + s) | p("undecided");
    accept.add = p("accepted_" + s) | p("reserved");
    accept.del = p("undecided");
    accept.expected = p("reserved");
    accept.templates = templates_for("accept");
    d.add_action(accept);

    // Server answers a pending question, positively or not.
    PlannerAction offer;
    offer.name = "offer_" + s;
    offer.actor = kServer;
    offer.pre = p("asked_" + s) | p("can_" + s);
    offer.add = p("offered_" + s) | p("free") | p("accepted_" + s);
    offer.del = p("asked_" + s) | p("unoffered_" + s);
    offer.expected = p("accepted_" + s);
    offer.templates = templates_for(offer.name);
    d.add_action(offer);

    PlannerAction refuse;
    refuse.name = "refuse_" + s;
    refuse.actor = kServer;
    refuse.pre = p("asked_" + s) | p("cannot_" + s);
    refuse.add = p("free");
    refuse.del = p("asked_" + s);
    refuse.templates = templates_for(refuse.name);
    d.add_action(refuse);

    // Server suggests something on its own when no question is pending.
    PlannerAction propose;
    propose.name = "propose_" + s;
    propose.actor = kServer;
    propose.pre = p("free") | p("can_" + s) | p("unoffered_" + s);
    propose.add = p("offered_" + s) | p("accepted_" + s);
    propose.del = p("unoffered_" + s);
    propose.expected = p("accepted_" + s);
    propose.templates = templates_for(propose.name);
    d.add_action(propose);

    PlannerAction confirm;
    confirm.name = "confirm_" + s;
    confirm.actor = kServer;
    confirm.pre = p("accepted_" + s) | p("can_" + s);
    confirm.add = p("reserved");
    confirm.del = p("accepted_" + s);
    confirm.templates = templates_for("confirm");
    for (auto& line : confirm.templates) replace_all(line, "{deal}", agreement_marker(o));
    d.add_action(confirm);
  }

  for (auto [name, actor] : {std::pair{"say_bye", kCustomer}, std::pair{"give_up", kCustomer},
                             std::pair{"server_bye", kServer}, std::pair{"server_end", kServer}}) {
    PlannerAction end;
    end.name = name;
    end.actor = actor;
    end.add = p("closed");
    end.templates = templates_for(name);
    d.add_action(end);
  }

  say_bye_ = d.action_index("say_bye");
  give_up_ = d.action_index("give_up");
  server_bye_ = d.action_index("server_bye");
  server_end_ = d.action_index("server_end");
  for (auto o : kAllOptions) {
    confirm_[static_cast<std::size_t>(o)] = d.action_index("confirm_" + std::string(option_slug(o)));
  }
}

PlanningState RestaurantDomain::initial_state(const GoalVector& customer,
                                              const GoalVector& server) const {
  const Domain& d = domain_;
  PropMask props = d.props({"fresh", "undecided", "free"});
  for (auto o : kAllOptions) {
    const std::string s(option_slug(o));
    if (customer_accepts(o, customer)) props |= d.prop("acc_" + s);
    props |= d.prop(server_provides(o, customer, server) ? "can_" + s : "cannot_" + s);
    props |= d.prop("unoffered_" + s);
    if (o != Option::kTable) props |= d.prop("untried_" + s);
  }
  return {props};
}

std::optional<Option> RestaurantDomain::confirms(std::size_t action) const {
  for (auto o : kAllOptions) {
    if (confirm_[static_cast<std::size_t>(o)] == action) return o;
  }
  return std::nullopt;
}

bool RestaurantDomain::ends_dialogue(std::size_t action) const {
  return action == say_bye_ || action == give_up_ || action == server_bye_ || action == server_end_;
}

SurfaceSlots RestaurantDomain::draw_slots(const GoalVector& customer, std::mt19937_64& rng) const {
  const bool large = bit(customer, customer_bit::kLargeParty);
  const bool early = bit(customer, customer_bit::kEarlySlot);
  static constexpr std::array<const char*, 2> kSmall = {"2", "4"};
  static constexpr std::array<const char*, 2> kLarge = {"6", "8"};
  SurfaceSlots slots;
  slots.people = (large ? kLarge : kSmall)[rng() % 2];
  slots.time = early ? "17" : "19";
  slots.alt_time = early ? "19" : "17";
  return slots;
}

std::string RestaurantDomain::realize(std::size_t action, const SurfaceSlots& slots,
                                      std::mt19937_64& rng) const {
  const auto& lines = domain_.action(action).templates;
  std::string text = lines[rng() % lines.size()];
  replace_all(text, "{people}", slots.people);
  replace_all(text, "{time}", slots.time);
  replace_all(text, "{alt}", slots.alt_time);
  return text;
}

const RestaurantDomain& restaurant_domain() {
  static const RestaurantDomain domain;
  return domain;
}

// ---------------------------------------------------------------------------
// Generation

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DialogueSession generate_dialogue(const GoalVector& customer, const GoalVector& server,
                                  std::uint64_t seed, std::size_t max_turns,
                                  PlannerTrace* trace) {
  const RestaurantDomain& rd = restaurant_domain();
  const Domain& d = rd.domain();
  std::mt19937_64 rng(seed);
  const SurfaceSlots slots = rd.draw_slots(customer, rng);

  DialogueSession session;
  session.goals_a = customer;
  session.goals_b = server;
  PlanningState state = rd.initial_state(customer, server);
  std::optional<Option> agreed;
  int actor = kCustomer;
  for (std::size_t turn = 0; turn < max_turns; ++turn) {
    const std::size_t action =
        next_action(d, state, rd.goal(), actor, rd.on_satisfied(actor), rd.on_unreachable(actor));
    if (trace != nullptr) {
      trace->states.push_back(state);
      trace->actions.push_back(action);
    }
    session.turns.push_back({actor == kCustomer ? Speaker::kA : Speaker::kB,
                             rd.realize(action, slots, rng)});
    state = d.execute(state, d.action(action));
    if (auto o = rd.confirms(action)) agreed = o;
    if (rd.ends_dialogue(action)) break;
    actor = actor == kCustomer ? kServer : kCustomer;
  }
  session.outcome =
      state.holds(rd.goal()) && agreed && compatible(*agreed, customer, server) ? 1 : 0;
  return session;
}

std::string CorpusStats::to_json() const {
  nlohmann::ordered_json j = {
      {"number_of_dialogues", dialogues},
      {"average_turns_per_dialogue", avg_turns},
      {"average_words_per_turn", avg_words_per_turn},
      {"number_of_words", words},
      {"percent_goal_achieved", pct_goal_achieved},
  };
  return j.dump(2);
}

CorpusStats corpus_stats(const std::vector<DialogueSession>& sessions) {
  CorpusStats stats;
  stats.dialogues = sessions.size();
  std::size_t turns = 0, achieved = 0;
  for (const auto& s : sessions) {
    turns += s.turns.size();
    achieved += s.outcome == 1 ? 1 : 0;
    for (const auto& t : s.turns) {
      for (const auto& token : tokenize(t.text)) {
        const auto ch = static_cast<unsigned char>(token[0]);
        if (token.size() > 1 || std::isalnum(ch) || ch == '_') ++stats.words;
      }
    }
  }
  if (stats.dialogues > 0) {
    stats.avg_turns = static_cast<double>(turns) / static_cast<double>(stats.dialogues);
    stats.pct_goal_achieved =
        100.0 * static_cast<double>(achieved) / static_cast<double>(stats.dialogues);
  }
  if (turns > 0) stats.avg_words_per_turn = static_cast<double>(stats.words) / static_cast<double>(turns);
  return stats;
}

GeneratedCorpus generate_corpus(std::size_t n_dialogues, std::uint64_t seed, const GoalPool& pool,
                                std::size_t max_turns) {
  if (n_dialogues == 0) throw std::invalid_argument("generate_corpus needs n >= 1");
  if (pool.customer.empty() || pool.server.empty()) throw std::invalid_argument("empty goal pool");
  GeneratedCorpus out;
  out.sessions.reserve(n_dialogues);
  for (std::size_t i = 0; i < n_dialogues; ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const GoalVector& a = pool.customer[rng() % pool.customer.size()];
    const GoalVector& b = pool.server[rng() % pool.server.size()];
    out.sessions.push_back(generate_dialogue(a, b, rng(), max_turns));
  }
  out.stats = corpus_stats(out.sessions);
  return out;
}

}  // namespace lookahead
