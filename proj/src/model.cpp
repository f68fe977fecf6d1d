#include "lookahead/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lookahead {

GruParams::GruParams(std::size_t in_dim, std::size_t hidden_dim)
    : w_z({hidden_dim, in_dim}),
      u_z({hidden_dim, hidden_dim}),
      b_z({hidden_dim}),
      w_r({hidden_dim, in_dim}),
      u_r({hidden_dim, hidden_dim}),
      b_r({hidden_dim}),
      w_h({hidden_dim, in_dim}),
      u_h({hidden_dim, hidden_dim}),
      b_h({hidden_dim}) {}

ModelParams::ModelParams(const ModelConfig& c) : config(c) {
  if (c.vocab_size <= Vocabulary::kReserved) throw std::invalid_argument("vocabulary too small");
  if (c.lookahead_k == 0) throw std::invalid_argument("lookahead_k must be at least 1");
  const std::size_t h = c.hidden_dim;
  encoder.embedding = Tensor({c.vocab_size, c.embed_dim});
  encoder.goal_gru = GruParams(1, c.goal_dim);
  encoder.hist_gru = GruParams(c.embed_dim, h);
  encoder.curr_gru = GruParams(c.embed_dim, h);
  lookahead.adapter_w = Tensor({h, c.encoded_dim()});
  lookahead.adapter_b = Tensor({h});
  lookahead.la_gru = GruParams(h, h);
  lookahead.projection = Tensor({h, c.state_dim()});
  decoder.attention = Tensor({h});
  decoder.r_adapter_w = Tensor({h, c.state_dim()});
  decoder.r_adapter_b = Tensor({h});
  decoder.output_proj = Tensor({c.embed_dim, h});
  decoder.classifier_w = Tensor({2 * h});
  decoder.classifier_b = Tensor({1});
}

namespace {

template <typename Gru, typename F>
void visit_gru(const std::string& prefix, Gru& g, ParamGroup group, F&& f) {
  f(prefix + ".w_z", g.w_z, group);
  f(prefix + ".u_z", g.u_z, group);
  f(prefix + ".b_z", g.b_z, group);
  f(prefix + ".w_r", g.w_r, group);
  f(prefix + ".u_r", g.u_r, group);
  f(prefix + ".b_r", g.b_r, group);
  f(prefix + ".w_h", g.w_h, group);
  f(prefix + ".u_h", g.u_h, group);
  f(prefix + ".b_h", g.b_h, group);
}

template <typename Params, typename F>
void visit_all(Params& p, F&& f) {
  using G = ParamGroup;
  f("embedding", p.encoder.embedding, G::kLanguageModel);
  visit_gru("goal_gru", p.encoder.goal_gru, G::kLookahead, f);
  visit_gru("hist_gru", p.encoder.hist_gru, G::kLookahead, f);
  visit_gru("curr_gru", p.encoder.curr_gru, G::kLanguageModel, f);
  f("lookahead.adapter_w", p.lookahead.adapter_w, G::kLookahead);
  f("lookahead.adapter_b", p.lookahead.adapter_b, G::kLookahead);
  visit_gru("lookahead.gru", p.lookahead.la_gru, G::kLookahead, f);
  f("lookahead.projection", p.lookahead.projection, G::kLookahead);
  f("decoder.attention", p.decoder.attention, G::kLookahead);
  f("decoder.r_adapter_w", p.decoder.r_adapter_w, G::kLookahead);
  f("decoder.r_adapter_b", p.decoder.r_adapter_b, G::kLookahead);
  f("decoder.output_proj", p.decoder.output_proj, G::kLanguageModel);
  f("classifier.w", p.decoder.classifier_w, G::kClassifier);
  f("classifier.b", p.decoder.classifier_b, G::kClassifier);
}

bool is_bias(const std::string& name) {
  auto dot = name.rfind('.');
  std::string_view leaf = dot == std::string::npos ? std::string_view(name)
                                                   : std::string_view(name).substr(dot + 1);
  return leaf.starts_with("b_") || leaf.ends_with("_b") || leaf == "b";
}

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed, double scale) {
  ModelParams p(config);
  std::mt19937_64 rng(seed);
  p.for_each([&](const std::string& name, Tensor& t, ParamGroup group) {
    // Classifier starts at exactly 0.5 so an untrained one never signals
    // completion.
    if (group == ParamGroup::kClassifier || is_bias(name)) return;
    t.randomize(rng, scale);
  });
  return p;
}

ModelParams ModelParams::initialize_fan_in(const ModelConfig& config, std::uint64_t seed,
                                          double gain) {
  ModelParams p(config);
  std::mt19937_64 rng(seed);
  p.for_each([&](const std::string& name, Tensor& t, ParamGroup group) {
    if (group == ParamGroup::kClassifier || is_bias(name)) return;
    const double fan_in = static_cast<double>(t.shape().back());
    t.randomize(rng, gain / std::sqrt(fan_in));
  });
  return p;
}

void ModelParams::for_each(const Visitor& visit) {
  visit_all(*this, [&](const std::string& n, Tensor& t, ParamGroup g) { visit(n, t, g); });
}

void ModelParams::for_each(const ConstVisitor& visit) const {
  visit_all(*this, [&](const std::string& n, const Tensor& t, ParamGroup g) { visit(n, t, g); });
}

void ModelParams::zero_grad() {
  for_each([](const std::string&, Tensor& t, ParamGroup) { t.zero_grad(); });
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t, ParamGroup) { n += t.size(); });
  return n;
}

// ---------------------------------------------------------------------------
// Binding

namespace {

template <typename Gru, typename Leaf>
BoundGru bind_gru(Gru& g, Leaf&& leaf) {
  BoundGru b;
  b.w_z = leaf(g.w_z);
  b.u_z = leaf(g.u_z);
  b.b_z = leaf(g.b_z);
  b.w_r = leaf(g.w_r);
  b.u_r = leaf(g.u_r);
  b.b_r = leaf(g.b_r);
  b.w_h = leaf(g.w_h);
  b.u_h = leaf(g.u_h);
  b.b_h = leaf(g.b_h);
  b.hidden = g.hidden_dim();
  return b;
}

template <typename Params, typename LeafFor>
BoundModel bind_impl(Graph& graph, Params& p, LeafFor&& leaf_for) {
  using G = ParamGroup;
  BoundModel m;
  m.graph = &graph;
  m.config = &p.config;
  auto lm = leaf_for(G::kLanguageModel);
  auto la = leaf_for(G::kLookahead);
  auto cl = leaf_for(G::kClassifier);
  m.embedding = lm(p.encoder.embedding);
  m.goal_gru = bind_gru(p.encoder.goal_gru, la);
  m.hist_gru = bind_gru(p.encoder.hist_gru, la);
  m.curr_gru = bind_gru(p.encoder.curr_gru, lm);
  m.adapter_w = la(p.lookahead.adapter_w);
  m.adapter_b = la(p.lookahead.adapter_b);
  m.la_gru = bind_gru(p.lookahead.la_gru, la);
  m.projection = la(p.lookahead.projection);
  m.attention = la(p.decoder.attention);
  m.r_adapter_w = la(p.decoder.r_adapter_w);
  m.r_adapter_b = la(p.decoder.r_adapter_b);
  m.output_proj = lm(p.decoder.output_proj);
  m.classifier_w = cl(p.decoder.classifier_w);
  m.classifier_b = cl(p.decoder.classifier_b);
  return m;
}

}  // namespace

BoundModel bind(Graph& graph, ModelParams& params, GroupMask trainable) {
  return bind_impl(graph, params, [&](ParamGroup group) {
    const bool train = in_mask(trainable, group);
    return [&graph, train](Tensor& t) { return graph.param(t, train); };
  });
}

BoundModel bind(Graph& graph, const ModelParams& params) {
  return bind_impl(graph, params, [&](ParamGroup) {
    return [&graph](const Tensor& t) { return graph.param(t); };
  });
}

// ---------------------------------------------------------------------------
// Encoders

Var gru_step(const BoundGru& p, Var h_prev, Var x) {
  Graph& g = *h_prev.graph();
  if (h_prev.size() != p.hidden) throw ShapeError("gru_step: hidden state has the wrong size");
  Var z = g.sigmoid(g.add(g.add(g.matmul(p.w_z, x), g.matmul(p.u_z, h_prev)), p.b_z));
  Var r = g.sigmoid(g.add(g.add(g.matmul(p.w_r, x), g.matmul(p.u_r, h_prev)), p.b_r));
  Var candidate =
      g.tanh(g.add(g.add(g.matmul(p.w_h, x), g.matmul(p.u_h, g.mul(r, h_prev))), p.b_h));
  // (1 - z) * h + z * candidate
  return g.add(h_prev, g.mul(z, g.sub(candidate, h_prev)));
}

Var encode_goals(const BoundModel& m, const GoalVector& goals) {
  Graph& g = *m.graph;
  if (goals.size() != m.config->goal_bits) {
    throw ShapeError("goal vector has " + std::to_string(goals.size()) + " bits, model expects " +
                     std::to_string(m.config->goal_bits));
  }
  Var h = g.zeros(m.goal_gru.hidden);
  for (std::size_t i = 0; i < goals.size(); ++i) {
    h = gru_step(m.goal_gru, h, g.constant({1}, {goals[i] ? 1.0 : 0.0}));
  }
  return h;
}

namespace {

Var mean_embedding(const BoundModel& m, const std::vector<TokenId>& tokens) {
  std::vector<Var> rows;
  rows.reserve(tokens.size());
  for (TokenId t : tokens) rows.push_back(m.graph->row(m.embedding, t));
  return m.graph->mean(rows);
}

}  // namespace

Var encode_history(const BoundModel& m, const std::vector<Utterance>& history) {
  Graph& g = *m.graph;
  Var h = g.zeros(m.hist_gru.hidden);
  for (const auto& u : history) {
    if (u.tokens.empty()) throw std::invalid_argument("history utterance without tokens");
    h = gru_step(m.hist_gru, h, mean_embedding(m, u.tokens));
  }
  return h;
}

Var encode_current(const BoundModel& m, const std::vector<TokenId>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("cannot encode an empty utterance");
  Graph& g = *m.graph;
  Var h = g.zeros(m.curr_gru.hidden);
  for (TokenId t : tokens) h = gru_step(m.curr_gru, h, g.row(m.embedding, t));
  return h;
}

Var encode_sample(const BoundModel& m, const GoalVector& goals,
                  const std::vector<Utterance>& history, const Utterance& current) {
  const Var parts[] = {encode_goals(m, goals), encode_history(m, history),
                       encode_current(m, current.tokens)};
  return m.graph->concat(parts);
}

// ---------------------------------------------------------------------------
// Look-ahead

Var initial_forward_state(const BoundModel& m, Var encoded) {
  Graph& g = *m.graph;
  return g.add(g.matmul(m.adapter_w, encoded), m.adapter_b);
}

std::vector<Var> forward_sweep(const BoundModel& m, Var h1, std::size_t k) {
  if (k == 0) throw std::invalid_argument("look-ahead horizon must be at least 1");
  Graph& g = *m.graph;
  std::vector<Var> states{h1};
  if (k == 1) return states;
  const Var empty_backward = g.zeros(m.la_gru.hidden);
  for (std::size_t i = 1; i < k; ++i) {
    const Var prev[] = {states.back(), empty_backward};
    Var input = g.matmul(m.projection, g.concat(prev));
    states.push_back(gru_step(m.la_gru, states.back(), input));
  }
  return states;
}

std::vector<Var> backward_sweep(const BoundModel& m, const std::vector<Var>& forward) {
  if (forward.empty()) throw std::invalid_argument("backward sweep needs forward states");
  Graph& g = *m.graph;
  const std::size_t k = forward.size();
  std::vector<Var> states(k);
  states[k - 1] = forward[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) {
    const Var next[] = {forward[i + 1], states[i + 1]};
    Var input = g.matmul(m.projection, g.concat(next));
    states[i] = gru_step(m.la_gru, states[i + 1], input);
  }
  return states;
}

std::vector<Var> combine(const BoundModel& m, const std::vector<Var>& forward,
                         const std::vector<Var>& backward) {
  if (forward.size() != backward.size()) throw ShapeError("combine: sweep lengths differ");
  std::vector<Var> out;
  out.reserve(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) {
    const Var halves[] = {forward[i], backward[i]};
    out.push_back(m.graph->concat(halves));
  }
  return out;
}

LookaheadStates look_ahead(const BoundModel& m, Var encoded, std::size_t k) {
  LookaheadStates s;
  s.forward = forward_sweep(m, initial_forward_state(m, encoded), k);
  s.backward = backward_sweep(m, s.forward);
  s.combined = combine(m, s.forward, s.backward);
  for (Var c : s.combined) s.projected.push_back(m.graph->matmul(m.projection, c));
  return s;
}

// ---------------------------------------------------------------------------
// Decoder

Attention attend(const BoundModel& m, const std::vector<Var>& projected,
                 const std::vector<Var>& combined) {
  if (projected.empty() || projected.size() != combined.size()) {
    throw ShapeError("attention needs one projected state per combined state");
  }
  Graph& g = *m.graph;
  std::vector<Var> scores;
  scores.reserve(projected.size());
  for (Var p : projected) scores.push_back(g.dot(m.attention, g.tanh(p)));
  Attention out;
  out.weights = g.softmax(g.concat(scores));
  out.mixed = g.scale(g.element(out.weights, 0), combined[0]);
  for (std::size_t i = 1; i < combined.size(); ++i) {
    out.mixed = g.add(out.mixed, g.scale(g.element(out.weights, i), combined[i]));
  }
  return out;
}

Var reply_context(const BoundModel& m, Var r) {
  Graph& g = *m.graph;
  return g.add(g.matmul(m.r_adapter_w, r), m.r_adapter_b);
}

Var seq2seq_context(const BoundModel& m, Var encoded) {
  Var h1 = initial_forward_state(m, encoded);
  const Var both[] = {h1, h1};
  return reply_context(m, m.graph->concat(both));
}

Var token_logits(const BoundModel& m, Var hidden) {
  Graph& g = *m.graph;
  return g.matmul(m.embedding, g.matmul(m.output_proj, hidden));
}

Var utterance_nll(const BoundModel& m, Var context, const std::vector<TokenId>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("cannot score an empty utterance");
  Graph& g = *m.graph;
  Var h = context;
  TokenId prev = Vocabulary::kBos;
  Var total;
  for (TokenId target : tokens) {
    h = gru_step(m.curr_gru, h, g.row(m.embedding, prev));
    Var nll = g.cross_entropy(token_logits(m, h), target);
    total = total.valid() ? g.add(total, nll) : nll;
    prev = target;
  }
  return total;
}

std::vector<TokenId> decode_utterance(const BoundModel& m, Var context, std::size_t max_len) {
  Graph& g = *m.graph;
  std::vector<TokenId> out;
  Var h = context;
  TokenId prev = Vocabulary::kBos;
  while (out.size() < max_len) {
    h = gru_step(m.curr_gru, h, g.row(m.embedding, prev));
    auto logits = token_logits(m, h).value();
    prev = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    out.push_back(prev);
    if (prev == Vocabulary::kEos) break;
  }
  return out;
}

Var completion_logit(const BoundModel& m, Var encoded_current,
                     const std::vector<TokenId>& reply) {
  Graph& g = *m.graph;
  const Var features[] = {encoded_current, encode_current(m, reply)};
  return g.add(g.dot(m.classifier_w, g.concat(features)), m.classifier_b);
}

// ---------------------------------------------------------------------------
// Inference

Reply generate_reply(const ModelParams& params, const GoalVector& goals,
                     const std::vector<Utterance>& history, const Utterance& current) {
  Graph g;
  BoundModel m = bind(g, params);
  Var hc = encode_current(m, current.tokens);
  const Var parts[] = {encode_goals(m, goals), encode_history(m, history), hc};
  Var encoded = g.concat(parts);
  LookaheadStates states = look_ahead(m, encoded, params.config.lookahead_k);
  Attention att = attend(m, states.projected, states.combined);
  Reply reply;
  reply.tokens = decode_utterance(m, reply_context(m, att.mixed), params.config.max_decode_len);
  reply.done_prob = stable_sigmoid(completion_logit(m, hc, reply.tokens).item());
  reply.attention = att.weights.to_vector();
  return reply;
}

double completion_probability(const ModelParams& params, const std::vector<TokenId>& current,
                              const std::vector<TokenId>& reply) {
  Graph g;
  BoundModel m = bind(g, params);
  return stable_sigmoid(completion_logit(m, encode_current(m, current), reply).item());
}

}  // namespace lookahead
