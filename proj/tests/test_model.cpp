#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "lookahead/model.hpp"

using namespace lookahead;

namespace {

using Vec = std::vector<double>;

// Plain-loop reference implementations over the raw parameter tensors.

Vec matvec(const Tensor& m, const Vec& x) {
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  REQUIRE(cols == x.size());
  Vec y(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) y[i] += m[i * cols + j] * x[j];
  }
  return y;
}

Vec add(Vec a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Vec add(Vec a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Vec cat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec gru(const GruParams& p, const Vec& h, const Vec& x) {
  Vec z = add(add(matvec(p.w_z, x), matvec(p.u_z, h)), p.b_z);
  Vec r = add(add(matvec(p.w_r, x), matvec(p.u_r, h)), p.b_r);
  Vec rh(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) rh[i] = sig(r[i]) * h[i];
  Vec c = add(add(matvec(p.w_h, x), matvec(p.u_h, rh)), p.b_h);
  Vec out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double zi = sig(z[i]);
    out[i] = (1.0 - zi) * h[i] + zi * std::tanh(c[i]);
  }
  return out;
}

Vec embedding_row(const ModelParams& p, TokenId t) {
  const std::size_t d = p.config.embed_dim;
  const auto& e = p.encoder.embedding;
  return Vec(e.data().begin() + t * d, e.data().begin() + (t + 1) * d);
}

struct OracleStates {
  std::vector<Vec> forward, backward, combined, projected;
};

OracleStates oracle_lookahead(const ModelParams& p, const Vec& encoded) {
  const std::size_t k = p.config.lookahead_k, h = p.config.hidden_dim;
  const auto& la = p.lookahead;
  OracleStates s;
  s.forward.push_back(add(matvec(la.adapter_w, encoded), la.adapter_b));
  for (std::size_t i = 1; i < k; ++i) {
    Vec input = matvec(la.projection, cat(s.forward.back(), Vec(h, 0.0)));
    s.forward.push_back(gru(la.la_gru, s.forward.back(), input));
  }
  s.backward.resize(k);
  s.backward[k - 1] = s.forward[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) {
    Vec input = matvec(la.projection, cat(s.forward[i + 1], s.backward[i + 1]));
    s.backward[i] = gru(la.la_gru, s.backward[i + 1], input);
  }
  for (std::size_t i = 0; i < k; ++i) {
    s.combined.push_back(cat(s.forward[i], s.backward[i]));
    s.projected.push_back(matvec(la.projection, s.combined[i]));
  }
  return s;
}

ModelConfig small_config(std::size_t k = 3) {
  ModelConfig c;
  c.vocab_size = 9;
  c.goal_bits = 3;
  c.embed_dim = 4;
  c.goal_dim = 3;
  c.hidden_dim = 5;
  c.lookahead_k = k;
  c.max_decode_len = 6;
  return c;
}

// Random values everywhere, including biases and the classifier.
ModelParams random_params(const ModelConfig& c, std::uint64_t seed, double scale = 0.5) {
  ModelParams p(c);
  std::mt19937_64 rng(seed);
  p.for_each([&](const std::string&, Tensor& t, ParamGroup) { t.randomize(rng, scale); });
  return p;
}

void check_close(std::span<const double> got, const Vec& want, double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

const GoalVector kGoals({1, 0, 1});
const std::vector<Utterance> kHistory = {{Speaker::kA, {4, 5, 2}}, {Speaker::kB, {6, 2}}};
const Utterance kCurrent{Speaker::kA, {7, 8, 4, 2}};

Vec oracle_encode(const ModelParams& p) {
  Vec hg(p.config.goal_dim, 0.0);
  for (std::size_t i = 0; i < kGoals.size(); ++i) {
    hg = gru(p.encoder.goal_gru, hg, {kGoals[i] ? 1.0 : 0.0});
  }
  Vec hu(p.config.hidden_dim, 0.0);
  for (const auto& u : kHistory) {
    Vec mean(p.config.embed_dim, 0.0);
    for (TokenId t : u.tokens) mean = add(mean, embedding_row(p, t));
    for (double& v : mean) v /= static_cast<double>(u.tokens.size());
    hu = gru(p.encoder.hist_gru, hu, mean);
  }
  Vec hc(p.config.hidden_dim, 0.0);
  for (TokenId t : kCurrent.tokens) hc = gru(p.encoder.curr_gru, hc, embedding_row(p, t));
  return cat(cat(hg, hu), hc);
}

Vec oracle_logits(const ModelParams& p, const Vec& h) {
  return matvec(p.encoder.embedding, matvec(p.decoder.output_proj, h));
}

}  // namespace

TEST_CASE("parameter layout and names") {
  ModelParams p = ModelParams::initialize(small_config(), 1);
  std::vector<std::string> names;
  p.for_each([&](const std::string& n, const Tensor&, ParamGroup) { names.push_back(n); });
  CHECK(names.front() == "embedding");
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
  CHECK(p.lookahead.projection.shape() == Shape{5, 10});
  CHECK(p.lookahead.adapter_w.shape() == Shape{5, 13});
  CHECK(p.decoder.r_adapter_w.shape() == Shape{5, 10});
  // Biases and classifier start at zero.
  for (double v : p.encoder.curr_gru.b_z.data()) CHECK(v == 0.0);
  for (double v : p.decoder.classifier_w.data()) CHECK(v == 0.0);
  CHECK(p.parameter_count() > 0);
}

TEST_CASE("initialisation is seeded") {
  auto a = ModelParams::initialize(small_config(), 3);
  auto b = ModelParams::initialize(small_config(), 3);
  auto c = ModelParams::initialize(small_config(), 4);
  CHECK(a.encoder.embedding == b.encoder.embedding);
  CHECK_FALSE(a.encoder.embedding == c.encoder.embedding);
}

TEST_CASE("fan-in initialisation bounds each weight by gain over sqrt(columns)") {
  auto p = ModelParams::initialize_fan_in(small_config(), 5, 2.0);
  auto q = ModelParams::initialize_fan_in(small_config(), 5, 2.0);
  CHECK(p.encoder.embedding == q.encoder.embedding);
  // adapter_w is 5 x 13, so its bound is 2 / sqrt(13).
  double widest = 0.0;
  for (double v : p.lookahead.adapter_w.data()) widest = std::max(widest, std::abs(v));
  CHECK(widest <= 2.0 / std::sqrt(13.0));
  CHECK(widest > 0.5 * 2.0 / std::sqrt(13.0));
  p.for_each([](const std::string& name, const Tensor& t, ParamGroup group) {
    const double bound = 2.0 / std::sqrt(static_cast<double>(t.shape().back()));
    for (double v : t.data()) {
      const std::string leaf = name.substr(name.rfind('.') + 1);
      if (group == ParamGroup::kClassifier || leaf.starts_with("b_") || leaf.ends_with("_b") ||
          leaf == "b")
        CHECK(v == 0.0);
      else
        CHECK(std::abs(v) <= bound);
    }
  });
}

TEST_CASE("GRU step against scalar oracle") {
  ModelParams p = random_params(small_config(), 11);
  Graph g;
  BoundModel m = bind(g, p);
  const Vec h = {0.1, -0.2, 0.3, 0.0, 0.5};
  const Vec x = {0.4, -0.1, 0.2, 0.7};
  Var out = gru_step(m.curr_gru, g.constant({5}, h), g.constant({4}, x));
  check_close(out.value(), gru(p.encoder.curr_gru, h, x));
}

TEST_CASE("encoder output against oracle") {
  ModelParams p = random_params(small_config(), 12);
  Graph g;
  BoundModel m = bind(g, p);
  Var enc = encode_sample(m, kGoals, kHistory, kCurrent);
  CHECK(enc.size() == p.config.encoded_dim());
  check_close(enc.value(), oracle_encode(p));
}

TEST_CASE("empty history encodes to zeros") {
  ModelParams p = random_params(small_config(), 13);
  Graph g;
  BoundModel m = bind(g, p);
  for (double v : encode_history(m, {}).value()) CHECK(v == 0.0);
}

TEST_CASE("goal width is checked") {
  ModelParams p = random_params(small_config(), 13);
  Graph g;
  BoundModel m = bind(g, p);
  CHECK_THROWS_AS(encode_goals(m, GoalVector({1, 0})), ShapeError);
}

TEST_CASE("look-ahead sweeps against unrolled oracle, K=3") {
  ModelParams p = random_params(small_config(3), 14);
  Graph g;
  BoundModel m = bind(g, p);
  const Vec encoded = oracle_encode(p);
  LookaheadStates s = look_ahead(m, g.constant({encoded.size()}, encoded), 3);
  OracleStates o = oracle_lookahead(p, encoded);
  REQUIRE(s.forward.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    check_close(s.forward[k].value(), o.forward[k]);
    check_close(s.backward[k].value(), o.backward[k]);
    check_close(s.combined[k].value(), o.combined[k]);
    check_close(s.projected[k].value(), o.projected[k]);
  }
  // Last backward state is the last forward state, exactly.
  CHECK(s.backward[2].to_vector() == s.forward[2].to_vector());
}

TEST_CASE("K=1: single state whose halves are equal") {
  ModelParams p = random_params(small_config(1), 15);
  Graph g;
  BoundModel m = bind(g, p);
  const Vec encoded = oracle_encode(p);
  LookaheadStates s = look_ahead(m, g.constant({encoded.size()}, encoded), 1);
  REQUIRE(s.combined.size() == 1);
  auto c = s.combined[0].to_vector();
  const std::size_t h = p.config.hidden_dim;
  for (std::size_t i = 0; i < h; ++i) CHECK(c[i] == c[h + i]);
}

TEST_CASE("zero parameters give zero states") {
  ModelParams p(small_config(3));
  Graph g;
  BoundModel m = bind(g, p);
  LookaheadStates s = look_ahead(m, encode_sample(m, kGoals, kHistory, kCurrent), 3);
  for (const auto& c : s.combined) {
    for (double v : c.value()) CHECK(v == 0.0);
  }
}

TEST_CASE("combine puts the forward half first") {
  ModelParams p(small_config(2));
  Graph g;
  BoundModel m = bind(g, p);
  Var f = g.constant({2}, {1, 2});
  Var b = g.constant({2}, {3, 4});
  auto c = combine(m, {f}, {b});
  CHECK(c[0].to_vector() == Vec{1, 2, 3, 4});
  CHECK_THROWS_AS(combine(m, {f, f}, {b}), ShapeError);
}

TEST_CASE("the look-ahead GRU is shared by both sweeps") {
  ModelParams p = random_params(small_config(3), 16);
  const Vec encoded = oracle_encode(p);
  auto backward_first = [&] {
    Graph g;
    BoundModel m = bind(g, p);
    return look_ahead(m, g.constant({encoded.size()}, encoded), 3).backward[0].to_vector();
  };
  const Vec before = backward_first();
  p.lookahead.la_gru.u_z[0] += 0.25;
  CHECK(backward_first() != before);
}

TEST_CASE("attention against the direct formula") {
  ModelParams p = random_params(small_config(3), 17);
  Graph g;
  BoundModel m = bind(g, p);
  const Vec encoded = oracle_encode(p);
  LookaheadStates s = look_ahead(m, g.constant({encoded.size()}, encoded), 3);
  Attention a = attend(m, s.projected, s.combined);

  OracleStates o = oracle_lookahead(p, encoded);
  Vec e;
  for (const auto& proj : o.projected) {
    double score = 0.0;
    for (std::size_t i = 0; i < proj.size(); ++i) score += p.decoder.attention[i] * std::tanh(proj[i]);
    e.push_back(score);
  }
  double z = 0.0;
  for (double x : e) z += std::exp(x);
  Vec v, r(o.combined[0].size(), 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    v.push_back(std::exp(e[k]) / z);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += v[k] * o.combined[k][i];
  }
  check_close(a.weights.value(), v);
  check_close(a.mixed.value(), r);
  double total = 0.0;
  for (double w : a.weights.value()) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("identical states give uniform attention") {
  ModelParams p = random_params(small_config(4), 18);
  Graph g;
  BoundModel m = bind(g, p);
  Var x = g.constant({5}, {0.1, 0.2, 0.3, 0.4, 0.5});
  Var c = g.constant({10}, Vec(10, 0.5));
  Attention a = attend(m, {x, x, x, x}, {c, c, c, c});
  for (double w : a.weights.value()) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(attend(m, {}, {}), ShapeError);
}

TEST_CASE("K=1 attention is exactly [1.0] and r is the single state") {
  ModelParams p = random_params(small_config(1), 19);
  Graph g;
  BoundModel m = bind(g, p);
  LookaheadStates s = look_ahead(m, encode_sample(m, kGoals, kHistory, kCurrent), 1);
  Attention a = attend(m, s.projected, s.combined);
  CHECK(a.weights.to_vector() == Vec{1.0});
  CHECK(a.mixed.to_vector() == s.combined[0].to_vector());
}

TEST_CASE("K=1 reply context equals the seq2seq context bit for bit") {
  ModelParams p = random_params(small_config(1), 20);
  Graph g;
  BoundModel m = bind(g, p);
  Var enc = encode_sample(m, kGoals, kHistory, kCurrent);
  LookaheadStates s = look_ahead(m, enc, 1);
  Var full = reply_context(m, attend(m, s.projected, s.combined).mixed);
  Var plain = seq2seq_context(m, enc);
  CHECK(full.to_vector() == plain.to_vector());
}

TEST_CASE("greedy decoding against a hand-unrolled oracle") {
  ModelParams p = random_params(small_config(2), 21, 1.0);
  Graph g;
  BoundModel m = bind(g, p);
  const Vec ctx = {0.3, -0.4, 0.2, 0.9, -0.6};
  auto tokens = decode_utterance(m, g.constant({5}, ctx), 6);

  Vec h = ctx;
  TokenId prev = Vocabulary::kBos;
  std::vector<TokenId> expected;
  while (expected.size() < 6) {
    h = gru(p.encoder.curr_gru, h, embedding_row(p, prev));
    Vec logits = oracle_logits(p, h);
    prev = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    expected.push_back(prev);
    if (prev == Vocabulary::kEos) break;
  }
  CHECK(tokens == expected);
  CHECK(decode_utterance(m, g.constant({5}, ctx), 6) == tokens);
}

TEST_CASE("decoding stops at EOS when EOS dominates") {
  ModelParams p(small_config(2));
  // hidden -> output_proj -> embedding: make only the EOS row respond.
  for (std::size_t i = 0; i < p.config.embed_dim; ++i) {
    p.encoder.embedding[Vocabulary::kEos * p.config.embed_dim + i] = 1.0;
  }
  for (double& v : p.decoder.output_proj.data()) v = 1.0;
  p.encoder.curr_gru.b_z.data()[0] = 0.0;
  Graph g;
  BoundModel m = bind(g, p);
  auto tokens = decode_utterance(m, g.constant({5}, Vec(5, 1.0)), 6);
  CHECK(tokens == std::vector<TokenId>{Vocabulary::kEos});
}

TEST_CASE("decoding respects max_len") {
  ModelParams p = random_params(small_config(2), 22);
  for (std::size_t i = 0; i < p.config.embed_dim; ++i) {
    p.encoder.embedding[Vocabulary::kEos * p.config.embed_dim + i] = -100.0;
  }
  Graph g;
  BoundModel m = bind(g, p);
  CHECK(decode_utterance(m, g.constant({5}, Vec(5, 0.1)), 3).size() <= 3);
}

TEST_CASE("utterance NLL against oracle") {
  ModelParams p = random_params(small_config(2), 23);
  Graph g;
  BoundModel m = bind(g, p);
  const Vec ctx = {0.1, 0.2, -0.3, 0.0, 0.4};
  const std::vector<TokenId> target = {5, 7, 2};
  const double got = utterance_nll(m, g.constant({5}, ctx), target).item();

  Vec h = ctx;
  TokenId prev = Vocabulary::kBos;
  double nll = 0.0;
  for (TokenId t : target) {
    h = gru(p.encoder.curr_gru, h, embedding_row(p, prev));
    Vec logits = oracle_logits(p, h);
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    nll += std::log(z) - logits[t];
    prev = t;
  }
  CHECK(got == doctest::Approx(nll).epsilon(1e-12));
}

TEST_CASE("weight tying: one embedding row feeds encoder and output") {
  ModelParams p = random_params(small_config(2), 24);
  auto probe = [&] {
    Graph g;
    BoundModel m = bind(g, p);
    Vec enc = encode_current(m, {7, 2}).to_vector();
    Vec logits = token_logits(m, g.constant({5}, Vec(5, 0.3))).to_vector();
    return std::make_pair(enc, logits);
  };
  auto [enc0, log0] = probe();
  p.encoder.embedding[7 * p.config.embed_dim] += 0.5;
  auto [enc1, log1] = probe();
  CHECK(enc0 != enc1);
  CHECK(log0[7] != log1[7]);
  CHECK(log0[6] == log1[6]);
}

TEST_CASE("completion probability") {
  ModelParams p = random_params(small_config(2), 25);
  std::fill(p.decoder.classifier_w.data().begin(), p.decoder.classifier_w.data().end(), 0.0);
  p.decoder.classifier_b[0] = 0.0;
  CHECK(completion_probability(p, {4, 2}, {5, 2}) == 0.5);
  p.decoder.classifier_b[0] = 1e3;
  CHECK(completion_probability(p, {4, 2}, {5, 2}) == doctest::Approx(1.0));

  ModelParams q = random_params(small_config(2), 26);
  Vec hc(5, 0.0), hr(5, 0.0);
  for (TokenId t : {4, 2}) hc = gru(q.encoder.curr_gru, hc, embedding_row(q, t));
  for (TokenId t : {5, 6, 2}) hr = gru(q.encoder.curr_gru, hr, embedding_row(q, t));
  Vec feats = cat(hc, hr);
  double logit = q.decoder.classifier_b[0];
  for (std::size_t i = 0; i < feats.size(); ++i) logit += q.decoder.classifier_w[i] * feats[i];
  CHECK(completion_probability(q, {4, 2}, {5, 6, 2}) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-logit))).epsilon(1e-12));
}

TEST_CASE("generate_reply is deterministic and reports attention") {
  ModelParams p = random_params(small_config(3), 27);
  Reply a = generate_reply(p, kGoals, kHistory, kCurrent);
  Reply b = generate_reply(p, kGoals, kHistory, kCurrent);
  CHECK(a.tokens == b.tokens);
  CHECK(a.done_prob == b.done_prob);
  CHECK(a.attention.size() == 3);
  CHECK(!a.tokens.empty());
  CHECK(a.tokens.size() <= p.config.max_decode_len);
}
