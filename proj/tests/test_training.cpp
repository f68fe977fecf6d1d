#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <utility>

#include "doctest.h"
#include "fd.hpp"
#include "lookahead/datagen.hpp"
#include "lookahead/training.hpp"

using namespace lookahead;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.embed_dim = 4;
  c.goal_dim = 3;
  c.hidden_dim = 6;
  c.lookahead_k = 2;
  c.batch_size = 4;
  c.epochs = 2;
  c.min_count = 1;
  c.max_decode_len = 8;
  return c;
}

struct Fixture {
  std::vector<DialogueSession> corpus;
  Vocabulary vocab;
  std::vector<TrainingSample> samples;
  ModelParams params;

  explicit Fixture(const TrainConfig& c, std::size_t dialogues = 4) {
    corpus = generate_corpus(dialogues, 21).sessions;
    vocab = build_vocabulary(corpus, c.min_count);
    std::vector<std::size_t> all(corpus.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    samples = build_samples(corpus, all, vocab, c.effective_k());
    params = ModelParams::initialize(c.model_config(vocab.size()), 5, 0.3);
  }

  std::vector<const TrainingSample*> batch(std::size_t n) const {
    std::vector<const TrainingSample*> out;
    for (std::size_t i = 0; i < n && i < samples.size(); ++i) out.push_back(&samples[i]);
    return out;
  }
};

std::vector<Tensor> snapshot(const ModelParams& p, GroupMask groups) {
  std::vector<Tensor> out;
  p.for_each([&](const std::string&, const Tensor& t, ParamGroup g) {
    if (in_mask(groups, g)) out.push_back(Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end())));
  });
  return out;
}

bool same(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] == b[i])) return false;
  }
  return true;
}

constexpr GroupMask kLm = mask_of(ParamGroup::kLanguageModel);
constexpr GroupMask kLa = mask_of(ParamGroup::kLookahead);
constexpr GroupMask kCl = mask_of(ParamGroup::kClassifier);

}  // namespace

TEST_CASE("sgd: zero gradients leave parameters unchanged") {
  Fixture f(tiny_config());
  auto before = snapshot(f.params, kAllGroups);
  SgdMomentum opt(1.0, 0.1, 0.5);
  f.params.zero_grad();
  CHECK(opt.step(f.params, kAllGroups) == 0.0);
  CHECK(same(before, snapshot(f.params, kAllGroups)));
}

TEST_CASE("sgd: clipping and momentum by hand") {
  ModelConfig c;
  c.vocab_size = 5;
  c.goal_bits = 1;
  c.embed_dim = 1;
  c.goal_dim = 1;
  c.hidden_dim = 1;
  c.lookahead_k = 1;
  ModelParams p(c);
  // Gradient of norm 5 on the classifier bias only.
  p.decoder.classifier_b.grad()[0] = 5.0;
  SgdMomentum opt(0.2, 0.1, 0.5);
  CHECK(opt.step(p, kCl) == 5.0);
  // Clipped to 0.5; v1 = 0.5, p1 = -0.2 * 0.5.
  CHECK(p.decoder.classifier_b[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK_FALSE(p.decoder.classifier_b.grad()[0] != 0.0);

  // Second step under the clip: v2 = 0.1 * 0.5 + 0.3 = 0.35, p2 = -0.1 - 0.07.
  p.decoder.classifier_b.grad()[0] = 0.3;
  opt.step(p, kCl);
  CHECK(p.decoder.classifier_b[0] == doctest::Approx(-0.17).epsilon(1e-15));

  // No gradient: velocity decays (v3 = 0.035) and still moves the parameter.
  opt.step(p, kCl);
  CHECK(p.decoder.classifier_b[0] == doctest::Approx(-0.177).epsilon(1e-14));
}

TEST_CASE("sgd: groups outside the mask are untouched") {
  Fixture f(tiny_config());
  f.params.encoder.embedding.grad()[0] = 1.0;
  auto before = snapshot(f.params, kLm);
  SgdMomentum opt(1.0, 0.1, 0.5);
  opt.step(f.params, kCl);
  CHECK(same(before, snapshot(f.params, kLm)));
}

TEST_CASE("sgd: non-finite gradient is an error") {
  Fixture f(tiny_config());
  f.params.decoder.classifier_b.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  SgdMomentum opt(1.0, 0.1, 0.5);
  CHECK_THROWS_AS(opt.step(f.params, kCl), NumericError);
}

TEST_CASE("loss terms: alpha = beta = 0 leaves the LM term") {
  Fixture f(tiny_config());
  const auto& s = f.samples[1];
  LossTerms only_lm = compute_loss(s, f.params, 0.0, 0.0);
  CHECK(only_lm.total == only_lm.lm);
  CHECK(only_lm.lookahead == 0.0);
  CHECK(only_lm.state == 0.0);
  LossTerms full = compute_loss(s, f.params, 0.05, 1.0);
  CHECK(full.lm == only_lm.lm);
  CHECK(full.lookahead > 0.0);
  CHECK(full.state > 0.0);
  CHECK(full.total == doctest::Approx(full.lm + 0.05 * full.lookahead + full.state).epsilon(1e-14));
}

TEST_CASE("masked future slots contribute nothing") {
  Fixture f(tiny_config());
  // The last turn of a dialogue has no future at all.
  const TrainingSample* last = nullptr;
  for (const auto& s : f.samples) {
    if (!s.future_mask[0]) last = &s;
  }
  REQUIRE(last != nullptr);
  LossTerms t = compute_loss(*last, f.params, 1.0, 0.0);
  CHECK(t.lookahead == 0.0);

  // Changing the padding content of a masked slot does not move the loss.
  TrainingSample edited = *last;
  edited.future[1].tokens = {5, 6, Vocabulary::kEos};
  CHECK(compute_loss(edited, f.params, 1.0, 0.0).total == t.total);
}

TEST_CASE("full loss gradient matches finite differences") {
  TrainConfig c = tiny_config();
  Fixture f(c);
  const TrainingSample& s = f.samples[0];
  LossOptions opts;
  opts.fixed_response = greedy_response(f.params, s);
  opts.backward = true;
  f.params.zero_grad();
  compute_loss(s, f.params, 0.05, 1.0, opts);

  LossOptions plain;
  plain.trainable = 0;
  plain.fixed_response = opts.fixed_response;
  auto loss = [&] { return compute_loss(s, f.params, 0.05, 1.0, plain).total; };
  double worst = 0.0;
  f.params.for_each([&](const std::string& name, Tensor& t, ParamGroup) {
    fd::Mismatch m;
    const double err = fd::check_tensor(t, loss, 1e-5, &m, name);
    INFO(m.where << " analytic " << m.analytic << " numeric " << m.numeric);
    CHECK(err < 1e-4);
    worst = std::max(worst, err);
  });
  CHECK(worst < 1e-4);
}

TEST_CASE("E-step leaves the language model bitwise unchanged") {
  TrainConfig c = tiny_config();
  Fixture f(c);
  auto lm_before = snapshot(f.params, kLm | kCl);
  auto la_before = snapshot(f.params, kLa);
  SgdMomentum opt(c.lr, c.momentum, c.clip_norm);
  std::vector<FrozenStates> frozen;
  e_step(f.batch(4), f.params, opt, c.alpha, frozen);
  CHECK(same(lm_before, snapshot(f.params, kLm | kCl)));
  CHECK_FALSE(same(la_before, snapshot(f.params, kLa)));
  REQUIRE(frozen.size() == 4);
  CHECK(frozen[0].projected.size() == 2);
}

TEST_CASE("M-step leaves look-ahead parameters and frozen states unchanged") {
  TrainConfig c = tiny_config();
  Fixture f(c);
  SgdMomentum opt(c.lr, c.momentum, c.clip_norm);
  std::vector<FrozenStates> frozen;
  e_step(f.batch(4), f.params, opt, c.alpha, frozen);
  const auto frozen_copy = frozen;
  auto la_before = snapshot(f.params, kLa | kCl);
  auto lm_before = snapshot(f.params, kLm);
  m_step(f.batch(4), f.params, opt, c.alpha, frozen);
  CHECK(same(la_before, snapshot(f.params, kLa | kCl)));
  CHECK_FALSE(same(lm_before, snapshot(f.params, kLm)));
  for (std::size_t i = 0; i < frozen.size(); ++i) {
    CHECK(frozen[i].reply_context == frozen_copy[i].reply_context);
    CHECK(frozen[i].projected == frozen_copy[i].projected);
  }
}

TEST_CASE("frozen states are the post-update look-ahead outputs") {
  TrainConfig c = tiny_config();
  Fixture f(c);
  SgdMomentum opt(c.lr, c.momentum, c.clip_norm);
  std::vector<FrozenStates> frozen;
  e_step(f.batch(2), f.params, opt, c.alpha, frozen);
  const TrainingSample& s = f.samples[1];
  Graph g;
  BoundModel m = bind(g, std::as_const(f.params));
  LookaheadStates st = look_ahead(m, encode_sample(m, s.goals, s.history, s.current), 2);
  Attention att = attend(m, st.projected, st.combined);
  CHECK(reply_context(m, att.mixed).to_vector() == frozen[1].reply_context);
  CHECK(st.projected[1].to_vector() == frozen[1].projected[1]);
}

TEST_CASE("LM step and classifier step touch only their groups") {
  TrainConfig c = tiny_config();
  Fixture f(c);
  SgdMomentum opt(c.lr, c.momentum, c.clip_norm);
  auto others = snapshot(f.params, kLa | kCl);
  lm_step(f.batch(4), f.params, opt);
  CHECK(same(others, snapshot(f.params, kLa | kCl)));

  std::vector<FrozenStates> frozen;
  e_step(f.batch(4), f.params, opt, c.alpha, frozen);
  auto not_cl = snapshot(f.params, kLm | kLa);
  auto cl = snapshot(f.params, kCl);
  classifier_step(f.batch(4), f.params, opt, c.beta, frozen);
  CHECK(same(not_cl, snapshot(f.params, kLm | kLa)));
  CHECK_FALSE(same(cl, snapshot(f.params, kCl)));
}

TEST_CASE("em_epoch is deterministic") {
  TrainConfig c = tiny_config();
  auto run = [&] {
    Fixture f(c, 1);
    std::vector<const TrainingSample*> one = {&f.samples[0]};
    SgdMomentum opt(c.lr, c.momentum, c.clip_norm);
    std::vector<double> losses;
    for (int e = 0; e < 2; ++e) losses.push_back(em_epoch(one, f.params, opt, c).total);
    return std::make_pair(losses, snapshot(f.params, kAllGroups));
  };
  auto [la, pa] = run();
  auto [lb, pb] = run();
  CHECK(la == lb);
  CHECK(same(pa, pb));
}

TEST_CASE("toy corpus: loss drops by at least 20% in 20 epochs") {
  TrainConfig c;
  c.embed_dim = 16;
  c.goal_dim = 8;
  c.hidden_dim = 16;
  c.lookahead_k = 3;
  c.batch_size = 8;
  c.epochs = 20;
  c.min_count = 1;
  c.seed = 3;
  auto corpus = generate_corpus(50, 8).sessions;
  TrainResult r = train(corpus, c);
  REQUIRE(r.metrics.size() == 20);
  CHECK(r.vocab.size() < 120);
  CHECK(r.metrics.back().train_loss <= 0.8 * r.metrics.front().train_loss);
}

TEST_CASE("one epoch returns the epoch-1 checkpoint") {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  auto corpus = generate_corpus(6, 2).sessions;
  TrainResult r = train(corpus, c);
  CHECK(r.best_epoch == 1);
  CHECK(r.metrics.size() == 1);
  CHECK(r.metrics[0].lr == c.lr);
}

TEST_CASE("decay epochs halve the learning rate each epoch") {
  TrainConfig c = tiny_config();
  c.epochs = 2;
  c.decay_epochs = 2;
  auto corpus = generate_corpus(6, 2).sessions;
  TrainResult r = train(corpus, c);
  REQUIRE(r.metrics.size() == 4);
  CHECK(r.metrics[2].lr == c.lr / 2);
  CHECK(r.metrics[3].lr == c.lr / 4);
}

TEST_CASE("ablation flags select the baselines") {
  TrainConfig c = tiny_config();
  c.lookahead_k = 3;
  c.use_lookahead = false;
  CHECK(c.effective_k() == 1);
  CHECK(c.effective_alpha() == 0.0);
  CHECK(c.model_config(10).lookahead_k == 1);
  c.use_state_loss = false;
  CHECK(c.effective_beta() == 0.0);

  c.epochs = 1;
  auto corpus = generate_corpus(6, 2).sessions;
  TrainResult r = train(corpus, c);
  // Without the state term the classifier never moves from zero.
  for (double v : r.params.decoder.classifier_w.data()) CHECK(v == 0.0);
  CHECK(r.params.config.lookahead_k == 1);
}

TEST_CASE("training is reproducible") {
  TrainConfig c = tiny_config();
  auto corpus = generate_corpus(6, 2).sessions;
  TrainResult a = train(corpus, c);
  TrainResult b = train(corpus, c);
  CHECK(same(snapshot(a.params, kAllGroups), snapshot(b.params, kAllGroups)));
  CHECK(a.metrics[1].to_json() == b.metrics[1].to_json());
}

TEST_CASE("session split is seeded and disjoint") {
  auto [tr, va] = split_sessions(50, 0.1, 4);
  CHECK(va.size() == 5);
  CHECK(tr.size() == 45);
  std::set<std::size_t> all(tr.begin(), tr.end());
  for (auto v : va) CHECK_FALSE(all.contains(v));
  CHECK(split_sessions(50, 0.1, 4) == split_sessions(50, 0.1, 4));
  CHECK(split_sessions(1, 0.1, 4).second.empty());
}

TEST_CASE("config parsing") {
  TrainConfig c = TrainConfig::from_json(R"({"alpha": 0.1, "K": 4, "use_state_loss": false})");
  CHECK(c.alpha == 0.1);
  CHECK(c.lookahead_k == 4);
  CHECK_FALSE(c.use_state_loss);
  CHECK(c.beta == 1.0);
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"alpah": 0.1})"), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"alpha": -1})"), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json(R"({"epochs": "ten"})"), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_json("[1]"), std::invalid_argument);
}

TEST_CASE("defaults follow the published settings") {
  TrainConfig c;
  CHECK(c.alpha == 0.05);
  CHECK(c.beta == 1.0);
  CHECK(c.lr == 1.0);
  CHECK(c.momentum == 0.1);
  CHECK(c.clip_norm == 0.5);
  CHECK(c.batch_size == 32);
  CHECK(c.lookahead_k == 3);
}

TEST_CASE("metrics lines carry the logged fields") {
  EpochMetrics m;
  m.epoch = 3;
  m.train_loss = 1.5;
  m.val_loss = 2.0;
  m.lr = 0.5;
  CHECK(m.to_json() == R"({"epoch":3,"lr":0.5,"train_loss":1.5,"val_loss":2.0})");
}
