#include "lookahead/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lookahead/datagen.hpp"

namespace lookahead {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(alpha >= 0.0) || !(beta >= 0.0)) fail("alpha and beta must be non-negative");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
  if (batch_size == 0) fail("batch_size must be at least 1");
  if (epochs == 0) fail("epochs must be at least 1");
  if (lookahead_k == 0) fail("lookahead_k must be at least 1");
  if (embed_dim == 0 || goal_dim == 0 || hidden_dim == 0) fail("dimensions must be positive");
  if (max_decode_len == 0) fail("max_decode_len must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in [0, 1)");
  if (!(init_gain > 0.0)) fail("init_gain must be positive");
}

ModelConfig TrainConfig::model_config(std::size_t vocab_size) const {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.goal_bits = kGoalBits;
  c.embed_dim = embed_dim;
  c.goal_dim = goal_dim;
  c.hidden_dim = hidden_dim;
  c.lookahead_k = effective_k();
  c.max_decode_len = max_decode_len;
  return c;
}

std::string TrainConfig::to_json() const {
  json j = {
      {"alpha", alpha},
      {"beta", beta},
      {"lr", lr},
      {"momentum", momentum},
      {"clip_norm", clip_norm},
      {"batch_size", batch_size},
      {"epochs", epochs},
      {"decay_epochs", decay_epochs},
      {"decay_from", decay_from == DecayFrom::kBest ? "best" : "last"},
      {"lookahead_k", lookahead_k},
      {"seed", seed},
      {"use_lookahead", use_lookahead},
      {"use_state_loss", use_state_loss},
      {"min_count", min_count},
      {"embed_dim", embed_dim},
      {"goal_dim", goal_dim},
      {"hidden_dim", hidden_dim},
      {"max_decode_len", max_decode_len},
      {"init_gain", init_gain},
      {"val_fraction", val_fraction},
  };
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("train config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "momentum") c.momentum = value.get<double>();
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "decay_epochs") c.decay_epochs = value.get<std::size_t>();
      else if (key == "decay_from") {
        const auto s = value.get<std::string>();
        if (s == "best") c.decay_from = DecayFrom::kBest;
        else if (s == "last") c.decay_from = DecayFrom::kLast;
        else throw std::invalid_argument("decay_from must be \"best\" or \"last\"");
      } else if (key == "lookahead_k" || key == "K") c.lookahead_k = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "use_lookahead") c.use_lookahead = value.get<bool>();
      else if (key == "use_state_loss") c.use_state_loss = value.get<bool>();
      else if (key == "min_count") c.min_count = value.get<std::size_t>();
      else if (key == "embed_dim") c.embed_dim = value.get<std::size_t>();
      else if (key == "goal_dim") c.goal_dim = value.get<std::size_t>();
      else if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
      else if (key == "max_decode_len") c.max_decode_len = value.get<std::size_t>();
      else if (key == "init_gain") c.init_gain = value.get<double>();
      else if (key == "val_fraction") c.val_fraction = value.get<double>();
      else throw std::invalid_argument("unknown key");
    } catch (const json::exception& e) {
      throw std::invalid_argument("train config key \"" + key + "\": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("train config key \"" + key + "\": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Loss

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  lm += o.lm;
  lookahead += o.lookahead;
  state += o.state;
  total += o.total;
  return *this;
}

LossTerms LossTerms::scaled(double f) const {
  return {lm * f, lookahead * f, state * f, total * f};
}

namespace {

struct ForwardPass {
  Var hc;
  LookaheadStates states;
  Attention attention;
  Var reply_ctx;
};

ForwardPass run_forward(const BoundModel& m, const TrainingSample& s) {
  Graph& g = *m.graph;
  ForwardPass f;
  f.hc = encode_current(m, s.current.tokens);
  const Var parts[] = {encode_goals(m, s.goals), encode_history(m, s.history), f.hc};
  f.states = look_ahead(m, g.concat(parts), m.config->lookahead_k);
  f.attention = attend(m, f.states.projected, f.states.combined);
  f.reply_ctx = reply_context(m, f.attention.mixed);
  return f;
}

Var accumulate(Graph& g, Var total, Var term) { return total.valid() ? g.add(total, term) : term; }

// Masked sum of future-turn NLLs under the given per-slot contexts.
Var lookahead_nll(const BoundModel& m, const TrainingSample& s, const std::vector<Var>& contexts) {
  Var total;
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    if (!s.future_mask[k]) continue;
    total = accumulate(*m.graph, total, utterance_nll(m, contexts[k], s.future[k].tokens));
  }
  return total;
}

double value_of(Var v) { return v.valid() ? v.item() : 0.0; }

void check_sample(const TrainingSample& s, const ModelConfig& c) {
  if (s.future.size() < c.lookahead_k || s.future_mask.size() < c.lookahead_k) {
    throw std::invalid_argument("sample has fewer future slots than the model's horizon");
  }
}

}  // namespace

LossTerms compute_loss(const TrainingSample& sample, ModelParams& params, double alpha,
                       double beta, const LossOptions& options) {
  check_sample(sample, params.config);
  Graph g;
  BoundModel m = bind(g, params, options.trainable);
  const std::size_t k = params.config.lookahead_k;

  Var lm = utterance_nll(m, g.zeros(params.config.hidden_dim), sample.current.tokens);
  ForwardPass f = run_forward(m, sample);
  if (sample.future_mask[0]) lm = g.add(lm, utterance_nll(m, f.reply_ctx, sample.future[0].tokens));
  Var total = lm;

  Var la;
  if (alpha > 0.0) {
    la = lookahead_nll(m, sample, std::vector<Var>(f.states.projected.begin(),
                                                    f.states.projected.begin() + k));
    if (la.valid()) total = g.add(total, g.scale(la, alpha));
  }

  Var state;
  if (beta > 0.0) {
    const std::vector<TokenId> reply =
        options.fixed_response ? *options.fixed_response
                               : decode_utterance(m, f.reply_ctx, params.config.max_decode_len);
    state = g.logistic_loss(completion_logit(m, f.hc, reply), sample.label);
    total = g.add(total, g.scale(state, beta));
  }

  if (options.backward) g.backward(g.scale(total, options.grad_scale));
  LossTerms t;
  t.lm = value_of(lm);
  t.lookahead = value_of(la);
  t.state = value_of(state);
  t.total = total.item();
  return t;
}

std::vector<TokenId> greedy_response(const ModelParams& params, const TrainingSample& sample) {
  Graph g;
  BoundModel m = bind(g, params);
  ForwardPass f = run_forward(m, sample);
  return decode_utterance(m, f.reply_ctx, params.config.max_decode_len);
}

// ---------------------------------------------------------------------------
// Optimiser

SgdMomentum::SgdMomentum(double lr, double momentum, double clip_norm)
    : lr_(lr), momentum_(momentum), clip_norm_(clip_norm) {}

double SgdMomentum::step(ModelParams& params, GroupMask groups) {
  std::vector<Tensor*> tensors;
  std::vector<bool> selected;
  params.for_each([&](const std::string&, Tensor& t, ParamGroup g) {
    tensors.push_back(&t);
    selected.push_back(in_mask(groups, g));
  });
  if (velocity_.empty()) {
    velocity_.resize(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) velocity_[i].assign(tensors[i]->size(), 0.0);
  }

  double sq = 0.0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!selected[i] || !tensors[i]->has_grad()) continue;
    for (double gv : std::as_const(*tensors[i]).grad()) sq += gv * gv;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient in optimiser step");
  const double clip = norm > clip_norm_ ? clip_norm_ / norm : 1.0;

  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!selected[i]) continue;
    Tensor& t = *tensors[i];
    auto v = std::span<double>(velocity_[i]);
    auto p = t.data();
    if (t.has_grad()) {
      auto gr = std::as_const(t).grad();
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = momentum_ * v[j] + clip * gr[j];
        p[j] -= lr_ * v[j];
      }
      t.zero_grad();
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = momentum_ * v[j];
        p[j] -= lr_ * v[j];
      }
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Phases

double lm_step(const std::vector<const TrainingSample*>& batch, ModelParams& params,
               SgdMomentum& opt) {
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const TrainingSample* s : batch) {
    Graph g;
    BoundModel m = bind(g, params, mask_of(ParamGroup::kLanguageModel));
    Var nll = utterance_nll(m, g.zeros(params.config.hidden_dim), s->current.tokens);
    total += nll.item();
    g.backward(g.scale(nll, scale));
  }
  opt.step(params, mask_of(ParamGroup::kLanguageModel));
  return total;
}

LossTerms e_step(const std::vector<const TrainingSample*>& batch, ModelParams& params,
                 SgdMomentum& opt, double alpha, std::vector<FrozenStates>& frozen) {
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t k = params.config.lookahead_k;
  LossTerms sum;
  for (const TrainingSample* s : batch) {
    check_sample(*s, params.config);
    Graph g;
    BoundModel m = bind(g, params, mask_of(ParamGroup::kLookahead));
    ForwardPass f = run_forward(m, *s);
    Var total;
    if (s->future_mask[0]) {
      Var next = utterance_nll(m, f.reply_ctx, s->future[0].tokens);
      sum.lm += next.item();
      total = next;
    }
    if (alpha > 0.0) {
      Var la = lookahead_nll(
          m, *s, std::vector<Var>(f.states.projected.begin(), f.states.projected.begin() + k));
      if (la.valid()) {
        sum.lookahead += la.item();
        total = accumulate(g, total, g.scale(la, alpha));
      }
    }
    if (total.valid()) g.backward(g.scale(total, scale));
  }
  opt.step(params, mask_of(ParamGroup::kLookahead));

  // Recompute the states under the updated look-ahead parameters.
  frozen.clear();
  frozen.reserve(batch.size());
  for (const TrainingSample* s : batch) {
    Graph g;
    BoundModel m = bind(g, std::as_const(params));
    ForwardPass f = run_forward(m, *s);
    FrozenStates fs;
    fs.reply_context = f.reply_ctx.to_vector();
    for (std::size_t i = 0; i < k; ++i) fs.projected.push_back(f.states.projected[i].to_vector());
    frozen.push_back(std::move(fs));
  }
  return sum;
}

void m_step(const std::vector<const TrainingSample*>& batch, ModelParams& params,
            SgdMomentum& opt, double alpha, const std::vector<FrozenStates>& frozen) {
  if (frozen.size() != batch.size()) throw std::invalid_argument("m_step: frozen state count");
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t h = params.config.hidden_dim;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainingSample& s = *batch[i];
    Graph g;
    BoundModel m = bind(g, params, mask_of(ParamGroup::kLanguageModel));
    Var total;
    if (s.future_mask[0]) {
      total = utterance_nll(m, g.constant({h}, frozen[i].reply_context), s.future[0].tokens);
    }
    if (alpha > 0.0) {
      std::vector<Var> contexts;
      for (const auto& p : frozen[i].projected) contexts.push_back(g.constant({h}, p));
      Var la = lookahead_nll(m, s, contexts);
      if (la.valid()) total = accumulate(g, total, g.scale(la, alpha));
    }
    if (total.valid()) g.backward(g.scale(total, scale));
  }
  opt.step(params, mask_of(ParamGroup::kLanguageModel));
}

double classifier_step(const std::vector<const TrainingSample*>& batch, ModelParams& params,
                       SgdMomentum& opt, double beta, const std::vector<FrozenStates>& frozen) {
  if (frozen.size() != batch.size()) {
    throw std::invalid_argument("classifier_step: frozen state count");
  }
  const double scale = beta / static_cast<double>(batch.size());
  const std::size_t h = params.config.hidden_dim;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainingSample& s = *batch[i];
    Graph g;
    BoundModel m = bind(g, params, mask_of(ParamGroup::kClassifier));
    const auto reply = decode_utterance(m, g.constant({h}, frozen[i].reply_context),
                                        params.config.max_decode_len);
    Var loss = g.logistic_loss(completion_logit(m, encode_current(m, s.current.tokens), reply),
                               s.label);
    total += loss.item();
    g.backward(g.scale(loss, scale));
  }
  opt.step(params, mask_of(ParamGroup::kClassifier));
  return total;
}

LossTerms em_epoch(const std::vector<const TrainingSample*>& samples, ModelParams& params,
                   SgdMomentum& opt, const TrainConfig& config) {
  if (samples.empty()) throw std::invalid_argument("em_epoch: no samples");
  const double alpha = config.effective_alpha();
  const double beta = config.effective_beta();
  LossTerms sum;
  std::vector<FrozenStates> frozen;
  for (std::size_t start = 0; start < samples.size(); start += config.batch_size) {
    const std::size_t end = std::min(samples.size(), start + config.batch_size);
    std::vector<const TrainingSample*> batch(samples.begin() + static_cast<long>(start),
                                             samples.begin() + static_cast<long>(end));
    sum.lm += lm_step(batch, params, opt);
    LossTerms e = e_step(batch, params, opt, alpha, frozen);
    sum.lm += e.lm;
    sum.lookahead += e.lookahead;
    m_step(batch, params, opt, alpha, frozen);
    if (beta > 0.0) sum.state += classifier_step(batch, params, opt, beta, frozen);
  }
  sum.total = sum.lm + alpha * sum.lookahead + beta * sum.state;
  return sum.scaled(1.0 / static_cast<double>(samples.size()));
}

LossTerms evaluate_loss(const std::vector<TrainingSample>& samples, ModelParams& params,
                        const TrainConfig& config) {
  if (samples.empty()) throw std::invalid_argument("evaluate_loss: no samples");
  LossTerms sum;
  LossOptions opts;
  opts.trainable = 0;
  for (const auto& s : samples) {
    sum += compute_loss(s, params, config.effective_alpha(), config.effective_beta(), opts);
  }
  return sum.scaled(1.0 / static_cast<double>(samples.size()));
}

// ---------------------------------------------------------------------------
// Training loop

std::string EpochMetrics::to_json() const {
  return json{{"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss}, {"lr", lr}}
      .dump();
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_sessions(
    std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x5e55));
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(n)));
  if (val_fraction > 0.0 && n_val == 0 && n >= 2) n_val = 1;
  if (n_val >= n) n_val = n - 1;
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

std::vector<TrainingSample> build_samples(const std::vector<DialogueSession>& corpus,
                                          const std::vector<std::size_t>& indices,
                                          const Vocabulary& vocab, std::size_t k) {
  std::vector<TrainingSample> out;
  for (std::size_t i : indices) {
    auto samples = prepare_samples(encode_session(corpus.at(i), vocab), k, i);
    std::move(samples.begin(), samples.end(), std::back_inserter(out));
  }
  return out;
}

TrainResult train(const std::vector<DialogueSession>& corpus, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  auto [train_idx, val_idx] = split_sessions(corpus.size(), config.val_fraction, config.seed);

  std::vector<DialogueSession> train_sessions;
  for (std::size_t i : train_idx) train_sessions.push_back(corpus[i]);
  TrainResult result;
  result.vocab = build_vocabulary(train_sessions, config.min_count);

  const std::size_t k = config.effective_k();
  const auto train_samples = build_samples(corpus, train_idx, result.vocab, k);
  const auto val_samples = build_samples(corpus, val_idx, result.vocab, k);
  if (train_samples.empty()) throw std::invalid_argument("train: corpus has no turns");

  ModelParams params = ModelParams::initialize_fan_in(config.model_config(result.vocab.size()),
                                               derive_seed(config.seed, 0x1417), config.init_gain);
  SgdMomentum opt(config.lr, config.momentum, config.clip_norm);

  std::vector<const TrainingSample*> order;
  for (const auto& s : train_samples) order.push_back(&s);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 0x5fff));

  double best = 0.0;
  auto run_epoch = [&](std::size_t epoch, double lr) {
    opt.set_lr(lr);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr;
    em.train_terms = em_epoch(order, params, opt, config);
    em.train_loss = em.train_terms.total;
    em.val_loss = val_samples.empty() ? em.train_loss
                                      : evaluate_loss(val_samples, params, config).total;
    if (result.metrics.empty() || em.val_loss < best) {
      best = em.val_loss;
      result.best_epoch = epoch;
      result.params = params;
    }
    result.metrics.push_back(em);
    if (on_epoch) on_epoch(em);
  };

  for (std::size_t e = 1; e <= config.epochs; ++e) run_epoch(e, config.lr);

  if (config.decay_epochs > 0) {
    if (config.decay_from == DecayFrom::kBest) {
      params = result.params;
      opt = SgdMomentum(config.lr, config.momentum, config.clip_norm);
    }
    double lr = config.lr;
    for (std::size_t j = 1; j <= config.decay_epochs; ++j) {
      lr /= 2.0;
      run_epoch(config.epochs + j, lr);
    }
  }
  return result;
}

}  // namespace lookahead
