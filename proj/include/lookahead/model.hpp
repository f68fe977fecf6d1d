#pragma once

// The look-ahead dialogue model:
//
//   encoders   goal bits -> GRU(g), averaged utterance embeddings -> GRU(u),
//              current-utterance tokens -> GRU(c); concatenated.
//   look-ahead K predicted future-turn states from one GRU run forward and
//              then backward (shared weights), each state the concatenation
//              of both directions.
//   decoder    attention over the projected states mixes the raw states into
//              r; a recurrent language model (GRU(c) weights, output tied to
//              the embedding table) generates the reply from r, and a
//              logistic classifier scores whether the dialogue will succeed.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lookahead/corpus.hpp"
#include "lookahead/tensor.hpp"

namespace lookahead {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t goal_bits = 6;
  std::size_t embed_dim = 64;
  std::size_t goal_dim = 64;
  std::size_t hidden_dim = 256;
  std::size_t lookahead_k = 3;
  std::size_t max_decode_len = 30;

  std::size_t encoded_dim() const { return goal_dim + 2 * hidden_dim; }
  std::size_t state_dim() const { return 2 * hidden_dim; }
  bool operator==(const ModelConfig&) const = default;
};

/// Optimisation groups: the language model (embeddings, GRU(c) which doubles
/// as the decoder, output projection), the look-ahead path (goal/history
/// encoders, adapters, look-ahead GRU, W, attention) and the classifier.
enum class ParamGroup : std::uint8_t { kLanguageModel = 1, kLookahead = 2, kClassifier = 4 };

using GroupMask = std::uint8_t;
inline constexpr GroupMask kAllGroups = 7;
inline constexpr GroupMask mask_of(ParamGroup g) { return static_cast<GroupMask>(g); }
inline constexpr bool in_mask(GroupMask m, ParamGroup g) { return (m & mask_of(g)) != 0; }

struct GruParams {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;

  GruParams() = default;
  GruParams(std::size_t in_dim, std::size_t hidden_dim);
  std::size_t in_dim() const { return w_z.shape()[1]; }
  std::size_t hidden_dim() const { return w_z.shape()[0]; }
};

struct EncoderParams {
  Tensor embedding;  // vocab x embed_dim, shared with the decoder output layer
  GruParams goal_gru;
  GruParams hist_gru;
  GruParams curr_gru;  // also the decoder GRU
};

struct LookaheadParams {
  Tensor adapter_w, adapter_b;  // encoded (goal+2*hidden) -> hidden
  GruParams la_gru;             // shared by both sweeps
  Tensor projection;            // W: 2*hidden -> hidden
};

struct DecoderParams {
  Tensor attention;                 // scoring vector over tanh(W h_k)
  Tensor r_adapter_w, r_adapter_b;  // r (2*hidden) -> decoder initial state
  Tensor output_proj;               // hidden -> embed_dim, then E
  Tensor classifier_w, classifier_b;
};

struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  LookaheadParams lookahead;
  DecoderParams decoder;

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& config);
  /// Uniform(-scale, scale) weights.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed,
                                double scale = 0.1);
  /// Uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)) weights, where fan_in is
  /// the column count (the vector length for the attention vector).
  static ModelParams initialize_fan_in(const ModelConfig& config, std::uint64_t seed,
                                       double gain = 1.0);

  using Visitor = std::function<void(const std::string& name, Tensor& t, ParamGroup group)>;
  using ConstVisitor =
      std::function<void(const std::string& name, const Tensor& t, ParamGroup group)>;
  /// Visits every parameter in a fixed order with its checkpoint name.
  void for_each(const Visitor& visit);
  void for_each(const ConstVisitor& visit) const;

  void zero_grad();
  std::size_t parameter_count() const;
};

/// Parameter leaves recorded on one graph.
struct BoundGru {
  Var w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;
  std::size_t hidden = 0;
};

struct BoundModel {
  Graph* graph = nullptr;
  const ModelConfig* config = nullptr;
  Var embedding;
  BoundGru goal_gru, hist_gru, curr_gru;
  Var adapter_w, adapter_b;
  BoundGru la_gru;
  Var projection;
  Var attention;
  Var r_adapter_w, r_adapter_b;
  Var output_proj;
  Var classifier_w, classifier_b;
};

/// Records every parameter on `graph`; groups outside `trainable` are
/// forward-only.
BoundModel bind(Graph& graph, ModelParams& params, GroupMask trainable = kAllGroups);
/// Forward-only binding for inference.
BoundModel bind(Graph& graph, const ModelParams& params);

// --- encoders --------------------------------------------------------------

Var gru_step(const BoundGru& p, Var h_prev, Var x);
Var encode_goals(const BoundModel& m, const GoalVector& goals);
Var encode_history(const BoundModel& m, const std::vector<Utterance>& history);
Var encode_current(const BoundModel& m, const std::vector<TokenId>& tokens);
/// [h(g); h(u); h(c)].
Var encode_sample(const BoundModel& m, const GoalVector& goals,
                  const std::vector<Utterance>& history, const Utterance& current);

// --- look-ahead ------------------------------------------------------------

struct LookaheadStates {
  std::vector<Var> forward;   // h_k forward halves
  std::vector<Var> backward;  // h_k backward halves
  std::vector<Var> combined;  // [forward; backward]
  std::vector<Var> projected; // W * combined, the per-turn prediction states
};

/// Encoder output mapped to the look-ahead GRU's hidden size.
Var initial_forward_state(const BoundModel& m, Var encoded);
/// First sweep; backward halves are still zero while it runs.
std::vector<Var> forward_sweep(const BoundModel& m, Var h1, std::size_t k);
std::vector<Var> backward_sweep(const BoundModel& m, const std::vector<Var>& forward);
std::vector<Var> combine(const BoundModel& m, const std::vector<Var>& forward,
                         const std::vector<Var>& backward);
LookaheadStates look_ahead(const BoundModel& m, Var encoded, std::size_t k);

// --- decoder ---------------------------------------------------------------

struct Attention {
  Var weights;  // v, length K
  Var mixed;    // r
};

Attention attend(const BoundModel& m, const std::vector<Var>& projected,
                 const std::vector<Var>& combined);
/// Decoder initial state derived from r.
Var reply_context(const BoundModel& m, Var r);
/// Reply context computed the plain goal-conditioned sequence-to-sequence way,
/// without a look-ahead module: the adapted encoder state seeds both halves.
Var seq2seq_context(const BoundModel& m, Var encoded);

Var token_logits(const BoundModel& m, Var hidden);
/// Teacher-forced negative log-likelihood of `tokens` given the decoder's
/// initial state.
Var utterance_nll(const BoundModel& m, Var context, const std::vector<TokenId>& tokens);
/// Greedy left-to-right decoding; the result ends in EOS unless `max_len`
/// tokens were produced first.
std::vector<TokenId> decode_utterance(const BoundModel& m, Var context, std::size_t max_len);
/// Classifier logit over [GRU(c)(c); GRU(c)(reply)].
Var completion_logit(const BoundModel& m, Var encoded_current,
                     const std::vector<TokenId>& reply);

// --- inference -------------------------------------------------------------

struct Reply {
  std::vector<TokenId> tokens;
  double done_prob = 0.5;
  std::vector<double> attention;
};

/// Encode -> look ahead -> attend -> decode -> classify. The single inference
/// path shared by self-play, the chat loop and the HTTP service.
Reply generate_reply(const ModelParams& params, const GoalVector& goals,
                     const std::vector<Utterance>& history, const Utterance& current);

/// Probability that the dialogue ends with goals achieved.
double completion_probability(const ModelParams& params, const std::vector<TokenId>& current,
                              const std::vector<TokenId>& reply);

}  // namespace lookahead
