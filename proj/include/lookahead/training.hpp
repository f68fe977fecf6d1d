#pragma once

// Joint loss, the alternating optimisation schedule and the training loop.
//
// Each batch runs four phases in order:
//   A  language-model step on the current utterance (LM group only)
//   E  look-ahead step: future-turn likelihoods with the LM frozen
//   M  LM step with the look-ahead states frozen as constants
//   C  completion-classifier step (classifier group only)

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lookahead/corpus.hpp"
#include "lookahead/model.hpp"

namespace lookahead {

enum class DecayFrom : std::uint8_t {
  kBest,  // resume from the best-validation epoch, then halve lr each epoch
  kLast,  // keep going from the final budget epoch, halving lr each epoch
};

struct TrainConfig {
  double alpha = 0.05;
  double beta = 1.0;
  double lr = 1.0;
  double momentum = 0.1;
  double clip_norm = 0.5;
  std::size_t batch_size = 32;
  std::size_t epochs = 400;
  std::size_t decay_epochs = 0;
  DecayFrom decay_from = DecayFrom::kBest;
  std::size_t lookahead_k = 3;
  std::uint64_t seed = 1;
  bool use_lookahead = true;
  bool use_state_loss = true;

  std::size_t min_count = 5;
  std::size_t embed_dim = 64;
  std::size_t goal_dim = 64;
  std::size_t hidden_dim = 256;
  std::size_t max_decode_len = 30;
  double init_gain = 1.0;  // weights ~ U(+-gain / sqrt(fan_in))
  double val_fraction = 0.1;

  /// Horizon and weights after the ablation flags are applied.
  std::size_t effective_k() const { return use_lookahead ? lookahead_k : 1; }
  double effective_alpha() const { return use_lookahead ? alpha : 0.0; }
  double effective_beta() const { return use_state_loss ? beta : 0.0; }

  void validate() const;
  ModelConfig model_config(std::size_t vocab_size) const;

  std::string to_json() const;
  /// Keys mirror the field names; unknown keys are rejected.
  static TrainConfig from_json(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);
};

struct LossTerms {
  double lm = 0.0;
  double lookahead = 0.0;
  double state = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o);
  LossTerms scaled(double f) const;
};

struct LossOptions {
  GroupMask trainable = kAllGroups;
  bool backward = false;
  /// Scale applied to the loss before backpropagation (batch averaging).
  double grad_scale = 1.0;
  /// Reply fed to the classifier; decoded greedily from r when absent.
  std::optional<std::vector<TokenId>> fixed_response;
};

/// Full objective for one sample: LM NLL of the current utterance and of the
/// next turn given r, alpha times the look-ahead NLLs of the K future turns
/// (masked slots skipped), beta times the completion cross-entropy.
LossTerms compute_loss(const TrainingSample& sample, ModelParams& params, double alpha,
                       double beta, const LossOptions& options = {});

/// Greedy reply decoded from the attention context, as used by the state term.
std::vector<TokenId> greedy_response(const ModelParams& params, const TrainingSample& sample);

/// SGD with momentum and global-norm clipping over one parameter group mask.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum, double clip_norm);

  /// Clips the mask's gradients, updates velocities and parameters, and
  /// zeroes those gradients. Returns the pre-clip gradient norm.
  double step(ModelParams& params, GroupMask groups);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  double lr_, momentum_, clip_norm_;
  std::vector<std::vector<double>> velocity_;  // one per parameter, visit order
};

/// Look-ahead outputs captured after the E-step update, held fixed by the M-step.
struct FrozenStates {
  std::vector<double> reply_context;
  std::vector<std::vector<double>> projected;
};

/// Phase A. Returns the summed current-utterance NLL.
double lm_step(const std::vector<const TrainingSample*>& batch, ModelParams& params,
               SgdMomentum& opt);
/// Phase E. Returns summed (lm-next, lookahead) terms and fills `frozen`.
LossTerms e_step(const std::vector<const TrainingSample*>& batch, ModelParams& params,
                 SgdMomentum& opt, double alpha, std::vector<FrozenStates>& frozen);
/// Phase M.
void m_step(const std::vector<const TrainingSample*>& batch, ModelParams& params,
            SgdMomentum& opt, double alpha, const std::vector<FrozenStates>& frozen);
/// Phase C. Returns the summed (unweighted) completion cross-entropy.
double classifier_step(const std::vector<const TrainingSample*>& batch, ModelParams& params,
                       SgdMomentum& opt, double beta, const std::vector<FrozenStates>& frozen);

/// One pass over `samples` in the given order. Returns the mean loss terms
/// measured before each phase's update.
LossTerms em_epoch(const std::vector<const TrainingSample*>& samples, ModelParams& params,
                   SgdMomentum& opt, const TrainConfig& config);

/// Mean loss over samples without updating anything.
LossTerms evaluate_loss(const std::vector<TrainingSample>& samples, ModelParams& params,
                        const TrainConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  LossTerms train_terms;

  std::string to_json() const;
};

struct TrainResult {
  ModelParams params;  // best validation epoch
  Vocabulary vocab;
  std::size_t best_epoch = 0;
  std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Splits sessions 90/10 (seeded), builds the vocabulary from the training
/// part and runs the epoch budget followed by the optional decay epochs.
TrainResult train(const std::vector<DialogueSession>& corpus, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Seeded session-level split: (train indices, validation indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_sessions(
    std::size_t n, double val_fraction, std::uint64_t seed);

std::vector<TrainingSample> build_samples(const std::vector<DialogueSession>& corpus,
                                          const std::vector<std::size_t>& indices,
                                          const Vocabulary& vocab, std::size_t k);

}  // namespace lookahead
