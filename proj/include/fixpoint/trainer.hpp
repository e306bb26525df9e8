#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fixpoint/corpus.hpp"
#include "fixpoint/elman.hpp"
#include "fixpoint/grad.hpp"
#include "fixpoint/perplexity.hpp"

namespace fixpoint {

/// How the summed batch gradient is normalised before the optimizer step.
enum class LossNorm { per_word, per_sequence };

LossNorm parse_loss_norm(std::string_view name);
std::string_view to_string(LossNorm n);

struct TrainConfig {
  GradMode grad_mode = GradMode::bptt();
  std::size_t batch_size = 20;
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::size_t hidden = 100;
  double init_range = 0.05;
  std::optional<double> clip_norm;
  LossNorm loss_norm = LossNorm::per_word;
  Activation activation = Activation::tanh;
  bool bias = false;
  std::size_t embedding_dim = 0;  // 0 = one-hot inputs
  int workers = 1;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;

  /// Forward pass consistent with grad_mode, used for validation.
  ForwardSpec eval_forward() const;
};

/// Adam first and second moments, shaped like the parameters.
struct OptimizerState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const ModelParams& p);
};

/// Raised when an update would introduce non-finite values.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what);
  std::size_t epoch;
  std::size_t batch;
};

/// Every trainable entry i.i.d. uniform on [-init_range, init_range].
ModelParams init_params(const TrainConfig& config, std::size_t vocab_size);

/// Bias-corrected Adam update with gradient `grads` scaled by `grad_scale`.
/// Throws NonFiniteError, leaving params and state untouched, if the gradient
/// is not finite.
void adam_step(ModelParams& params, const GradientSet& grads, OptimizerState& opt,
               const TrainConfig& config, double grad_scale = 1.0);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // nats per word
  double valid_ppl = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams final_params;
  ModelParams best_params;
  std::size_t best_epoch = 0;
  double best_valid_ppl = 0.0;
  std::vector<EpochMetrics> metrics;
};

struct TrainOutput {
  /// When set, epoch<N>.model/.opt checkpoints, best.model and metrics.csv
  /// are written here.
  std::optional<std::filesystem::path> directory;
  std::function<void(const EpochMetrics&)> on_epoch;
};

TrainResult train(const TrainConfig& config, const EncodedCorpus& train_corpus,
                  const EncodedCorpus& valid_corpus, const TrainOutput& output = {});

/// Same as train() but starting from the given parameters.
TrainResult train_from(ModelParams params, const TrainConfig& config,
                       const EncodedCorpus& train_corpus, const EncodedCorpus& valid_corpus,
                       const TrainOutput& output = {});

/// Optimizer sidecar: header `fixpoint-opt v1 H E |V| activation bias_flag step`
/// followed by the first moments then the second moments in the model-file
/// tensor layout.
void save_optimizer(const std::filesystem::path& path, const OptimizerState& opt);
OptimizerState load_optimizer(const std::filesystem::path& path);

inline constexpr std::string_view kMetricsHeader = "epoch,train_loss_nats_per_word,valid_ppl,seconds";

}  // namespace fixpoint
