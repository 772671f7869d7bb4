#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "nwhead/model.hpp"
#include "nwhead/types.hpp"

namespace nwhead {

struct TrainConfig {
  std::size_t batch_size = 4;    // N_b
  std::size_t support_size = 10;  // N_s
  double temperature = 1.0;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t steps = 2000;
  // Learning rate is divided by 10 at each of these steps.
  std::vector<std::size_t> lr_decay_steps{1000, 1500};
  std::uint64_t seed = 0;
  HeadKind head = HeadKind::kNw;
  double label_smoothing = 0.0;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t embed_dim = 16;
  // One support set per mini-batch instead of one per query.
  bool shared_support = false;
  // 0 disables periodic validation.
  std::size_t log_every = 100;

  /// Throws kInvalidArgument on out-of-range fields.
  void validate() const;
};

// Indices into the training set. The query never appears in its own support
// and its class always does.
struct Episode {
  std::size_t query = 0;
  std::vector<std::size_t> support;
};

/// One uniformly drawn same-class example plus N_s - 1 uniform draws without
/// replacement from the remainder, shuffled.
Episode sample_episode(const std::vector<LabeledExample>& train, std::size_t query_index,
                       std::size_t support_size, std::mt19937_64& rng);

/// A single support set for a whole batch of queries: one same-class example
/// per distinct query class, filled up uniformly from non-query examples.
std::vector<Episode> sample_shared_episodes(const std::vector<LabeledExample>& train,
                                            std::span<const std::size_t> queries,
                                            std::size_t support_size, std::mt19937_64& rng);

struct LossAndGrad {
  double loss = 0.0;
  Model grad;
};

/// Mean cross-entropy of the NW prediction over the episodes and its exact
/// gradient. Both query and support embeddings are differentiated. With
/// label smoothing the target spreads epsilon over the classes present in
/// each episode's support.
LossAndGrad nw_loss_and_grad(const Model& model, const std::vector<LabeledExample>& train,
                             std::span<const Episode> episodes, double temperature,
                             double label_smoothing = 0.0);

/// Mean softmax cross-entropy of the FC classifier on `batch`.
LossAndGrad fc_loss_and_grad(const Model& model, const std::vector<LabeledExample>& train,
                             std::span<const std::size_t> batch, int class_count,
                             double label_smoothing = 0.0);

struct TrainLogEntry {
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_error;
  std::optional<double> val_ece;
};

struct StepReport {
  double loss = 0.0;
  double lr = 0.0;
  std::vector<std::size_t> queries;
  std::vector<Episode> episodes;  // empty for the FC head
};

// SGD with momentum; weight decay is added to the gradient as an L2 term.
class Trainer {
 public:
  Trainer(std::vector<LabeledExample> train, std::vector<LabeledExample> val, int class_count,
          TrainConfig config);

  const Model& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  std::size_t steps_taken() const { return step_; }
  double current_lr() const;

  /// One optimizer step. Throws kNumericalFailure on a non-finite loss.
  StepReport step();

  /// Full-mode (NW) or classifier (FC) error and ECE on the validation set.
  std::pair<double, double> validate() const;

 private:
  std::vector<std::size_t> next_queries();

  std::vector<LabeledExample> train_;
  std::vector<LabeledExample> val_;
  int class_count_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  Model model_;
  Vector velocity_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogEntry> log;
};

/// Runs `config.steps` optimizer steps. Every step is logged with its train
/// loss; every `log_every`-th step and the last one also carry validation
/// metrics.
TrainResult train(const std::vector<LabeledExample>& train_set,
                  const std::vector<LabeledExample>& val_set, int class_count,
                  const TrainConfig& config);

}  // namespace nwhead
