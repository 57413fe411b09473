// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "s2ag/gan.hpp"

namespace s2ag {

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kDiversityEpsilon = 1e-4;
inline constexpr double kDiversityClamp = 10.0;

struct LossWeights {
  double huber = 300.0;
  double gen = 5.0;
  double style = 0.1;
  double kld = 0.1;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  double lr_generator = 5e-4;
  double lr_discriminator = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
  double huber_delta = 1.0;
  std::size_t warmup_epochs = 0;  // epochs with the adversarial term disabled
  std::size_t checkpoint_every = 0;
  bool wall_clock = true;  // false writes 0 into wall_seconds for reproducible logs
  LossWeights weights;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// ---- loss terms on the graph ----

/// Mean elementwise Huber penalty.
diff::Var huber_loss(diff::Var target, diff::Var pred, double delta);
/// -mean log c_fake, probabilities clamped away from 0 and 1.
diff::Var generator_adversarial_loss(diff::Var c_fake);
/// -mean log c_real - mean log(1 - c_fake).
diff::Var discriminator_loss(diff::Var c_real, diff::Var c_fake);
/// -mean_i min(|U_i - U_j(i)|_1 / (|s_i - s_j(i)|_1 + eps), 10) with j a derangement.
diff::Var diversity_loss(diff::Var outputs, diff::Var styles, const std::vector<std::size_t>& derangement);
/// Cyclic shift by a random nonzero offset.
std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng);
/// Closed-form KL to the standard normal, summed over dims, averaged over the batch.
diff::Var kl_loss(const StyleDistribution& dist);

// ---- training loop ----

struct TrainingSet {
  std::vector<SampleFeatures> features;
  std::vector<EdgeDirectionSequence> seeds;    // unit directions, T frames
  std::vector<EdgeDirectionSequence> targets;  // unit directions, T frames
  std::size_t size() const { return features.size(); }
};

struct EpochLosses {
  std::size_t epoch = 0;
  double huber = 0, gen = 0, style = 0, kld = 0, total_g = 0, disc = 0;
  double wall_seconds = 0;
};

struct TrainHooks {
  std::function<void(const EpochLosses&)> on_epoch;
  std::filesystem::path checkpoint_dir;  // empty disables periodic checkpoints
};

/// One D step then one G step per batch. Returns the per-epoch mean losses.
std::vector<EpochLosses> train(GanModel& model, const TrainingSet& data, const TrainConfig& cfg,
                               const TrainHooks& hooks = {});

std::string history_csv(const std::vector<EpochLosses>& history);

/// Fraction of correct real/fake decisions (c >= 0.5 means real) over every
/// item and one generated counterpart per item, using zero style noise.
double discriminator_accuracy(const GanModel& model, const TrainingSet& data, std::size_t batch_size = 32);

/// Zero-noise predictions [T, 9, 3] for each item, unnormalized.
std::vector<EdgeDirectionSequence> predict_all(const GanModel& model, const TrainingSet& data,
                                               std::size_t batch_size = 32);

}  // namespace s2ag
