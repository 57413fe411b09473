// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "s2ag/layers.hpp"
#include "s2ag/skeleton.hpp"

namespace s2ag {

struct MetricsReport {
  double maje_mm = 0.0;
  double mad_mm_per_s2 = 0.0;
  double fgd = 0.0;
  std::size_t sample_count = 0;
  nlohmann::json to_json() const;
};

/// Mean absolute difference over samples, frames, joints and coordinates.
double maje(const std::vector<PoseSequence>& gt, const std::vector<PoseSequence>& pred);
double maje(const PoseSequence& gt, const PoseSequence& pred);

/// Mean L2 norm of the joint acceleration difference; accelerations are central
/// second differences scaled by fps^2, evaluated at interior frames.
double mad(const std::vector<PoseSequence>& gt, const std::vector<PoseSequence>& pred, double fps);
double mad(const PoseSequence& gt, const PoseSequence& pred, double fps);

using FeatureSet = std::vector<std::vector<double>>;

/// Frechet distance between Gaussians fitted to two feature sets (unbiased
/// covariance). The matrix square root uses a symmetric eigendecomposition
/// with small negative eigenvalues clipped to zero.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

struct AutoencoderConfig {
  std::size_t frames = 34;
  std::size_t latent = 32;
  std::size_t hidden = 64;
  std::size_t epochs = 150;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double mse_threshold = 0.05;  // held-out reconstruction MSE that must be reached

  nlohmann::json to_json() const;
  static AutoencoderConfig from_json(const nlohmann::json& j);
};

/// Conv encoder over time, mean-pooled to a latent vector; linear decoder
/// expands back to T frames followed by a conv to edge directions.
class FeatureAutoencoder {
 public:
  explicit FeatureAutoencoder(const AutoencoderConfig& cfg);
  FeatureAutoencoder(const FeatureAutoencoder&) = delete;
  FeatureAutoencoder& operator=(const FeatureAutoencoder&) = delete;

  const AutoencoderConfig& config() const { return *cfg_; }
  diff::ParameterSet& params() { return *params_; }

  /// [B, T, 27] -> [B, latent]
  diff::Var encode(diff::Var x) const;
  /// [B, latent] -> [B, T, 27]
  diff::Var decode(diff::Var z) const;

  FeatureSet features(const std::vector<EdgeDirectionSequence>& seqs) const;
  FeatureSet features(const std::vector<PoseSequence>& poses) const;
  /// Mean squared reconstruction error.
  double reconstruction_mse(const std::vector<EdgeDirectionSequence>& seqs) const;

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<FeatureAutoencoder> load(const std::filesystem::path& path);

 private:
  std::unique_ptr<AutoencoderConfig> cfg_;
  std::unique_ptr<diff::ParameterSet> params_;
  diff::Conv1dLayer enc1_, enc2_, dec_conv_;
  diff::LinearLayer enc_fc_, dec_fc_;
};

struct AutoencoderTraining {
  std::unique_ptr<FeatureAutoencoder> model;
  double initial_mse = 0.0;
  double final_mse = 0.0;  // held-out
};

/// Trains on `train` and checks `heldout` against the configured threshold
/// (ConvergenceFailure otherwise).
AutoencoderTraining train_feature_autoencoder(const std::vector<EdgeDirectionSequence>& train,
                                              const std::vector<EdgeDirectionSequence>& heldout,
                                              const AutoencoderConfig& cfg);

double fgd(const std::vector<PoseSequence>& real, const std::vector<PoseSequence>& generated,
           const FeatureAutoencoder& ae);

}  // namespace s2ag
