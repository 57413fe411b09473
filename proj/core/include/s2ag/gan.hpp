// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "s2ag/encoders.hpp"
#include "s2ag/features.hpp"

namespace s2ag {

struct ModelConfig {
  std::size_t speakers = 4;
  std::size_t frames = 34;  // T
  double fps = 15.0;
  double sample_rate = 16000.0;
  EncoderDims dims;
  bool no_mfcc_encoder = false;
  bool no_affective_encoder = false;
  std::uint64_t seed = 1;

  /// Audio samples covering T frames.
  std::size_t audio_samples() const;
  std::size_t mfcc_window() const;
  std::size_t mfcc_columns() const;
  /// Width of the generator's concatenated input.
  std::size_t generator_input_dim() const;
  std::size_t pose_dim() const { return kNumEdges * 3; }

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Per-window model inputs for one sample, already time-major.
struct SampleFeatures {
  std::vector<double> mfcc;   // [M, 37]; empty when the raw-audio encoder is used
  std::vector<double> audio;  // [L]; empty unless the raw-audio encoder is used
  std::vector<double> text;   // [T, 300]
  std::size_t speaker = 0;
};

/// Audio is resampled to the model rate and cropped or zero-padded to T frames.
SampleFeatures extract_features(const Waveform& audio, const std::vector<std::string>& words, std::size_t speaker,
                                const ModelConfig& cfg, const WordEmbeddingTable& table);

/// Splits audio and words into n consecutive T-frame windows.
std::vector<SampleFeatures> window_features(const Waveform& audio, const std::vector<std::string>& words,
                                            std::size_t speaker, std::size_t windows, const ModelConfig& cfg,
                                            const WordEmbeddingTable& table);

struct ModelInputs {
  diff::Tensor mfcc;     // [B, M, 37]
  diff::Tensor audio;    // [B, L, 1]
  diff::Tensor text;     // [B, T, 300]
  diff::Tensor speaker;  // [B, S]
  diff::Tensor seed;     // [B, T, 9, 3]
  std::size_t batch() const { return speaker.dim(0); }
};

ModelInputs stack_inputs(const std::vector<const SampleFeatures*>& samples,
                         const std::vector<const EdgeDirectionSequence*>& seeds, const ModelConfig& cfg);

diff::Tensor stack_directions(const std::vector<const EdgeDirectionSequence*>& seqs);
EdgeDirectionSequence unstack_directions(const diff::Tensor& batch, std::size_t item);
/// Rescales every edge vector to unit length; zero vectors throw ZeroVector.
EdgeDirectionSequence normalized(const EdgeDirectionSequence& dirs);

struct GeneratorOutput {
  diff::Var directions;  // [B, T, 9, 3], unnormalized
  StyleDistribution style;
  diff::Var style_sample;  // [B, T, D_s]
  diff::Var features;      // [B, T, generator_input_dim]
};

class Generator {
 public:
  Generator(diff::ParameterSet& ps, const ModelConfig& cfg, const AdjacencySpec& adj, Rng& rng);
  /// `noise` is [B, D_s]; zero noise yields the mean style.
  GeneratorOutput operator()(diff::Graph& g, const ModelInputs& in, const diff::Tensor& noise) const;
  diff::LinearLayer& output_layer() { return fc_gen_; }

 private:
  const ModelConfig* cfg_;
  MfccEncoder mfcc_;
  RawAudioEncoder raw_;
  TextEncoder text_;
  SpeakerEncoder speaker_;
  AffectiveEncoder affective_;
  diff::BiGruLayer gru_;
  diff::LinearLayer fc_gen_;
};

class Discriminator {
 public:
  Discriminator(diff::ParameterSet& ps, const ModelConfig& cfg, const AdjacencySpec& adj, Rng& rng);
  /// Probability that each sequence is real: [B, 1].
  diff::Var operator()(diff::Var directions) const;
  diff::LinearLayer& output_layer() { return fc_disc_; }

 private:
  const ModelConfig* cfg_;
  AffectiveEncoder affective_;
  diff::Conv1dLayer plain_;
  diff::BiGruLayer gru_;
  diff::LinearLayer fc_disc_;
};

class GanModel {
 public:
  explicit GanModel(const ModelConfig& cfg);
  GanModel(const GanModel&) = delete;
  GanModel& operator=(const GanModel&) = delete;

  const ModelConfig& config() const { return *cfg_; }
  diff::ParameterSet& generator_params() { return *gen_params_; }
  diff::ParameterSet& discriminator_params() { return *disc_params_; }
  const diff::ParameterSet& generator_params() const { return *gen_params_; }
  const diff::ParameterSet& discriminator_params() const { return *disc_params_; }
  Generator& generator() { return *generator_; }
  Discriminator& discriminator() { return *discriminator_; }
  const Generator& generator() const { return *generator_; }
  const Discriminator& discriminator() const { return *discriminator_; }

  /// Config is stored under "model"; `extra` is merged into the header.
  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const;
  static std::unique_ptr<GanModel> load(const std::filesystem::path& path);

 private:
  std::unique_ptr<ModelConfig> cfg_;
  std::unique_ptr<diff::ParameterSet> gen_params_, disc_params_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<Discriminator> discriminator_;
};

/// Generator forward on a fresh graph; returns [B, T, 9, 3].
diff::Tensor predict(const GanModel& model, const ModelInputs& in, const diff::Tensor& noise);

struct Synthesis {
  EdgeDirectionSequence directions;  // n*T frames, unit length
  PoseSequence pose;
};

/// Chains n = windows.size() generator calls; each block's final T predicted
/// frames, normalized, seed the next block.
Synthesis synthesize_sequence(const GanModel& model, const std::vector<SampleFeatures>& windows,
                              const EdgeDirectionSequence& seed, const std::vector<double>& noise,
                              const Skeleton& skel, const Vec3& root);

}  // namespace s2ag
