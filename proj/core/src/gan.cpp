// SPDX-License-Identifier: Apache-2.0
#include "s2ag/gan.hpp"

#include <cmath>

#include "s2ag/checkpoint.hpp"
#include "s2ag/error.hpp"

namespace s2ag {

using namespace diff;
using nlohmann::json;

std::size_t ModelConfig::audio_samples() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(frames) * sample_rate / fps));
}

std::size_t ModelConfig::mfcc_window() const { return mfcc_window_for(sample_rate, fps); }

std::size_t ModelConfig::mfcc_columns() const {
  const std::size_t w = mfcc_window();
  return (audio_samples() + w - 1) / w;
}

std::size_t ModelConfig::generator_input_dim() const {
  return dims.mfcc + dims.text + dims.style + (no_affective_encoder ? pose_dim() : dims.affective);
}

void ModelConfig::validate() const {
  if (speakers < 1) throw Error(ErrorCode::ConfigInvalid, "speakers must be at least 1");
  if (frames < 2) throw Error(ErrorCode::ConfigInvalid, "frames must be at least 2");
  if (!(fps > 0.0) || !(sample_rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "fps and sample_rate must be positive");
  if (mfcc_window() < 32) throw Error(ErrorCode::ConfigInvalid, "sample rate too low for the MFCC window");
}

json ModelConfig::to_json() const {
  return {{"speakers", speakers},
          {"frames", frames},
          {"fps", fps},
          {"sample_rate", sample_rate},
          {"dims",
           {{"mfcc", dims.mfcc},
            {"text", dims.text},
            {"style", dims.style},
            {"affective_level1", dims.affective_level1},
            {"affective_level2", dims.affective_level2},
            {"affective", dims.affective},
            {"generator_hidden", dims.generator_hidden},
            {"discriminator_hidden", dims.discriminator_hidden}}},
          {"no_mfcc_encoder", no_mfcc_encoder},
          {"no_affective_encoder", no_affective_encoder},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.speakers = j.value("speakers", c.speakers);
    c.frames = j.value("frames", c.frames);
    c.fps = j.value("fps", c.fps);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    if (j.contains("dims")) {
      const json& d = j["dims"];
      c.dims.mfcc = d.value("mfcc", c.dims.mfcc);
      c.dims.text = d.value("text", c.dims.text);
      c.dims.style = d.value("style", c.dims.style);
      c.dims.affective_level1 = d.value("affective_level1", c.dims.affective_level1);
      c.dims.affective_level2 = d.value("affective_level2", c.dims.affective_level2);
      c.dims.affective = d.value("affective", c.dims.affective);
      c.dims.generator_hidden = d.value("generator_hidden", c.dims.generator_hidden);
      c.dims.discriminator_hidden = d.value("discriminator_hidden", c.dims.discriminator_hidden);
    }
    c.no_mfcc_encoder = j.value("no_mfcc_encoder", c.no_mfcc_encoder);
    c.no_affective_encoder = j.value("no_affective_encoder", c.no_affective_encoder);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

SampleFeatures extract_features(const Waveform& audio, const std::vector<std::string>& words, std::size_t speaker,
                                const ModelConfig& cfg, const WordEmbeddingTable& table) {
  if (speaker >= cfg.speakers) {
    throw Error(ErrorCode::IdOutOfRange, "speaker " + std::to_string(speaker) + " >= " + std::to_string(cfg.speakers));
  }
  const Waveform at_rate = audio.sample_rate == cfg.sample_rate ? audio : resample_linear(audio, cfg.sample_rate);
  const Waveform clip = audio_window(at_rate, 0, cfg.audio_samples());
  SampleFeatures f;
  f.speaker = speaker;
  if (cfg.no_mfcc_encoder) {
    f.audio = clip.samples;
  } else {
    const MfccFeatures m = compute_mfcc(clip, cfg.mfcc_window());
    f.mfcc.resize(m.columns * kMfccRows);
    for (std::size_t t = 0; t < m.columns; ++t) {
      for (std::size_t r = 0; r < kMfccRows; ++r) f.mfcc[t * kMfccRows + r] = m.at(r, t);
    }
  }
  const TranscriptFeatures tx = embed_tokens(pad_transcript(words, cfg.frames), table);
  f.text.resize(cfg.frames * kEmbeddingDim);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) f.text[t * kEmbeddingDim + d] = tx.at(d, t);
  }
  return f;
}

std::vector<SampleFeatures> window_features(const Waveform& audio, const std::vector<std::string>& words,
                                            std::size_t speaker, std::size_t windows, const ModelConfig& cfg,
                                            const WordEmbeddingTable& table) {
  if (windows < 1) throw Error(ErrorCode::ConfigInvalid, "chain length must be at least 1");
  const Waveform at_rate = audio.sample_rate == cfg.sample_rate ? audio : resample_linear(audio, cfg.sample_rate);
  std::vector<SampleFeatures> out;
  for (std::size_t k = 0; k < windows; ++k) {
    const Waveform clip = audio_window(at_rate, k * cfg.audio_samples(), cfg.audio_samples());
    const std::size_t lo = k * words.size() / windows, hi = (k + 1) * words.size() / windows;
    const std::vector<std::string> part(words.begin() + static_cast<std::ptrdiff_t>(lo),
                                        words.begin() + static_cast<std::ptrdiff_t>(hi));
    out.push_back(extract_features(clip, part, speaker, cfg, table));
  }
  return out;
}

Tensor stack_directions(const std::vector<const EdgeDirectionSequence*>& seqs) {
  if (seqs.empty()) throw Error(ErrorCode::ShapeMismatch, "stack_directions: empty batch");
  const std::size_t frames = seqs.front()->frames;
  Tensor t({seqs.size(), frames, kNumEdges, 3});
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    if (seqs[b]->frames != frames) throw Error(ErrorCode::ShapeMismatch, "stack_directions: ragged batch");
    std::copy(seqs[b]->directions.begin(), seqs[b]->directions.end(), t.data() + b * frames * kNumEdges * 3);
  }
  return t;
}

EdgeDirectionSequence unstack_directions(const Tensor& batch, std::size_t item) {
  if (batch.rank() != 4 || batch.dim(2) != kNumEdges || batch.dim(3) != 3 || item >= batch.dim(0)) {
    throw Error(ErrorCode::ShapeMismatch, "unstack_directions: bad batch " + shape_str(batch.shape()));
  }
  EdgeDirectionSequence s(batch.dim(1));
  const std::size_t n = s.directions.size();
  std::copy(batch.data() + item * n, batch.data() + (item + 1) * n, s.directions.begin());
  return s;
}

EdgeDirectionSequence normalized(const EdgeDirectionSequence& dirs) {
  EdgeDirectionSequence out = dirs;
  for (std::size_t t = 0; t < out.frames; ++t) {
    for (std::size_t e = 0; e < kNumEdges; ++e) {
      double* v = out.edge(t, e);
      const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      if (!(n > 1e-12)) {
        throw Error(ErrorCode::ZeroVector, "edge " + std::to_string(e) + " at frame " + std::to_string(t) + " is zero");
      }
      for (int k = 0; k < 3; ++k) v[k] /= n;
    }
  }
  return out;
}

ModelInputs stack_inputs(const std::vector<const SampleFeatures*>& samples,
                         const std::vector<const EdgeDirectionSequence*>& seeds, const ModelConfig& cfg) {
  const std::size_t B = samples.size();
  if (B == 0 || seeds.size() != B) throw Error(ErrorCode::ShapeMismatch, "stack_inputs: batch size mismatch");
  ModelInputs in;
  const std::size_t T = cfg.frames;
  in.text = Tensor({B, T, kEmbeddingDim});
  in.speaker = Tensor({B, cfg.speakers});
  if (cfg.no_mfcc_encoder) {
    in.audio = Tensor({B, cfg.audio_samples(), 1});
  } else {
    in.mfcc = Tensor({B, cfg.mfcc_columns(), kMfccRows});
  }
  for (std::size_t b = 0; b < B; ++b) {
    const SampleFeatures& s = *samples[b];
    auto copy = [&](const std::vector<double>& src, Tensor& dst, const char* what) {
      const std::size_t n = dst.size() / B;
      if (src.size() != n) {
        throw Error(ErrorCode::ShapeMismatch, std::string("stack_inputs: ") + what + " has " +
                                                  std::to_string(src.size()) + " values, expected " + std::to_string(n));
      }
      std::copy(src.begin(), src.end(), dst.data() + b * n);
    };
    copy(s.text, in.text, "text");
    if (cfg.no_mfcc_encoder) {
      copy(s.audio, in.audio, "audio");
    } else {
      copy(s.mfcc, in.mfcc, "mfcc");
    }
    if (s.speaker >= cfg.speakers) throw Error(ErrorCode::IdOutOfRange, "stack_inputs: speaker id out of range");
    in.speaker[b * cfg.speakers + s.speaker] = 1.0;
    if (seeds[b]->frames != T) throw Error(ErrorCode::ShapeMismatch, "stack_inputs: seed length differs from T");
  }
  in.seed = stack_directions(seeds);
  return in;
}

Generator::Generator(ParameterSet& ps, const ModelConfig& cfg, const AdjacencySpec& adj, Rng& rng) : cfg_(&cfg) {
  const EncoderDims& d = cfg.dims;
  if (cfg.no_mfcc_encoder) {
    raw_ = RawAudioEncoder(ps, "gen.audio", cfg.frames, d.mfcc, rng);
  } else {
    mfcc_ = MfccEncoder(ps, "gen.mfcc", cfg.mfcc_columns(), cfg.frames, d.mfcc, rng);
  }
  text_ = TextEncoder(ps, "gen.text", kEmbeddingDim, d.text, rng);
  speaker_ = SpeakerEncoder(ps, "gen.speaker", cfg.speakers, d.style, rng);
  if (!cfg.no_affective_encoder) affective_ = AffectiveEncoder(ps, "gen.affective", adj, d, rng);
  gru_ = BiGruLayer(ps, "gen.gru", cfg.generator_input_dim(), d.generator_hidden, rng);
  fc_gen_ = LinearLayer(ps, "gen.fc", d.generator_hidden, cfg.pose_dim(), rng);
}

GeneratorOutput Generator::operator()(Graph& g, const ModelInputs& in, const Tensor& noise) const {
  const ModelConfig& cfg = *cfg_;
  const std::size_t B = in.batch(), T = cfg.frames;
  if (in.seed.shape() != Shape{B, T, kNumEdges, 3}) {
    throw Error(ErrorCode::ShapeMismatch, "generate: seed shape " + shape_str(in.seed.shape()));
  }
  if (in.text.shape() != Shape{B, T, kEmbeddingDim}) {
    throw Error(ErrorCode::ShapeMismatch, "generate: text shape " + shape_str(in.text.shape()));
  }
  GeneratorOutput out;
  const Var audio = cfg.no_mfcc_encoder ? raw_(g.constant(in.audio)) : mfcc_(g.constant(in.mfcc));
  const Var text = text_(g.constant(in.text));
  out.style = speaker_(g.constant(in.speaker));
  out.style_sample = sample_style(out.style, noise, T);
  const Var seed = g.constant(in.seed);
  const Var pose = cfg.no_affective_encoder ? reshape(seed, {B, T, cfg.pose_dim()}) : affective_(seed);
  const Var parts[] = {audio, text, out.style_sample, pose};
  out.features = concat_last(parts);
  auto [fwd, bwd] = gru_(out.features);
  out.directions = reshape(fc_gen_(add(fwd, bwd)), {B, T, kNumEdges, 3});
  return out;
}

Discriminator::Discriminator(ParameterSet& ps, const ModelConfig& cfg, const AdjacencySpec& adj, Rng& rng)
    : cfg_(&cfg) {
  const EncoderDims& d = cfg.dims;
  if (cfg.no_affective_encoder) {
    plain_ = Conv1dLayer(ps, "disc.plain", cfg.pose_dim(), d.affective, 3, 1, 1, rng);
  } else {
    affective_ = AffectiveEncoder(ps, "disc.affective", adj, d, rng);
  }
  gru_ = BiGruLayer(ps, "disc.gru", d.affective, d.discriminator_hidden, rng);
  fc_disc_ = LinearLayer(ps, "disc.fc", d.discriminator_hidden, 1, rng);
}

Var Discriminator::operator()(Var directions) const {
  const Shape& s = directions.shape();
  if (s.size() != 4 || s[2] != kNumEdges || s[3] != 3) {
    throw Error(ErrorCode::ShapeMismatch, "discriminate: expected [B, T, 9, 3], got " + shape_str(s));
  }
  const std::size_t B = s[0], T = s[1];
  const Var unit = normalize_groups(reshape(directions, {B, T, kNumEdges * 3}), 3);
  const Var feat = cfg_->no_affective_encoder ? leaky_relu(plain_(unit)) : affective_(reshape(unit, s));
  auto [fwd, bwd] = gru_(feat);
  return sigmoid(fc_disc_(select_time(add(fwd, bwd), T - 1)));
}

GanModel::GanModel(const ModelConfig& cfg)
    : cfg_(std::make_unique<ModelConfig>(cfg)),
      gen_params_(std::make_unique<ParameterSet>()),
      disc_params_(std::make_unique<ParameterSet>()) {
  cfg_->validate();
  const AdjacencySpec adj = build_adjacency(Skeleton::upper_body());
  Rng rng(cfg_->seed);
  generator_ = std::make_unique<Generator>(*gen_params_, *cfg_, adj, rng);
  discriminator_ = std::make_unique<Discriminator>(*disc_params_, *cfg_, adj, rng);
  round_to_storage(*gen_params_);
  round_to_storage(*disc_params_);
}

void GanModel::save(const std::filesystem::path& path, const json& extra) const {
  json header = extra;
  header["model"] = cfg_->to_json();
  const ParameterSet* sets[] = {gen_params_.get(), disc_params_.get()};
  save_checkpoint(path, sets, header);
}

std::unique_ptr<GanModel> GanModel::load(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (!ck.config.contains("model")) throw Error(ErrorCode::ConfigInvalid, path.string() + " has no model config");
  auto model = std::make_unique<GanModel>(ModelConfig::from_json(ck.config["model"]));
  apply_checkpoint(ck, *model->gen_params_);
  apply_checkpoint(ck, *model->disc_params_);
  return model;
}

Tensor predict(const GanModel& model, const ModelInputs& in, const Tensor& noise) {
  Graph g;
  return model.generator()(g, in, noise).directions.value();
}

Synthesis synthesize_sequence(const GanModel& model, const std::vector<SampleFeatures>& windows,
                              const EdgeDirectionSequence& seed, const std::vector<double>& noise,
                              const Skeleton& skel, const Vec3& root) {
  const ModelConfig& cfg = model.config();
  if (windows.empty()) throw Error(ErrorCode::ConfigInvalid, "chain length must be at least 1");
  if (noise.size() != cfg.dims.style) throw Error(ErrorCode::ShapeMismatch, "style noise length mismatch");
  const std::size_t T = cfg.frames;
  const Tensor z({1, cfg.dims.style}, noise);
  EdgeDirectionSequence current = seed;
  Synthesis out;
  out.directions = EdgeDirectionSequence(T * windows.size());
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const ModelInputs in = stack_inputs({&windows[k]}, {&current}, cfg);
    current = normalized(unstack_directions(predict(model, in, z), 0));
    std::copy(current.directions.begin(), current.directions.end(),
              out.directions.directions.begin() + static_cast<std::ptrdiff_t>(k * current.directions.size()));
  }
  const Vec3 roots[] = {root};
  out.pose = reconstruct_positions(out.directions, skel, roots, cfg.fps);
  return out;
}

}  // namespace s2ag
