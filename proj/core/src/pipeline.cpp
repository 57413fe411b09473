// SPDX-License-Identifier: Apache-2.0
#include "s2ag/pipeline.hpp"

#include <sstream>

#include "s2ag/error.hpp"

namespace s2ag {

ModelConfig model_config_for(const Dataset& ds) {
  if (ds.records.empty()) throw Error(ErrorCode::TooFewSamples, "dataset has no records");
  ModelConfig cfg;
  cfg.speakers = ds.speakers;
  cfg.frames = ds.frames;
  cfg.fps = ds.fps;
  cfg.sample_rate = ds.records.front().waveform.sample_rate;
  cfg.validate();
  return cfg;
}

TrainingSet build_training_set(const Dataset& ds, const std::vector<std::size_t>& indices, const ModelConfig& cfg,
                               const WordEmbeddingTable& table) {
  if (ds.frames != cfg.frames) throw Error(ErrorCode::ShapeMismatch, "dataset T differs from the model's T");
  const Skeleton skel = Skeleton::upper_body();
  TrainingSet set;
  for (std::size_t i : indices) {
    if (i >= ds.records.size()) throw Error(ErrorCode::IdOutOfRange, "record index " + std::to_string(i));
    const DatasetRecord& r = ds.records[i];
    set.features.push_back(extract_features(r.waveform, r.transcript, r.speaker_id, cfg, table));
    set.seeds.push_back(to_edge_directions(r.pose.slice(0, ds.frames), skel));
    set.targets.push_back(to_edge_directions(r.pose.slice(ds.frames, ds.frames), skel));
  }
  return set;
}

std::vector<EdgeDirectionSequence> target_directions(const Dataset& ds, const std::vector<std::size_t>& indices) {
  const Skeleton skel = Skeleton::upper_body();
  std::vector<EdgeDirectionSequence> out;
  for (std::size_t i : indices) out.push_back(to_edge_directions(ds.records.at(i).pose.slice(ds.frames, ds.frames), skel));
  return out;
}

Evaluation evaluate_model(const GanModel& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                          const TrainingSet& set, const FeatureAutoencoder* ae) {
  if (indices.size() != set.size()) throw Error(ErrorCode::ShapeMismatch, "evaluation set and indices differ");
  const std::vector<EdgeDirectionSequence> pred = predict_all(model, set);
  Evaluation ev;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const DatasetRecord& r = ds.records.at(indices[k]);
    PoseSequence truth = r.pose.slice(ds.frames, ds.frames);
    const Skeleton skel = Skeleton::upper_body(r.bone_lengths);
    const std::vector<Vec3> roots = root_trajectory(truth);
    ev.predicted.push_back(reconstruct_positions(normalized(pred[k]), skel, roots, ds.fps));
    ev.sample_maje.push_back(maje(truth, ev.predicted.back()));
    ev.sample_mad.push_back(mad(truth, ev.predicted.back(), ds.fps));
    ev.truth.push_back(std::move(truth));
  }
  ev.report.sample_count = indices.size();
  ev.report.maje_mm = maje(ev.truth, ev.predicted);
  ev.report.mad_mm_per_s2 = mad(ev.truth, ev.predicted, ds.fps);
  if (ae) ev.report.fgd = fgd(ev.truth, ev.predicted, *ae);
  return ev;
}

std::string per_sample_csv(const Evaluation& ev, const std::vector<std::size_t>& indices) {
  std::ostringstream out;
  out.precision(10);
  out << "record,maje_mm,mad_mm_per_s2\n";
  for (std::size_t k = 0; k < ev.sample_maje.size(); ++k) {
    out << indices.at(k) << ',' << ev.sample_maje[k] << ',' << ev.sample_mad[k] << '\n';
  }
  return out.str();
}

}  // namespace s2ag
