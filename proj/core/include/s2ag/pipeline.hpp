// SPDX-License-Identifier: Apache-2.0
#pragma once

// Glue between dataset records, the model and the metrics.

#include <vector>

#include "s2ag/data.hpp"
#include "s2ag/gan.hpp"
#include "s2ag/metrics.hpp"
#include "s2ag/training.hpp"

namespace s2ag {

/// Model config matching a dataset's speaker count, T, fps and sample rate.
ModelConfig model_config_for(const Dataset& ds);

/// Features plus unit seed/target directions for the given records.
TrainingSet build_training_set(const Dataset& ds, const std::vector<std::size_t>& indices, const ModelConfig& cfg,
                               const WordEmbeddingTable& table);

/// Target-window edge directions of the given records.
std::vector<EdgeDirectionSequence> target_directions(const Dataset& ds, const std::vector<std::size_t>& indices);

struct Evaluation {
  MetricsReport report;
  std::vector<double> sample_maje, sample_mad;
  std::vector<PoseSequence> truth, predicted;
};

/// Zero-noise predictions for the target windows, reconstructed with each
/// record's bone lengths and ground-truth root trajectory. FGD is computed
/// only when `ae` is given.
Evaluation evaluate_model(const GanModel& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                          const TrainingSet& set, const FeatureAutoencoder* ae);

std::string per_sample_csv(const Evaluation& ev, const std::vector<std::size_t>& indices);

}  // namespace s2ag
