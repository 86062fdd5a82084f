// SPDX-License-Identifier: Apache-2.0
//
// Attention-map similarity between two models and layer-plan sweeps.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hmnet/hierarchy.hpp"
#include "hmnet/trainer.hpp"

namespace hmnet {

struct AttentionSimilarityRow {
  std::size_t layer;
  std::size_t head;
  double cosine;
};

struct AttentionSimilarityReport {
  std::vector<AttentionSimilarityRow> rows;
  std::size_t layers = 0;
  std::size_t heads = 0;

  double at(std::size_t layer, std::size_t head) const { return rows.at(layer * heads + head).cosine; }
  /// Mean over heads for each layer.
  std::vector<double> layer_means() const;
  /// CSV with columns layer,head,cosine after a '#' line naming the flattening.
  void write_csv(const std::string& path) const;
};

/// For every layer and head, flatten each example's attention map over its
/// unpadded positions, take the cosine between the two models, and average
/// over the probe batch. Both paths must have the same depth and head count.
AttentionSimilarityReport attention_similarity(const HMNetModel& model_a, const std::string& task_a,
                                               const HMNetModel& model_b, const std::string& task_b,
                                               const Batch& probe);

/// `count` dev examples chosen by a seeded shuffle, padded into one batch.
Batch probe_batch(const EncodedSplit& split, std::size_t count, std::uint64_t seed);

struct SweepRow {
  std::string plan;
  std::string grouping;
  std::string task;
  std::string metric;
  double value;
  std::uint64_t seed;
};

struct SweepResult {
  std::vector<SweepRow> rows;

  /// Mean value over seeds for one (plan, grouping, task) cell.
  double mean(const std::string& plan, const std::string& grouping, const std::string& task) const;
  void write_csv(const std::string& path) const;
};

struct SweepConfig {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::size_t jobs = 1;
};

/// For x = 0..depth trains a {x, 0, depth - x} model on the two tasks (one
/// cluster each) and records both dev metrics per seed.
SweepResult shared_layer_sweep(const std::vector<EncodedTask>& pair, std::size_t depth, const SweepConfig& config);

struct NamedGrouping {
  std::string name;
  Grouping grouping;
};

/// Grid over plans x groupings x seeds. Each cell adds one row per task and
/// an "average" row (task "average", metric "average") with the mean score.
SweepResult layer_combination_sweep(const std::vector<EncodedTask>& tasks, const std::vector<NamedGrouping>& groupings,
                                    const std::vector<LayerPlan>& plans, const SweepConfig& config);

}  // namespace hmnet
