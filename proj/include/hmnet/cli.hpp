// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Subcommands: relevance, cluster, train, eval,
// attention-sim, sweep. Exit 0 on success, 1 on a validation or run failure
// (one line "error: <kind>: <message>" on stderr), 2 on a usage error.
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "hmnet/hierarchy.hpp"
#include "hmnet/tasks.hpp"
#include "hmnet/trainer.hpp"

namespace hmnet {

/// Task manifest (JSON):
///   {"tasks": [ {"id", "category", "mode", "labels", "metric", "train": path, "dev": path}
///             | {"synthetic": {...synthetic spec...}, "n_train": N, "n_dev": M} ],
///    "synthetic_suite": {"n_train": N, "n_dev": M, "pattern_shift": S}}
/// Either key may be absent but not both. Relative paths are resolved against
/// the manifest's directory. Synthetic data is generated with `data_seed`.
std::vector<TaskDataset> load_task_manifest(const std::string& path, std::uint64_t data_seed);

enum class GroupingSource { manual, data_property, model_based, file };

GroupingSource parse_grouping_source(std::string_view s);
std::string to_string(GroupingSource s);

struct GroupingConfig {
  GroupingSource source = GroupingSource::manual;
  /// Grouping JSON for `file`; optional precomputed relevance CSV for the
  /// data_property and model_based sources.
  std::string path;
  std::size_t k = 3;
  std::size_t restarts = 50;
};

/// Experiment config (JSON):
///   {"tasks": manifest path, "plan": "x,y,z" or [x,y,z], "depth": optional check,
///    "grouping": {"source", "path", "k", "restarts"},
///    "model": {"d", "heads", "max_len"}, "relevance_depth": layers for pairwise runs,
///    "train": {...train config...}, "output": dir, "seed": global seed}
struct ExperimentConfig {
  std::string tasks;
  LayerPlan plan;
  GroupingConfig grouping;
  ModelConfig model{32, 4, 64, 0};
  /// Depth of the single-channel models behind model-based relevance; 0 means plan depth.
  std::size_t relevance_depth = 0;
  TrainConfig train;
  std::string output = "run";
  std::uint64_t seed = 0;

  /// Referenced paths must exist and every numeric field be in range.
  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& base_dir = "");
ExperimentConfig load_experiment_config(const std::string& path);

/// Per-component seeds expanded from the global seed with derive_seed(seed, name).
struct RunSeeds {
  std::uint64_t data;    // "data": synthetic generation
  std::uint64_t init;    // "init": parameter initialization
  std::uint64_t train;   // "train": batch packing and shuffling
  std::uint64_t kmeans;  // "kmeans": clustering restarts
  std::uint64_t probe;   // "probe": attention probe selection
};

RunSeeds split_seed(std::uint64_t seed);

/// Grouping of the datasets' tasks from the configured source. Model-based
/// grouping trains the pairwise relevance matrix unless `path` names a CSV.
Grouping resolve_grouping(const ExperimentConfig& config, const std::vector<TaskDataset>& datasets,
                          std::size_t jobs = 1);

/// Runs one subcommand with its flags (everything after the name).
int run_subcommand(const std::string& name, const std::vector<std::string>& flags, std::ostream& out,
                   std::ostream& err);

/// Full argument vector, argv[0] included.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hmnet
