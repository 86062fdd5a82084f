// SPDX-License-Identifier: Apache-2.0
//
// The hierarchical sharing model: x shared layers, then y layers per task
// cluster, then z layers per task, then a per-task head on [CLS].
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hmnet/tasks.hpp"
#include "hmnet/tensor.hpp"
#include "hmnet/transformer.hpp"

namespace hmnet {

struct LayerPlan {
  std::size_t x = 8;  // shared
  std::size_t y = 2;  // per cluster
  std::size_t z = 2;  // per task

  std::size_t depth() const { return x + y + z; }
  /// Parses "x,y,z" (braces and spaces allowed).
  static LayerPlan parse(std::string_view s);
  std::string str() const;
  bool operator==(const LayerPlan&) const = default;
};

struct Grouping {
  std::vector<std::string> task_ids;
  std::vector<std::size_t> cluster_of;
  std::size_t k = 0;

  /// Throws ConfigError unless every task has a cluster and indices are dense in [0, k).
  void validate() const;
  std::size_t cluster(std::string_view task) const;
  std::vector<std::vector<std::string>> clusters() const;
  /// Every task in one cluster.
  static Grouping single(const std::vector<std::string>& task_ids);
  /// Renumber clusters by first appearance in task order.
  Grouping canonical() const;
  /// Same partition, ignoring labels.
  bool same_partition(const Grouping& other) const;
};

nlohmann::json to_json(const Grouping& g);
Grouping grouping_from_json(const nlohmann::json& j);
void save_grouping(const std::string& path, const Grouping& g);
Grouping load_grouping(const std::string& path);

struct ModelConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t max_len = 64;
  std::size_t vocab_size = 0;
};

struct Head {
  Tensor w;  // [d, out]
  Tensor b;  // [out]
};

enum class Tier { shared, cluster, task };

std::string to_string(Tier t);

/// One step of a task's path: the tier, the stack index within the tier
/// (0 for shared, cluster index, or task index) and the layer within it.
struct LayerRef {
  Tier tier;
  std::size_t stack;
  std::size_t layer;
  bool operator==(const LayerRef&) const = default;
};

class HMNetModel {
 public:
  ModelConfig config;
  LayerPlan plan;
  Grouping grouping;
  std::vector<TaskSpec> tasks;
  std::uint64_t init_seed = 0;

  Embeddings embeddings;
  std::vector<EncoderLayerParams> shared;               // x
  std::vector<std::vector<EncoderLayerParams>> cluster;  // k stacks of y
  std::vector<std::vector<EncoderLayerParams>> task;     // n stacks of z
  std::vector<Head> heads;                               // n

  std::size_t task_index(std::string_view id) const;
  const TaskSpec& spec(std::string_view id) const { return tasks[task_index(id)]; }
  std::size_t total_layers() const { return shared.size() + plan.y * cluster.size() + plan.z * task.size(); }
  const EncoderLayerParams& layer(const LayerRef& ref) const;

  /// Parameter tensors on a task's path: embeddings, routed layers, head.
  std::vector<Tensor> path_parameters(std::string_view task_id) const;
  /// Every parameter with a stable hierarchical name.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

 private:
  friend HMNetModel build_model(const LayerPlan&, const Grouping&, const std::vector<TaskSpec>&, const ModelConfig&,
                                std::uint64_t);
  friend HMNetModel load_checkpoint(const std::string&);
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Seeding: embeddings use derive_seed(seed, "embeddings"); shared layer i
/// uses derive_seed(seed, "shared", i); a cluster stack is seeded from the
/// smallest task id among its members, so cluster relabeling does not change
/// the model; task stacks and heads are seeded from the task id.
HMNetModel build_model(const LayerPlan& plan, const Grouping& grouping, const std::vector<TaskSpec>& tasks,
                       const ModelConfig& config, std::uint64_t init_seed);

/// Routed layer path for a task, bottom to top.
std::vector<LayerRef> route(const HMNetModel& model, std::string_view task_id);

/// Per-layer attention probabilities, [B][h][L][L] flattened, one entry per
/// layer on the path.
using AttentionMaps = std::vector<std::vector<double>>;

/// Logits [B, n_classes] (or [B, 1] for regression).
Tensor forward(Graph& g, const HMNetModel& model, std::string_view task_id, const Batch& batch,
               AttentionMaps* maps = nullptr);

/// Final-layer hidden states [B*L, d] plus per-tier traces, used by tests.
Tensor encode(Graph& g, const HMNetModel& model, std::string_view task_id, const Batch& batch,
              AttentionMaps* maps = nullptr, std::vector<Tensor>* trace = nullptr);

struct ParamCount {
  std::size_t per_layer = 0;
  std::size_t embeddings = 0;
  /// Encoder parameters on any single task's path: (x + y + z) * per_layer.
  std::size_t activated_encoder = 0;
  std::map<std::string, std::size_t> head;
  /// Embeddings + path encoder + own head.
  std::map<std::string, std::size_t> activated_per_task;
  std::size_t overall_encoder = 0;
  /// Embeddings + all stacks + all heads.
  std::size_t overall = 0;
  std::size_t total_layers = 0;
};

ParamCount count_params(const HMNetModel& model);

/// Checkpoint directory: manifest.json plus one tensor file per stack.
void save_checkpoint(const std::string& dir, const HMNetModel& model);
HMNetModel load_checkpoint(const std::string& dir);

}  // namespace hmnet
