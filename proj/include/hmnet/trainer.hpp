// SPDX-License-Identifier: Apache-2.0
//
// Multi-task mini-batch training over the routed hierarchy.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "hmnet/hierarchy.hpp"
#include "hmnet/tasks.hpp"

namespace hmnet {

struct TrainConfig {
  std::size_t epochs = 3;  // E_m
  std::size_t batch_size = 16;
  double lr = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  /// Evaluate dev metrics after every epoch; otherwise only after the last.
  bool eval_every_epoch = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Seeded shuffle of [0, n), cut into contiguous chunks of batch_size.
std::vector<std::vector<std::size_t>> pack_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

/// lr0 * (1 - step / total_steps).
double lr_schedule(std::size_t step, std::size_t total_steps, double lr0);

/// AdamW with decoupled weight decay and a step counter per parameter tensor.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Update each tensor from its current gradient (zero if none).
  void step(const std::vector<Tensor>& params, double lr, double weight_decay);
  /// Update a single tensor with an explicit gradient.
  void step(Tensor& param, std::span<const double> grad, double lr, double weight_decay);
  /// Number of updates applied to this tensor so far.
  std::size_t steps(const Tensor& param) const;

 private:
  struct State {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  double beta1_, beta2_, eps_;
  std::unordered_map<const double*, State> state_;
};

/// A task's examples tokenized once.
struct EncodedSplit {
  std::vector<Encoding> inputs;
  std::vector<double> labels;
  std::vector<std::string> groups;
};

EncodedSplit encode_split(const std::vector<Example>& examples, const TaskSpec& spec, const Tokenizer& tok);

struct EncodedTask {
  TaskSpec spec;
  EncodedSplit train;
  EncodedSplit dev;
};

std::vector<EncodedTask> encode_tasks(const std::vector<TaskDataset>& datasets, const Tokenizer& tok);

/// Shared vocabulary over the training splits of all datasets.
Tokenizer build_tokenizer(const std::vector<TaskDataset>& datasets, std::size_t max_len);

struct MetricRecord {
  std::size_t epoch;
  std::string task;
  std::string metric;
  double value;
};

struct LossRecord {
  std::size_t step;
  std::size_t epoch;
  std::string task;
  double loss;
  double lr;
};

struct RunHistory {
  std::vector<MetricRecord> metrics;
  std::vector<LossRecord> losses;
  std::string checkpoint;

  /// Metric of the last evaluated epoch.
  double final_metric(const std::string& task) const;
  std::map<std::string, double> final_metrics() const;

  void write_jsonl(const std::string& path) const;
  void write_loss_csv(const std::string& path) const;
};

/// Class predictions (argmax) or regression outputs for a split.
std::vector<double> predict(const HMNetModel& model, const std::string& task_id, const EncodedSplit& split,
                            std::size_t batch_size = 64);
double evaluate(const HMNetModel& model, const EncodedTask& task, std::size_t batch_size = 64);

/// Per-task loss: cross-entropy or mean squared error.
Tensor task_loss(Graph& g, const TaskSpec& spec, const Tensor& logits, const std::vector<double>& labels);

/// Hook invoked after every optimizer step (for tests and tracing).
using StepHook = std::function<void(std::size_t step, const std::string& task)>;

/// Algorithm: pack each task's training set once; every epoch re-merge and
/// shuffle the batch list, then for each homogeneous batch run its task's
/// path, take the loss, backpropagate and update only that path. Dev metrics
/// are computed at epoch end. Non-finite losses abort with a RunError.
RunHistory train(HMNetModel& model, const std::vector<EncodedTask>& tasks, const TrainConfig& config,
                 AdamW* optimizer = nullptr, const StepHook& hook = {});

}  // namespace hmnet
