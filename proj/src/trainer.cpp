// SPDX-License-Identifier: Apache-2.0
#include "hmnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "hmnet/errors.hpp"
#include "hmnet/ops.hpp"
#include "hmnet/rng.hpp"

namespace hmnet {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (weight_decay < 0 || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0))
    throw ConfigError("invalid AdamW moments");
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},   {"batch_size", c.batch_size}, {"lr", c.lr},         {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},     {"beta2", c.beta2},           {"eps", c.eps},       {"seed", c.seed},
              {"eval_every_epoch", c.eval_every_epoch}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.seed = j.value("seed", c.seed);
    c.eval_every_epoch = j.value("eval_every_epoch", c.eval_every_epoch);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::vector<std::size_t>> pack_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (n == 0) throw InputError("cannot pack an empty dataset");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return out;
}

double lr_schedule(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) throw ConfigError("lr schedule needs total_steps > 0");
  if (step > total_steps) throw ConfigError(fmt::format("step {} beyond schedule of {} steps", step, total_steps));
  return lr0 * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

void AdamW::step(Tensor& param, std::span<const double> grad, double lr, double weight_decay) {
  if (grad.size() != param.numel())
    throw ContractError(fmt::format("AdamW: gradient of {} values for parameter {}", grad.size(), shape_str(param.shape())));
  if (lr < 0) throw ContractError("AdamW: negative learning rate");
  auto& s = state_[param.data().data()];
  if (s.m.empty()) {
    s.m.assign(param.numel(), 0.0);
    s.v.assign(param.numel(), 0.0);
  } else if (s.m.size() != param.numel()) {
    throw ContractError("AdamW: optimizer state does not match parameter " + shape_str(param.shape()));
  }
  ++s.t;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
  const double step_size = lr / bc1;
  const double bc2_sqrt = std::sqrt(bc2);
  auto p = param.data();
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] *= decay;
    s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * grad[i];
    s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double denom = std::sqrt(s.v[i]) / bc2_sqrt + eps_;
    p[i] -= step_size * (s.m[i] / denom);
  }
}

void AdamW::step(const std::vector<Tensor>& params, double lr, double weight_decay) {
  for (Tensor p : params) {
    if (p.has_grad()) {
      step(p, p.grad(), lr, weight_decay);
    } else {
      std::vector<double> zeros(p.numel(), 0.0);
      step(p, zeros, lr, weight_decay);
    }
  }
}

std::size_t AdamW::steps(const Tensor& param) const {
  auto it = state_.find(param.data().data());
  return it == state_.end() ? 0 : it->second.t;
}

EncodedSplit encode_split(const std::vector<Example>& examples, const TaskSpec& spec, const Tokenizer& tok) {
  EncodedSplit s;
  for (const auto& ex : examples) {
    std::optional<std::string_view> b, c;
    if (ex.text_b) b = *ex.text_b;
    if (ex.text_c) c = *ex.text_c;
    s.inputs.push_back(tok.encode(ex.text_a, b, c, spec.mode));
    s.labels.push_back(ex.label);
    s.groups.push_back(ex.group);
  }
  return s;
}

std::vector<EncodedTask> encode_tasks(const std::vector<TaskDataset>& datasets, const Tokenizer& tok) {
  std::vector<EncodedTask> out;
  for (const auto& ds : datasets)
    out.push_back(EncodedTask{ds.spec, encode_split(ds.train, ds.spec, tok), encode_split(ds.dev, ds.spec, tok)});
  return out;
}

Tokenizer build_tokenizer(const std::vector<TaskDataset>& datasets, std::size_t max_len) {
  std::vector<std::string> texts;
  for (const auto& ds : datasets) {
    auto t = ds.texts();
    texts.insert(texts.end(), t.begin(), t.end());
  }
  return Tokenizer::build(texts, max_len);
}

double RunHistory::final_metric(const std::string& task) const {
  for (auto it = metrics.rbegin(); it != metrics.rend(); ++it)
    if (it->task == task) return it->value;
  throw LookupError("no metric recorded for task '" + task + "'");
}

std::map<std::string, double> RunHistory::final_metrics() const {
  std::map<std::string, double> out;
  for (const auto& r : metrics) out[r.task] = r.value;
  return out;
}

void RunHistory::write_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& r : metrics)
    out << json{{"epoch", r.epoch}, {"task", r.task}, {"metric", r.metric}, {"value", r.value}}.dump() << '\n';
  if (!out) throw IoError("failed writing " + path);
}

void RunHistory::write_loss_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "step,epoch,task,loss,lr\n";
  for (const auto& r : losses) out << fmt::format("{},{},{},{:.17g},{:.17g}\n", r.step, r.epoch, r.task, r.loss, r.lr);
  if (!out) throw IoError("failed writing " + path);
}

namespace {

Batch gather_batch(const EncodedSplit& split, const std::vector<std::size_t>& idx) {
  std::vector<Encoding> encs;
  encs.reserve(idx.size());
  for (auto i : idx) encs.push_back(split.inputs[i]);
  return pad_batch(encs);
}

}  // namespace

Tensor task_loss(Graph& g, const TaskSpec& spec, const Tensor& logits, const std::vector<double>& labels) {
  if (spec.is_regression()) return ops::mse_loss(g, logits, labels);
  std::vector<std::size_t> cls(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) cls[i] = static_cast<std::size_t>(labels[i]);
  return ops::cross_entropy(g, logits, cls);
}

std::vector<double> predict(const HMNetModel& model, const std::string& task_id, const EncodedSplit& split,
                            std::size_t batch_size) {
  const auto& spec = model.spec(task_id);
  std::vector<double> out;
  out.reserve(split.inputs.size());
  for (std::size_t i = 0; i < split.inputs.size(); i += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, split.inputs.size() - i));
    std::iota(idx.begin(), idx.end(), i);
    Graph g = Graph::inference();
    Tensor logits = forward(g, model, task_id, gather_batch(split, idx));
    const std::size_t c = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (spec.is_regression()) {
        out.push_back(logits[r]);
      } else {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
          if (logits[r * c + j] > logits[r * c + best]) best = j;
        out.push_back(static_cast<double>(best));
      }
    }
  }
  return out;
}

double evaluate(const HMNetModel& model, const EncodedTask& task, std::size_t batch_size) {
  if (task.dev.inputs.empty()) throw InputError("task " + task.spec.id + " has no dev examples");
  auto preds = predict(model, task.spec.id, task.dev, batch_size);
  return compute_metric(task.spec.metric, preds, task.dev.labels, task.dev.groups);
}

RunHistory train(HMNetModel& model, const std::vector<EncodedTask>& tasks, const TrainConfig& config, AdamW* optimizer,
                 const StepHook& hook) {
  config.validate();
  if (tasks.empty()) throw InputError("no tasks to train");
  for (const auto& t : tasks) route(model, t.spec.id);

  struct Item {
    std::size_t task;
    std::vector<std::size_t> idx;
  };
  std::vector<Item> merged;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].train.inputs.empty()) throw InputError("task " + tasks[t].spec.id + " has no training examples");
    for (auto& b : pack_batches(tasks[t].train.inputs.size(), config.batch_size, derive_seed(config.seed, "pack", t)))
      merged.push_back(Item{t, std::move(b)});
  }
  const std::size_t total = config.epochs * merged.size();

  // Batches are materialized once; only their order changes per epoch.
  std::vector<Batch> batches;
  std::vector<std::vector<double>> labels;
  for (const auto& item : merged) {
    batches.push_back(gather_batch(tasks[item.task].train, item.idx));
    std::vector<double> y;
    for (auto i : item.idx) y.push_back(tasks[item.task].train.labels[i]);
    labels.push_back(std::move(y));
  }

  AdamW local(config.beta1, config.beta2, config.eps);
  AdamW& opt = optimizer ? *optimizer : local;
  RunHistory history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(merged.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, "shuffle", epoch));
    rng.shuffle(order);
    for (auto bi : order) {
      const auto& spec = tasks[merged[bi].task].spec;
      Graph g;
      Tensor logits = forward(g, model, spec.id, batches[bi]);
      Tensor loss = task_loss(g, spec, logits, labels[bi]);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw RunError(fmt::format("non-finite loss at step {} on task {}", step, spec.id));
      g.backward(loss);
      const double lr = lr_schedule(step, total, config.lr);
      opt.step(model.path_parameters(spec.id), lr, config.weight_decay);
      history.losses.push_back(LossRecord{step, epoch, spec.id, value, lr});
      if (hook) hook(step, spec.id);
      ++step;
    }
    if (config.eval_every_epoch || epoch + 1 == config.epochs) {
      for (const auto& t : tasks)
        history.metrics.push_back(MetricRecord{epoch, t.spec.id, to_string(t.spec.metric), evaluate(model, t)});
    }
  }
  return history;
}

}  // namespace hmnet
