// SPDX-License-Identifier: Apache-2.0
#include "hmnet/analysis.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "hmnet/errors.hpp"
#include "hmnet/parallel.hpp"
#include "hmnet/rng.hpp"

namespace hmnet {

std::vector<double> AttentionSimilarityReport::layer_means() const {
  std::vector<double> out(layers, 0.0);
  for (const auto& r : rows) out[r.layer] += r.cosine / static_cast<double>(heads);
  return out;
}

void AttentionSimilarityReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "# flattening: per-example cosine over unpadded positions, averaged over the probe batch\n";
  out << "layer,head,cosine\n";
  for (const auto& r : rows) out << fmt::format("{},{},{:.17g}\n", r.layer, r.head, r.cosine);
  if (!out) throw IoError("failed writing " + path);
}

AttentionSimilarityReport attention_similarity(const HMNetModel& model_a, const std::string& task_a,
                                               const HMNetModel& model_b, const std::string& task_b,
                                               const Batch& probe) {
  const std::size_t depth_a = route(model_a, task_a).size();
  const std::size_t depth_b = route(model_b, task_b).size();
  if (depth_a != depth_b)
    throw ConfigError(fmt::format("attention similarity needs equal depths, got {} and {}", depth_a, depth_b));
  if (model_a.config.heads != model_b.config.heads)
    throw ConfigError(fmt::format("attention similarity needs equal head counts, got {} and {}", model_a.config.heads,
                                  model_b.config.heads));
  AttentionMaps ma, mb;
  {
    Graph g = Graph::inference();
    forward(g, model_a, task_a, probe, &ma);
  }
  {
    Graph g = Graph::inference();
    forward(g, model_b, task_b, probe, &mb);
  }
  const std::size_t B = probe.size, L = probe.length, H = model_a.config.heads;
  AttentionSimilarityReport rep;
  rep.layers = depth_a;
  rep.heads = H;
  for (std::size_t l = 0; l < depth_a; ++l) {
    for (std::size_t h = 0; h < H; ++h) {
      double total = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* pa = ma[l].data() + (b * H + h) * L * L;
        const double* pb = mb[l].data() + (b * H + h) * L * L;
        const std::uint8_t* m = probe.mask.data() + b * L;
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < L; ++i) {
          if (!m[i]) continue;
          for (std::size_t j = 0; j < L; ++j) {
            if (!m[j]) continue;
            dot += pa[i * L + j] * pb[i * L + j];
            na += pa[i * L + j] * pa[i * L + j];
            nb += pb[i * L + j] * pb[i * L + j];
          }
        }
        // Attention rows are distributions, so neither norm can be zero.
        total += dot / (std::sqrt(na) * std::sqrt(nb));
      }
      rep.rows.push_back({l, h, std::clamp(total / static_cast<double>(B), -1.0, 1.0)});
    }
  }
  return rep;
}

Batch probe_batch(const EncodedSplit& split, std::size_t count, std::uint64_t seed) {
  if (split.inputs.empty()) throw InputError("probe batch needs at least one example");
  std::vector<std::size_t> order(split.inputs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(std::min(count, order.size()));
  std::vector<Encoding> encs;
  for (auto i : order) encs.push_back(split.inputs[i]);
  return pad_batch(encs);
}

double SweepResult::mean(const std::string& plan, const std::string& grouping, const std::string& task) const {
  double total = 0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.plan == plan && r.grouping == grouping && r.task == task) total += r.value, ++n;
  if (n == 0) throw LookupError("no sweep cell for plan " + plan + ", grouping " + grouping + ", task " + task);
  return total / static_cast<double>(n);
}

void SweepResult::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "plan,grouping,task,metric,value,seed\n";
  for (const auto& r : rows)
    out << fmt::format("\"{}\",{},{},{},{:.17g},{}\n", r.plan, r.grouping, r.task, r.metric, r.value, r.seed);
  if (!out) throw IoError("failed writing " + path);
}

namespace {

struct Cell {
  LayerPlan plan;
  const NamedGrouping* grouping;
  std::uint64_t seed;
};

std::vector<SweepRow> run_cell(const std::vector<EncodedTask>& tasks, const Cell& cell, const SweepConfig& config,
                               bool with_average) {
  std::vector<TaskSpec> specs;
  for (const auto& t : tasks) specs.push_back(t.spec);
  auto model = build_model(cell.plan, cell.grouping->grouping, specs, config.model, cell.seed);
  TrainConfig tc = config.train;
  tc.seed = cell.seed;
  tc.eval_every_epoch = false;
  auto history = train(model, tasks, tc);
  std::vector<SweepRow> rows;
  double total = 0;
  for (const auto& t : tasks) {
    const double v = history.final_metric(t.spec.id);
    total += v;
    rows.push_back({cell.plan.str(), cell.grouping->name, t.spec.id, to_string(t.spec.metric), v, cell.seed});
  }
  if (with_average)
    rows.push_back({cell.plan.str(), cell.grouping->name, "average", "average", total / static_cast<double>(tasks.size()),
                    cell.seed});
  return rows;
}

SweepResult run_cells(const std::vector<EncodedTask>& tasks, const std::vector<Cell>& cells, const SweepConfig& config,
                      bool with_average) {
  std::vector<std::vector<SweepRow>> out(cells.size());
  parallel_for(cells.size(), config.jobs, [&](std::size_t i) { out[i] = run_cell(tasks, cells[i], config, with_average); });
  SweepResult result;
  for (auto& rows : out) result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  return result;
}

}  // namespace

SweepResult shared_layer_sweep(const std::vector<EncodedTask>& pair, std::size_t depth, const SweepConfig& config) {
  if (pair.size() != 2) throw ConfigError("shared-layer sweep needs exactly two tasks");
  if (depth == 0) throw ConfigError("shared-layer sweep needs a positive depth");
  if (config.seeds.empty()) throw ConfigError("sweep needs at least one seed");
  NamedGrouping two{"two-cluster", Grouping{{pair[0].spec.id, pair[1].spec.id}, {0, 1}, 2}};
  std::vector<Cell> cells;
  for (std::size_t x = 0; x <= depth; ++x)
    for (auto s : config.seeds) cells.push_back({LayerPlan{x, 0, depth - x}, &two, s});
  return run_cells(pair, cells, config, false);
}

SweepResult layer_combination_sweep(const std::vector<EncodedTask>& tasks, const std::vector<NamedGrouping>& groupings,
                                    const std::vector<LayerPlan>& plans, const SweepConfig& config) {
  if (plans.empty() || groupings.empty()) throw ConfigError("sweep needs at least one plan and one grouping");
  if (config.seeds.empty()) throw ConfigError("sweep needs at least one seed");
  for (const auto& p : plans)
    if (p.depth() != plans[0].depth())
      throw ConfigError("plan " + p.str() + " does not have the common depth " + std::to_string(plans[0].depth()));
  std::vector<Cell> cells;
  for (const auto& p : plans)
    for (const auto& g : groupings)
      for (auto s : config.seeds) cells.push_back({p, &g, s});
  return run_cells(tasks, cells, config, true);
}

}  // namespace hmnet
