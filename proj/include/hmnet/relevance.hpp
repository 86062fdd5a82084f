// SPDX-License-Identifier: Apache-2.0
//
// Task relevance measures and the clustering that turns them into a Grouping.
#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hmnet/hierarchy.hpp"
#include "hmnet/trainer.hpp"

namespace hmnet {

enum class RelevanceKind { data_property, model_based, manual };

RelevanceKind parse_relevance_kind(std::string_view s);
std::string to_string(RelevanceKind kind);

/// n x n directed scores. Row s is the source task, column t the target:
/// scores[s][t] is how relevant s is to t, measured on t's side
/// (|V_s ∩ V_t| / |V_t| for data_property, the relative change of t's score
/// when co-trained with s for model_based).
struct RelevanceMatrix {
  RelevanceKind kind = RelevanceKind::data_property;
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> scores;

  std::size_t size() const { return tasks.size(); }
  std::size_t index(std::string_view task) const;
  double at(std::string_view source, std::string_view target) const;
  void validate() const;
};

/// CSV: header "task,<id>,...", then one row "<id>,<v>,..." per source task.
/// Values are decimals (0.9283 for 92.83%).
void write_relevance_csv(const std::string& path, const RelevanceMatrix& m);
void write_relevance_csv(std::ostream& out, const RelevanceMatrix& m);
RelevanceMatrix read_relevance_csv(const std::string& path, RelevanceKind kind);

/// (r_cs, r_ct) = (|V_s ∩ V_t| / |V_s|, |V_s ∩ V_t| / |V_t|).
std::pair<double, double> vocab_cooccurrence(const std::set<std::string>& v_s, const std::set<std::string>& v_t);

struct PerformanceQuad {
  double f_s = 0, f_t = 0;    // single-task scores
  double f_js = 0, f_jt = 0;  // co-trained scores
};

/// (r_ms, r_mt) = ((f_js - f_s) / f_s, (f_jt - f_t) / f_t). A zero baseline
/// raises DivisionError naming the task.
std::pair<double, double> model_based_relevance(const PerformanceQuad& q, const std::string& source = "source",
                                                const std::string& target = "target");

RelevanceMatrix data_property_matrix(const std::vector<TaskDataset>& datasets);

struct PairwiseConfig {
  ModelConfig model;
  /// Depth of the single-channel model used for every run.
  std::size_t depth = 12;
  TrainConfig train;
  std::uint64_t init_seed = 0;
  /// Upper bound on concurrently running training jobs.
  std::size_t jobs = 1;
};

struct PairwiseRun {
  std::string source, target;
  double f_source = 0, f_target = 0;  // co-trained scores
};

struct PairwiseResult {
  RelevanceMatrix matrix;
  std::vector<double> single;  // per task, trained alone
  std::vector<PairwiseRun> pairs;
};

/// n single-task runs plus n(n-1)/2 hard-sharing co-training runs, all with
/// the same initialization and training seeds; both directed entries of a
/// pair come from one co-training run.
PairwiseResult pairwise_relevance_matrix(const std::vector<EncodedTask>& tasks, const PairwiseConfig& config);

struct KMeansResult {
  Grouping grouping;
  double inertia = 0;
  /// Inertia and canonical partition of every restart, in order.
  std::vector<double> restart_inertia;
  std::vector<Grouping> restart_grouping;
  /// Inertia after each Lloyd iteration of the winning restart.
  std::vector<double> trace;
};

/// Lloyd's algorithm on the matrix rows (raw, diagonal included), k-means++
/// seeding, `restarts` independent starts, minimum within-cluster sum of
/// squares wins (earliest restart on ties). Empty clusters are reseeded at
/// the point farthest from its centroid; assignment ties go to the lowest
/// cluster index. The result is relabeled by first appearance.
KMeansResult kmeans(const RelevanceMatrix& matrix, std::size_t k, std::uint64_t seed, std::size_t restarts);
Grouping kmeans_cluster(const RelevanceMatrix& matrix, std::size_t k, std::uint64_t seed, std::size_t restarts);

/// Within-cluster sum of squares of a partition of the matrix rows.
double inertia(const RelevanceMatrix& matrix, const Grouping& grouping);

/// One cluster per distinct category, numbered by first appearance.
Grouping manual_grouping(const std::vector<std::string>& task_ids, const std::vector<std::string>& categories);

}  // namespace hmnet
