// SPDX-License-Identifier: Apache-2.0
//
// Task specifications, datasets, the synthetic task generator and metrics.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hmnet/transformer.hpp"

namespace hmnet {

enum class MetricKind { accuracy, binary_f1, pearson, spearman, f1_a, exact_match };

MetricKind parse_metric(std::string_view s);
std::string to_string(MetricKind kind);

struct TaskSpec {
  std::string id;
  std::string category;
  InputMode mode = InputMode::single;
  /// Number of classes; 0 means a scalar regression target.
  std::size_t n_classes = 2;
  MetricKind metric = MetricKind::accuracy;

  bool is_regression() const { return n_classes == 0; }
  /// Width of the task head.
  std::size_t output_dim() const { return is_regression() ? 1 : n_classes; }
  /// Throws ConfigError when the metric does not fit the label space.
  void validate() const;
};

nlohmann::json to_json(const TaskSpec& spec);
TaskSpec task_spec_from_json(const nlohmann::json& j);

struct Example {
  std::string text_a;
  std::optional<std::string> text_b;
  std::optional<std::string> text_c;
  /// Class index for classification, target value for regression.
  double label = 0.0;
  /// Question id for exact-match grouping; empty means the example is its own group.
  std::string group;
};

struct TaskDataset {
  TaskSpec spec;
  std::vector<Example> train;
  std::vector<Example> dev;

  /// Token set of the training split (lowercased whitespace tokens of all texts).
  std::set<std::string> vocabulary() const;
  /// Every text field of the training split, for building a tokenizer.
  std::vector<std::string> texts() const;
};

/// Parse one split. Malformed JSON or missing fields -> ParseError with the
/// line number; a label outside the task's space or a missing text field for
/// its input mode -> ValidationError.
std::vector<Example> load_jsonl(const std::string& path, const TaskSpec& spec);
void save_jsonl(const std::string& path, const std::vector<Example>& examples, const TaskSpec& spec);
void validate_example(const Example& ex, const TaskSpec& spec, const std::string& where);

// ---------------------------------------------------------------------------
// Synthetic tasks

enum class Relation { independent, aligned, conflicting };

Relation parse_relation(std::string_view s);
std::string to_string(Relation r);

/// A binary task over planted key tokens. Each sequence holds `n_keys` key
/// tokens drawn from a key set of `key_count` tokens at random positions
/// among filler tokens; the label is the parity of the key bits m(k).
///
/// The key set and the bit map m come from `pattern_seed`. Tasks built from
/// the same pattern seed are aligned. A conflicting task uses the same keys
/// with the label map inverted on the subset of keys flagged by a second
/// map (`flip_count` flagged keys, half of them by default), so on sequences
/// holding an odd number of flagged keys its label is the opposite of the
/// aligned label.
struct SyntheticTaskSpec {
  std::string id;
  std::string category;
  Relation relation = Relation::independent;
  std::uint64_t pattern_seed = 0;
  /// First token index of this pattern's key set, in the shared synthetic
  /// vocabulary. Tasks sharing a pattern must use the same key_offset.
  std::size_t key_offset = 0;
  std::size_t key_count = 8;
  std::size_t n_keys = 2;
  std::size_t filler_count = 24;
  std::size_t seq_len = 8;
  std::size_t n_classes = 2;
  /// Number of flagged keys for a conflicting task; 0 means key_count / 2.
  std::size_t flip_count = 0;
};

nlohmann::json to_json(const SyntheticTaskSpec& spec);
SyntheticTaskSpec synthetic_spec_from_json(const nlohmann::json& j);

/// The key bit map m and the inversion flags of a pattern.
struct SyntheticPattern {
  std::vector<std::string> keys;
  std::vector<int> bit;
  std::vector<int> flip;
};

SyntheticPattern synthetic_pattern(const SyntheticTaskSpec& spec);

/// Deterministic label of a key tuple under the spec's relation.
int synthetic_label(const SyntheticTaskSpec& spec, const SyntheticPattern& pattern,
                    const std::vector<std::size_t>& key_indices);

TaskDataset gen_synthetic(const SyntheticTaskSpec& spec, std::size_t n_train, std::size_t n_dev, std::uint64_t seed);

/// Six named tasks: two aligned (a1, a2), two conflicting with them (c1, c2,
/// aligned with each other), two independent (i1, i2). Sequences hold three
/// tokens from four fillers; `pattern_shift` moves every pattern seed by
/// 1000 * pattern_shift so repeated runs can draw fresh label maps.
std::vector<SyntheticTaskSpec> synthetic_suite(std::uint64_t pattern_shift = 0);
/// Grouping labels of the suite: a*, c*, i* each form one category.
std::vector<std::string> synthetic_suite_categories();

// ---------------------------------------------------------------------------
// Metrics

/// Predictions and golds are class indices (as doubles) for accuracy, F1
/// and exact match, and real values for the correlations. `groups` is used
/// only by exact_match: a group scores 1 when all its members are correct.
double compute_metric(MetricKind kind, const std::vector<double>& predictions, const std::vector<double>& golds,
                      const std::vector<std::string>& groups = {});

double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);
/// Ranks starting at 1, ties receive their average rank.
std::vector<double> average_ranks(const std::vector<double>& x);

}  // namespace hmnet
