// SPDX-License-Identifier: Apache-2.0
#include "hmnet/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "hmnet/errors.hpp"
#include "hmnet/rng.hpp"

namespace hmnet {

using nlohmann::json;

MetricKind parse_metric(std::string_view s) {
  if (s == "accuracy") return MetricKind::accuracy;
  if (s == "binary_f1" || s == "binary-f1" || s == "f1") return MetricKind::binary_f1;
  if (s == "pearson") return MetricKind::pearson;
  if (s == "spearman") return MetricKind::spearman;
  if (s == "f1_a" || s == "f1a") return MetricKind::f1_a;
  if (s == "exact_match" || s == "exact-match" || s == "em") return MetricKind::exact_match;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::accuracy: return "accuracy";
    case MetricKind::binary_f1: return "binary_f1";
    case MetricKind::pearson: return "pearson";
    case MetricKind::spearman: return "spearman";
    case MetricKind::f1_a: return "f1_a";
    case MetricKind::exact_match: return "exact_match";
  }
  return "accuracy";
}

void TaskSpec::validate() const {
  if (id.empty()) throw ConfigError("task id is empty");
  const bool correlation = metric == MetricKind::pearson || metric == MetricKind::spearman;
  if (is_regression() && !correlation)
    throw ConfigError("task " + id + ": metric " + to_string(metric) + " needs class labels");
  if (!is_regression() && n_classes < 2) throw ConfigError("task " + id + ": need at least two classes");
  const bool binary_only =
      metric == MetricKind::binary_f1 || metric == MetricKind::f1_a || metric == MetricKind::exact_match;
  if (binary_only && n_classes != 2) throw ConfigError("task " + id + ": metric " + to_string(metric) + " is binary");
}

json to_json(const TaskSpec& spec) {
  return json{{"id", spec.id},
              {"category", spec.category},
              {"mode", to_string(spec.mode)},
              {"labels", spec.is_regression() ? json("regression") : json(spec.n_classes)},
              {"metric", to_string(spec.metric)}};
}

TaskSpec task_spec_from_json(const json& j) {
  TaskSpec s;
  try {
    s.id = j.at("id").get<std::string>();
    s.category = j.value("category", std::string{});
    s.mode = parse_input_mode(j.value("mode", std::string("single")));
    const auto& labels = j.at("labels");
    if (labels.is_string()) {
      if (labels.get<std::string>() != "regression") throw ConfigError("labels must be a class count or \"regression\"");
      s.n_classes = 0;
    } else {
      s.n_classes = labels.get<std::size_t>();
    }
    s.metric = parse_metric(j.value("metric", std::string(s.n_classes == 0 ? "pearson" : "accuracy")));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad task spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::set<std::string> TaskDataset::vocabulary() const {
  std::set<std::string> v;
  for (const auto& text : texts())
    for (auto& t : Tokenizer::split(text)) v.insert(std::move(t));
  return v;
}

std::vector<std::string> TaskDataset::texts() const {
  std::vector<std::string> out;
  for (const auto& ex : train) {
    out.push_back(ex.text_a);
    if (ex.text_b) out.push_back(*ex.text_b);
    if (ex.text_c) out.push_back(*ex.text_c);
  }
  return out;
}

void validate_example(const Example& ex, const TaskSpec& spec, const std::string& where) {
  if (Tokenizer::split(ex.text_a).empty()) throw ValidationError(where + ": text_a is empty");
  if (spec.mode != InputMode::single && !ex.text_b)
    throw ValidationError(where + ": " + to_string(spec.mode) + " task " + spec.id + " requires text_b");
  if (spec.mode == InputMode::qa_triple && !ex.text_c)
    throw ValidationError(where + ": qa-triple task " + spec.id + " requires text_c");
  if (!std::isfinite(ex.label)) throw ValidationError(where + ": label is not finite");
  if (!spec.is_regression()) {
    if (ex.label < 0 || ex.label != std::floor(ex.label) || ex.label >= static_cast<double>(spec.n_classes))
      throw ValidationError(where + ": label " + std::to_string(ex.label) + " outside classes [0," +
                            std::to_string(spec.n_classes) + ")");
  }
}

std::vector<Example> load_jsonl(const std::string& path, const TaskSpec& spec) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path + ":" + std::to_string(lineno);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw ParseError(where + ": record is not an object");
    if (!rec.contains("text_a") || !rec["text_a"].is_string()) throw ParseError(where + ": missing string text_a");
    if (!rec.contains("label")) throw ParseError(where + ": missing label");
    Example ex;
    ex.text_a = rec["text_a"].get<std::string>();
    for (const char* key : {"text_b", "text_c"}) {
      if (!rec.contains(key) || rec[key].is_null()) continue;
      if (!rec[key].is_string()) throw ParseError(where + ": " + key + " must be a string");
      (std::string(key) == "text_b" ? ex.text_b : ex.text_c) = rec[key].get<std::string>();
    }
    const auto& label = rec["label"];
    if (!label.is_number()) throw ValidationError(where + ": label must be a number, got " + label.dump());
    ex.label = label.get<double>();
    if (rec.contains("group")) {
      const auto& g = rec["group"];
      ex.group = g.is_string() ? g.get<std::string>() : g.dump();
    }
    validate_example(ex, spec, where);
    out.push_back(std::move(ex));
  }
  return out;
}

void save_jsonl(const std::string& path, const std::vector<Example>& examples, const TaskSpec& spec) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& ex : examples) {
    json rec{{"text_a", ex.text_a}};
    if (ex.text_b) rec["text_b"] = *ex.text_b;
    if (ex.text_c) rec["text_c"] = *ex.text_c;
    if (spec.is_regression())
      rec["label"] = ex.label;
    else
      rec["label"] = static_cast<long long>(ex.label);
    if (!ex.group.empty()) rec["group"] = ex.group;
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------

Relation parse_relation(std::string_view s) {
  if (s == "independent") return Relation::independent;
  if (s == "aligned") return Relation::aligned;
  if (s == "conflicting") return Relation::conflicting;
  throw ConfigError("unknown relation '" + std::string(s) + "'");
}

std::string to_string(Relation r) {
  switch (r) {
    case Relation::independent: return "independent";
    case Relation::aligned: return "aligned";
    case Relation::conflicting: return "conflicting";
  }
  return "independent";
}

json to_json(const SyntheticTaskSpec& s) {
  return json{{"id", s.id},
              {"category", s.category},
              {"relation", to_string(s.relation)},
              {"pattern_seed", s.pattern_seed},
              {"key_offset", s.key_offset},
              {"key_count", s.key_count},
              {"n_keys", s.n_keys},
              {"filler_count", s.filler_count},
              {"seq_len", s.seq_len},
              {"n_classes", s.n_classes},
              {"flip_count", s.flip_count}};
}

SyntheticTaskSpec synthetic_spec_from_json(const json& j) {
  SyntheticTaskSpec s;
  try {
    s.id = j.at("id").get<std::string>();
    s.category = j.value("category", std::string{});
    s.relation = parse_relation(j.value("relation", std::string("independent")));
    s.pattern_seed = j.value("pattern_seed", std::uint64_t{0});
    s.key_offset = j.value("key_offset", s.key_offset);
    s.key_count = j.value("key_count", s.key_count);
    s.n_keys = j.value("n_keys", s.n_keys);
    s.filler_count = j.value("filler_count", s.filler_count);
    s.seq_len = j.value("seq_len", s.seq_len);
    s.n_classes = j.value("n_classes", s.n_classes);
    s.flip_count = j.value("flip_count", s.flip_count);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synthetic spec: ") + e.what());
  }
  return s;
}

namespace {

void check_spec(const SyntheticTaskSpec& s) {
  if (s.id.empty()) throw ConfigError("synthetic task id is empty");
  if (s.n_classes < 2) throw ConfigError("synthetic task " + s.id + ": need at least two classes");
  if (s.key_count < 2 || s.key_count % s.n_classes != 0)
    throw ConfigError("synthetic task " + s.id + ": key_count must be a positive multiple of n_classes");
  if (s.n_keys == 0 || s.n_keys > s.seq_len) throw ConfigError("synthetic task " + s.id + ": need 1 <= n_keys <= seq_len");
  if (s.filler_count == 0 && s.n_keys < s.seq_len) throw ConfigError("synthetic task " + s.id + ": no filler tokens");
  if (s.flip_count > s.key_count) throw ConfigError("synthetic task " + s.id + ": flip_count exceeds key_count");
}

// Balanced assignment of `n` items to values [0, c), shuffled.
std::vector<int> balanced(std::size_t n, std::size_t c, Rng& rng) {
  std::vector<int> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i % c);
  rng.shuffle(v);
  return v;
}

}  // namespace

SyntheticPattern synthetic_pattern(const SyntheticTaskSpec& spec) {
  check_spec(spec);
  SyntheticPattern p;
  for (std::size_t i = 0; i < spec.key_count; ++i) p.keys.push_back("k" + std::to_string(spec.key_offset + i));
  Rng rng(derive_seed(spec.pattern_seed, "pattern"));
  p.bit = balanced(spec.key_count, spec.n_classes, rng);
  const std::size_t flips = spec.flip_count ? spec.flip_count : spec.key_count / 2;
  p.flip.assign(spec.key_count, 0);
  std::fill(p.flip.begin(), p.flip.begin() + static_cast<std::ptrdiff_t>(flips), 1);
  rng.shuffle(p.flip);
  return p;
}

int synthetic_label(const SyntheticTaskSpec& spec, const SyntheticPattern& pattern,
                    const std::vector<std::size_t>& key_indices) {
  int total = 0;
  for (auto k : key_indices) {
    total += pattern.bit.at(k);
    if (spec.relation == Relation::conflicting) total += pattern.flip.at(k);
  }
  return total % static_cast<int>(spec.n_classes);
}

TaskDataset gen_synthetic(const SyntheticTaskSpec& spec, std::size_t n_train, std::size_t n_dev, std::uint64_t seed) {
  if (n_train == 0 || n_dev == 0) throw InputError("synthetic task " + spec.id + ": n_train and n_dev must be >= 1");
  const auto pattern = synthetic_pattern(spec);
  TaskDataset ds;
  ds.spec.id = spec.id;
  ds.spec.category = spec.category;
  ds.spec.mode = InputMode::single;
  ds.spec.n_classes = spec.n_classes;
  ds.spec.metric = MetricKind::accuracy;

  auto make = [&](std::size_t n, std::uint64_t split_seed) {
    Rng rng(split_seed);
    std::vector<Example> out;
    out.reserve(n);
    std::vector<std::size_t> positions(spec.seq_len);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> seq(spec.seq_len);
      for (auto& t : seq) t = "f" + std::to_string(rng.below(spec.filler_count));
      std::iota(positions.begin(), positions.end(), 0);
      rng.shuffle(positions);
      std::vector<std::size_t> at(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(spec.n_keys));
      std::sort(at.begin(), at.end());
      std::vector<std::size_t> keys(spec.n_keys);
      for (std::size_t j = 0; j < spec.n_keys; ++j) {
        keys[j] = rng.below(spec.key_count);
        seq[at[j]] = pattern.keys[keys[j]];
      }
      Example ex;
      for (std::size_t j = 0; j < seq.size(); ++j) ex.text_a += (j ? " " : "") + seq[j];
      ex.label = synthetic_label(spec, pattern, keys);
      out.push_back(std::move(ex));
    }
    return out;
  };
  ds.train = make(n_train, derive_seed(seed, "train:" + spec.id));
  ds.dev = make(n_dev, derive_seed(seed, "dev:" + spec.id));
  return ds;
}

std::vector<SyntheticTaskSpec> synthetic_suite(std::uint64_t pattern_shift) {
  auto mk = [&](std::string id, std::string cat, Relation rel, std::uint64_t pattern, std::size_t offset) {
    SyntheticTaskSpec s;
    s.id = std::move(id);
    s.category = std::move(cat);
    s.relation = rel;
    s.pattern_seed = pattern + 1000 * pattern_shift;
    s.key_offset = offset;
    s.seq_len = 3;
    s.filler_count = 4;
    return s;
  };
  const std::size_t kc = SyntheticTaskSpec{}.key_count;
  return {mk("a1", "aligned", Relation::aligned, 11, 0),         mk("a2", "aligned", Relation::aligned, 11, 0),
          mk("c1", "conflicting", Relation::conflicting, 11, 0), mk("c2", "conflicting", Relation::conflicting, 11, 0),
          mk("i1", "independent", Relation::independent, 23, kc), mk("i2", "independent", Relation::independent, 37, 2 * kc)};
}

std::vector<std::string> synthetic_suite_categories() {
  std::vector<std::string> out;
  for (const auto& s : synthetic_suite()) out.push_back(s.category);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_lengths(const std::vector<double>& p, const std::vector<double>& g) {
  if (p.size() != g.size())
    throw InputError("metric: " + std::to_string(p.size()) + " predictions for " + std::to_string(g.size()) + " golds");
  if (p.empty()) throw InputError("metric: no predictions");
}

double f1_binary(const std::vector<double>& p, const std::vector<double>& g) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pp = p[i] == 1.0, gg = g[i] == 1.0;
    tp += pp && gg;
    fp += pp && !gg;
    fn += !pp && gg;
  }
  const double denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2 * tp / denom;
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw InputError("correlation of a zero-variance input is undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y);
  return pearson(average_ranks(x), average_ranks(y));
}

double compute_metric(MetricKind kind, const std::vector<double>& predictions, const std::vector<double>& golds,
                      const std::vector<std::string>& groups) {
  check_lengths(predictions, golds);
  switch (kind) {
    case MetricKind::accuracy: {
      std::size_t hit = 0;
      for (std::size_t i = 0; i < golds.size(); ++i) hit += predictions[i] == golds[i];
      return static_cast<double>(hit) / static_cast<double>(golds.size());
    }
    case MetricKind::binary_f1:
    case MetricKind::f1_a:
      return f1_binary(predictions, golds);
    case MetricKind::pearson:
      return pearson(predictions, golds);
    case MetricKind::spearman:
      return spearman(predictions, golds);
    case MetricKind::exact_match: {
      if (!groups.empty() && groups.size() != golds.size())
        throw InputError("exact_match: " + std::to_string(groups.size()) + " group ids for " +
                         std::to_string(golds.size()) + " examples");
      std::map<std::string, bool> all_right;
      for (std::size_t i = 0; i < golds.size(); ++i) {
        const std::string key = groups.empty() || groups[i].empty() ? "#" + std::to_string(i) : "g" + groups[i];
        auto [it, fresh] = all_right.emplace(key, true);
        it->second = it->second && predictions[i] == golds[i];
      }
      std::size_t hit = 0;
      for (const auto& [_, ok] : all_right) hit += ok;
      return static_cast<double>(hit) / static_cast<double>(all_right.size());
    }
  }
  return 0.0;
}

}  // namespace hmnet
