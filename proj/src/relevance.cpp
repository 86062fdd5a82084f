// SPDX-License-Identifier: Apache-2.0
#include "hmnet/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "hmnet/errors.hpp"
#include "hmnet/parallel.hpp"
#include "hmnet/rng.hpp"

namespace hmnet {

RelevanceKind parse_relevance_kind(std::string_view s) {
  if (s == "data_property" || s == "data-property") return RelevanceKind::data_property;
  if (s == "model_based" || s == "model-based") return RelevanceKind::model_based;
  if (s == "manual") return RelevanceKind::manual;
  throw ConfigError("unknown relevance kind '" + std::string(s) + "'");
}

std::string to_string(RelevanceKind kind) {
  switch (kind) {
    case RelevanceKind::data_property: return "data_property";
    case RelevanceKind::model_based: return "model_based";
    case RelevanceKind::manual: return "manual";
  }
  return "data_property";
}

std::size_t RelevanceMatrix::index(std::string_view task) const {
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (tasks[i] == task) return i;
  throw LookupError("task '" + std::string(task) + "' is not in the relevance matrix");
}

double RelevanceMatrix::at(std::string_view source, std::string_view target) const {
  return scores[index(source)][index(target)];
}

void RelevanceMatrix::validate() const {
  if (tasks.empty()) throw InputError("relevance matrix is empty");
  if (scores.size() != tasks.size()) throw DimensionError("relevance matrix row count does not match its task list");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != tasks.size())
      throw DimensionError(fmt::format("relevance row {} has {} entries, expected {}", tasks[i], scores[i].size(), tasks.size()));
    for (double v : scores[i])
      if (!std::isfinite(v)) throw ValidationError("relevance row " + tasks[i] + " has a non-finite entry");
  }
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (tasks[i] == tasks[j]) throw ValidationError("task " + tasks[i] + " appears twice in the relevance matrix");
}

void write_relevance_csv(std::ostream& out, const RelevanceMatrix& m) {
  m.validate();
  out << "task";
  for (const auto& t : m.tasks) out << ',' << t;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.tasks[i];
    for (double v : m.scores[i]) out << ',' << fmt::format("{}", v);
    out << '\n';
  }
}

void write_relevance_csv(const std::string& path, const RelevanceMatrix& m) {
  m.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_relevance_csv(out, m);
  if (!out) throw IoError("failed writing " + path);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

RelevanceMatrix read_relevance_csv(const std::string& path, RelevanceKind kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  RelevanceMatrix m;
  m.kind = kind;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> row_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    auto cells = split_csv(line);
    if (m.tasks.empty()) {
      if (cells.size() < 2) throw ParseError(fmt::format("{}:{}: header needs at least one task", path, lineno));
      m.tasks.assign(cells.begin() + 1, cells.end());
      continue;
    }
    if (cells.size() != m.tasks.size() + 1)
      throw ParseError(fmt::format("{}:{}: expected {} cells, got {}", path, lineno, m.tasks.size() + 1, cells.size()));
    row_ids.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t j = 1; j < cells.size(); ++j) {
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[j].size())
        throw ParseError(fmt::format("{}:{}: '{}' is not a number", path, lineno, cells[j]));
      row.push_back(v);
    }
    m.scores.push_back(std::move(row));
  }
  if (m.tasks.empty()) throw ParseError(path + ": missing header");
  if (row_ids.size() != m.tasks.size())
    throw ParseError(fmt::format("{}: {} rows for {} tasks", path, row_ids.size(), m.tasks.size()));
  for (std::size_t i = 0; i < row_ids.size(); ++i)
    if (row_ids[i] != m.tasks[i])
      throw ParseError(fmt::format("{}: row {} is '{}' but column {} is '{}'", path, i + 1, row_ids[i], i + 1, m.tasks[i]));
  m.validate();
  return m;
}

std::pair<double, double> vocab_cooccurrence(const std::set<std::string>& v_s, const std::set<std::string>& v_t) {
  if (v_s.empty() || v_t.empty()) throw InputError("vocabulary co-occurrence needs non-empty vocabularies");
  std::size_t common = 0;
  // Walk the smaller set, probe the larger one.
  const auto& small = v_s.size() <= v_t.size() ? v_s : v_t;
  const auto& large = v_s.size() <= v_t.size() ? v_t : v_s;
  for (const auto& tok : small) common += large.count(tok);
  return {static_cast<double>(common) / static_cast<double>(v_s.size()),
          static_cast<double>(common) / static_cast<double>(v_t.size())};
}

std::pair<double, double> model_based_relevance(const PerformanceQuad& q, const std::string& source,
                                                const std::string& target) {
  for (double v : {q.f_s, q.f_t, q.f_js, q.f_jt})
    if (!std::isfinite(v)) throw InputError("performance scores must be finite");
  if (q.f_s == 0) throw DivisionError("single-task score of " + source + " is zero");
  if (q.f_t == 0) throw DivisionError("single-task score of " + target + " is zero");
  return {(q.f_js - q.f_s) / q.f_s, (q.f_jt - q.f_t) / q.f_t};
}

RelevanceMatrix data_property_matrix(const std::vector<TaskDataset>& datasets) {
  RelevanceMatrix m;
  m.kind = RelevanceKind::data_property;
  std::vector<std::set<std::string>> vocab;
  for (const auto& ds : datasets) {
    m.tasks.push_back(ds.spec.id);
    vocab.push_back(ds.vocabulary());
    if (vocab.back().empty()) throw InputError("task " + ds.spec.id + " has an empty vocabulary");
  }
  const std::size_t n = datasets.size();
  m.scores.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t) m.scores[s][t] = vocab_cooccurrence(vocab[s], vocab[t]).second;
  m.validate();
  return m;
}

PairwiseResult pairwise_relevance_matrix(const std::vector<EncodedTask>& tasks, const PairwiseConfig& config) {
  const std::size_t n = tasks.size();
  if (n < 2) throw ConfigError("model-based relevance needs at least two tasks");
  config.train.validate();

  struct Job {
    std::size_t a, b;  // b == n for a single-task run
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < n; ++i) jobs.push_back({i, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) jobs.push_back({i, j});

  std::vector<std::pair<double, double>> score(jobs.size());
  parallel_for(jobs.size(), config.jobs, [&](std::size_t ji) {
    const Job& job = jobs[ji];
    std::vector<EncodedTask> run{tasks[job.a]};
    if (job.b < n) run.push_back(tasks[job.b]);
    std::vector<TaskSpec> specs;
    std::vector<std::string> ids;
    for (const auto& t : run) specs.push_back(t.spec), ids.push_back(t.spec.id);
    auto model = build_model(LayerPlan{config.depth, 0, 0}, Grouping::single(ids), specs, config.model, config.init_seed);
    RunHistory h;
    try {
      h = train(model, run, config.train);
    } catch (const RunError& e) {
      if (job.b < n)
        throw RunError("co-training " + ids[0] + " with " + ids[1] + " diverged: " + e.what());
      throw RunError("single-task run of " + ids[0] + " diverged: " + e.what());
    }
    score[ji] = {h.final_metric(ids[0]), job.b < n ? h.final_metric(ids[1]) : 0.0};
  });

  PairwiseResult result;
  result.matrix.kind = RelevanceKind::model_based;
  for (const auto& t : tasks) result.matrix.tasks.push_back(t.spec.id);
  result.matrix.scores.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) result.single.push_back(score[i].first);
  for (std::size_t ji = n; ji < jobs.size(); ++ji) {
    const auto [a, b] = std::pair{jobs[ji].a, jobs[ji].b};
    PerformanceQuad q{result.single[a], result.single[b], score[ji].first, score[ji].second};
    auto [r_a, r_b] = model_based_relevance(q, tasks[a].spec.id, tasks[b].spec.id);
    // Row = source, column = target whose change is measured.
    result.matrix.scores[a][b] = r_b;
    result.matrix.scores[b][a] = r_a;
    result.pairs.push_back(PairwiseRun{tasks[a].spec.id, tasks[b].spec.id, score[ji].first, score[ji].second});
  }
  return result;
}

namespace {

using Points = std::vector<std::vector<double>>;

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

Points centroids_of(const Points& x, const std::vector<std::size_t>& assign, std::size_t k) {
  const std::size_t dim = x[0].size();
  Points c(k, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    ++count[assign[i]];
    for (std::size_t j = 0; j < dim; ++j) c[assign[i]][j] += x[i][j];
  }
  for (std::size_t c_i = 0; c_i < k; ++c_i)
    if (count[c_i])
      for (auto& v : c[c_i]) v /= static_cast<double>(count[c_i]);
  return c;
}

double ssq(const Points& x, const std::vector<std::size_t>& assign, const Points& c) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += sqdist(x[i], c[assign[i]]);
  return s;
}

Points plus_plus_init(const Points& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.size();
  std::vector<std::size_t> chosen{rng.below(n)};
  std::vector<double> d2(n);
  while (chosen.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (auto c : chosen) best = std::min(best, sqdist(x[i], x[c]));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = n;
    if (total > 0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] == 0) continue;
        pick = i;
        if (r < d2[i]) break;
        r -= d2[i];
      }
    } else {
      // Every point coincides with a centre; take any unchosen index.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) rest.push_back(i);
      pick = rest[rng.below(rest.size())];
    }
    chosen.push_back(pick);
  }
  Points c;
  for (auto i : chosen) c.push_back(x[i]);
  return c;
}

struct Lloyd {
  std::vector<std::size_t> assign;
  double inertia;
  std::vector<double> trace;
};

Lloyd lloyd(const Points& x, Points c, std::size_t max_iter = 300) {
  const std::size_t n = x.size(), k = c.size();
  Lloyd out;
  out.assign.assign(n, k);
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::vector<std::size_t> assign(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = sqdist(x[i], c[0]);
      for (std::size_t j = 1; j < k; ++j) {
        const double dj = sqdist(x[i], c[j]);
        if (dj < bd) bd = dj, best = j;
      }
      assign[i] = best;
    }
    // Reseed empty clusters at the point farthest from its own centroid.
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<std::size_t> count(k, 0);
      for (auto a : assign) ++count[a];
      if (count[j]) continue;
      std::size_t far = n;
      double fd = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[assign[i]] < 2) continue;
        const double di = sqdist(x[i], c[assign[i]]);
        if (di > fd) fd = di, far = i;
      }
      if (far == n) throw ConfigError("k-means cannot fill every cluster");
      assign[far] = j;
      c[j] = x[far];
    }
    const bool stable = assign == out.assign;
    out.assign = std::move(assign);
    c = centroids_of(x, out.assign, k);
    out.trace.push_back(ssq(x, out.assign, c));
    if (stable) break;
  }
  out.inertia = out.trace.back();
  return out;
}

Points rows_of(const RelevanceMatrix& m) { return m.scores; }

}  // namespace

KMeansResult kmeans(const RelevanceMatrix& matrix, std::size_t k, std::uint64_t seed, std::size_t restarts) {
  matrix.validate();
  const std::size_t n = matrix.size();
  if (k == 0) throw ConfigError("k must be >= 1");
  if (k > n) throw ConfigError(fmt::format("k = {} exceeds the {} tasks", k, n));
  if (restarts == 0) throw ConfigError("restarts must be >= 1");
  const Points x = rows_of(matrix);

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, "kmeans", r));
    Lloyd run = lloyd(x, plus_plus_init(x, k, rng));
    Grouping g = Grouping{matrix.tasks, run.assign, k}.canonical();
    best.restart_inertia.push_back(run.inertia);
    best.restart_grouping.push_back(g);
    if (run.inertia < best.inertia) {
      best.inertia = run.inertia;
      best.grouping = g;
      best.trace = run.trace;
    }
  }
  return best;
}

Grouping kmeans_cluster(const RelevanceMatrix& matrix, std::size_t k, std::uint64_t seed, std::size_t restarts) {
  return kmeans(matrix, k, seed, restarts).grouping;
}

double inertia(const RelevanceMatrix& matrix, const Grouping& grouping) {
  std::vector<std::size_t> assign;
  for (const auto& t : matrix.tasks) assign.push_back(grouping.cluster(t));
  const Points x = rows_of(matrix);
  return ssq(x, assign, centroids_of(x, assign, grouping.k));
}

Grouping manual_grouping(const std::vector<std::string>& task_ids, const std::vector<std::string>& categories) {
  if (task_ids.size() != categories.size())
    throw ConfigError(fmt::format("{} tasks but {} category labels", task_ids.size(), categories.size()));
  if (task_ids.empty()) throw ConfigError("no tasks to group");
  Grouping g;
  g.task_ids = task_ids;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < task_ids.size(); ++i) {
    if (categories[i].empty()) throw ConfigError("task " + task_ids[i] + " has no category");
    auto it = index.emplace(categories[i], index.size()).first;
    g.cluster_of.push_back(it->second);
  }
  g.k = index.size();
  g.validate();
  return g;
}

}  // namespace hmnet
