// SPDX-License-Identifier: Apache-2.0
#include "hmnet/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "hmnet/analysis.hpp"
#include "hmnet/errors.hpp"
#include "hmnet/relevance.hpp"
#include "hmnet/rng.hpp"

namespace hmnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

std::string dir_of(const std::string& path) {
  auto parent = fs::path(path).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    auto b = item.find_first_not_of(' ');
    auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad " + what + " '" + s + "'");
  }
}

std::vector<std::string> task_ids(const std::vector<TaskDataset>& datasets) {
  std::vector<std::string> ids;
  for (const auto& d : datasets) ids.push_back(d.spec.id);
  return ids;
}

/// Output file, or the given stream when `path` is empty.
template <class F>
void emit(const std::string& path, std::ostream& fallback, F&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write(out);
  if (!out) throw IoError("failed writing " + path);
}

void write_metric_table(std::ostream& out, const std::vector<std::tuple<std::string, std::string, double>>& rows) {
  out << "task,metric,value\n";
  for (const auto& [task, metric, value] : rows) out << fmt::format("{},{},{:.17g}\n", task, metric, value);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<TaskDataset> load_task_manifest(const std::string& path, std::uint64_t data_seed) {
  const json j = read_json_file(path);
  const std::string base = dir_of(path);
  if (!j.is_object() || (!j.contains("tasks") && !j.contains("synthetic_suite")))
    throw ConfigError(path + ": manifest needs \"tasks\" or \"synthetic_suite\"");
  std::vector<TaskDataset> out;
  try {
    if (j.contains("synthetic_suite")) {
      const auto& s = j["synthetic_suite"];
      const auto n_train = s.value("n_train", std::size_t{600});
      const auto n_dev = s.value("n_dev", std::size_t{300});
      for (const auto& spec : synthetic_suite(s.value("pattern_shift", std::uint64_t{0})))
        out.push_back(gen_synthetic(spec, n_train, n_dev, data_seed));
    }
    if (j.contains("tasks")) {
      for (const auto& t : j.at("tasks")) {
        if (t.contains("synthetic")) {
          const auto spec = synthetic_spec_from_json(t["synthetic"]);
          out.push_back(gen_synthetic(spec, t.value("n_train", std::size_t{600}), t.value("n_dev", std::size_t{300}),
                                      data_seed));
          continue;
        }
        TaskDataset ds;
        ds.spec = task_spec_from_json(t);
        ds.train = load_jsonl(resolve(base, t.at("train").get<std::string>()), ds.spec);
        ds.dev = load_jsonl(resolve(base, t.at("dev").get<std::string>()), ds.spec);
        if (ds.train.empty()) throw ValidationError("task " + ds.spec.id + ": training split is empty");
        if (ds.dev.empty()) throw ValidationError("task " + ds.spec.id + ": dev split is empty");
        out.push_back(std::move(ds));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (out.empty()) throw ConfigError(path + ": manifest lists no tasks");
  std::set<std::string> seen;
  for (const auto& d : out)
    if (!seen.insert(d.spec.id).second) throw ConfigError(path + ": task " + d.spec.id + " listed twice");
  return out;
}

GroupingSource parse_grouping_source(std::string_view s) {
  if (s == "manual") return GroupingSource::manual;
  if (s == "data_property" || s == "data-property") return GroupingSource::data_property;
  if (s == "model_based" || s == "model-based") return GroupingSource::model_based;
  if (s == "file") return GroupingSource::file;
  throw ConfigError("unknown grouping source '" + std::string(s) + "'");
}

std::string to_string(GroupingSource s) {
  switch (s) {
    case GroupingSource::manual: return "manual";
    case GroupingSource::data_property: return "data_property";
    case GroupingSource::model_based: return "model_based";
    case GroupingSource::file: return "file";
  }
  return "manual";
}

void ExperimentConfig::validate() const {
  if (tasks.empty()) throw ConfigError("experiment config needs a task manifest");
  if (!fs::exists(tasks)) throw ConfigError("task manifest " + tasks + " does not exist");
  if (grouping.source == GroupingSource::file && grouping.path.empty())
    throw ConfigError("grouping source 'file' needs a path");
  if (!grouping.path.empty() && !fs::exists(grouping.path))
    throw ConfigError("grouping path " + grouping.path + " does not exist");
  if (grouping.k == 0) throw ConfigError("grouping k must be >= 1");
  if (grouping.restarts == 0) throw ConfigError("grouping restarts must be >= 1");
  if (plan.depth() == 0) throw ConfigError("plan " + plan.str() + " has no layers");
  if (model.d == 0 || model.heads == 0 || model.d % model.heads != 0)
    throw ConfigError(fmt::format("model width {} is not divisible into {} heads", model.d, model.heads));
  if (model.max_len < 2) throw ConfigError("model max_len must be >= 2");
  if (output.empty()) throw ConfigError("experiment config needs an output directory");
  train.validate();
}

ExperimentConfig experiment_config_from_json(const json& j, const std::string& base_dir) {
  ExperimentConfig c;
  try {
    c.tasks = resolve(base_dir, j.at("tasks").get<std::string>());
    if (j.contains("plan")) {
      const auto& p = j["plan"];
      if (p.is_string()) {
        c.plan = LayerPlan::parse(p.get<std::string>());
      } else {
        auto v = p.get<std::vector<std::size_t>>();
        if (v.size() != 3) throw ConfigError("plan needs three counts");
        c.plan = LayerPlan{v[0], v[1], v[2]};
      }
    }
    if (j.contains("depth") && j["depth"].get<std::size_t>() != c.plan.depth())
      throw ConfigError(fmt::format("plan {} sums to {}, not depth {}", c.plan.str(), c.plan.depth(),
                                    j["depth"].get<std::size_t>()));
    if (j.contains("grouping")) {
      const auto& g = j["grouping"];
      c.grouping.source = parse_grouping_source(g.value("source", std::string("manual")));
      c.grouping.path = resolve(base_dir, g.value("path", std::string{}));
      c.grouping.k = g.value("k", c.grouping.k);
      c.grouping.restarts = g.value("restarts", c.grouping.restarts);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.d = m.value("d", c.model.d);
      c.model.heads = m.value("heads", c.model.heads);
      c.model.max_len = m.value("max_len", c.model.max_len);
    }
    c.relevance_depth = j.value("relevance_depth", c.relevance_depth);
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    c.output = resolve(base_dir, j.value("output", c.output));
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(read_json_file(path), dir_of(path));
}

RunSeeds split_seed(std::uint64_t seed) {
  return RunSeeds{derive_seed(seed, "data"), derive_seed(seed, "init"), derive_seed(seed, "train"),
                  derive_seed(seed, "kmeans"), derive_seed(seed, "probe")};
}

namespace {

RelevanceMatrix model_based_matrix(const ExperimentConfig& config, const std::vector<TaskDataset>& datasets,
                                   std::size_t jobs) {
  const RunSeeds seeds = split_seed(config.seed);
  Tokenizer tok = build_tokenizer(datasets, config.model.max_len);
  PairwiseConfig pc;
  pc.model = config.model;
  pc.model.vocab_size = tok.vocab_size();
  pc.depth = config.relevance_depth ? config.relevance_depth : config.plan.depth();
  pc.train = config.train;
  pc.train.seed = seeds.train;
  pc.train.eval_every_epoch = false;
  pc.init_seed = seeds.init;
  pc.jobs = jobs;
  return pairwise_relevance_matrix(encode_tasks(datasets, tok), pc).matrix;
}

}  // namespace

Grouping resolve_grouping(const ExperimentConfig& config, const std::vector<TaskDataset>& datasets, std::size_t jobs) {
  const auto ids = task_ids(datasets);
  const auto& gc = config.grouping;
  switch (gc.source) {
    case GroupingSource::manual: {
      std::vector<std::string> cats;
      for (const auto& d : datasets) cats.push_back(d.spec.category);
      return manual_grouping(ids, cats);
    }
    case GroupingSource::file: return load_grouping(gc.path);
    case GroupingSource::data_property:
    case GroupingSource::model_based: break;
  }
  const auto kind = gc.source == GroupingSource::data_property ? RelevanceKind::data_property : RelevanceKind::model_based;
  RelevanceMatrix m;
  if (!gc.path.empty())
    m = read_relevance_csv(gc.path, kind);
  else if (kind == RelevanceKind::data_property)
    m = data_property_matrix(datasets);
  else
    m = model_based_matrix(config, datasets, jobs);
  for (const auto& id : ids) m.index(id);
  return kmeans_cluster(m, gc.k, split_seed(config.seed).kmeans, gc.restarts);
}

// ---------------------------------------------------------------------------

namespace {

struct Flags {
  // relevance
  std::string kind, tasks, config, out;
  std::size_t depth = 0, jobs = 1;
  std::uint64_t seed = 0;
  // cluster
  std::string matrix;
  std::size_t k = 3, restarts = 50;
  // eval / attention-sim
  std::string checkpoint, checkpoint_b, task_a, task_b, probe_task;
  std::size_t probe_size = 32;
  // sweep
  std::string mode = "combinations", pair, plans, groupings, seeds;
};

int cmd_relevance(const Flags& f, bool seed_given, std::ostream& out) {
  const auto kind = parse_relevance_kind(f.kind);
  if (kind == RelevanceKind::manual) throw ConfigError("relevance --kind must be data_property or model_based");
  ExperimentConfig cfg;
  if (!f.config.empty()) cfg = load_experiment_config(f.config);
  if (seed_given || f.config.empty()) cfg.seed = f.seed;
  if (f.depth) cfg.relevance_depth = f.depth;
  if (!cfg.relevance_depth) cfg.relevance_depth = f.config.empty() ? 4 : cfg.plan.depth();
  if (!fs::exists(f.tasks)) throw ConfigError("task manifest " + f.tasks + " does not exist");
  const auto datasets = load_task_manifest(f.tasks, split_seed(cfg.seed).data);
  const RelevanceMatrix m =
      kind == RelevanceKind::data_property ? data_property_matrix(datasets) : model_based_matrix(cfg, datasets, f.jobs);
  emit(f.out, out, [&](std::ostream& s) { write_relevance_csv(s, m); });
  return 0;
}

int cmd_cluster(const Flags& f, std::ostream& out) {
  const auto kind = f.kind.empty() ? RelevanceKind::data_property : parse_relevance_kind(f.kind);
  const auto m = read_relevance_csv(f.matrix, kind);
  const auto result = kmeans(m, f.k, split_seed(f.seed).kmeans, f.restarts);
  json j = to_json(result.grouping);
  j["inertia"] = result.inertia;
  emit(f.out, out, [&](std::ostream& s) { s << j.dump(2) << '\n'; });
  return 0;
}

int cmd_train(const Flags& f, std::ostream& out) {
  ExperimentConfig cfg = load_experiment_config(f.config);
  if (!f.out.empty()) cfg.output = f.out;
  const RunSeeds seeds = split_seed(cfg.seed);
  const auto datasets = load_task_manifest(cfg.tasks, seeds.data);
  const Grouping grouping = resolve_grouping(cfg, datasets, f.jobs);
  Tokenizer tok = build_tokenizer(datasets, cfg.model.max_len);
  const auto tasks = encode_tasks(datasets, tok);
  ModelConfig mc = cfg.model;
  mc.vocab_size = tok.vocab_size();
  std::vector<TaskSpec> specs;
  for (const auto& t : tasks) specs.push_back(t.spec);
  HMNetModel model = build_model(cfg.plan, grouping, specs, mc, seeds.init);
  TrainConfig tc = cfg.train;
  tc.seed = seeds.train;
  RunHistory history = train(model, tasks, tc);

  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  save_checkpoint((dir / "checkpoint").string(), model);
  tok.save((dir / "checkpoint" / "vocab.txt").string());
  history.checkpoint = "checkpoint";
  history.write_jsonl((dir / "history.jsonl").string());
  history.write_loss_csv((dir / "loss.csv").string());
  save_grouping((dir / "grouping.json").string(), grouping);
  std::vector<std::tuple<std::string, std::string, double>> rows;
  for (const auto& t : tasks) rows.emplace_back(t.spec.id, to_string(t.spec.metric), history.final_metric(t.spec.id));
  emit((dir / "metrics.csv").string(), out, [&](std::ostream& s) { write_metric_table(s, rows); });
  write_metric_table(out, rows);
  return 0;
}

struct LoadedRun {
  HMNetModel model;
  Tokenizer tok;
};

LoadedRun load_run(const std::string& checkpoint) {
  HMNetModel model = load_checkpoint(checkpoint);
  Tokenizer tok = Tokenizer::load((fs::path(checkpoint) / "vocab.txt").string(), model.config.max_len);
  if (tok.vocab_size() != model.config.vocab_size)
    throw ValidationError(fmt::format("{}: vocabulary has {} tokens, model expects {}", checkpoint, tok.vocab_size(),
                                      model.config.vocab_size));
  return {std::move(model), std::move(tok)};
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const LoadedRun run = load_run(f.checkpoint);
  const auto datasets = load_task_manifest(f.tasks, split_seed(f.seed).data);
  std::vector<std::tuple<std::string, std::string, double>> rows;
  for (const auto& d : datasets) {
    run.model.task_index(d.spec.id);
    EncodedTask t{d.spec, {}, encode_split(d.dev, d.spec, run.tok)};
    rows.emplace_back(d.spec.id, to_string(d.spec.metric), evaluate(run.model, t));
  }
  emit(f.out, out, [&](std::ostream& s) { write_metric_table(s, rows); });
  return 0;
}

int cmd_attention_sim(const Flags& f, std::ostream& out) {
  const LoadedRun a = load_run(f.checkpoint);
  const LoadedRun b = load_run(f.checkpoint_b);
  if (a.tok.tokens() != b.tok.tokens()) throw ConfigError("the two checkpoints use different vocabularies");
  const std::string task_b = f.task_b.empty() ? f.task_a : f.task_b;
  const std::string probe_task = f.probe_task.empty() ? f.task_a : f.probe_task;
  const auto datasets = load_task_manifest(f.tasks, split_seed(f.seed).data);
  const TaskDataset* probe_ds = nullptr;
  for (const auto& d : datasets)
    if (d.spec.id == probe_task) probe_ds = &d;
  if (!probe_ds) throw LookupError("probe task " + probe_task + " is not in " + f.tasks);
  const auto split = encode_split(probe_ds->dev, probe_ds->spec, a.tok);
  const Batch probe = probe_batch(split, f.probe_size, split_seed(f.seed).probe);
  const auto report = attention_similarity(a.model, f.task_a, b.model, task_b, probe);
  if (auto parent = fs::path(f.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  report.write_csv(f.out);
  const auto means = report.layer_means();
  out << "layer,mean_cosine\n";
  for (std::size_t l = 0; l < means.size(); ++l) out << fmt::format("{},{:.6f}\n", l, means[l]);
  return 0;
}

int cmd_sweep(const Flags& f, std::ostream& out) {
  const ExperimentConfig cfg = load_experiment_config(f.config);
  const auto datasets = load_task_manifest(cfg.tasks, split_seed(cfg.seed).data);
  Tokenizer tok = build_tokenizer(datasets, cfg.model.max_len);
  const auto all = encode_tasks(datasets, tok);

  SweepConfig sc;
  sc.model = cfg.model;
  sc.model.vocab_size = tok.vocab_size();
  sc.train = cfg.train;
  sc.jobs = f.jobs;
  sc.seeds.clear();
  if (f.seeds.empty())
    sc.seeds.push_back(cfg.seed);
  else
    for (const auto& s : split_list(f.seeds, ',')) sc.seeds.push_back(parse_u64(s, "seed"));

  SweepResult result;
  if (f.mode == "shared-layers") {
    const auto names = split_list(f.pair, ',');
    if (names.size() != 2) throw ConfigError("--pair needs two task ids, got '" + f.pair + "'");
    std::vector<EncodedTask> pair;
    for (const auto& n : names) {
      auto it = std::find_if(all.begin(), all.end(), [&](const EncodedTask& t) { return t.spec.id == n; });
      if (it == all.end()) throw LookupError("task " + n + " is not in " + cfg.tasks);
      pair.push_back(*it);
    }
    result = shared_layer_sweep(pair, f.depth ? f.depth : cfg.plan.depth(), sc);
  } else if (f.mode == "combinations") {
    std::vector<LayerPlan> plans;
    if (f.plans.empty())
      plans.push_back(cfg.plan);
    else
      for (const auto& p : split_list(f.plans, ';')) plans.push_back(LayerPlan::parse(p));
    std::vector<NamedGrouping> groupings;
    const auto names = f.groupings.empty() ? std::vector<std::string>{to_string(cfg.grouping.source)}
                                           : split_list(f.groupings, ',');
    for (const auto& n : names) {
      if (n == "hard") {
        groupings.push_back({n, Grouping::single(task_ids(datasets))});
        continue;
      }
      ExperimentConfig gcfg = cfg;
      if (n.rfind("file:", 0) == 0) {
        gcfg.grouping.source = GroupingSource::file;
        gcfg.grouping.path = n.substr(5);
      } else {
        gcfg.grouping.source = parse_grouping_source(n);
        if (gcfg.grouping.source != cfg.grouping.source) gcfg.grouping.path.clear();
      }
      groupings.push_back({n, resolve_grouping(gcfg, datasets, f.jobs)});
    }
    result = layer_combination_sweep(all, groupings, plans, sc);
  } else {
    throw ConfigError("unknown sweep mode '" + f.mode + "' (shared-layers or combinations)");
  }
  if (auto parent = fs::path(f.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  result.write_csv(f.out);
  out << fmt::format("{} rows written to {}\n", result.rows.size(), f.out);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical multi-task transformer toolkit", "hmnet"};
  app.require_subcommand(1, 1);
  Flags f;

  auto* rel = app.add_subcommand("relevance", "Task relevance matrix as CSV");
  rel->add_option("--kind", f.kind, "data_property or model_based")->required();
  rel->add_option("--tasks", f.tasks, "Task manifest JSON")->required();
  rel->add_option("--config", f.config, "Experiment config for model and training settings");
  rel->add_option("--depth", f.depth, "Layers of the pairwise models (model_based)");
  auto* rel_seed = rel->add_option("--seed", f.seed, "Global seed");
  rel->add_option("--jobs", f.jobs, "Concurrent training runs");
  rel->add_option("--out", f.out, "Output CSV (stdout if omitted)");

  auto* clu = app.add_subcommand("cluster", "k-means grouping of a relevance matrix");
  clu->add_option("--matrix", f.matrix, "Relevance CSV")->required();
  clu->add_option("--kind", f.kind, "Kind recorded for the matrix");
  clu->add_option("--k", f.k, "Number of clusters");
  clu->add_option("--restarts", f.restarts, "k-means restarts");
  clu->add_option("--seed", f.seed, "Global seed");
  clu->add_option("--out", f.out, "Output grouping JSON (stdout if omitted)");

  auto* trn = app.add_subcommand("train", "Train a hierarchical model");
  trn->add_option("--config", f.config, "Experiment config JSON")->required();
  trn->add_option("--out", f.out, "Output directory (overrides the config)");
  trn->add_option("--jobs", f.jobs, "Concurrent runs for model-based grouping");

  auto* evl = app.add_subcommand("eval", "Dev metrics of a trained checkpoint");
  evl->add_option("--checkpoint", f.checkpoint, "Checkpoint directory")->required();
  evl->add_option("--tasks", f.tasks, "Task manifest JSON")->required();
  evl->add_option("--seed", f.seed, "Global seed used for synthetic data");
  evl->add_option("--out", f.out, "Output CSV (stdout if omitted)");

  auto* att = app.add_subcommand("attention-sim", "Per-head attention similarity of two checkpoints");
  att->add_option("--checkpoint-a", f.checkpoint, "First checkpoint")->required();
  att->add_option("--task-a", f.task_a, "Task routed in the first model")->required();
  att->add_option("--checkpoint-b", f.checkpoint_b, "Second checkpoint")->required();
  att->add_option("--task-b", f.task_b, "Task routed in the second model (default: task-a)");
  att->add_option("--tasks", f.tasks, "Task manifest JSON")->required();
  att->add_option("--probe-task", f.probe_task, "Task whose dev split is probed (default: task-a)");
  att->add_option("--probe-size", f.probe_size, "Probe examples");
  att->add_option("--seed", f.seed, "Global seed");
  att->add_option("--out", f.out, "Output CSV")->required();

  auto* swp = app.add_subcommand("sweep", "Layer-plan sweeps");
  swp->add_option("--config", f.config, "Experiment config JSON")->required();
  swp->add_option("--mode", f.mode, "shared-layers or combinations");
  swp->add_option("--pair", f.pair, "Two task ids (shared-layers)");
  swp->add_option("--depth", f.depth, "Total depth (shared-layers)");
  swp->add_option("--plans", f.plans, "Plans 'x,y,z;x,y,z' (combinations)");
  swp->add_option("--groupings", f.groupings, "manual,data_property,model_based,hard,file:<path>");
  swp->add_option("--seeds", f.seeds, "Comma-separated seeds");
  swp->add_option("--jobs", f.jobs, "Concurrent cells");
  swp->add_option("--out", f.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: usage: " << msg << '\n';
    return 2;
  }

  try {
    if (f.jobs == 0) throw ConfigError("--jobs must be >= 1");
    if (rel->parsed()) return cmd_relevance(f, rel_seed->count() > 0, out);
    if (clu->parsed()) return cmd_cluster(f, out);
    if (trn->parsed()) return cmd_train(f, out);
    if (evl->parsed()) return cmd_eval(f, out);
    if (att->parsed()) return cmd_attention_sim(f, out);
    if (swp->parsed()) return cmd_sweep(f, out);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << e.kind() << ": " << msg << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << '\n';
    return 1;
  }
  err << "error: usage: no subcommand\n";
  return 2;
}

int run_subcommand(const std::string& name, const std::vector<std::string>& flags, std::ostream& out,
                   std::ostream& err) {
  std::vector<std::string> args{"hmnet", name};
  args.insert(args.end(), flags.begin(), flags.end());
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace hmnet
