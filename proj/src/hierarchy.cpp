// SPDX-License-Identifier: Apache-2.0
#include "hmnet/hierarchy.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmnet/errors.hpp"
#include "hmnet/ops.hpp"
#include "hmnet/rng.hpp"

namespace hmnet {

using nlohmann::json;

LayerPlan LayerPlan::parse(std::string_view s) {
  std::string clean;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '{' && c != '}') clean.push_back(c);
  std::vector<std::size_t> parts;
  std::stringstream ss(clean);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || !std::all_of(item.begin(), item.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw ConfigError("layer plan '" + std::string(s) + "' is not of the form x,y,z");
    parts.push_back(std::stoul(item));
  }
  if (parts.size() != 3) throw ConfigError("layer plan '" + std::string(s) + "' is not of the form x,y,z");
  return LayerPlan{parts[0], parts[1], parts[2]};
}

std::string LayerPlan::str() const {
  return std::to_string(x) + "," + std::to_string(y) + "," + std::to_string(z);
}

void Grouping::validate() const {
  if (task_ids.empty()) throw ConfigError("grouping has no tasks");
  if (cluster_of.size() != task_ids.size())
    throw ConfigError("grouping lists " + std::to_string(task_ids.size()) + " tasks but " +
                      std::to_string(cluster_of.size()) + " cluster indices");
  std::vector<bool> used(k, false);
  for (std::size_t i = 0; i < task_ids.size(); ++i) {
    if (cluster_of[i] >= k)
      throw ConfigError("task " + task_ids[i] + " has cluster " + std::to_string(cluster_of[i]) + " outside [0," +
                        std::to_string(k) + ")");
    used[cluster_of[i]] = true;
    for (std::size_t j = 0; j < i; ++j)
      if (task_ids[j] == task_ids[i]) throw ConfigError("task " + task_ids[i] + " appears twice in the grouping");
  }
  for (std::size_t c = 0; c < k; ++c)
    if (!used[c]) throw ConfigError("cluster " + std::to_string(c) + " has no tasks");
}

std::size_t Grouping::cluster(std::string_view task) const {
  for (std::size_t i = 0; i < task_ids.size(); ++i)
    if (task_ids[i] == task) return cluster_of[i];
  throw LookupError("task '" + std::string(task) + "' is not in the grouping");
}

std::vector<std::vector<std::string>> Grouping::clusters() const {
  std::vector<std::vector<std::string>> out(k);
  for (std::size_t i = 0; i < task_ids.size(); ++i) out.at(cluster_of[i]).push_back(task_ids[i]);
  return out;
}

Grouping Grouping::single(const std::vector<std::string>& task_ids) {
  return Grouping{task_ids, std::vector<std::size_t>(task_ids.size(), 0), 1};
}

Grouping Grouping::canonical() const {
  Grouping out{task_ids, {}, k};
  std::map<std::size_t, std::size_t> relabel;
  for (auto c : cluster_of) {
    auto it = relabel.emplace(c, relabel.size()).first;
    out.cluster_of.push_back(it->second);
  }
  return out;
}

bool Grouping::same_partition(const Grouping& other) const {
  if (task_ids.size() != other.task_ids.size() || k != other.k) return false;
  std::map<std::size_t, std::size_t> fwd, back;
  for (std::size_t i = 0; i < task_ids.size(); ++i) {
    const std::size_t c = cluster_of[i];
    std::size_t oc;
    try {
      oc = other.cluster(task_ids[i]);
    } catch (const LookupError&) {
      return false;
    }
    auto [f, fnew] = fwd.emplace(c, oc);
    auto [b, bnew] = back.emplace(oc, c);
    if (f->second != oc || b->second != c) return false;
  }
  return true;
}

json to_json(const Grouping& g) {
  json clusters = json::array();
  for (const auto& members : g.clusters()) clusters.push_back(members);
  return json{{"k", g.k}, {"tasks", g.task_ids}, {"cluster_of", g.cluster_of}, {"clusters", clusters}};
}

Grouping grouping_from_json(const json& j) {
  Grouping g;
  try {
    g.task_ids = j.at("tasks").get<std::vector<std::string>>();
    g.cluster_of = j.at("cluster_of").get<std::vector<std::size_t>>();
    g.k = j.at("k").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad grouping: ") + e.what());
  }
  g.validate();
  return g;
}

void save_grouping(const std::string& path, const Grouping& g) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << to_json(g).dump(2) << '\n';
}

Grouping load_grouping(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return grouping_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string to_string(Tier t) {
  switch (t) {
    case Tier::shared: return "shared";
    case Tier::cluster: return "cluster";
    case Tier::task: return "task";
  }
  return "shared";
}

std::size_t HMNetModel::task_index(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("unknown task '" + std::string(id) + "'");
  return it->second;
}

const EncoderLayerParams& HMNetModel::layer(const LayerRef& ref) const {
  switch (ref.tier) {
    case Tier::shared: return shared.at(ref.layer);
    case Tier::cluster: return cluster.at(ref.stack).at(ref.layer);
    case Tier::task: return task.at(ref.stack).at(ref.layer);
  }
  throw LookupError("bad layer reference");
}

std::vector<Tensor> HMNetModel::path_parameters(std::string_view task_id) const {
  std::vector<Tensor> out = embeddings.tensors();
  for (const auto& ref : route(*this, task_id))
    for (auto& t : layer(ref).tensors()) out.push_back(t);
  const auto& h = heads[task_index(task_id)];
  out.push_back(h.w);
  out.push_back(h.b);
  return out;
}

std::vector<std::pair<std::string, Tensor>> HMNetModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto names = EncoderLayerParams::tensor_names();
  auto add_layer = [&](const std::string& prefix, const EncoderLayerParams& p) {
    auto ts = p.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) out.emplace_back(prefix + "/" + names[i], ts[i]);
  };
  auto enames = Embeddings::tensor_names();
  auto ets = embeddings.tensors();
  for (std::size_t i = 0; i < ets.size(); ++i) out.emplace_back("embeddings/" + enames[i], ets[i]);
  for (std::size_t i = 0; i < shared.size(); ++i) add_layer("shared/" + std::to_string(i), shared[i]);
  for (std::size_t c = 0; c < cluster.size(); ++c)
    for (std::size_t i = 0; i < cluster[c].size(); ++i)
      add_layer("cluster/" + std::to_string(c) + "/" + std::to_string(i), cluster[c][i]);
  for (std::size_t t = 0; t < task.size(); ++t)
    for (std::size_t i = 0; i < task[t].size(); ++i) add_layer("task/" + tasks[t].id + "/" + std::to_string(i), task[t][i]);
  for (std::size_t t = 0; t < heads.size(); ++t) {
    out.emplace_back("head/" + tasks[t].id + "/w", heads[t].w);
    out.emplace_back("head/" + tasks[t].id + "/b", heads[t].b);
  }
  return out;
}

HMNetModel build_model(const LayerPlan& plan, const Grouping& grouping, const std::vector<TaskSpec>& tasks,
                       const ModelConfig& config, std::uint64_t init_seed) {
  grouping.validate();
  if (tasks.empty()) throw ConfigError("model needs at least one task");
  if (plan.depth() == 0) throw ConfigError("layer plan has zero depth");
  if (config.vocab_size < 4) throw ConfigError("vocabulary must include the special tokens");
  if (config.d == 0 || config.heads == 0 || config.d % config.heads != 0)
    throw ConfigError("model dim " + std::to_string(config.d) + " is not divisible by " + std::to_string(config.heads) +
                      " heads");
  if (config.max_len == 0) throw ConfigError("max_len must be positive");

  HMNetModel m;
  m.config = config;
  m.plan = plan;
  m.grouping = grouping;
  m.tasks = tasks;
  m.init_seed = init_seed;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    tasks[i].validate();
    if (!m.index_.emplace(tasks[i].id, i).second) throw ConfigError("duplicate task id " + tasks[i].id);
    try {
      grouping.cluster(tasks[i].id);
    } catch (const LookupError&) {
      throw ConfigError("task " + tasks[i].id + " is missing from the grouping");
    }
  }

  const std::size_t d = config.d, h = config.heads;
  m.embeddings = Embeddings::init(config.vocab_size, config.max_len, d, derive_seed(init_seed, "embeddings"));
  for (std::size_t i = 0; i < plan.x; ++i) m.shared.push_back(EncoderLayerParams::init(d, h, derive_seed(init_seed, "shared", i)));

  auto members = grouping.clusters();
  m.cluster.resize(grouping.k);
  for (std::size_t c = 0; c < grouping.k; ++c) {
    const std::string& anchor = *std::min_element(members[c].begin(), members[c].end());
    for (std::size_t i = 0; i < plan.y; ++i)
      m.cluster[c].push_back(EncoderLayerParams::init(d, h, derive_seed(init_seed, "cluster:" + anchor, i)));
  }
  for (const auto& spec : tasks) {
    std::vector<EncoderLayerParams> stack;
    for (std::size_t i = 0; i < plan.z; ++i)
      stack.push_back(EncoderLayerParams::init(d, h, derive_seed(init_seed, "task:" + spec.id, i)));
    m.task.push_back(std::move(stack));

    Rng rng(derive_seed(init_seed, "head:" + spec.id));
    Head head{Tensor({d, spec.output_dim()}), Tensor({spec.output_dim()})};
    for (auto& v : head.w.data()) v = rng.truncated_normal(0.02);
    head.w.set_requires_grad(true);
    head.b.set_requires_grad(true);
    m.heads.push_back(head);
  }
  return m;
}

std::vector<LayerRef> route(const HMNetModel& model, std::string_view task_id) {
  const std::size_t t = model.task_index(task_id);
  const std::size_t c = model.grouping.cluster(task_id);
  std::vector<LayerRef> path;
  for (std::size_t i = 0; i < model.plan.x; ++i) path.push_back({Tier::shared, 0, i});
  for (std::size_t i = 0; i < model.plan.y; ++i) path.push_back({Tier::cluster, c, i});
  for (std::size_t i = 0; i < model.plan.z; ++i) path.push_back({Tier::task, t, i});
  return path;
}

Tensor encode(Graph& g, const HMNetModel& model, std::string_view task_id, const Batch& batch, AttentionMaps* maps,
              std::vector<Tensor>* trace) {
  auto path = route(model, task_id);
  if (maps) maps->assign(path.size(), {});
  Tensor h = embed(g, model.embeddings, batch);
  if (trace) trace->push_back(h);
  for (std::size_t i = 0; i < path.size(); ++i) {
    h = encoder_layer_forward(g, h, batch, model.layer(path[i]), maps ? &(*maps)[i] : nullptr);
    if (trace) trace->push_back(h);
  }
  return h;
}

Tensor forward(Graph& g, const HMNetModel& model, std::string_view task_id, const Batch& batch, AttentionMaps* maps) {
  Tensor h = encode(g, model, task_id, batch, maps);
  std::vector<std::size_t> cls(batch.size);
  for (std::size_t b = 0; b < batch.size; ++b) cls[b] = b * batch.length;
  Tensor pooled = ops::gather_rows(g, h, cls);
  const auto& head = model.heads[model.task_index(task_id)];
  return ops::add_bias(g, ops::matmul(g, pooled, head.w), head.b);
}

ParamCount count_params(const HMNetModel& model) {
  ParamCount pc;
  pc.per_layer = EncoderLayerParams::param_count(model.config.d);
  pc.embeddings = model.embeddings.param_count();
  pc.activated_encoder = model.plan.depth() * pc.per_layer;
  pc.total_layers = model.total_layers();
  pc.overall_encoder = pc.total_layers * pc.per_layer;
  pc.overall = pc.embeddings + pc.overall_encoder;
  for (std::size_t t = 0; t < model.tasks.size(); ++t) {
    const std::size_t h = model.heads[t].w.numel() + model.heads[t].b.numel();
    pc.head[model.tasks[t].id] = h;
    pc.activated_per_task[model.tasks[t].id] = pc.embeddings + pc.activated_encoder + h;
    pc.overall += h;
  }
  return pc;
}

namespace {

void write_stack(const std::filesystem::path& file, const std::vector<Tensor>& tensors) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  for (const auto& t : tensors) write_tensor(out, t);
}

std::vector<Tensor> read_stack(const std::filesystem::path& file, std::size_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(read_tensor(in));
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(file.string() + ": trailing data");
  return out;
}

std::vector<Tensor> layer_tensors(const std::vector<EncoderLayerParams>& stack) {
  std::vector<Tensor> out;
  for (const auto& l : stack)
    for (auto& t : l.tensors()) out.push_back(t);
  return out;
}

// Copy saved values into freshly built parameters, checking shapes.
void assign(std::vector<Tensor> dst, const std::vector<Tensor>& src, const std::string& what) {
  if (dst.size() != src.size()) throw IoError(what + ": tensor count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape())
      throw IoError(what + ": tensor " + std::to_string(i) + " has shape " + shape_str(src[i].shape()) + ", expected " +
                    shape_str(dst[i].shape()));
    std::copy(src[i].data().begin(), src[i].data().end(), dst[i].data().begin());
  }
}

}  // namespace

void save_checkpoint(const std::string& dir, const HMNetModel& model) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  json files = json::object();
  write_stack(root / "embeddings.hmt", model.embeddings.tensors());
  files["embeddings"] = "embeddings.hmt";
  write_stack(root / "shared.hmt", layer_tensors(model.shared));
  files["shared"] = "shared.hmt";
  json clusters = json::array();
  for (std::size_t c = 0; c < model.cluster.size(); ++c) {
    const std::string name = "cluster_" + std::to_string(c) + ".hmt";
    write_stack(root / name, layer_tensors(model.cluster[c]));
    clusters.push_back(name);
  }
  files["cluster"] = clusters;
  json tasks = json::object(), heads = json::object();
  for (std::size_t t = 0; t < model.tasks.size(); ++t) {
    const std::string tname = "task_" + std::to_string(t) + ".hmt";
    const std::string hname = "head_" + std::to_string(t) + ".hmt";
    write_stack(root / tname, layer_tensors(model.task[t]));
    write_stack(root / hname, {model.heads[t].w, model.heads[t].b});
    tasks[model.tasks[t].id] = tname;
    heads[model.tasks[t].id] = hname;
  }
  files["task"] = tasks;
  files["head"] = heads;

  json specs = json::array();
  for (const auto& s : model.tasks) specs.push_back(to_json(s));
  json manifest{{"format", "hmnet-checkpoint-1"},
                {"plan", {model.plan.x, model.plan.y, model.plan.z}},
                {"grouping", to_json(model.grouping)},
                {"tasks", specs},
                {"model", {{"d", model.config.d}, {"heads", model.config.heads}, {"max_len", model.config.max_len},
                           {"vocab_size", model.config.vocab_size}}},
                {"init_seed", model.init_seed},
                {"files", files}};
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write " + (root / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

HMNetModel load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json");
  if (!in) throw IoError("no checkpoint manifest in " + dir);
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError((root / "manifest.json").string() + ": " + e.what());
  }
  HMNetModel model;
  try {
    auto p = m.at("plan").get<std::vector<std::size_t>>();
    if (p.size() != 3) throw ConfigError("checkpoint plan must have three entries");
    LayerPlan plan{p[0], p[1], p[2]};
    Grouping grouping = grouping_from_json(m.at("grouping"));
    std::vector<TaskSpec> specs;
    for (const auto& s : m.at("tasks")) specs.push_back(task_spec_from_json(s));
    const auto& mc = m.at("model");
    ModelConfig cfg{mc.at("d").get<std::size_t>(), mc.at("heads").get<std::size_t>(), mc.at("max_len").get<std::size_t>(),
                    mc.at("vocab_size").get<std::size_t>()};
    model = build_model(plan, grouping, specs, cfg, m.at("init_seed").get<std::uint64_t>());
    const auto& files = m.at("files");
    assign(model.embeddings.tensors(), read_stack(root / files.at("embeddings").get<std::string>(), 4), "embeddings");
    const std::size_t per = EncoderLayerParams::tensor_names().size();
    assign(layer_tensors(model.shared), read_stack(root / files.at("shared").get<std::string>(), per * plan.x), "shared");
    for (std::size_t c = 0; c < model.cluster.size(); ++c)
      assign(layer_tensors(model.cluster[c]), read_stack(root / files.at("cluster").at(c).get<std::string>(), per * plan.y),
             "cluster " + std::to_string(c));
    for (std::size_t t = 0; t < model.tasks.size(); ++t) {
      const auto& id = model.tasks[t].id;
      assign(layer_tensors(model.task[t]), read_stack(root / files.at("task").at(id).get<std::string>(), per * plan.z),
             "task " + id);
      assign({model.heads[t].w, model.heads[t].b}, read_stack(root / files.at("head").at(id).get<std::string>(), 2),
             "head " + id);
    }
  } catch (const json::exception& e) {
    throw ParseError(dir + ": bad checkpoint manifest: " + e.what());
  }
  return model;
}

}  // namespace hmnet
