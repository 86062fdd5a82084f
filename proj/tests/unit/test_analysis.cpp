// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include "doctest.h"
#include "hmnet/analysis.hpp"
#include "hmnet/errors.hpp"
#include "support.hpp"

using namespace hmnet;

namespace {

struct Setup {
  std::vector<EncodedTask> tasks;
  ModelConfig model;
};

Setup tiny(std::size_t n_tasks, std::size_t n_train = 16) {
  auto suite = synthetic_suite();
  std::vector<TaskDataset> data;
  const std::size_t pick[] = {0, 2, 4, 1};
  for (std::size_t i = 0; i < n_tasks; ++i) data.push_back(gen_synthetic(suite[pick[i]], n_train, 12, i));
  auto tok = build_tokenizer(data, 8);
  return {encode_tasks(data, tok), ModelConfig{8, 2, 8, tok.vocab_size()}};
}

std::vector<TaskSpec> specs(const Setup& s) {
  std::vector<TaskSpec> out;
  for (const auto& t : s.tasks) out.push_back(t.spec);
  return out;
}

std::vector<std::string> ids(const Setup& s) {
  std::vector<std::string> out;
  for (const auto& t : s.tasks) out.push_back(t.spec.id);
  return out;
}

// Moves head blocks so that new head h is old head perm[h].
void permute_heads(EncoderLayerParams& p, const std::vector<std::size_t>& perm) {
  const std::size_t d = p.d, dh = d / p.heads;
  auto cols = [&](Tensor& w, std::size_t rows) {
    std::vector<double> old(w.data().begin(), w.data().end());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t h = 0; h < p.heads; ++h)
        for (std::size_t c = 0; c < dh; ++c) w[r * d + h * dh + c] = old[r * d + perm[h] * dh + c];
  };
  cols(p.wq, d);
  cols(p.wk, d);
  cols(p.wv, d);
  cols(p.bq, 1);
  cols(p.bk, 1);
  cols(p.bv, 1);
  std::vector<double> old(p.wo.data().begin(), p.wo.data().end());
  for (std::size_t h = 0; h < p.heads; ++h)
    for (std::size_t r = 0; r < dh; ++r)
      for (std::size_t c = 0; c < d; ++c) p.wo[(h * dh + r) * d + c] = old[(perm[h] * dh + r) * d + c];
}

}  // namespace

TEST_CASE("a model compared with itself is similar everywhere") {
  auto s = tiny(2);
  auto model = build_model({1, 1, 1}, Grouping{ids(s), {0, 1}, 2}, specs(s), s.model, 0);
  Batch probe = probe_batch(s.tasks[0].dev, 8, 1);
  auto r = attention_similarity(model, "a1", model, "a1", probe);
  CHECK(r.layers == 3);
  CHECK(r.heads == 2);
  CHECK(r.rows.size() == 6);
  for (const auto& row : r.rows) CHECK(std::abs(row.cosine - 1.0) <= 1e-12);
  for (double m : r.layer_means()) CHECK(std::abs(m - 1.0) <= 1e-12);
  // The first two layers are shared, so the two tasks agree there.
  auto cross = attention_similarity(model, "a1", model, "c1", probe);
  CHECK(std::abs(cross.at(0, 0) - 1.0) <= 1e-12);
  CHECK(cross.at(1, 0) < 1.0 - 1e-9);
}

TEST_CASE("permuting heads permutes the per-head similarities") {
  auto s = tiny(1);
  auto a = build_model({2, 0, 0}, Grouping::single(ids(s)), specs(s), s.model, 1);
  auto b = build_model({2, 0, 0}, Grouping::single(ids(s)), specs(s), s.model, 2);
  auto a2 = build_model({2, 0, 0}, Grouping::single(ids(s)), specs(s), s.model, 1);
  auto b2 = build_model({2, 0, 0}, Grouping::single(ids(s)), specs(s), s.model, 2);
  // Sharpen the near-uniform initial maps so heads differ.
  for (auto* m : {&a, &b, &a2, &b2})
    for (auto& layer : m->shared)
      for (auto* w : {&layer.wq, &layer.wk})
        for (auto& v : w->data()) v *= 40;
  const std::vector<std::size_t> perm{1, 0};
  for (auto* m : {&a2, &b2})
    for (auto& layer : m->shared) permute_heads(layer, perm);

  Batch probe = probe_batch(s.tasks[0].dev, 6, 3);
  Graph g = Graph::inference();
  auto out = forward(g, a, "a1", probe), out2 = forward(g, a2, "a1", probe);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out2[i] == doctest::Approx(out[i]).epsilon(1e-12));

  auto base = attention_similarity(a, "a1", b, "a1", probe);
  auto moved = attention_similarity(a2, "a1", b2, "a1", probe);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 2; ++h) CHECK(moved.at(l, h) == doctest::Approx(base.at(l, perm[h])).epsilon(1e-12));
  CHECK(std::abs(base.at(0, 0) - base.at(0, 1)) > 1e-4);
}

TEST_CASE("attention similarity needs matching depth") {
  auto s = tiny(1);
  auto a = build_model({2, 0, 0}, Grouping::single(ids(s)), specs(s), s.model, 0);
  auto b = build_model({3, 0, 0}, Grouping::single(ids(s)), specs(s), s.model, 0);
  Batch probe = probe_batch(s.tasks[0].dev, 4, 0);
  CHECK_THROWS_AS(attention_similarity(a, "a1", b, "a1", probe), ConfigError);
}

TEST_CASE("probe batches are seeded selections from the dev split") {
  auto s = tiny(1);
  auto p = probe_batch(s.tasks[0].dev, 5, 7);
  CHECK(p.size == 5);
  CHECK(p.ids == probe_batch(s.tasks[0].dev, 5, 7).ids);
  CHECK(probe_batch(s.tasks[0].dev, 100, 7).size == s.tasks[0].dev.inputs.size());
}

TEST_CASE("attention report CSV") {
  auto s = tiny(1);
  auto a = build_model({1, 0, 0}, Grouping::single(ids(s)), specs(s), s.model, 0);
  auto r = attention_similarity(a, "a1", a, "a1", probe_batch(s.tasks[0].dev, 4, 0));
  const std::string path = hmnet::testing::temp_dir("analysis") + "/attn.csv";
  r.write_csv(path);
  std::ifstream in(path);
  std::string first, header;
  std::getline(in, first);
  std::getline(in, header);
  CHECK(first[0] == '#');
  CHECK(header == "layer,head,cosine");
}

TEST_CASE("shared-layer sweep covers every split point") {
  auto s = tiny(2);
  SweepConfig config{s.model, TrainConfig{}, {0, 1}, 1};
  config.train.epochs = 1;
  config.train.batch_size = 8;
  auto r = shared_layer_sweep(s.tasks, 2, config);
  CHECK(r.rows.size() == 3 * 2 * 2);

  // x = depth is the hard-sharing model, x = 0 shares only embeddings.
  for (std::size_t x : {std::size_t{0}, std::size_t{2}}) {
    const LayerPlan plan{x, 0, 2 - x};
    auto model = build_model(plan, x == 2 ? Grouping::single(ids(s)) : Grouping{ids(s), {0, 1}, 2}, specs(s), s.model, 1);
    auto tc = config.train;
    tc.seed = 1;
    auto h = train(model, s.tasks, tc);
    for (const auto& t : ids(s)) {
      double cell = 0;
      for (const auto& row : r.rows)
        if (row.plan == plan.str() && row.task == t && row.seed == 1) cell = row.value;
      CHECK(cell == h.final_metric(t));
    }
  }
  config.jobs = 4;
  auto again = shared_layer_sweep(s.tasks, 2, config);
  REQUIRE(again.rows.size() == r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(again.rows[i].value == r.rows[i].value);
  CHECK_THROWS_AS(shared_layer_sweep({s.tasks[0]}, 2, config), ConfigError);
}

TEST_CASE("layer-combination sweep grid") {
  auto s = tiny(3);
  SweepConfig config{s.model, TrainConfig{}, {0}, 2};
  config.train.epochs = 1;
  config.train.batch_size = 8;
  std::vector<NamedGrouping> groupings{{"hard", Grouping::single(ids(s))}, {"split", Grouping{ids(s), {0, 1, 1}, 2}}};
  std::vector<LayerPlan> plans{{2, 0, 0}, {1, 1, 0}};
  auto r = layer_combination_sweep(s.tasks, groupings, plans, config);
  CHECK(r.rows.size() == plans.size() * groupings.size() * (3 + 1));

  // Without a cluster tier the grouping does not matter.
  for (const auto& t : ids(s)) CHECK(r.mean("2,0,0", "hard", t) == r.mean("2,0,0", "split", t));
  double avg = 0;
  for (const auto& t : ids(s)) avg += r.mean("1,1,0", "split", t) / 3;
  CHECK(r.mean("1,1,0", "split", "average") == doctest::Approx(avg).epsilon(1e-12));

  const std::string path = hmnet::testing::temp_dir("analysis") + "/sweep.csv";
  r.write_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "plan,grouping,task,metric,value,seed");
}
