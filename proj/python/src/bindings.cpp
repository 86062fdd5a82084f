// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hmnet/cli.hpp"
#include "hmnet/errors.hpp"
#include "hmnet/hierarchy.hpp"
#include "hmnet/relevance.hpp"
#include "hmnet/tasks.hpp"
#include "hmnet/transformer.hpp"

namespace py = pybind11;
using namespace hmnet;

namespace {

py::dict dataset_to_dict(const TaskDataset& ds) {
  auto split = [](const std::vector<Example>& xs) {
    py::list out;
    for (const auto& ex : xs) {
      py::dict d;
      d["text_a"] = ex.text_a;
      if (ex.text_b) d["text_b"] = *ex.text_b;
      if (ex.text_c) d["text_c"] = *ex.text_c;
      d["label"] = ex.label;
      out.append(d);
    }
    return out;
  };
  py::dict d;
  d["id"] = ds.spec.id;
  d["category"] = ds.spec.category;
  d["train"] = split(ds.train);
  d["dev"] = split(ds.dev);
  return d;
}

}  // namespace

PYBIND11_MODULE(_hmnet, m) {
  m.doc() = "Hierarchical multi-task transformer core";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
  error.call_once_and_store_result([&]() { return py::exception<Error>(m, "HMNetError", PyExc_RuntimeError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error.get_stored(), (e.kind() + ": " + e.what()).c_str());
    }
  });

  py::class_<LayerPlan>(m, "LayerPlan")
      .def(py::init([](std::size_t x, std::size_t y, std::size_t z) { return LayerPlan{x, y, z}; }), py::arg("x"),
           py::arg("y"), py::arg("z"))
      .def_static("parse", &LayerPlan::parse)
      .def_readwrite("x", &LayerPlan::x)
      .def_readwrite("y", &LayerPlan::y)
      .def_readwrite("z", &LayerPlan::z)
      .def("depth", &LayerPlan::depth)
      .def("__str__", &LayerPlan::str)
      .def("__eq__", &LayerPlan::operator==);

  py::class_<Grouping>(m, "Grouping")
      .def(py::init([](std::vector<std::string> ids, std::vector<std::size_t> cluster_of, std::size_t k) {
             Grouping g{std::move(ids), std::move(cluster_of), k};
             g.validate();
             return g;
           }),
           py::arg("task_ids"), py::arg("cluster_of"), py::arg("k"))
      .def_readonly("task_ids", &Grouping::task_ids)
      .def_readonly("cluster_of", &Grouping::cluster_of)
      .def_readonly("k", &Grouping::k)
      .def("cluster", &Grouping::cluster)
      .def("clusters", &Grouping::clusters)
      .def("same_partition", &Grouping::same_partition);

  py::class_<RelevanceMatrix>(m, "RelevanceMatrix")
      .def(py::init([](std::vector<std::string> tasks, std::vector<std::vector<double>> scores, const std::string& kind) {
             RelevanceMatrix r{parse_relevance_kind(kind), std::move(tasks), std::move(scores)};
             r.validate();
             return r;
           }),
           py::arg("tasks"), py::arg("scores"), py::arg("kind") = "data_property")
      .def_readonly("tasks", &RelevanceMatrix::tasks)
      .def_readonly("scores", &RelevanceMatrix::scores)
      .def_property_readonly("kind", [](const RelevanceMatrix& r) { return to_string(r.kind); })
      .def("at", &RelevanceMatrix::at, py::arg("source"), py::arg("target"));

  m.def(
      "read_relevance_csv",
      [](const std::string& path, const std::string& kind) { return read_relevance_csv(path, parse_relevance_kind(kind)); },
      py::arg("path"), py::arg("kind") = "data_property");
  m.def(
      "write_relevance_csv", [](const std::string& path, const RelevanceMatrix& r) { write_relevance_csv(path, r); },
      py::arg("path"), py::arg("matrix"));

  m.def(
      "vocab_cooccurrence",
      [](const std::set<std::string>& vs, const std::set<std::string>& vt) { return vocab_cooccurrence(vs, vt); },
      py::arg("v_s"), py::arg("v_t"));
  m.def(
      "model_based_relevance",
      [](double f_s, double f_t, double f_js, double f_jt) {
        return model_based_relevance(PerformanceQuad{f_s, f_t, f_js, f_jt});
      },
      py::arg("f_s"), py::arg("f_t"), py::arg("f_js"), py::arg("f_jt"));

  m.def(
      "kmeans",
      [](const RelevanceMatrix& r, std::size_t k, std::uint64_t seed, std::size_t restarts) {
        auto res = kmeans(r, k, seed, restarts);
        py::dict d;
        d["grouping"] = res.grouping;
        d["inertia"] = res.inertia;
        d["restart_inertia"] = res.restart_inertia;
        return d;
      },
      py::arg("matrix"), py::arg("k"), py::arg("seed") = 0, py::arg("restarts") = 50);

  m.def(
      "compute_metric",
      [](const std::string& kind, const std::vector<double>& p, const std::vector<double>& g,
         const std::vector<std::string>& groups) { return compute_metric(parse_metric(kind), p, g, groups); },
      py::arg("kind"), py::arg("predictions"), py::arg("golds"), py::arg("groups") = std::vector<std::string>{});

  m.def(
      "synthetic_suite",
      [](std::size_t n_train, std::size_t n_dev, std::uint64_t seed, std::uint64_t pattern_shift) {
        py::list out;
        for (const auto& s : synthetic_suite(pattern_shift)) out.append(dataset_to_dict(gen_synthetic(s, n_train, n_dev, seed)));
        return out;
      },
      py::arg("n_train") = 600, py::arg("n_dev") = 300, py::arg("seed") = 0, py::arg("pattern_shift") = 0);

  m.def(
      "count_params",
      [](const LayerPlan& plan, const Grouping& grouping, std::size_t d, std::size_t heads, std::size_t vocab_size,
         std::size_t max_len, std::size_t n_classes) {
        std::vector<TaskSpec> specs;
        for (const auto& id : grouping.task_ids) specs.push_back(TaskSpec{id, "", InputMode::single, n_classes});
        const auto model = build_model(plan, grouping, specs, ModelConfig{d, heads, max_len, vocab_size}, 0);
        const auto c = count_params(model);
        py::dict out;
        out["per_layer"] = c.per_layer;
        out["embeddings"] = c.embeddings;
        out["activated_encoder"] = c.activated_encoder;
        out["overall_encoder"] = c.overall_encoder;
        out["overall"] = c.overall;
        out["total_layers"] = c.total_layers;
        return out;
      },
      py::arg("plan"), py::arg("grouping"), py::arg("d") = 64, py::arg("heads") = 4, py::arg("vocab_size") = 100,
      py::arg("max_len") = 64, py::arg("n_classes") = 2);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        std::vector<std::string> full{"hmnet"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in process; returns (exit_code, stdout, stderr).");
}
