#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "clbench/config.hpp"
#include "clbench/evaluation.hpp"
#include "clbench/experiment.hpp"
#include "clbench/replay.hpp"

namespace py = pybind11;
using namespace clbench;

namespace {

AccuracyMatrix to_matrix(const std::vector<std::vector<std::optional<double>>>& rows) {
  AccuracyMatrix r(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() > rows.size()) throw DimensionError("accuracy row longer than the task count");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      if (rows[i][j]) r.set(i, j, *rows[i][j]);
  }
  return r;
}

py::list from_matrix(const AccuracyMatrix& r) {
  py::list rows;
  for (std::size_t i = 0; i < r.num_tasks(); ++i) {
    py::list row;
    for (std::size_t j = 0; j < r.num_tasks(); ++j) {
      auto v = r.get(i, j);
      row.append(v ? py::cast(*v) : py::none());
    }
    rows.append(row);
  }
  return rows;
}

py::dict record_dict(const ResultRecord& record) {
  py::dict d;
  d["method"] = record.method;
  d["fingerprint"] = record.fingerprint;
  d["acc_mean"] = record.acc_mean;
  d["acc_std"] = record.acc_std;
  d["bwt_mean"] = record.bwt_mean;
  d["bwt_std"] = record.bwt_std;
  d["succeeded"] = record.succeeded;
  d["wall_clock_seconds"] = record.wall_clock_seconds;
  py::list seeds;
  for (const auto& s : record.seeds) {
    py::dict e;
    e["seed"] = s.seed;
    e["ok"] = s.ok;
    e["error"] = s.error;
    e["acc"] = s.acc;
    e["bwt"] = s.bwt;
    e["accuracy"] = from_matrix(s.accuracy);
    e["optimizer_steps"] = s.optimizer_steps;
    e["frozen_ema_checks"] = s.audit.checks;
    e["frozen_ema_violations"] = s.audit.violations;
    seeds.append(e);
  }
  d["seeds"] = seeds;
  return d;
}

py::array_t<double> as_array(const Batch& batch, std::size_t dim) {
  py::array_t<double> out({batch.size(), dim});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d) view(i, d) = batch[i].input[d];
  return out;
}

py::array_t<int> labels_array(const Batch& batch) {
  py::array_t<int> out(static_cast<py::ssize_t>(batch.size()));
  auto view = out.mutable_unchecked<1>();
  for (std::size_t i = 0; i < batch.size(); ++i) view(static_cast<py::ssize_t>(i)) = batch[i].label;
  return out;
}

}  // namespace

PYBIND11_MODULE(_clbench, m) {
  m.doc() = "Class-incremental replay benchmark with BN-aware training strategies";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  py::class_<ExperimentConfig>(m, "Config")
      .def(py::init<>())
      .def_static("parse", &parse_config, py::arg("text"))
      .def_static("load", &load_config, py::arg("path"))
      .def("set", [](ExperimentConfig& c, const std::string& key, const std::string& value) {
             apply_override(c, key, value);
             return &c;
           }, py::return_value_policy::reference_internal, py::arg("key"), py::arg("value"))
      .def("serialize", &serialize_config)
      .def("fingerprint", &config_fingerprint)
      .def("validate", &ExperimentConfig::validate)
      .def_property_readonly("method", [](const ExperimentConfig& c) { return std::string(method_name(c.strategy.method)); })
      .def_property(
          "seeds", [](const ExperimentConfig& c) { return c.seeds; },
          [](ExperimentConfig& c, std::vector<std::uint64_t> s) { c.seeds = std::move(s); })
      .def_property(
          "output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
          [](ExperimentConfig& c, std::string d) { c.output_dir = std::move(d); })
      .def("__eq__", [](const ExperimentConfig& a, const ExperimentConfig& b) { return a == b; })
      .def("__repr__", [](const ExperimentConfig& c) {
        return "<clbench.Config " + std::string(method_name(c.strategy.method)) + " " + config_fingerprint(c) + ">";
      });

  m.def("methods", [] {
    std::vector<std::string> names;
    for (Method x : all_methods()) names.emplace_back(method_name(x));
    return names;
  });

  m.def("run_experiment", [](const ExperimentConfig& c) {
    ResultRecord record;
    {
      py::gil_scoped_release release;
      record = run_experiment(c);
    }
    return record_dict(record);
  }, py::arg("config"), "Trains every seed and returns the aggregated record as a dict.");

  m.def("compare", [](const std::vector<ExperimentConfig>& configs, bool paired) {
    ComparisonTable table;
    {
      py::gil_scoped_release release;
      table = compare_methods(configs, paired);
    }
    py::list rows;
    for (const auto& r : table.rows) {
      py::dict d;
      d["method"] = r.method;
      d["acc_mean"] = r.acc_mean;
      d["acc_std"] = r.acc_std;
      d["bwt_mean"] = r.bwt_mean;
      d["bwt_std"] = r.bwt_std;
      rows.append(d);
    }
    py::dict out;
    out["rows"] = rows;
    out["win_rate"] = table.win_rate;
    out["paired_seeds"] = table.paired_seeds;
    return out;
  }, py::arg("configs"), py::arg("paired") = false);

  m.def("generate_stream", [](const ExperimentConfig& c) {
    const auto stream = build_stream(c);
    py::list tasks;
    for (const auto& t : stream.tasks) {
      py::dict d;
      d["classes"] = t.classes;
      d["train_x"] = as_array(t.train, stream.input_dim);
      d["train_y"] = labels_array(t.train);
      d["test_x"] = as_array(t.test, stream.input_dim);
      d["test_y"] = labels_array(t.test);
      tasks.append(d);
    }
    return tasks;
  }, py::arg("config"), "Tasks of the configured stream as numpy arrays.");

  m.def("acc_metric", [](const std::vector<std::vector<std::optional<double>>>& r) { return acc_metric(to_matrix(r)); },
        py::arg("matrix"));
  m.def("bwt_metric", [](const std::vector<std::vector<std::optional<double>>>& r) { return bwt_metric(to_matrix(r)); },
        py::arg("matrix"), "None when the matrix covers a single task.");

  m.def("herding_select", &herding_select, py::arg("features"), py::arg("m"),
        "Greedy exemplar order whose running mean tracks the feature mean.");
}
