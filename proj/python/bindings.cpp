#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "joinml/bas.hpp"
#include "joinml/io.hpp"
#include "joinml/selection.hpp"
#include "joinml/synth.hpp"

namespace py = pybind11;
using namespace joinml;

namespace {

// A loaded or generated dataset with its cross-product space; specs travel as JSON text.
class PyDataset {
 public:
  explicit PyDataset(Dataset data) : data_(std::move(data)) {
    options_ = io::space_options(data_);
    space_ = std::make_unique<CrossSpace>(data_.space(options_));
  }

  std::vector<std::string> tables() const { return space_->table_names(); }
  std::uint64_t size() const { return space_->size(); }

  std::string exact() const {
    const auto r = exact_evaluate(*space_, *data_.oracle);
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j = {{"count", r.count}, {"sum", r.sum},       {"avg", opt(r.avg)},
                        {"min", opt(r.min)}, {"max", opt(r.max)}, {"median", opt(r.median)}};
    if (!r.group_count.empty()) {
      j["group_count"] = r.group_count;
      j["group_sum"] = r.group_sum;
    }
    return j.dump();
  }

  std::string estimate(const std::string& spec_json) const {
    const QuerySpec spec = parse(spec_json);
    if (spec.aggregate == Aggregate::GroupByCount || spec.aggregate == Aggregate::GroupBySum) {
      const auto r = groupby_estimate(*space_, *data_.oracle, spec);
      return nlohmann::json{{"groups", r.groups}, {"undiscovered", r.undiscovered}}.dump();
    }
    return nlohmann::json(joinml::estimate(*space_, *data_.oracle, spec)).dump();
  }

  std::string select(double recall, double confidence, std::int64_t budget, std::uint64_t seed) const {
    SelectionSpec s;
    s.recall = recall;
    s.confidence = confidence;
    s.budget = budget;
    s.seed = seed;
    const auto r = bas_select(*space_, *data_.oracle, s);
    nlohmann::json j = r;
    j["selected"] = r.selected;
    return j.dump();
  }

  std::string topk(int k, const std::string& spec_json) const {
    return nlohmann::json(topk_heavy_hitters(*space_, *data_.oracle, k, parse(spec_json))).dump();
  }

 private:
  QuerySpec parse(const std::string& text) const {
    QuerySpec spec = nlohmann::json::parse(text).get<QuerySpec>();
    if (spec.tables.empty()) spec.tables = space_->table_names();
    return spec;
  }

  Dataset data_;
  SpaceOptions options_;
  std::unique_ptr<CrossSpace> space_;
};

}  // namespace

PYBIND11_MODULE(_joinml, m) {
  m.doc() = "Approximate semantic join aggregates under an Oracle budget";

  py::register_exception<Error>(m, "JoinMLError", PyExc_RuntimeError);

  py::class_<PyDataset>(m, "Dataset")
      .def_property_readonly("tables", &PyDataset::tables)
      .def_property_readonly("size", &PyDataset::size)
      .def("exact", &PyDataset::exact)
      .def("estimate", &PyDataset::estimate, py::arg("spec_json"))
      .def("select", &PyDataset::select, py::arg("recall"), py::arg("confidence"), py::arg("budget"), py::arg("seed"))
      .def("topk", &PyDataset::topk, py::arg("k"), py::arg("spec_json"));

  m.def("load_dataset", [](const std::string& dir) { return PyDataset(io::load_dataset(dir)); }, py::arg("path"));
  m.def(
      "syn_dataset",
      [](const std::string& params_json, const std::string& out_dir) {
        const auto syn = gen_syn(nlohmann::json::parse(params_json).get<SynParams>());
        if (!out_dir.empty()) io::write_syn_dataset(out_dir, syn);
        return PyDataset(syn.dataset());
      },
      py::arg("params_json"), py::arg("out_dir") = "");
  m.def("ub", &ub, py::arg("mu"), py::arg("sigma2"), py::arg("n"), py::arg("p"));
  m.def("gamma_s_required", py::overload_cast<double, double, double>(&gamma_s_required), py::arg("gamma"),
        py::arg("count_b"), py::arg("upper"));
}
