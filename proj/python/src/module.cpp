// Python bindings: thin wrappers over the command pipeline. Curves come back
// as numpy arrays, structured results as JSON text decoded on the Python side.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dvhkit/bundle.hpp"
#include "dvhkit/error.hpp"
#include "dvhkit/library.hpp"
#include "dvhkit/pipeline.hpp"
#include "dvhkit/synth.hpp"
#include "dvhkit/version.hpp"

namespace py = pybind11;
using namespace dvhkit;

namespace {

py::array_t<double> to_numpy(std::span<const double> v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::vector<AlgorithmId> parse_algorithms(const std::vector<std::string>& names) {
  std::vector<AlgorithmId> out;
  for (const auto& n : names) out.push_back(parse_algorithm(n));
  return out;
}

FeatureVector features_from_dict(const py::dict& d) {
  return parse_features_json(py::module_::import("json").attr("dumps")(d).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DVH prediction core";
  m.attr("__version__") = std::string(kVersion);

  // Held for the life of the process, like the module itself.
  static PyObject* dvh_error = py::exception<Error>(m, "DvhkitError", PyExc_RuntimeError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::handle(dvh_error)(e.what());
      err.attr("code") = to_string(e.code());
      err.attr("input_error") = is_input_error(e.code());
      PyErr_SetObject(dvh_error, err.ptr());
    }
  });

  m.def(
      "synth",
      [](const std::filesystem::path& out, std::size_t n, std::uint64_t seed, double noise, const std::string& prefix) {
        SynthConfig sc;
        sc.n_patients = n;
        sc.seed = seed;
        sc.noise_std = noise;
        sc.id_prefix = prefix;
        save_library(out, synth_cohort(sc));
      },
      py::arg("out"), py::arg("n") = 94, py::arg("seed") = 42, py::arg("noise") = 1.0, py::arg("prefix") = "SYN",
      "Write a synthetic library.");

  m.def(
      "ingest",
      [](const std::filesystem::path& dir, const std::filesystem::path& out) {
        const auto r = cmd_ingest(dir, StructureNameRules::defaults(), out);
        py::list failures;
        for (const auto& f : r.failures) failures.append(py::make_tuple(f.file, f.message));
        return py::dict(py::arg("records") = r.records.size(), py::arg("failures") = failures,
                        py::arg("skipped") = r.skipped);
      },
      py::arg("dir"), py::arg("out"), "Parse a directory of exports into a library.");

  m.def(
      "train",
      [](const std::filesystem::path& library, const std::filesystem::path& out, std::vector<std::string> algorithms,
         std::uint64_t seed, bool tune) {
        const auto records = load_library(library);
        TrainOptions o;
        if (!algorithms.empty()) o.algorithms = parse_algorithms(algorithms);
        o.seed = seed;
        o.tune = tune;
        TrainOutcome r;
        {
          py::gil_scoped_release release;
          r = cmd_train(records, o);
        }
        save_bundle(out, r.bundle);
        return r.bundle.fingerprint;
      },
      py::arg("library"), py::arg("out"), py::arg("algorithms") = std::vector<std::string>{}, py::arg("seed") = 42,
      py::arg("tune") = false, "Train and write a bundle; returns its fingerprint.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& bundle, const std::filesystem::path& validation,
         const std::filesystem::path& out_dir) {
        const auto b = load_bundle(bundle);
        const auto v = load_library(validation);
        const auto r = cmd_evaluate(b, v);
        write_evaluation(r, out_dir);
        return report_json(r.reports);
      },
      py::arg("bundle"), py::arg("validation"), py::arg("out_dir"), "Score a bundle; returns the report JSON text.");

  m.def(
      "band",
      [](const std::filesystem::path& library, const std::string& organ, double confidence) {
        const auto records = load_library(library);
        const auto b = cmd_band(records, parse_organ(organ), confidence);
        return py::dict(py::arg("start_cgy") = b.grid.start_cgy, py::arg("step_cgy") = b.grid.step_cgy,
                        py::arg("lower") = to_numpy(b.lower), py::arg("upper") = to_numpy(b.upper));
      },
      py::arg("library"), py::arg("organ"), py::arg("confidence") = 0.95);

  py::class_<ModelBundle>(m, "Bundle")
      .def_static("load", &load_bundle, py::arg("path"))
      .def_property_readonly("fingerprint", [](const ModelBundle& b) { return b.fingerprint; })
      .def_property_readonly("created_at", [](const ModelBundle& b) { return b.created_at; })
      .def_property_readonly("seed", [](const ModelBundle& b) { return b.seed; })
      .def(
          "algorithms",
          [](const ModelBundle& b, const std::string& organ) {
            std::vector<std::string> out;
            for (const auto id : b.algorithms(parse_organ(organ))) out.emplace_back(to_string(id));
            return out;
          },
          py::arg("organ"))
      .def(
          "predict_curve",
          [](const ModelBundle& b, const std::string& algorithm, const std::string& organ, const py::dict& features) {
            const auto c = b.predict(parse_algorithm(algorithm), parse_organ(organ), features_from_dict(features));
            return to_numpy(c.values());
          },
          py::arg("algorithm"), py::arg("organ"), py::arg("features"), "Curve on the 10 cGy grid, percent volume.")
      .def(
          "predict_json",
          [](const ModelBundle& b, const std::string& request) {
            PredictionContext ctx(b);
            return predict_json(ctx, parse_predict_request(request));
          },
          py::arg("request"), "Same JSON the CLI and the HTTP service return.");
}
