#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "pct/errors.hpp"
#include "pct/metrics.hpp"
#include "pct/networks.hpp"
#include "pct/noise.hpp"
#include "pct/pipeline.hpp"
#include "pct/selfsup.hpp"

namespace py = pybind11;
using namespace pct;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// (h, w) arrays become (1, 1, h, w); 4-D arrays pass through.
Tensor to_tensor(const FloatArray& a) {
  Shape s;
  if (a.ndim() == 2) {
    s = Shape{1, 1, std::size_t(a.shape(0)), std::size_t(a.shape(1))};
  } else if (a.ndim() == 4) {
    s = Shape{std::size_t(a.shape(0)), std::size_t(a.shape(1)), std::size_t(a.shape(2)), std::size_t(a.shape(3))};
  } else {
    throw ShapeError("expected a 2-D (h, w) or 4-D (n, c, h, w) array");
  }
  return Tensor(s, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t, bool as_2d) {
  const Shape& s = t.shape();
  std::vector<py::ssize_t> dims;
  if (as_2d && s.n == 1 && s.c == 1) dims = {py::ssize_t(s.h), py::ssize_t(s.w)};
  else dims = {py::ssize_t(s.n), py::ssize_t(s.c), py::ssize_t(s.h), py::ssize_t(s.w)};
  FloatArray out(dims);
  std::copy(t.vec().begin(), t.vec().end(), out.mutable_data());
  return out;
}

FloatArray slice_array(const CtSlice& s) { return to_array(s.tensor(), true); }

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json py_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::list rows_to_py(const EvalReport& r) {
  py::list rows;
  for (const auto& row : r.rows) {
    py::dict d;
    d["method"] = row.method;
    d["psnr_mean"] = row.psnr_mean;
    d["psnr_std"] = row.psnr_std;
    d["ssim_mean"] = row.ssim_mean;
    d["ssim_std"] = row.ssim_std;
    rows.append(d);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Pseudo-CT pair denoising core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("synth_phantom", [](std::uint64_t seed, std::size_t size) { return slice_array(synth_phantom(seed, size)); },
        py::arg("seed"), py::arg("size") = 128, "Clean synthetic slice as an (h, w) array.");
  m.def(
      "synth_ldct",
      [](const FloatArray& ndct, double dose, std::uint64_t subject_seed, std::uint64_t realization) {
        const CtSlice clean = CtSlice::from_tensor(to_tensor(ndct), "", Dose::Normal, SliceSource::Synthetic);
        return slice_array(synth_ldct(clean, dose, subject_seed, realization));
      },
      py::arg("ndct"), py::arg("dose") = 0.25, py::arg("subject_seed") = 0, py::arg("realization") = 0);

  m.def("psnr", [](const FloatArray& p, const FloatArray& t) { return psnr(to_tensor(p), to_tensor(t)); });
  m.def("ssim", [](const FloatArray& p, const FloatArray& t) { return ssim(to_tensor(p), to_tensor(t)); });
  m.def("lag1_autocorrelation", [](const FloatArray& a) { return lag1_autocorrelation(to_tensor(a)); });

  m.def(
      "ensemble_noise",
      [](const std::vector<FloatArray>& maps, std::uint64_t seed) {
        NoiseMapSet set;
        for (const auto& a : maps) set.maps.push_back(to_tensor(a));
        std::vector<std::uint32_t> sel;
        const Tensor z = ensemble_noise(set, seed, &sel);
        const bool flat = !maps.empty() && maps[0].ndim() == 2;
        return py::make_tuple(to_array(z, flat), sel);
      },
      py::arg("maps"), py::arg("seed"),
      "Per-pixel uniform pick among the candidate maps; returns (noise, selected index per pixel).");
  m.def(
      "gaussian_noise",
      [](std::size_t h, std::size_t w, std::uint64_t seed, double std) {
        return to_array(gaussian_noise(Shape{1, 1, h, w}, seed, std), true);
      },
      py::arg("h"), py::arg("w"), py::arg("seed"), py::arg("std") = kGaussianNoiseStd);
  m.def(
      "n2v_mask",
      [](const FloatArray& noisy, double fraction, int window, std::uint64_t seed) {
        const N2vBatch b = n2v_mask(to_tensor(noisy), fraction, window, seed);
        const bool flat = noisy.ndim() == 2;
        return py::make_tuple(to_array(b.input, flat), to_array(b.mask, flat), b.positions, b.sources);
      },
      py::arg("noisy"), py::arg("fraction") = 0.008, py::arg("window") = 5, py::arg("seed") = 0,
      "Returns (input, mask, positions, sources).");

  py::class_<DenoiserNet>(m, "Denoiser")
      .def(py::init([](int depth, int channels, std::uint64_t seed) {
             return build_denoiser(DenoiserConfig{depth, channels, 3}, seed);
           }),
           py::arg("depth") = 5, py::arg("channels") = 16, py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return load_denoiser(p); })
      .def("save", [](const DenoiserNet& n, const std::filesystem::path& p) { save_weights(n, p); })
      .def("__call__", [](const DenoiserNet& n, const FloatArray& x) { return to_array(denoise(n, to_tensor(x)), x.ndim() == 2); })
      .def_property_readonly("depth", [](const DenoiserNet& n) { return n.config().depth; })
      .def_property_readonly("channels", [](const DenoiserNet& n) { return n.config().channels; })
      .def("same_parameters", &DenoiserNet::same_parameters);

  py::class_<NoiseEnsemble>(m, "NoiseEnsemble")
      .def("__len__", &NoiseEnsemble::size)
      .def_property_readonly("subject_ids", &NoiseEnsemble::subject_ids)
      .def("predict", [](const NoiseEnsemble& e, const FloatArray& x) {
        const NoiseMapSet set = predict_noise_set(e, to_tensor(x));
        py::list out;
        for (const auto& t : set.maps) out.append(to_array(t, x.ndim() == 2));
        return out;
      });
  m.def("load_ensemble", [](const std::filesystem::path& p) { return load_ensemble(p); });

  m.def("default_run_config", [] { return json_to_py(to_json(default_run_config())); },
        "Default run configuration as a plain dict.");
  m.def(
      "run_pipeline",
      [](const py::dict& config) {
        const RunConfig c = run_config_from_json(py_to_json(config));
        EvalReport rep;
        {
          py::gil_scoped_release release;
          rep = run_pipeline(c).report;
        }
        return rows_to_py(rep);
      },
      py::arg("config"), "Runs every stage and returns the report rows.");
}
