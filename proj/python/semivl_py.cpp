#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>

#include "semivl/checkpoint.hpp"
#include "semivl/config.hpp"
#include "semivl/data.hpp"
#include "semivl/distributions.hpp"
#include "semivl/gradcheck_suite.hpp"
#include "semivl/harness.hpp"

namespace py = pybind11;
using namespace semivl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

RunConfig make_config(const std::string& profile, const KeyValues& overrides) {
  RunConfig base;
  if (profile == "desk") {
    base = desk_profile();
  } else if (profile != "full") {
    throw py::value_error("profile must be 'full' or 'desk'");
  }
  RunConfig cfg = apply_key_values(base, overrides);
  cfg.synth.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict to_arrays(const Dataset& d) {
  const std::size_t n = d.size();
  const auto rows = static_cast<py::ssize_t>(n);
  Array wave({rows, static_cast<py::ssize_t>(kWaveformLength)});
  Array err(std::vector<py::ssize_t>{rows}), dist(std::vector<py::ssize_t>{rows});
  py::array_t<long> env(std::vector<py::ssize_t>{rows}), mat(std::vector<py::ssize_t>{rows});
  auto w = wave.mutable_unchecked<2>();
  auto e = err.mutable_unchecked<1>();
  auto m = dist.mutable_unchecked<1>();
  auto k = env.mutable_unchecked<1>();
  auto t = mat.mutable_unchecked<1>();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kWaveformLength; ++j) w(i, j) = d[i].waveform[j];
    e(i) = d[i].range_error.value_or(NAN);
    m(i) = d[i].measured_distance;
    k(i) = d[i].env_label ? static_cast<long>(*d[i].env_label) : -1;
    t(i) = d[i].material_label ? static_cast<long>(*d[i].material_label) : -1;
  }
  py::dict out;
  out["waveform"] = wave;
  out["range_error"] = err;
  out["env_label"] = env;
  out["material_label"] = mat;
  out["measured_distance"] = dist;
  return out;
}

Dataset from_arrays(const py::dict& arrays) {
  const Array wave = arrays["waveform"].cast<Array>();
  if (wave.ndim() != 2 || wave.shape(1) != static_cast<py::ssize_t>(kWaveformLength)) {
    throw py::value_error("waveform must have shape [n, " + std::to_string(kWaveformLength) + "]");
  }
  const std::size_t n = static_cast<std::size_t>(wave.shape(0));
  auto column = [&](const char* key, double fill) {
    if (!arrays.contains(key)) return std::vector<double>(n, fill);
    const Array a = arrays[key].cast<Array>();
    if (a.ndim() != 1 || static_cast<std::size_t>(a.shape(0)) != n) {
      throw py::value_error(std::string(key) + " must have length " + std::to_string(n));
    }
    return std::vector<double>(a.data(), a.data() + n);
  };
  const auto err = column("range_error", NAN);
  const auto env = column("env_label", -1);
  const auto mat = column("material_label", -1);
  const auto dist = column("measured_distance", 0.0);
  Dataset d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i].waveform.assign(wave.data() + i * kWaveformLength, wave.data() + (i + 1) * kWaveformLength);
    if (!std::isnan(err[i])) d[i].range_error = err[i];
    if (env[i] >= 0) d[i].env_label = static_cast<std::size_t>(env[i]);
    if (mat[i] >= 0) d[i].material_label = static_cast<std::size_t>(mat[i]);
    d[i].measured_distance = dist[i];
  }
  return d;
}

py::dict metrics_dict(const MetricsReport& r) {
  py::dict d;
  d["tag"] = r.tag;
  d["eta"] = r.eta;
  d["rmse"] = r.rmse;
  d["mae"] = r.mae;
  d["time_ms"] = r.time_ms;
  d["n"] = r.n;
  d["unmitigated_rmse"] = r.unmitigated_rmse;
  d["unmitigated_mae"] = r.unmitigated_mae;
  d["n_labeled"] = r.n_labeled;
  return d;
}

py::list metrics_list(const std::vector<MetricsReport>& rows) {
  py::list out;
  for (const auto& r : rows) out.append(metrics_dict(r));
  return out;
}

struct Model {
  RunConfig config;
  ModelParams params;
  LearningCurve curve;
  int epoch = 0;
  std::optional<AdamState> adam;
};

}  // namespace

PYBIND11_MODULE(_semivl, m) {
  m.doc() = "Semi-supervised variational UWB ranging-error mitigation";
  m.attr("WAVEFORM_LENGTH") = kWaveformLength;

  m.def(
      "resolve_config",
      [](const std::string& profile, const KeyValues& overrides) {
        return to_key_values(make_config(profile, overrides));
      },
      py::arg("profile") = "full", py::arg("overrides") = KeyValues{},
      "Full key -> value snapshot after applying overrides onto a profile.");
  m.def("config_keys", [] {
    py::dict out;
    for (const auto& d : config_key_docs()) out[py::str(d.key)] = d.doc;
    return out;
  });

  m.def(
      "generate",
      [](std::size_t count, std::uint64_t seed, bool test_stream, const KeyValues& overrides) {
        RunConfig cfg = make_config("full", overrides);
        SynthConfig s = cfg.synth;
        s.count = count;
        s.seed = seed;
        const SyntheticData data = synth_generate(s, test_stream ? Stream::kTestGenerate : Stream::kGenerate);
        py::dict out = to_arrays(data.samples);
        out["true_distance"] = py::array(py::cast(data.true_distance));
        out["nlos"] = py::array(py::cast(std::vector<int>(data.nlos.begin(), data.nlos.end()))).attr("astype")("bool");
        return out;
      },
      py::arg("count"), py::arg("seed") = 0, py::arg("test_stream") = false, py::arg("overrides") = KeyValues{},
      "Synthetic waveforms with labels; missing labels are NaN / -1.");
  m.def("load_dataset", [](const std::filesystem::path& p) { return to_arrays(load_dataset(p)); });
  m.def("write_dataset", [](const std::filesystem::path& p, const py::dict& arrays) {
    write_dataset(p, from_arrays(arrays));
  });

  m.def(
      "kl_gaussian_diag",
      [](const Array& mean, const Array& variance, double prior_var) {
        return kl_gaussian_diag(GaussianCode{to_tensor(mean), to_tensor(variance)}, prior_var);
      },
      py::arg("mean"), py::arg("variance"), py::arg("prior_var") = 1.0);

  m.def("gradcheck", [](std::uint64_t seed) {
    py::list out;
    for (const auto& c : gradcheck_suite(seed)) out.append(py::make_tuple(c.name, c.rel_error));
    return out;
  }, py::arg("seed") = 7);

  py::class_<Model>(m, "Model")
      .def_property_readonly("epoch", [](const Model& x) { return x.epoch; })
      .def_property_readonly("config", [](const Model& x) { return to_key_values(x.config); })
      .def_property_readonly("parameter_count", [](const Model& x) { return x.params.scalar_count(); })
      .def_property_readonly("curve",
                             [](const Model& x) {
                               py::list out;
                               for (const auto& r : x.curve) {
                                 py::dict d;
                                 d["epoch"] = r.epoch;
                                 d["total"] = r.total;
                                 d["unsup"] = r.unsup;
                                 d["sup"] = r.sup;
                                 d["lr"] = r.lr;
                                 out.append(d);
                               }
                               return out;
                             })
      .def("evaluate",
           [](const Model& x, const py::dict& test) {
             return metrics_dict(evaluate(x.params, from_arrays(test), x.config.train.normalize, "semivl",
                                          x.config.train.eta));
           })
      .def(
          "mitigate",
          [](const Model& x, const Array& waveform, double measured) {
            return mitigate(x.params, std::span<const double>(waveform.data(), waveform.size()), measured,
                            x.config.train.normalize);
          },
          py::arg("waveform"), py::arg("measured_distance"))
      .def("save", [](const Model& x, const std::filesystem::path& prefix) {
        save_checkpoint(prefix, Checkpoint{x.config, x.params, x.epoch, x.adam});
      });

  m.def("load_checkpoint", [](const std::filesystem::path& prefix) {
    Checkpoint c = load_checkpoint(prefix);
    return Model{c.config, std::move(c.params), {}, c.epoch, std::move(c.adam)};
  });

  m.def(
      "train",
      [](const py::dict& data, const std::string& profile, const KeyValues& overrides) {
        const RunConfig cfg = make_config(profile, overrides);
        const Dataset d = from_arrays(data);
        py::gil_scoped_release release;
        TrainResult r = train(d, cfg);
        return Model{cfg, std::move(r.params), std::move(r.curve), cfg.train.epochs, std::move(r.adam)};
      },
      py::arg("data"), py::arg("profile") = "full", py::arg("overrides") = KeyValues{});

  m.def(
      "sweep",
      [](const py::dict& train_set, const py::dict& test_set, const std::string& profile, const KeyValues& overrides) {
        const RunConfig cfg = make_config(profile, overrides);
        return metrics_list(sweep(from_arrays(train_set), from_arrays(test_set), cfg));
      },
      py::arg("train_set"), py::arg("test_set"), py::arg("profile") = "full", py::arg("overrides") = KeyValues{});
  m.def(
      "ablation",
      [](const py::dict& train_set, const py::dict& test_set, const std::string& profile, const KeyValues& overrides) {
        const RunConfig cfg = make_config(profile, overrides);
        return metrics_list(ablation(from_arrays(train_set), from_arrays(test_set), cfg));
      },
      py::arg("train_set"), py::arg("test_set"), py::arg("profile") = "full", py::arg("overrides") = KeyValues{});

  py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);
}
