#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "tsfm/errors.hpp"
#include "tsfm/metrics.hpp"
#include "tsfm/signal.hpp"
#include "tsfm/train.hpp"
#include "tsfm/workbench.hpp"

namespace py = pybind11;
using namespace tsfm;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U32 = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const F64& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }
std::span<const std::uint32_t> view(const U32& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

F64 to_numpy(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  F64 out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Python objects cross the boundary as JSON text.
nlohmann::json to_json(const py::object& o) {
  if (o.is_none()) return nlohmann::json::object();
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

SignalBatch batch_from(const F64& x) {
  if (x.ndim() != 3) throw DimensionError("expected an array of shape [batch, channels, length]");
  SignalBatch b;
  b.batch = static_cast<std::size_t>(x.shape(0));
  b.channels = static_cast<std::size_t>(x.shape(1));
  b.length = static_cast<std::size_t>(x.shape(2));
  b.values.assign(x.data(), x.data() + x.size());
  return b;
}

class PyEncoder {
 public:
  PyEncoder(const std::string& kind, const py::object& config, std::uint64_t seed)
      : enc_(workbench::make_encoder(kind, config.is_none() ? nlohmann::json("mini") : to_json(config), seed)) {}

  F64 encode(const F64& x) const {
    const SignalBatch b = batch_from(x);
    std::vector<double> out;
    std::size_t width = 0;
    {
      py::gil_scoped_release release;
      NoGradGuard no_grad;
      RunContext ctx = RunContext::eval();
      const Tensor z = enc_->encode(b, ctx);
      width = z.dim(1);
      out.assign(z.data().begin(), z.data().end());
    }
    return to_numpy(out, {static_cast<py::ssize_t>(b.batch), static_cast<py::ssize_t>(width)});
  }

  std::string kind() const { return enc_->kind(); }
  std::size_t feature_dim(std::size_t channels, std::size_t length) const { return enc_->feature_dim(channels, length); }
  std::size_t num_parameters() const { return enc_->parameters().numel(); }
  py::object config() const { return from_json(enc_->config_json()); }

 private:
  std::unique_ptr<Encoder> enc_;
};

}  // namespace

PYBIND11_MODULE(_tsfm, m) {
  m.doc() = "Time-series foundation model workbench";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());

  m.def("balanced_accuracy", [](const U32& y, const U32& p) { return metrics::balanced_accuracy(view(y), view(p)); });
  m.def("cohens_kappa", [](const U32& y, const U32& p) { return metrics::cohens_kappa(view(y), view(p)); });
  m.def("weighted_f1", [](const U32& y, const U32& p) { return metrics::weighted_f1(view(y), view(p)); });
  m.def("auroc", [](const U32& y, const F64& s) { return metrics::auroc(view(y), view(s)); });
  m.def("auc_pr", [](const U32& y, const F64& s) { return metrics::auc_pr(view(y), view(s)); });
  m.def(
      "compute_metric",
      [](const std::string& name, const U32& y, const F64& scores) {
        if (scores.ndim() != 2) throw DimensionError("scores must be [n, n_classes]");
        return metrics::compute(name, view(y), view(scores), static_cast<std::size_t>(scores.shape(1)));
      },
      py::arg("name"), py::arg("y_true"), py::arg("scores"));

  m.def(
      "lowpass_filter",
      [](const F64& x, double rate, double cutoff) {
        return to_numpy(signal::lowpass_filter(view(x), rate, cutoff), {x.size()});
      },
      py::arg("x"), py::arg("sample_rate_hz"), py::arg("cutoff_hz") = 30.0);
  m.def(
      "resample",
      [](const F64& x, double from_hz, double to_hz) {
        const auto y = signal::resample(view(x), from_hz, to_hz);
        return to_numpy(y, {static_cast<py::ssize_t>(y.size())});
      },
      py::arg("x"), py::arg("from_hz"), py::arg("to_hz"));
  m.def("cosine_warmup_lr", &train::cosine_warmup_lr, py::arg("step"), py::arg("total_steps"), py::arg("warmup_frac"),
        py::arg("base_lr"));
  m.def(
      "info_nce",
      [](const F64& z, const F64& zp, double temperature) {
        if (z.ndim() != 2 || zp.ndim() != 2) throw DimensionError("views must be [n, d]");
        const Shape s{static_cast<std::size_t>(z.shape(0)), static_cast<std::size_t>(z.shape(1))};
        const Shape sp{static_cast<std::size_t>(zp.shape(0)), static_cast<std::size_t>(zp.shape(1))};
        return train::info_nce(Tensor(s, {z.data(), z.data() + z.size()}), Tensor(sp, {zp.data(), zp.data() + zp.size()}),
                               temperature)
            .item();
      },
      py::arg("z"), py::arg("z_prime"), py::arg("temperature") = 0.1);

  m.def(
      "gen_synthetic",
      [](const py::object& spec) {
        const Dataset ds = workbench::gen_synthetic(workbench::synth_spec_from_json(to_json(spec)));
        py::dict out;
        out["data"] = to_numpy(ds.data, {static_cast<py::ssize_t>(ds.size()), static_cast<py::ssize_t>(ds.channels),
                                         static_cast<py::ssize_t>(ds.length)});
        out["labels"] = py::array_t<std::uint32_t>(static_cast<py::ssize_t>(ds.labels.size()), ds.labels.data());
        out["subject_ids"] = ds.subject_ids;
        out["label_names"] = ds.label_names;
        out["sample_rate_hz"] = ds.sample_rate_hz;
        return out;
      },
      py::arg("spec") = py::none());

  m.def(
      "gradcheck",
      [](const std::string& module, std::size_t seeds) {
        std::vector<workbench::GradCheckResult> results;
        {
          py::gil_scoped_release release;
          results = workbench::run_gradchecks(module, seeds);
        }
        py::list out;
        for (const auto& r : results) {
          py::dict d;
          d["name"] = r.name;
          d["module"] = r.module;
          d["seed"] = r.seed;
          d["max_rel_error"] = r.max_rel_error;
          d["passed"] = r.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("module") = "", py::arg("seeds") = 1);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"tsfm"};
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release release;
        return workbench::run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"));

  py::class_<PyEncoder>(m, "Encoder")
      .def(py::init<const std::string&, const py::object&, std::uint64_t>(), py::arg("kind"),
           py::arg("config") = py::none(), py::arg("seed") = 0)
      .def("encode", &PyEncoder::encode, py::arg("x"))
      .def("feature_dim", &PyEncoder::feature_dim, py::arg("channels"), py::arg("length"))
      .def_property_readonly("kind", &PyEncoder::kind)
      .def_property_readonly("num_parameters", &PyEncoder::num_parameters)
      .def_property_readonly("config", &PyEncoder::config);
}
