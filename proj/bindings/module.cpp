#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pmuek/classify.hpp"
#include "pmuek/detect.hpp"
#include "pmuek/errors.hpp"
#include "pmuek/features.hpp"
#include "pmuek/preprocess.hpp"
#include "pmuek/synth.hpp"
#include "pmuek/timeutil.hpp"
#include "pmuek/tune.hpp"

namespace py = pybind11;
using namespace pmuek;

namespace {

Eigen::MatrixXd matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ContractError("expected a 2-d array");
  Eigen::MatrixXd m(a.shape(0), a.shape(1));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = r(i, j);
  return m;
}

py::array_t<double> numpy_from_matrix(const Eigen::MatrixXd& m) {
  py::array_t<double> a({m.rows(), m.cols()});
  auto w = a.mutable_unchecked<2>();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w(i, j) = m(i, j);
  return a;
}

Dataset dataset_from_arrays(const py::array_t<double>& vm, const py::array_t<double>& im,
                            const py::array_t<double>& rocof, int fps) {
  Eigen::MatrixXd grids[3] = {matrix_from_numpy(vm), matrix_from_numpy(im),
                              matrix_from_numpy(rocof)};
  const Eigen::Index rows = grids[0].rows(), cols = grids[0].cols();
  for (const auto& g : grids) {
    if (g.rows() != rows || g.cols() != cols) {
      throw ContractError("vm, im and rocof arrays must share one shape");
    }
  }
  // Build frames on the sample grid; PMU ids are positional.
  std::vector<PmuFrame> frames;
  frames.reserve(static_cast<std::size_t>(rows * cols));
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (Eigen::Index p = 0; p < cols; ++p) {
      PmuFrame f;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "PMU%03d", static_cast<int>(p));
      f.pmu_id = buf;
      f.ts_ms = index_to_ms(Synthesizer::kEpochMs, t, fps);
      f.vm_pos = grids[0](t, p);
      f.im_pos = grids[1](t, p);
      f.rocof = grids[2](t, p);
      f.status = Status::Ok;
      frames.push_back(std::move(f));
    }
  }
  return Dataset::from_frames(frames, fps);
}

DetectorParams params_from_dict(const py::dict& d) {
  DetectorParams p;
  if (d.contains("w")) p.w = d["w"].cast<int>();
  if (d.contains("theta_vm_pos")) p.thresholds[0] = d["theta_vm_pos"].cast<double>();
  if (d.contains("theta_im_pos")) p.thresholds[1] = d["theta_im_pos"].cast<double>();
  if (d.contains("theta_rocof")) p.thresholds[2] = d["theta_rocof"].cast<double>();
  if (d.contains("stride")) p.stride = d["stride"].cast<int>();
  if (d.contains("refractory_s")) p.refractory_s = d["refractory_s"].cast<double>();
  if (d.contains("signed_threshold")) p.signed_threshold = d["signed_threshold"].cast<bool>();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core operations of pmu-eventkit: SVD-ratio event detection, "
            "pattern features, low-rank imputation, and the lightweight classifiers.";

  py::register_exception<ContractError>(m, "ContractError");
  py::register_exception<IoError>(m, "IoError");

  m.def(
      "singular_ratio",
      [](const py::array_t<double>& a) { return singular_ratio(matrix_from_numpy(a)); },
      py::arg("matrix"), "sigma2/sigma1 of a measurement matrix");

  m.def("xi_statistic", &xi_statistic, py::arg("eta_t"), py::arg("eta_prev"), py::arg("w"),
        "Averaged relative change of the singular ratio over w samples");

  m.def(
      "window_features",
      [](const py::array_t<double>& values, const std::string& baseline) {
        auto buf = values.request();
        if (buf.ndim != 1) throw ContractError("expected a 1-d array");
        std::span<const double> span(static_cast<const double*>(buf.ptr),
                                     static_cast<std::size_t>(buf.size));
        BaselineMode mode =
            baseline == "pre-event" ? BaselineMode::PreEvent20 : BaselineMode::FullWindow;
        auto f = per_pmu_features(span, mode);
        py::dict out;
        for (int j = 0; j < 6; ++j) out[("f" + std::to_string(j + 1)).c_str()] = f.f[j];
        return out;
      },
      py::arg("values"), py::arg("baseline") = "full",
      "Six shape features (f1..f6) of one signal window");

  m.def(
      "feature_vector",
      [](const py::array_t<double>& vm, const py::array_t<double>& im,
         const py::array_t<double>& rocof, const std::string& baseline) {
        EventWindows w;
        w.values[0] = matrix_from_numpy(vm);
        w.values[1] = matrix_from_numpy(im);
        w.values[2] = matrix_from_numpy(rocof);
        const Eigen::Index n = w.values[0].cols();
        for (Eigen::Index p = 0; p < n; ++p) {
          char buf[16];
          std::snprintf(buf, sizeof(buf), "PMU%03d", static_cast<int>(p));
          w.pmu_ids.emplace_back(buf);
        }
        BaselineMode mode =
            baseline == "pre-event" ? BaselineMode::PreEvent20 : BaselineMode::FullWindow;
        FeatureVector fv = build_feature_vector(w, std::nullopt, mode);
        return std::vector<double>(fv.values.begin(), fv.values.end());
      },
      py::arg("vm"), py::arg("im"), py::arg("rocof"), py::arg("baseline") = "full",
      "57-dimensional feature vector from per-signal (samples x pmus) windows");

  m.def("feature_names", [] { return feature_names(); });

  m.def(
      "impute",
      [](const py::array_t<double>& values, const py::array_t<bool>& missing, int rank,
         double tol, int max_iter) {
        Eigen::MatrixXd x = matrix_from_numpy(values);
        if (missing.ndim() != 2 || missing.shape(0) != values.shape(0) ||
            missing.shape(1) != values.shape(1)) {
          throw ContractError("missing mask must match the value shape");
        }
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask(x.rows(), x.cols());
        auto r = missing.unchecked<2>();
        for (Eigen::Index i = 0; i < x.rows(); ++i)
          for (Eigen::Index j = 0; j < x.cols(); ++j) mask(i, j) = r(i, j) ? 1 : 0;
        ImputeOptions opts;
        opts.rank = rank;
        opts.tol = tol;
        opts.max_iter = max_iter;
        impute(x, mask, opts);
        return numpy_from_matrix(x);
      },
      py::arg("values"), py::arg("missing"), py::arg("rank") = 3, py::arg("tol") = 1e-6,
      py::arg("max_iter") = 100,
      "Iterative truncated-SVD completion; observed entries pass through unchanged");

  m.def(
      "detect_events",
      [](const py::array_t<double>& vm, const py::array_t<double>& im,
         const py::array_t<double>& rocof, int fps, const py::dict& params) {
        Dataset ds = dataset_from_arrays(vm, im, rocof, fps);
        auto detections = detect_events(ds, params_from_dict(params));
        py::list out;
        for (const auto& d : detections) {
          py::dict item;
          item["t_detect_ms"] = d.t_detect_ms;
          item["sample_index"] = ds.index_of_ms(d.t_detect_ms);
          py::list trig;
          for (SignalKind s : d.triggering_signals) trig.append(signal_to_string(s));
          item["triggering_signals"] = trig;
          py::dict xi;
          for (SignalKind s : kAllSignals) {
            const int i = static_cast<int>(s);
            if (d.xi_valid[i]) xi[signal_to_string(s)] = d.xi_values[i];
          }
          item["xi"] = xi;
          out.append(item);
        }
        return out;
      },
      py::arg("vm"), py::arg("im"), py::arg("rocof"), py::arg("fps") = 30,
      py::arg("params") = py::dict(),
      "Run the OR-rule detector over in-memory (samples x pmus) signals");

  m.def(
      "generate",
      [](int n_pmus, int fps, double duration_s, int n_events, std::uint64_t seed,
         double min_gap_s) {
        GeneratorConfig cfg;
        cfg.n_pmus = n_pmus;
        cfg.fps = fps;
        cfg.duration_s = duration_s;
        cfg.n_events = n_events;
        cfg.seed = seed;
        cfg.min_gap_s = min_gap_s;
        Synthesizer synth(cfg);
        const Eigen::Index rows = synth.n_ticks();
        py::dict out;
        for (SignalKind s : kAllSignals) {
          Eigen::MatrixXd m(rows, n_pmus);
          for (Eigen::Index t = 0; t < rows; ++t)
            for (int p = 0; p < n_pmus; ++p) m(t, p) = synth.clean_value(p, s, t);
          out[signal_to_string(s)] = numpy_from_matrix(m);
        }
        py::list truth;
        for (const auto& e : synth.truth()) {
          py::dict item;
          item["start_ms"] = e.start_ms;
          item["end_ms"] = e.end_ms;
          item["event_type"] = event_type_to_string(e.event_type);
          truth.append(item);
        }
        out["truth"] = truth;
        out["t0_ms"] = Synthesizer::kEpochMs;
        return out;
      },
      py::arg("n_pmus") = 10, py::arg("fps") = 30, py::arg("duration_s") = 600.0,
      py::arg("n_events") = 0, py::arg("seed") = 1, py::arg("min_gap_s") = 120.0,
      "Clean synthetic signals plus ground-truth events, as numpy arrays");

  py::class_<Model>(m, "Model")
      .def("predict", [](const Model& model,
                         const std::vector<double>& row) { return model.predict(row); })
      .def_property_readonly("classes", [](const Model& model) { return model.classes(); })
      .def("save", &Model::save)
      .def_static("load", &Model::load)
      .def("to_json", &Model::to_json);

  m.def(
      "train_classifier",
      [](const std::vector<std::vector<double>>& x, const std::vector<std::string>& y,
         const std::vector<std::string>& names, const std::string& kind, int n_trees,
         std::uint64_t seed) {
        FeatureTable t;
        t.names = names;
        if (x.size() != y.size()) throw ContractError("x and y must have one row per sample");
        for (std::size_t i = 0; i < x.size(); ++i) t.push_row(x[i], y[i]);
        ModelSpec spec;
        spec.kind = model_kind_from_string(kind);
        spec.rf.n_trees = n_trees;
        spec.seed = seed;
        return train(spec, t);
      },
      py::arg("x"), py::arg("y"), py::arg("names"), py::arg("kind") = "random_forest",
      py::arg("n_trees") = 100, py::arg("seed") = 1);

  m.attr("__version__") = "0.1.0";
}
