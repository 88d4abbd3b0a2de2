// Python bindings for the core operations: scene generation, the model
// (train / predict / save / load), bins, the loss and metric suite, the
// tensor container, and the verification probes.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "depthnet/checkpoint.hpp"
#include "depthnet/probes.hpp"

namespace py = pybind11;
using namespace depthnet;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(size_t(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[size_t(i)] = int(a.shape(i));
  std::vector<float> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> a(shape);
  std::copy(t.data(), t.data() + t.size(), a.mutable_data());
  return a;
}

py::dict report_to_dict(const MetricReport& r) {
  py::dict d;
  d["abs_rel"] = r.abs_rel;
  d["rmse"] = r.rmse;
  d["log10"] = r.log10;
  d["sq_rel"] = r.sq_rel;
  d["delta1"] = r.delta1;
  d["delta2"] = r.delta2;
  d["delta3"] = r.delta3;
  d["n_valid"] = r.n_valid;
  return d;
}

class PyModel {
 public:
  PyModel(int channels, int bins, double d_min, double d_max, bool glkam, bool gbpm,
          std::vector<int> ppm_grids, uint64_t seed) {
    ModelConfig cfg;
    cfg.base_channels = channels;
    cfg.n_bins = bins;
    cfg.d_min = d_min;
    cfg.d_max = d_max;
    cfg.use_glkam = glkam;
    cfg.use_gbpm = gbpm;
    cfg.ppm_grids = std::move(ppm_grids);
    cfg.seed = seed;
    model_ = std::make_shared<DepthNet>(cfg);
  }

  explicit PyModel(std::shared_ptr<DepthNet> m) : model_(std::move(m)) {}

  py::array_t<float> predict(const py::array_t<float>& rgb, bool flip_average) const {
    Tensor x = tensor_from_array(rgb);
    Tensor d;
    {
      py::gil_scoped_release release;
      d = flip_average ? model_->infer_flip_averaged(x) : model_->predict(x);
    }
    return array_from_tensor(d);
  }

  std::vector<double> train_on_scenes(int scenes, int steps, int size, uint64_t seed,
                                      double lr_start, double lr_end, int batch,
                                      bool augment) {
    std::vector<double> losses;
    {
      py::gil_scoped_release release;
      std::vector<DepthSample> data;
      for (int i = 0; i < scenes; ++i)
        data.push_back(generate_scene(seed + uint64_t(i), size, size, model_->config().d_min,
                                      model_->config().d_max));
      TrainOptions opts;
      opts.steps = steps;
      opts.batch_size = batch;
      opts.lr_start = lr_start;
      opts.lr_end = lr_end;
      opts.seed = seed;
      opts.use_augment = augment;
      for (const auto& e : train(*model_, data, opts)) losses.push_back(e.loss);
    }
    return losses;
  }

  std::pair<py::array_t<float>, py::array_t<float>> bins_for(const py::array_t<float>& rgb) const {
    BinSpec spec = model_->bin_spec_for(tensor_from_array(rgb));
    std::vector<float> w(spec.widths.begin(), spec.widths.end());
    std::vector<float> c(spec.centers.begin(), spec.centers.end());
    const int n = int(w.size());
    return {array_from_tensor(Tensor({n}, std::move(w))),
            array_from_tensor(Tensor({n}, std::move(c)))};
  }

  void save(const std::string& path) const { save_checkpoint(path, *model_); }

  static PyModel load(const std::string& path) {
    return PyModel(std::make_shared<DepthNet>(load_checkpoint(path)));
  }

  py::dict state_dict() const {
    py::dict d;
    for (const auto& p : model_->params().all())
      d[py::str(p.name)] = array_from_tensor(p.tensor);
    return d;
  }

  py::dict config() const {
    const ModelConfig& c = model_->config();
    py::dict d;
    d["channels"] = c.base_channels;
    d["bins"] = c.n_bins;
    d["d_min"] = c.d_min;
    d["d_max"] = c.d_max;
    d["glkam"] = c.use_glkam;
    d["gbpm"] = c.use_gbpm;
    d["ppm_grids"] = c.ppm_grids;
    d["seed"] = c.seed;
    return d;
  }

 private:
  std::shared_ptr<DepthNet> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Depth estimation with gated large-kernel attention and global depth bins";

  py::class_<PyModel>(m, "Model")
      .def(py::init<int, int, double, double, bool, bool, std::vector<int>, uint64_t>(),
           py::arg("channels") = 16, py::arg("bins") = 32, py::arg("d_min") = 1e-3,
           py::arg("d_max") = 10.0, py::arg("glkam") = true, py::arg("gbpm") = true,
           py::arg("ppm_grids") = std::vector<int>{1, 2}, py::arg("seed") = 1)
      .def("predict", &PyModel::predict, py::arg("rgb"), py::arg("flip_average") = false,
           "Depth map [1,H,W] for an rgb image [3,H,W] in [0,1]")
      .def("train_on_scenes", &PyModel::train_on_scenes, py::arg("scenes") = 8,
           py::arg("steps") = 100, py::arg("size") = 64, py::arg("seed") = 1,
           py::arg("lr_start") = 4e-5, py::arg("lr_end") = 4e-6, py::arg("batch") = 8,
           py::arg("augment") = true, "Train on generated scenes; returns per-step losses")
      .def("bins", &PyModel::bins_for, py::arg("rgb"),
           "Predicted (widths, centers) for one image")
      .def("save", &PyModel::save, py::arg("path"))
      .def_static("load", &PyModel::load, py::arg("path"))
      .def("state_dict", &PyModel::state_dict)
      .def_property_readonly("config", &PyModel::config);

  m.def(
      "generate_scene",
      [](uint64_t seed, int height, int width, double d_min, double d_max) {
        DepthSample s = generate_scene(seed, height, width, d_min, d_max);
        return py::make_tuple(array_from_tensor(s.rgb), array_from_tensor(s.depth),
                              array_from_tensor(s.mask));
      },
      py::arg("seed"), py::arg("height") = 64, py::arg("width") = 64, py::arg("d_min") = 1e-3,
      py::arg("d_max") = 10.0, "Synthetic (rgb, depth, mask) sample, deterministic per seed");

  m.def(
      "compute_metrics",
      [](const py::array_t<float>& pred, const py::array_t<float>& gt,
         const py::object& mask, double d_min, double d_max) {
        Tensor p = tensor_from_array(pred);
        Tensor g = tensor_from_array(gt);
        Tensor mk = mask.is_none() ? build_validity_mask(g, d_min, d_max)
                                   : tensor_from_array(py::cast<py::array_t<float>>(mask));
        return report_to_dict(compute_metrics(p, g, mk));
      },
      py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none(), py::arg("d_min") = 1e-3,
      py::arg("d_max") = 10.0);

  m.def(
      "silog_loss",
      [](const py::array_t<float>& pred, const py::array_t<float>& gt,
         const py::object& mask, double lam, double alpha) {
        Tensor p = tensor_from_array(pred);
        Tensor g = tensor_from_array(gt);
        Tensor mk = mask.is_none() ? Tensor::ones(g.shape())
                                   : tensor_from_array(py::cast<py::array_t<float>>(mask));
        SilogParams params;
        params.lambda = lam;
        params.alpha = alpha;
        NoGradGuard ng;
        return double(silog_loss(p, g, mk, params).item());
      },
      py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none(), py::arg("lam") = 0.85,
      py::arg("alpha") = 10.0);

  m.def(
      "bin_centers",
      [](const py::array_t<float>& widths, double d_min, double d_max) {
        NoGradGuard ng;
        return array_from_tensor(bin_centers(tensor_from_array(widths), d_min, d_max));
      },
      py::arg("widths"), py::arg("d_min"), py::arg("d_max"),
      "Midpoint-of-cumulative-width bin centers inside (d_min, d_max)");

  m.def(
      "build_validity_mask",
      [](const py::array_t<float>& gt, double d_min, double d_max) {
        return array_from_tensor(build_validity_mask(tensor_from_array(gt), d_min, d_max));
      },
      py::arg("gt"), py::arg("d_min") = 1e-3, py::arg("d_max") = 10.0);

  m.def(
      "read_container",
      [](const std::string& path) {
        Container c = Container::read(path);
        py::dict out;
        for (const auto& e : c.entries()) {
          std::vector<py::ssize_t> shape(e.shape.begin(), e.shape.end());
          if (e.is_double()) {
            py::array_t<double> a(shape);
            std::copy(e.f64().begin(), e.f64().end(), a.mutable_data());
            out[py::str(e.name)] = a;
          } else {
            py::array_t<float> a(shape);
            std::copy(e.f32().begin(), e.f32().end(), a.mutable_data());
            out[py::str(e.name)] = a;
          }
        }
        return out;
      },
      py::arg("path"));

  m.def(
      "write_container",
      [](const std::string& path, const py::dict& entries) {
        Container c;
        for (auto item : entries) {
          const std::string name = py::cast<std::string>(item.first);
          py::array arr = py::cast<py::array>(item.second);
          if (py::isinstance<py::array_t<double>>(arr) &&
              arr.dtype().is(py::dtype::of<double>())) {
            auto a = py::cast<py::array_t<double, py::array::c_style | py::array::forcecast>>(
                item.second);
            Shape shape(size_t(a.ndim()));
            for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[size_t(i)] = int(a.shape(i));
            c.add(name, shape, std::vector<double>(a.data(), a.data() + a.size()));
          } else {
            auto a = py::cast<py::array_t<float, py::array::c_style | py::array::forcecast>>(
                item.second);
            Shape shape(size_t(a.ndim()));
            for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[size_t(i)] = int(a.shape(i));
            c.add(name, shape, std::vector<float>(a.data(), a.data() + a.size()));
          }
        }
        c.write(path);
      },
      py::arg("path"), py::arg("entries"));

  m.def("lka_receptive_extents", [] {
    auto e = measure_lka_extents();
    return std::vector<int>(e.begin(), e.end());
  });

  m.def(
      "gradcheck_worst_error",
      [](int coords) {
        py::gil_scoped_release release;
        double worst = 0.0;
        for (const auto& c : gradcheck_suite<double>(1e-5, coords))
          worst = std::max(worst, c.max_rel_err);
        return worst;
      },
      py::arg("coords") = 2,
      "Worst finite-difference relative error across the 64-bit op suite");
}
