#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "esdnet/commands.hpp"
#include "esdnet/config.hpp"
#include "esdnet/image_io.hpp"
#include "esdnet/metrics.hpp"
#include "esdnet/moire.hpp"
#include "esdnet/trainer.hpp"
#include "esdnet/weights_io.hpp"

namespace py = pybind11;
using namespace esdnet;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  std::vector<int> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[std::size_t(i)] = int(arr.shape(i));
  Tensor t(shape);
  std::copy(arr.data(), arr.data() + arr.size(), t.data.begin());
  return t;
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> arr(shape);
  std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
  return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "demoireing engine core";

  py::register_exception<ContractError>(m, "ContractError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<NumericError>(m, "NumericError");

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("variant", &ModelConfig::variant)
      .def_readwrite("width_div", &ModelConfig::width_div);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr_max", &TrainConfig::lr_max)
      .def_readwrite("lr_min", &TrainConfig::lr_min)
      .def_readwrite("cycle_epochs", &TrainConfig::cycle_epochs)
      .def_readwrite("total_epochs", &TrainConfig::total_epochs)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("patch", &TrainConfig::patch)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<Model>(m, "Model")
      .def_static(
          "build",
          [](const ModelConfig& cfg, std::uint64_t seed) {
            return Model::build(cfg, seed);
          },
          py::arg("config"), py::arg("seed") = 1)
      .def_property_readonly("names", [](const Model& m_) { return m_.names; })
      .def("param_count", &Model::param_count)
      .def("infer",
           [](const Model& m_, const py::array_t<float, py::array::c_style |
                                                            py::array::forcecast>& x) {
             return array_from_tensor(m_.infer(tensor_from_array(x)));
           })
      .def("tiled_infer",
           [](const Model& m_,
              const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
              int tile, int overlap) {
             return array_from_tensor(m_.tiled_infer(tensor_from_array(x), tile, overlap));
           },
           py::arg("x"), py::arg("tile") = 256, py::arg("overlap") = 32)
      .def("save",
           [](const Model& m_, const std::string& path) {
             save_weights(path, m_.names, m_.values);
           })
      .def("load", [](Model& m_, const std::string& path) {
        load_into(path, m_.names, m_.values);
      });

  m.def(
      "psnr",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& b,
         double peak) { return psnr(tensor_from_array(a), tensor_from_array(b), peak); },
      py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
  m.def("ssim",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
          return ssim(tensor_from_array(a), tensor_from_array(b));
        });

  m.def(
      "gen_clean",
      [](const std::string& kind, int h, int w, std::uint64_t seed) {
        return array_from_tensor(gen_clean(kind, h, w, seed));
      },
      py::arg("kind"), py::arg("h"), py::arg("w"), py::arg("seed") = 1);
  m.def(
      "gen_pair",
      [](int h, int w, std::uint64_t seed, const std::string& kind) {
        const std::vector<MoirePair> pairs = gen_dataset(1, h, w, seed, kind);
        return py::make_tuple(array_from_tensor(pairs[0].clean),
                              array_from_tensor(pairs[0].moire));
      },
      py::arg("h"), py::arg("w"), py::arg("seed") = 1, py::arg("kind") = "mixed");

  m.def(
      "cosine_lr",
      [](double epoch_progress, double lr_max, double lr_min, int cycle_epochs) {
        TrainConfig cfg;
        cfg.lr_max = lr_max;
        cfg.lr_min = lr_min;
        cfg.cycle_epochs = cycle_epochs;
        return cosine_lr(epoch_progress, cfg);
      },
      py::arg("epoch_progress"), py::arg("lr_max") = 2e-4,
      py::arg("lr_min") = 1e-6, py::arg("cycle_epochs") = 50);

  m.def(
      "train_on_pairs",
      [](Model& model, const std::vector<py::array_t<float, py::array::c_style |
                                                                py::array::forcecast>>& cleans,
         const std::vector<py::array_t<float, py::array::c_style |
                                                  py::array::forcecast>>& moires,
         const TrainConfig& cfg, double lam) {
        if (cleans.size() != moires.size())
          throw ContractError("clean/moire list length mismatch");
        std::vector<ImagePair> pairs;
        pairs.reserve(cleans.size());
        for (std::size_t i = 0; i < cleans.size(); ++i)
          pairs.push_back({tensor_from_array(cleans[i]), tensor_from_array(moires[i])});
        LossConfig loss_cfg;
        loss_cfg.lambda = lam;
        FeatureExtractor fx;
        const FeatureExtractor* fx_ptr = nullptr;
        if (lam != 0.0) {
          fx = FeatureExtractor::build(loss_cfg.perceptual_block, loss_cfg.extractor_seed);
          fx_ptr = &fx;
        }
        const TrainResult result = train(model, pairs, cfg, loss_cfg, fx_ptr);
        std::vector<double> losses;
        losses.reserve(result.log.size());
        for (const StepLog& row : result.log) losses.push_back(row.loss);
        return losses;
      },
      py::arg("model"), py::arg("cleans"), py::arg("moires"), py::arg("config"),
      py::arg("lam") = 0.0);

  m.def("load_png", [](const std::string& path) { return array_from_tensor(load_png(path)); });
  m.def("save_png", [](const std::string& path,
                       const py::array_t<float, py::array::c_style |
                                                    py::array::forcecast>& img) {
    save_png(path, tensor_from_array(img));
  });

  m.def("run_cli", &run_cli, py::arg("args"),
        "run a CLI command in-process, returns the exit code");
}
