#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

#include "tensorshield/attacks.hpp"
#include "tensorshield/data_io.hpp"
#include "tensorshield/decomp.hpp"
#include "tensorshield/eval.hpp"
#include "tensorshield/nn.hpp"
#include "tensorshield/pipeline.hpp"
#include "tensorshield/rng.hpp"

namespace py = pybind11;
using namespace ts;

namespace {

Tensor tensor_from_array(const py::array& arr) {
    auto a = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(arr);
    if (!a) throw std::invalid_argument("expected an array convertible to float64");
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    Tensor t(shape);
    std::memcpy(t.data.data(), a.data(), t.numel() * sizeof(double));
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> arr(shape);
    std::memcpy(arr.mutable_data(), t.data.data(), t.numel() * sizeof(double));
    return arr;
}

Matrix matrix_from_array(const py::array& arr) {
    Tensor t = tensor_from_array(arr);
    if (t.order() != 2) throw std::invalid_argument("expected a 2-D array");
    Matrix m(t.shape[0], t.shape[1]);
    m.data = std::move(t.data);
    return m;
}

py::array_t<double> array_from_matrix(const Matrix& m) {
    py::array_t<double> arr({static_cast<py::ssize_t>(m.rows), static_cast<py::ssize_t>(m.cols)});
    std::memcpy(arr.mutable_data(), m.data.data(), m.data.size() * sizeof(double));
    return arr;
}

DecompOptions decomp_options(std::size_t max_iterations, double tolerance,
                             std::optional<std::uint64_t> seed) {
    DecompOptions o;
    o.max_iterations = max_iterations;
    o.tolerance = tolerance;
    o.seed = seed;
    return o;
}

DefenseConfig defense_config(const std::string& method, const std::vector<std::size_t>& dims,
                             std::size_t max_iterations, double tolerance,
                             std::optional<std::uint64_t> seed, const Network* autoencoder) {
    DefenseConfig cfg;
    cfg.method = defense_method_from_name(method);
    cfg.dims = dims;
    cfg.decomp_opts = decomp_options(max_iterations, tolerance, seed);
    cfg.autoencoder = autoencoder;
    if (defense_uses_autoencoder(cfg.method) && autoencoder == nullptr)
        throw std::invalid_argument("defense '" + method + "' needs an autoencoder");
    return cfg;
}

py::dict adv_result_dict(const AdvResult& res) {
    py::dict d;
    d["image"] = array_from_tensor(res.image);
    d["success"] = res.success;
    d["linf"] = res.linf;
    d["l2"] = res.l2;
    d["queries"] = res.queries;
    d["epsilon_used"] = res.epsilon_used;
    if (!res.failure_reason.empty()) d["failure_reason"] = res.failure_reason;
    return d;
}

}  // namespace

PYBIND11_MODULE(_tensorshield, m) {
    m.doc() = "tensor-decomposition adversarial defense core";

    py::class_<Network>(m, "Network")
        .def_property_readonly("purpose",
                               [](const Network& n) {
                                   return n.purpose == NetworkPurpose::classifier ? "classifier"
                                                                                  : "autoencoder";
                               })
        .def_property_readonly("param_count", [](const Network& n) { return n.params.size(); })
        .def("save",
             [](const Network& n, const std::string& path, std::uint64_t seed, std::size_t epochs,
                double final_loss) {
                 CheckpointMeta meta;
                 meta.seed = seed;
                 meta.epochs = epochs;
                 meta.final_loss = final_loss;
                 save_network(n, path, meta);
             },
             py::arg("path"), py::arg("seed") = 0, py::arg("epochs") = 0,
             py::arg("final_loss") = 0.0);

    m.def("load_network", [](const std::string& path) { return load_network(path); },
          py::arg("path"));

    py::class_<LabeledDataset>(m, "Dataset")
        .def_property_readonly("labels", [](const LabeledDataset& d) { return d.labels; })
        .def_property_readonly("ids", [](const LabeledDataset& d) { return d.ids; })
        .def_property_readonly("class_count", [](const LabeledDataset& d) { return d.class_count; })
        .def("__len__", [](const LabeledDataset& d) { return d.size(); })
        .def("image", [](const LabeledDataset& d, std::size_t i) {
            if (i >= d.size()) throw py::index_error();
            return array_from_tensor(d.images[i]);
        });

    m.def("synth_dataset",
          [](std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t height,
             std::size_t width, std::size_t channels) {
              SynthOptions opts;
              opts.height = height;
              opts.width = width;
              opts.channels = channels;
              return synth_dataset(seed, n, classes, opts);
          },
          py::arg("seed"), py::arg("n"), py::arg("classes"), py::arg("height") = 28,
          py::arg("width") = 28, py::arg("channels") = 1);

    m.def("load_idx", &load_idx, py::arg("image_path"), py::arg("label_path"));

    m.def("train_classifier",
          [](const LabeledDataset& train_set, std::size_t epochs, double lr, std::size_t batch,
             std::uint64_t seed) {
              return train_classifier(train_set, epochs, lr, batch, seed);
          },
          py::arg("dataset"), py::arg("epochs") = 3, py::arg("lr") = 1e-3, py::arg("batch") = 32,
          py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());

    m.def("train_autoencoder",
          [](const LabeledDataset& clean_set, double noise_sigma, std::size_t epochs,
             std::uint64_t seed) {
              return train_denoising_autoencoder(clean_set.images, noise_sigma, epochs, seed);
          },
          py::arg("dataset"), py::arg("noise_sigma") = 0.1, py::arg("epochs") = 10,
          py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());

    m.def("forward",
          [](const Network& net, const py::array& x) {
              return array_from_tensor(forward(net, tensor_from_array(x)));
          },
          py::arg("net"), py::arg("x"));

    m.def("predict",
          [](const Network& net, const py::array& x) { return predict(net, tensor_from_array(x)); },
          py::arg("net"), py::arg("x"));

    m.def("attack",
          [](const Network& net, const py::array& x, std::size_t label, const std::string& kind,
             std::optional<double> epsilon, std::optional<std::size_t> iterations,
             std::optional<double> step_size, bool strict_sign) {
              AttackKind k = attack_kind_from_name(kind);
              AttackConfig cfg = default_attack_config(k);
              if (epsilon) cfg.epsilon = *epsilon;
              if (iterations) cfg.iterations = *iterations;
              if (step_size) cfg.step_size = *step_size;
              cfg.strict_sign = strict_sign;
              return adv_result_dict(run_attack(k, net, tensor_from_array(x), label, cfg));
          },
          py::arg("net"), py::arg("x"), py::arg("label"), py::arg("kind"),
          py::arg("epsilon") = std::nullopt, py::arg("iterations") = std::nullopt,
          py::arg("step_size") = std::nullopt, py::arg("strict_sign") = false);

    m.def("cp",
          [](const py::array& x, std::size_t rank, std::size_t max_iterations, double tolerance,
             std::optional<std::uint64_t> seed) {
              CPFactors f =
                  cp_decompose(tensor_from_array(x), rank, decomp_options(max_iterations,
                                                                          tolerance, seed));
              py::list factors;
              for (const Matrix& fm : f.factors) factors.append(array_from_matrix(fm));
              py::dict d;
              d["factors"] = factors;
              d["error_history"] = f.error_history;
              d["iterations"] = f.iterations;
              d["final_relative_error"] = f.final_relative_error;
              return d;
          },
          py::arg("x"), py::arg("rank"), py::arg("max_iterations") = 100,
          py::arg("tolerance") = 1e-6, py::arg("seed") = std::nullopt);

    m.def("cp_reconstruct",
          [](const std::vector<py::array>& factors) {
              CPFactors f;
              for (const py::array& a : factors) f.factors.push_back(matrix_from_array(a));
              if (f.factors.empty()) throw std::invalid_argument("no factors");
              f.rank = f.factors[0].cols;
              return array_from_tensor(cp_reconstruct(f));
          },
          py::arg("factors"));

    m.def("tucker",
          [](const py::array& x, const std::vector<std::size_t>& core_dims,
             std::size_t max_iterations, double tolerance, std::optional<std::uint64_t> seed) {
              TuckerFactors f = tucker_decompose(
                  tensor_from_array(x), core_dims, decomp_options(max_iterations, tolerance, seed));
              py::list factors;
              for (const Matrix& fm : f.factors) factors.append(array_from_matrix(fm));
              py::dict d;
              d["core"] = array_from_tensor(f.core);
              d["factors"] = factors;
              d["error_history"] = f.error_history;
              d["iterations"] = f.iterations;
              d["final_relative_error"] = f.final_relative_error;
              return d;
          },
          py::arg("x"), py::arg("core_dims"), py::arg("max_iterations") = 100,
          py::arg("tolerance") = 1e-6, py::arg("seed") = std::nullopt);

    m.def("tucker_reconstruct",
          [](const py::array& core, const std::vector<py::array>& factors) {
              TuckerFactors f;
              f.core = tensor_from_array(core);
              for (const py::array& a : factors) f.factors.push_back(matrix_from_array(a));
              return array_from_tensor(tucker_reconstruct(f));
          },
          py::arg("core"), py::arg("factors"));

    m.def("purify",
          [](const py::array& x, const std::string& method, const std::vector<std::size_t>& dims,
             std::size_t max_iterations, double tolerance, std::optional<std::uint64_t> seed,
             const Network* autoencoder) {
              DefenseConfig cfg = defense_config(method, dims, max_iterations, tolerance, seed,
                                                 autoencoder);
              return array_from_tensor(purify(tensor_from_array(x), cfg));
          },
          py::arg("x"), py::arg("method"), py::arg("dims"), py::arg("max_iterations") = 100,
          py::arg("tolerance") = 1e-6, py::arg("seed") = std::nullopt,
          py::arg("autoencoder") = nullptr);

    m.def("accuracy",
          [](const Network& net, const LabeledDataset& ds, const std::string& method,
             const std::vector<std::size_t>& dims, std::optional<std::uint64_t> seed,
             const Network* autoencoder, std::size_t workers) {
              DefenseConfig cfg = defense_config(method, dims, 100, 1e-6, std::nullopt,
                                                 autoencoder);
              RunOptions opts;
              opts.run_seed = seed;
              opts.workers = workers;
              return top1_accuracy(net, ds, cfg, opts);
          },
          py::arg("net"), py::arg("dataset"), py::arg("method") = "none",
          py::arg("dims") = std::vector<std::size_t>{}, py::arg("seed") = std::nullopt,
          py::arg("autoencoder") = nullptr, py::arg("workers") = 1,
          py::call_guard<py::gil_scoped_release>());

    m.def("defense_ratio", &defense_ratio, py::arg("adversarial_accuracy"),
          py::arg("clean_accuracy"));
}
