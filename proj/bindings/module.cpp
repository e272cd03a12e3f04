#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eir/augment.hpp"
#include "eir/config.hpp"
#include "eir/error.hpp"
#include "eir/evaluate.hpp"
#include "eir/losses.hpp"
#include "eir/serialize.hpp"

namespace py = pybind11;
using namespace eir;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& array) {
  py::buffer_info info = array.request();
  Shape shape;
  for (py::ssize_t d : info.shape) shape.push_back(static_cast<std::size_t>(d));
  const double* ptr = static_cast<const double*>(info.ptr);
  return Tensor(shape, std::vector<double>(ptr, ptr + info.size));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (std::size_t d : t.shape()) shape.push_back(static_cast<py::ssize_t>(d));
  py::array_t<double> out(shape);
  std::copy(t.data(), t.data() + t.size(), static_cast<double*>(out.request().ptr));
  return out;
}

py::array_t<double> dataset_samples(const Dataset& ds) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(ds.count())};
  for (std::size_t d : ds.sample_shape) shape.push_back(static_cast<py::ssize_t>(d));
  py::array_t<double> out(shape);
  double* ptr = static_cast<double*>(out.request().ptr);
  for (std::size_t i = 0; i < ds.store.size(); ++i) ptr[i] = static_cast<double>(ds.store[i]);
  return out;
}

py::tuple dataset_pair(const Dataset& ds) {
  return py::make_tuple(dataset_samples(ds), py::array_t<int>(py::cast(ds.labels)));
}

EvalIndex make_index(const DoubleArray& feats, const std::vector<int>& labels) {
  EvalIndex index;
  index.features = to_tensor(feats);
  index.labels = labels;
  return index;
}

py::dict metrics_to_dict(const EpochMetrics& m) {
  py::dict d;
  d["epoch"] = m.epoch;
  d["l_iraug"] = m.l_iraug;
  d["l_intra"] = m.l_intra;
  d["l_inter"] = m.l_inter;
  d["total"] = m.total;
  d["lr"] = m.lr;
  if (m.knn_acc) d["knn_acc"] = *m.knn_acc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "EIR feature-embedding core (instance-relation contrastive learning)";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "EirError");

  py::class_<EmbeddingBank>(m, "EmbeddingBank")
      .def(py::init<std::size_t, std::size_t, double, std::uint64_t>(), py::arg("n"),
           py::arg("d"), py::arg("momentum") = 0.5, py::arg("seed") = 1)
      .def_property_readonly("n", &EmbeddingBank::size)
      .def_property_readonly("d", &EmbeddingBank::dim)
      .def_property_readonly("momentum", &EmbeddingBank::momentum)
      .def("rows", [](const EmbeddingBank& b) { return to_array(b.rows()); })
      .def("lookup",
           [](const EmbeddingBank& b, const std::vector<std::size_t>& idx) {
             return to_array(b.lookup(idx));
           })
      .def("update", [](EmbeddingBank& b, std::size_t i, const DoubleArray& v) {
        b.update(i, to_tensor(v));
      });

  m.def("l2_normalize", [](const DoubleArray& v) {
    Tape tape;
    return to_array(l2_normalize(tape, to_tensor(v)));
  });
  m.def(
      "softmax",
      [](const DoubleArray& logits, double tau) {
        Tape tape;
        return to_array(softmax_with_temperature(tape, to_tensor(logits), tau));
      },
      py::arg("logits"), py::arg("tau") = 1.0);

  m.def(
      "two_views",
      [](const DoubleArray& x, std::uint64_t seed, double lo, double hi) {
        AugmentPolicy policy;
        policy.flip = policy.grayscale = false;
        Rng rng(seed);
        auto [v1, v2] = two_views(to_tensor(x), policy, rng, lo, hi);
        return py::make_tuple(to_array(v1), to_array(v2));
      },
      py::arg("x"), py::arg("seed") = 1, py::arg("lo") = 0.0, py::arg("hi") = 1.0);
  m.def("mixup", [](const DoubleArray& a, const DoubleArray& b, double r) {
    return to_array(mixup(to_tensor(a), to_tensor(b), r));
  });
  m.def(
      "cutmix",
      [](const DoubleArray& a, const DoubleArray& b, double r, std::uint64_t seed) {
        Rng rng(seed);
        CutmixResult res = cutmix(to_tensor(a), to_tensor(b), r, rng);
        return py::make_tuple(to_array(res.sample), res.r_effective);
      },
      py::arg("a"), py::arg("b"), py::arg("r"), py::arg("seed") = 1);

  m.def("instance_probability",
        [](const DoubleArray& v, const EmbeddingBank& bank, std::size_t i, double tau) {
          return instance_probability(to_tensor(v), bank, i, tau);
        });
  m.def(
      "iraug_loss",
      [](const DoubleArray& v, const DoubleArray& vhat, const std::vector<std::size_t>& indices,
         const EmbeddingBank& bank, double tau, bool avg_views) {
        Tape tape;
        return iraug_loss(tape, to_tensor(v), to_tensor(vhat), indices, bank, tau, avg_views)
            .item();
      },
      py::arg("v"), py::arg("vhat"), py::arg("indices"), py::arg("bank"), py::arg("tau") = 0.1,
      py::arg("avg_views") = false);
  m.def(
      "intra_loss",
      [](const DoubleArray& v, const DoubleArray& vhat, const EmbeddingBank& bank,
         double intra_tau) {
        Tape tape;
        return intra_loss(tape, to_tensor(v), to_tensor(vhat), bank, intra_tau).item();
      },
      py::arg("v"), py::arg("vhat"), py::arg("bank"), py::arg("intra_tau") = 0.1);
  m.def(
      "inter_loss",
      [](const DoubleArray& interp, const DoubleArray& target, double tau, bool literal) {
        Tape tape;
        return inter_loss(tape, to_tensor(interp), to_tensor(target), tau, literal).item();
      },
      py::arg("interp_feats"), py::arg("target_feats"), py::arg("tau") = 0.1,
      py::arg("literal") = false);
  m.def(
      "combine_losses",
      [](double l_iraug, double l_intra, double l_inter, double lambda1, double lambda2) {
        const LossReport r = combine_losses(l_iraug, l_intra, l_inter, lambda1, lambda2);
        py::dict d;
        d["l_iraug"] = r.l_iraug;
        d["l_intra"] = r.l_intra;
        d["l_inter"] = r.l_inter;
        d["total"] = r.total;
        return d;
      },
      py::arg("l_iraug"), py::arg("l_intra"), py::arg("l_inter"), py::arg("lambda1") = 15.0,
      py::arg("lambda2") = 2.0);

  m.def(
      "generate_synthetic",
      [](const std::string& spec_json) {
        const RunConfig run = run_config_from_text("{\"dataset\": " + spec_json + "}");
        auto [train, test] = load_datasets(run.dataset);
        return py::make_tuple(dataset_pair(train), dataset_pair(test));
      },
      py::arg("spec_json") = "{\"type\": \"synthetic\"}");
  m.def("parse_cifar10", [](const std::string& path) {
    return dataset_pair(parse_cifar10(path));
  });

  m.def(
      "train",
      [](const std::string& config_json, const std::string& checkpoint_path) {
        const RunConfig run = run_config_from_text(config_json);
        auto [train_ds, test_ds] = load_datasets(run.dataset);
        const UnlabeledView view(train_ds);
        TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
        const std::vector<EpochMetrics> metrics = train(view, run.train, state);
        if (!checkpoint_path.empty())
          save_checkpoint(checkpoint_path, canonical_config_json(run), run.train, state);
        py::list rows;
        for (const EpochMetrics& m_ : metrics) rows.append(metrics_to_dict(m_));
        return rows;
      },
      py::arg("config_json"), py::arg("checkpoint_path") = "");

  m.def("encode", [](const std::string& checkpoint_path, const DoubleArray& samples) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Tape tape;
    EncoderParams frozen;
    for (const Tensor& t : ckpt.state.params.weights) frozen.weights.push_back(t.detach());
    for (const Tensor& t : ckpt.state.params.biases) frozen.biases.push_back(t.detach());
    return to_array(encoder_forward(tape, ckpt.spec, frozen, to_tensor(samples)));
  });

  m.def(
      "knn_accuracy",
      [](const DoubleArray& test_feats, const std::vector<int>& test_labels,
         const DoubleArray& train_feats, const std::vector<int>& train_labels, std::size_t k,
         double tau, bool weighted) {
        return knn_accuracy(make_index(test_feats, test_labels),
                            make_index(train_feats, train_labels), k, tau, weighted);
      },
      py::arg("test_feats"), py::arg("test_labels"), py::arg("train_feats"),
      py::arg("train_labels"), py::arg("k") = 5, py::arg("tau") = 0.1,
      py::arg("weighted") = true);
  m.def(
      "recall_at_k",
      [](const DoubleArray& feats, const std::vector<int>& labels,
         const std::vector<std::size_t>& ks) {
        return recall_at_k(make_index(feats, labels), ks);
      },
      py::arg("feats"), py::arg("labels"), py::arg("ks"));
  m.def(
      "linear_probe",
      [](const DoubleArray& train_feats, const std::vector<int>& train_labels,
         const DoubleArray& test_feats, const std::vector<int>& test_labels, std::size_t epochs,
         double lr, std::size_t batch_size, std::uint64_t seed) {
        ProbeConfig config;
        config.epochs = epochs;
        config.lr = lr;
        config.batch_size = batch_size;
        config.seed = seed;
        return linear_probe(to_tensor(train_feats), train_labels, to_tensor(test_feats),
                            test_labels, config);
      },
      py::arg("train_feats"), py::arg("train_labels"), py::arg("test_feats"),
      py::arg("test_labels"), py::arg("epochs") = 100, py::arg("lr") = 0.5,
      py::arg("batch_size") = 64, py::arg("seed") = 0);
  m.def("project_2d",
        [](const DoubleArray& feats) { return to_array(project_2d(to_tensor(feats))); });

  m.def(
      "mean_intra_kl",
      [](const std::string& checkpoint_path, std::size_t max_samples) {
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        const RunConfig run = run_config_from_text(ckpt.config_json);
        auto [train_ds, test_ds] = load_datasets(run.dataset);
        const UnlabeledView view(train_ds);
        return intra_alignment_diagnostic(ckpt.spec, ckpt.state.params, ckpt.state.bank, view,
                                          run.train.augment, run.train.effective_intra_tau(),
                                          max_samples, run.train.seed);
      },
      py::arg("checkpoint_path"), py::arg("max_samples") = 256);

  m.def(
      "lr_at_epoch",
      [](const std::string& config_json, std::size_t epoch) {
        const RunConfig run = run_config_from_text(config_json);
        return lr_at_epoch(run.train, epoch);
      },
      py::arg("config_json"), py::arg("epoch"));
}
