#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <memory>
#include <optional>
#include <string>

#include "colearn/colearn.hpp"
#include "colearn/config.hpp"
#include "colearn/data.hpp"
#include "colearn/errors.hpp"
#include "colearn/eval.hpp"
#include "colearn/featurebank.hpp"
#include "colearn/model.hpp"
#include "colearn/pseudolabel.hpp"

namespace py = pybind11;
using namespace colearn;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I64Array = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const F64Array& a, const char* name) {
    if (a.ndim() != 2) throw InvalidArgument(std::string(name) + " must be a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

F64Array to_array(const Matrix& m) {
    F64Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

Labels to_labels(const I64Array& a, const char* name) {
    if (a.ndim() != 1) throw InvalidArgument(std::string(name) + " must be a 1-D array");
    Labels out(static_cast<std::size_t>(a.shape(0)));
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (a.data()[i] < 0) throw InvalidArgument(std::string(name) + " contains a negative label");
        out[i] = static_cast<std::size_t>(a.data()[i]);
    }
    return out;
}

I64Array to_array(const Labels& y) {
    I64Array out(static_cast<py::ssize_t>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) out.mutable_data()[i] = static_cast<std::int64_t>(y[i]);
    return out;
}

std::size_t class_count(const Labels& y) { return y.empty() ? 0 : *std::max_element(y.begin(), y.end()) + 1; }

py::dict record_to_dict(const EpisodeRecord& r) {
    auto opt = [](const std::optional<double>& v) { return v ? py::object(py::float_(*v)) : py::object(py::none()); };
    py::dict d;
    d["episode"] = r.episode;
    d["learning_rate"] = r.learning_rate;
    d["pseudolabel_count"] = r.pseudolabel_count;
    d["pseudolabel_proportion"] = r.pseudolabel_proportion;
    d["steps"] = r.steps;
    d["mean_loss"] = opt(r.mean_loss);
    d["pseudolabel_accuracy"] = opt(r.pseudolabel_accuracy);
    d["adaptation_accuracy"] = opt(r.adaptation_accuracy);
    d["pretrained_accuracy"] = opt(r.pretrained_accuracy);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Co-learning for source-free domain adaptation (C++ core)";
    m.attr("__version__") = "0.1.0";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    auto invalid = py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", invalid.ptr());
    py::register_exception<DegenerateInput>(m, "DegenerateInput", base.ptr());
    py::register_exception<DegenerateClass>(m, "DegenerateClass", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

    py::class_<AdaptationModel>(m, "Model")
        .def_property_readonly("input_dim", &AdaptationModel::input_dim)
        .def_property_readonly("feature_dim", &AdaptationModel::feature_dim)
        .def_property_readonly("num_classes", &AdaptationModel::num_classes)
        .def_readonly("classifier_frozen", &AdaptationModel::classifier_frozen)
        .def("features", [](const AdaptationModel& self, const F64Array& x) {
            return to_array(forward_batch(self, to_matrix(x, "x")).features);
        })
        .def("logits", [](const AdaptationModel& self, const F64Array& x) {
            return to_array(forward_batch(self, to_matrix(x, "x")).logits);
        })
        .def("predict_proba", [](const AdaptationModel& self, const F64Array& x) {
            return to_array(forward_batch(self, to_matrix(x, "x")).probs);
        })
        .def("predict", [](const AdaptationModel& self, const F64Array& x) {
            return to_array(argmax_rows(forward_batch(self, to_matrix(x, "x")).probs));
        })
        .def("to_bytes", [](const AdaptationModel& self) { return py::bytes(encode_model(self)); })
        .def_static("from_bytes", [](const py::bytes& b) { return decode_model(std::string(b)); })
        .def("save", [](const AdaptationModel& self, const std::filesystem::path& p) { save_model(self, p); })
        .def_static("load", &load_model)
        .def("__eq__", [](const AdaptationModel& a, const AdaptationModel& b) { return a == b; });

    m.def(
        "generate",
        [](const std::string& config) {
            const RunConfig c = parse_run_config(config);
            const SyntheticProblem p = generate(c.synthetic);
            py::dict d;
            d["source_inputs"] = to_array(p.source.inputs);
            d["source_labels"] = to_array(*p.source.labels);
            d["target_inputs"] = to_array(p.target.inputs);
            d["target_truth"] = to_array(p.target_truth);
            d["bank"] = to_array(p.bank.features());
            return d;
        },
        py::arg("config") = "{}");

    m.def(
        "train_source",
        [](const F64Array& inputs, const I64Array& labels, std::optional<std::size_t> num_classes,
           const std::string& config) {
            const RunConfig c = parse_run_config(config);
            Dataset ds;
            ds.inputs = to_matrix(inputs, "inputs");
            ds.labels = to_labels(labels, "labels");
            const std::size_t classes = num_classes.value_or(class_count(*ds.labels));
            py::gil_scoped_release release;
            return train_source(ds, c.model.extractor_dims(ds.inputs.cols()), classes, c.source_train);
        },
        py::arg("inputs"), py::arg("labels"), py::arg("num_classes") = py::none(), py::arg("config") = "{}");

    m.def(
        "colearn",
        [](const AdaptationModel& model, const F64Array& bank, const F64Array& target_inputs,
           std::optional<I64Array> truth, const std::string& config) {
            const RunConfig c = parse_run_config(config);
            std::optional<Labels> y;
            if (truth) y = to_labels(*truth, "truth");
            ColearnResult r;
            {
                auto shared = std::make_shared<const FeatureBank>(to_matrix(bank, "bank"));
                ColearnSession s(model, shared, to_matrix(target_inputs, "target_inputs"), c.colearn, y);
                py::gil_scoped_release release;
                r = s.run();
            }
            py::list records;
            for (const EpisodeRecord& e : r.records) records.append(record_to_dict(e));
            return py::make_tuple(r.model, records);
        },
        py::arg("model"), py::arg("bank"), py::arg("target_inputs"), py::arg("truth") = py::none(),
        py::arg("config") = "{}");

    m.def(
        "compute_centroids",
        [](const F64Array& features, const F64Array& probs, std::optional<std::vector<bool>> subset,
           std::size_t iterations, double temperature) {
            CentroidOptions o;
            o.subset = std::move(subset);
            o.iterations = iterations;
            o.temperature = temperature;
            return to_array(compute_centroids(FeatureBank(to_matrix(features, "features")), to_matrix(probs, "probs"), o)
                                .centroids);
        },
        py::arg("features"), py::arg("probs"), py::arg("subset") = py::none(), py::arg("iterations") = 1,
        py::arg("temperature") = 0.01);

    m.def(
        "ncc_predict",
        [](const F64Array& centroids, const F64Array& features, double temperature) {
            const CentroidClassifier clf{to_matrix(centroids, "centroids"), temperature};
            const NccPrediction p = ncc_predict(clf, FeatureBank(to_matrix(features, "features")));
            return py::make_tuple(to_array(p.logits), to_array(p.probs));
        },
        py::arg("centroids"), py::arg("features"), py::arg("temperature") = 0.01);

    m.def(
        "fuse",
        [](std::size_t adapt_class, double adapt_conf, std::size_t pretrained_class, double pretrained_conf,
           const std::string& scheme, double gamma) {
            return fuse({parse_scheme(scheme), gamma}, {adapt_class, adapt_conf}, {pretrained_class, pretrained_conf});
        },
        py::arg("adapt_class"), py::arg("adapt_conf"), py::arg("pretrained_class"), py::arg("pretrained_conf"),
        py::arg("scheme") = "match-or-conf", py::arg("gamma") = 0.5);

    m.def(
        "pseudolabels",
        [](const F64Array& adapt_probs, const F64Array& pretrained_probs, const std::string& scheme, double gamma) {
            const PseudolabelSet s = build_pseudolabel_set({parse_scheme(scheme), gamma},
                                                           to_matrix(adapt_probs, "adapt_probs"),
                                                           to_matrix(pretrained_probs, "pretrained_probs"));
            py::list out;
            for (const Pseudolabel& p : s.assigned)
                out.append(py::make_tuple(p.sample, p.label, std::string(to_string(p.provenance))));
            return out;
        },
        py::arg("adapt_probs"), py::arg("pretrained_probs"), py::arg("scheme") = "match-or-conf",
        py::arg("gamma") = 0.5);

    m.def(
        "oracle_accuracy",
        [](const F64Array& features, const I64Array& truth, std::optional<std::size_t> num_classes) {
            const Labels y = to_labels(truth, "truth");
            return oracle_ncc_accuracy(to_matrix(features, "features"), y, num_classes.value_or(class_count(y)));
        },
        py::arg("features"), py::arg("truth"), py::arg("num_classes") = py::none());

    m.def(
        "compatibility_ratio",
        [](const AdaptationModel& model, const F64Array& bank, const F64Array& target_inputs, const I64Array& truth) {
            return target_compatibility_ratio(model, FeatureBank(to_matrix(bank, "bank")),
                                              to_matrix(target_inputs, "target_inputs"), to_labels(truth, "truth"));
        },
        py::arg("model"), py::arg("bank"), py::arg("target_inputs"), py::arg("truth"));

    m.def(
        "accuracy",
        [](const I64Array& preds, const I64Array& truth) {
            return accuracy(to_labels(preds, "preds"), to_labels(truth, "truth"));
        },
        py::arg("preds"), py::arg("truth"));

    m.def(
        "confusion",
        [](const I64Array& preds, const I64Array& truth, std::size_t num_classes) {
            const ConfusionMatrix cm = confusion(to_labels(preds, "preds"), to_labels(truth, "truth"), num_classes);
            I64Array out({num_classes, num_classes});
            for (std::size_t k = 0; k < cm.counts.size(); ++k)
                out.mutable_data()[k] = static_cast<std::int64_t>(cm.counts[k]);
            return out;
        },
        py::arg("preds"), py::arg("truth"), py::arg("num_classes"));

    m.def(
        "save_bank",
        [](const F64Array& features, const std::filesystem::path& path) {
            save_bank(FeatureBank(to_matrix(features, "features")), path);
        },
        py::arg("features"), py::arg("path"));
    m.def(
        "load_bank", [](const std::filesystem::path& path) { return to_array(load_bank(path).features()); },
        py::arg("path"));
}
