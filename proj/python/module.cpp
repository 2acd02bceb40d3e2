#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <memory>
#include <sstream>

#include "gavs/checkpoint.hpp"
#include "gavs/errors.hpp"
#include "gavs/evaluation.hpp"
#include "gavs/gradcheck_suite.hpp"

namespace py = pybind11;
using namespace gavs;

namespace {

// Configs cross the boundary as plain dicts via the json module.
RunConfig config_from(const py::object& obj) {
    if (obj.is_none()) return RunConfig{};
    const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    RunConfig cfg = run_config_from_json(nlohmann::json::parse(text));
    cfg.validate();
    return cfg;
}

py::object to_py(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

template <typename T>
py::array_t<T> array_of(const std::vector<T>& values, std::vector<py::ssize_t> shape) {
    py::array_t<T> out(shape);
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

py::array_t<double> array_of(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor tensor_of(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor::from(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<BinaryMask> masks_of(const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& list) {
    std::vector<BinaryMask> out;
    for (const auto& a : list) {
        if (a.ndim() != 2) throw ShapeError("masks must be 2-D");
        BinaryMask m{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), {}};
        for (py::ssize_t i = 0; i < a.size(); ++i) m.pixels.push_back(a.data()[i] != 0);
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<std::size_t> resolve(const Dataset& ds, const std::optional<std::vector<std::string>>& ids) {
    if (!ids) {
        std::vector<std::size_t> all(ds.scenes.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }
    return indices_of(ds, *ids);
}

py::list records_of(const std::vector<LossRecord>& records) {
    py::list out;
    for (const LossRecord& r : records) {
        out.append(py::dict(py::arg("phase") = r.phase, py::arg("step") = r.step, py::arg("loss") = r.total,
                            py::arg("seg") = r.seg, py::arg("sem") = r.sem));
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_gavs, m) {
    m.doc() = "Audio-visual segmentation with semantic audio prompts";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("default_config", [] { return to_py(to_json(RunConfig{})); }, "Full default run configuration.");

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", [](const Dataset& d) { return d.scenes.size(); })
        .def_property_readonly("ids", [](const Dataset& d) {
            std::vector<std::string> ids;
            for (const auto& s : d.scenes) ids.push_back(s.id);
            return ids;
        })
        .def_property_readonly("mask_size", [](const Dataset& d) { return d.mask_size; })
        .def_property_readonly("audio_dim", [](const Dataset& d) { return d.config.audio_dim(); })
        .def("frame", [](const Dataset& d, std::size_t i) {
            const SceneSample& s = d.scenes.at(i);
            const auto n = static_cast<py::ssize_t>(s.image_size);
            return array_of(s.frame, {n, n, 3});
        }, "RGB frame as uint8 [S, S, 3].")
        .def("audio", [](const Dataset& d, std::size_t i) {
            const auto& a = d.scenes.at(i).audio;
            return array_of(a, {static_cast<py::ssize_t>(a.size())});
        })
        .def("mask", [](const Dataset& d, std::size_t i) {
            const SceneSample& s = d.scenes.at(i);
            const auto n = static_cast<py::ssize_t>(s.mask_size);
            return array_of(s.mask, {n, n});
        }, "Ground-truth mask as uint8 [M, M].")
        .def("sounding_classes", [](const Dataset& d, std::size_t i) { return d.scenes.at(i).sounding_classes(); })
        .def("save", [](const Dataset& d, const std::filesystem::path& dir) { write_dataset(d, dir); });

    m.def("generate_dataset", [](const py::object& cfg) {
        RunConfig c = config_from(cfg);
        py::gil_scoped_release release;
        return generate_synthetic_dataset(c.data, 4 * c.encoder.grid());
    }, py::arg("config") = py::none());
    m.def("load_dataset", &load_dataset, py::arg("path"));

    py::class_<SplitSpec>(m, "Split")
        .def_readonly("train", &SplitSpec::train)
        .def_readonly("test", &SplitSpec::test)
        .def_readonly("seen_test", &SplitSpec::seen_test)
        .def_readonly("seen_classes", &SplitSpec::seen_classes)
        .def_readonly("unseen_classes", &SplitSpec::unseen_classes)
        .def_readonly("shot_ids", &SplitSpec::shot_ids)
        .def_readonly("shots", &SplitSpec::shots)
        .def("save", [](const SplitSpec& s, const std::filesystem::path& p) { write_split(s, p); });
    m.def("make_split", [](const Dataset& ds, const py::object& cfg) {
        return make_fewshot_split(ds, config_from(cfg).split);
    }, py::arg("dataset"), py::arg("config") = py::none());

    py::class_<GavsModel>(m, "Model")
        .def(py::init([](const py::object& cfg, std::size_t audio_dim) {
            RunConfig c = config_from(cfg);
            return std::make_unique<GavsModel>(c, audio_dim ? audio_dim : c.data.audio_dim());
        }), py::arg("config") = py::none(), py::arg("audio_dim") = 0)
        .def_property_readonly("config", [](const GavsModel& model) { return to_py(to_json(model.config())); })
        .def_property_readonly("parameter_names", [](const GavsModel& model) {
            std::vector<std::string> names;
            for (const auto& p : model.params().all()) names.push_back(p.name);
            return names;
        })
        .def_property_readonly("trainable_names", [](const GavsModel& model) {
            std::vector<std::string> names;
            for (const auto& p : model.params().all()) {
                if (p.trainable) names.push_back(p.name);
            }
            return names;
        })
        .def("parameter", [](const GavsModel& model, const std::string& name) {
            return array_of(model.params().get(name).tensor);
        })
        .def("forward", [](const GavsModel& model, const py::array_t<double, py::array::c_style | py::array::forcecast>& frames,
                           const py::array_t<double, py::array::c_style | py::array::forcecast>& audio) {
            Tensor f = tensor_of(frames);
            Tensor a = tensor_of(audio);
            Tensor logits;
            {
                py::gil_scoped_release release;
                NoGradGuard guard;
                logits = model.forward(f, a).mask().logits;
            }
            return array_of(logits);
        }, py::arg("frames"), py::arg("audio"), "Mask logits [B, M, M] for frames [B,3,S,S] in [0,1] and audio [B,d].")
        .def("predict", [](const GavsModel& model, const Dataset& ds, const std::optional<std::vector<std::string>>& ids) {
            const auto idx = resolve(ds, ids);
            Tensor probs;
            {
                py::gil_scoped_release release;
                NoGradGuard guard;
                probs = model.forward(stack_frames(ds, idx), stack_audio(ds, idx)).mask().probabilities();
            }
            return array_of(probs);
        }, py::arg("dataset"), py::arg("ids") = py::none(), "Mask probabilities [B, M, M].")
        .def("save", [](const GavsModel& model, const std::filesystem::path& p) { save_checkpoint(model, p); });

    m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"));

    m.def("pretrain", [](GavsModel& model) {
        std::vector<LossRecord> records;
        {
            py::gil_scoped_release release;
            pretrain_foundation(model, [&](const LossRecord& r) { records.push_back(r); });
        }
        return records_of(records);
    }, py::arg("model"), "Foundation pretraining of backbone and decoder; returns the loss log.");

    m.def("train", [](GavsModel& model, const Dataset& ds, const std::optional<std::vector<std::string>>& ids) {
        const auto idx = resolve(ds, ids);
        std::vector<LossRecord> records;
        {
            py::gil_scoped_release release;
            records = train_gavs(model, ds, idx);
        }
        return records_of(records);
    }, py::arg("model"), py::arg("dataset"), py::arg("ids") = py::none());

    m.def("evaluate", [](const GavsModel& model, const Dataset& ds, const std::optional<std::vector<std::string>>& ids,
                         double beta2, bool shuffle_audio) {
        const auto idx = resolve(ds, ids);
        EvalOptions opt;
        opt.beta2 = beta2;
        opt.shuffle_audio = shuffle_audio;
        MetricReport report;
        {
            py::gil_scoped_release release;
            report = evaluate(model, ds, idx, opt).report;
        }
        return to_py(report_to_json(report));
    }, py::arg("model"), py::arg("dataset"), py::arg("ids") = py::none(), py::arg("beta2") = 0.3,
       py::arg("shuffle_audio") = false);

    m.def("mask_iou", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pred,
                         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& gt) {
        return mask_iou(masks_of({pred})[0], masks_of({gt})[0]);
    });
    m.def("miou", [](const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& pred,
                     const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& gt) {
        return miou(masks_of(pred), masks_of(gt));
    });
    m.def("fscore", [](const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& pred,
                       const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& gt,
                       double beta2) { return fscore(masks_of(pred), masks_of(gt), beta2); },
          py::arg("pred"), py::arg("gt"), py::arg("beta2") = 0.3);

    m.def("gradcheck", [](std::uint64_t seed, bool ops_only) {
        std::vector<GradcheckCaseResult> results;
        {
            py::gil_scoped_release release;
            results = ops_only ? gradcheck_ops(seed) : run_gradcheck_suite(seed);
        }
        py::list out;
        for (const auto& r : results) {
            out.append(py::dict(py::arg("name") = r.name, py::arg("passed") = r.passed,
                                py::arg("max_rel_error") = r.report.max_rel_error,
                                py::arg("coordinates") = r.report.coordinates, py::arg("seconds") = r.seconds));
        }
        return out;
    }, py::arg("seed") = 7, py::arg("ops_only") = false);
}
