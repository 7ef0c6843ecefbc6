#include <sstream>

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "shmfcn/checkpoint.hpp"
#include "shmfcn/cli.hpp"
#include "shmfcn/errors.hpp"
#include "shmfcn/excitation.hpp"

namespace py = pybind11;
using namespace shmfcn;

namespace {

py::array_t<float> block_array(const Block& b) {
    py::array_t<float> a({b.channels, b.length});
    std::copy(b.values.begin(), b.values.end(), a.mutable_data());
    return a;
}

py::array_t<double> matrix_array(const Eigen::MatrixXd& m) {
    py::array_t<double> a({m.rows(), m.cols()});
    auto r = a.mutable_unchecked<2>();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) r(i, j) = m(i, j);
    return a;
}

// (instances, channels, length) copy of one direction over the given indices.
py::array_t<float> stack(const Dataset& ds, const std::vector<std::size_t>& idx, Direction d) {
    if (idx.empty()) return py::array_t<float>(std::vector<py::ssize_t>{0, 0, 0});
    const Block& first = d == Direction::Shear ? ds.instances[idx[0]].shear : ds.instances[idx[0]].axial;
    py::array_t<float> a({static_cast<py::ssize_t>(idx.size()), static_cast<py::ssize_t>(first.channels),
                          static_cast<py::ssize_t>(first.length)});
    float* out = a.mutable_data();
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const Block& b = d == Direction::Shear ? ds.instances[idx[k]].shear : ds.instances[idx[k]].axial;
        out = std::copy(b.values.begin(), b.values.end(), out);
    }
    return a;
}

std::vector<std::size_t> all_indices(const Dataset& ds) {
    std::vector<std::size_t> v(ds.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Shear-building simulation, dataset synthesis and FCN damage classification.";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::enum_<Direction>(m, "Direction").value("shear", Direction::Shear).value("axial", Direction::Axial);
    py::enum_<Task>(m, "Task").value("detection", Task::Detection).value("localization", Task::Localization);
    py::enum_<LoadCase>(m, "LoadCase")
        .value("sinusoidal", LoadCase::Sinusoidal)
        .value("noise15_17", LoadCase::Noise15_17)
        .value("noise5_7", LoadCase::Noise5_7);
    py::enum_<Split>(m, "Split").value("train", Split::Train).value("val", Split::Val).value("test", Split::Test);

    py::class_<BuildingConfig>(m, "BuildingConfig")
        .def(py::init<>())
        .def_readwrite("n_stories", &BuildingConfig::n_stories)
        .def_readwrite("floor_mass_t", &BuildingConfig::floor_mass_t)
        .def_readwrite("shear_stiffness_kn_m", &BuildingConfig::shear_stiffness_kn_m)
        .def_readwrite("axial_stiffness_kn_m", &BuildingConfig::axial_stiffness_kn_m)
        .def_readwrite("damage_factor", &BuildingConfig::damage_factor);

    m.def(
        "system_matrices",
        [](const BuildingConfig& b, Direction d, int scenario) {
            const SystemMatrices s = assemble_chain(b, d, DamageScenario{scenario});
            return py::make_tuple(matrix_array(s.mass), matrix_array(s.stiffness));
        },
        py::arg("building"), py::arg("direction"), py::arg("scenario") = 0,
        "(mass, stiffness) in kg and N/m");
    m.def(
        "eigenfrequencies",
        [](const BuildingConfig& b, Direction d, int scenario) {
            return eigenfrequencies(assemble_chain(b, d, DamageScenario{scenario}));
        },
        py::arg("building"), py::arg("direction") = Direction::Shear, py::arg("scenario") = 0);
    m.def("closed_form_uniform_frequencies", &closed_form_uniform_frequencies, py::arg("n"), py::arg("k"),
          py::arg("m"));
    m.def(
        "eigen_table",
        [](const BuildingConfig& b, std::vector<int> scenarios) {
            const auto t = cli::eigen_table(b, std::move(scenarios));
            return py::make_tuple(t.shear, t.axial);
        },
        py::arg("building") = BuildingConfig{}, py::arg("scenarios") = std::vector<int>{},
        "(shear, axial) tables indexed [mode][scenario], Hz");

    m.def(
        "psd",
        [](const std::vector<double>& x, double dt, std::size_t segment) {
            const PowerSpectrum p = compute_psd(x, dt, segment);
            return py::make_tuple(p.frequency, p.density);
        },
        py::arg("series"), py::arg("dt"), py::arg("segment_length") = 0);

    m.def(
        "simulate_instance",
        [](LoadCase load_case, int scenario, std::optional<double> snr_db, std::uint64_t seed) {
            const Instance i = build_instance(GenerationSettings{}, load_case, DamageScenario{scenario}, snr_db, seed);
            return py::make_tuple(block_array(i.shear), block_array(i.axial));
        },
        py::arg("load_case"), py::arg("scenario"), py::arg("snr_db") = std::nullopt, py::arg("seed") = 0,
        "(shear, axial) sensor blocks of one experiment with the default building");

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("size", &Dataset::size)
        .def_property_readonly("task", [](const Dataset& d) { return d.manifest.task; })
        .def_property_readonly("classes", [](const Dataset& d) { return d.manifest.classes; })
        .def_property_readonly("labels",
                               [](const Dataset& d) {
                                   std::vector<int> v;
                                   for (const auto& i : d.instances) v.push_back(i.label);
                                   return v;
                               })
        .def("indices", &Dataset::indices_of, py::arg("split"))
        .def(
            "tensor",
            [](const Dataset& d, Direction dir, std::optional<Split> split) {
                return stack(d, split ? d.indices_of(*split) : all_indices(d), dir);
            },
            py::arg("direction"), py::arg("split") = std::nullopt, "(instances, channels, length) float32 copy")
        .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(d, p); });

    m.def(
        "build_dataset",
        [](Task task, LoadCase load_case, int vg, std::optional<double> snr_db, std::uint64_t seed,
           unsigned threads) {
            py::gil_scoped_release release;
            return split_dataset(build_dataset(GenerationSettings{}, task, load_case, vg, snr_db, seed, threads),
                                 SplitSpec{});
        },
        py::arg("task"), py::arg("load_case"), py::arg("vg"), py::arg("snr_db") = std::nullopt, py::arg("seed") = 0,
        py::arg("threads") = 0, "generate and split with the default building and sensors");
    m.def("load_dataset", &load_dataset, py::arg("path"));

    py::class_<RunConfig>(m, "RunConfig")
        .def_static("defaults", [] { return RunConfig{}; })
        .def_static("from_json", &parse_run_config, py::arg("text"))
        .def_static("load", &load_run_config, py::arg("path"))
        .def("to_json", &dump_run_config)
        .def("training_hash", &training_hash);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("max_epochs", &TrainConfig::max_epochs)
        .def_readwrite("min_epochs_before_stop", &TrainConfig::min_epochs_before_stop)
        .def_readwrite("minibatch", &TrainConfig::minibatch)
        .def_readwrite("seed", &TrainConfig::seed);
    m.def("lr_at", &lr_at, py::arg("epoch"), py::arg("cfg") = TrainConfig{}, py::arg("zeta_count") = 0);

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("accuracy", &EvalReport::accuracy)
        .def_readonly("loss", &EvalReport::loss)
        .def_readonly("confusion", &EvalReport::confusion)
        .def_readonly("recall", &EvalReport::recall)
        .def_readonly("predictions", &EvalReport::predictions);

    py::class_<Prediction>(m, "Prediction")
        .def_readonly("label", &Prediction::label)
        .def_readonly("probabilities", &Prediction::probabilities);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_static(
            "load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
        .def(
            "evaluate",
            [](const Checkpoint& c, const Dataset& d, Split s, unsigned threads) {
                py::gil_scoped_release release;
                return evaluate(c.params, d, s, threads);
            },
            py::arg("dataset"), py::arg("split") = Split::Test, py::arg("threads") = 1)
        .def(
            "predict",
            [](const Checkpoint& c, const Dataset& d, std::size_t index) {
                return predict(c.params, d.instances.at(index));
            },
            py::arg("dataset"), py::arg("index"))
        .def_property_readonly("n_weights", [](const Checkpoint& c) { return c.params.weights.size(); });

    // Command layer; log text is returned instead of printed.
    m.def(
        "cmd_generate",
        [](const RunConfig& cfg, const std::filesystem::path& out) {
            std::ostringstream log;
            py::gil_scoped_release release;
            cli::cmd_generate(cfg, out, log);
            return log.str();
        },
        py::arg("cfg"), py::arg("out"));
    m.def(
        "cmd_train",
        [](const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& ckpt, bool resume) {
            std::ostringstream log;
            py::gil_scoped_release release;
            cli::cmd_train(cfg, data, ckpt, resume, log);
            return log.str();
        },
        py::arg("cfg"), py::arg("dataset"), py::arg("checkpoint"), py::arg("resume") = false);
    m.def(
        "cmd_eval",
        [](const std::filesystem::path& ckpt, const std::filesystem::path& data, Split split,
           const std::filesystem::path& out) {
            std::ostringstream log;
            py::gil_scoped_release release;
            return cli::cmd_eval(ckpt, data, split, out, 1, log);
        },
        py::arg("checkpoint"), py::arg("dataset"), py::arg("split"), py::arg("out"));
}
