#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pbrt/distribution.hpp"
#include "pbrt/driver.hpp"
#include "pbrt/errors.hpp"
#include "pbrt/io.hpp"
#include "pbrt/simgen.hpp"
#include "pbrt/training.hpp"

namespace py = pybind11;
using namespace pbrt;

namespace {

SymMatrix to_sym(const Matrix& m) {
    return SymMatrix(m);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Potential brake response time estimation";

    auto base = py::register_exception<Error>(m, "PbrtError", PyExc_ValueError);
    py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", base.ptr());
    py::register_exception<NotPositiveSemidefinite>(m, "NotPositiveSemidefinite", base.ptr());
    py::register_exception<UnknownStimulus>(m, "UnknownStimulus", base.ptr());
    py::register_exception<InvalidObservation>(m, "InvalidObservation", base.ptr());
    py::register_exception<DriverMismatch>(m, "DriverMismatch", base.ptr());
    py::register_exception<InvalidQuantile>(m, "InvalidQuantile", base.ptr());
    py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::class_<StimulusRegistry>(m, "StimulusRegistry")
        .def(py::init<std::vector<std::string>>())
        .def_static("default", &StimulusRegistry::default_registry)
        .def_property_readonly("names", &StimulusRegistry::names)
        .def("id", &StimulusRegistry::id)
        .def("name", &StimulusRegistry::name)
        .def("__len__", &StimulusRegistry::size);

    py::class_<ModelSpec>(m, "ModelSpec")
        .def(py::init([](int num_stimuli, int degree) {
                 ModelSpec s{num_stimuli, degree};
                 s.validate();
                 return s;
             }),
             py::arg("num_stimuli") = 3, py::arg("degree") = 2)
        .def_readonly("num_stimuli", &ModelSpec::num_stimuli)
        .def_readonly("degree", &ModelSpec::degree)
        .def_property_readonly("p", &ModelSpec::p);

    m.def("feature_row", &feature_row, py::arg("spec"), py::arg("stimulus"), py::arg("headway_s"));

    py::class_<Observation>(m, "Observation")
        .def(py::init([](std::string driver_id, StimulusId stimulus, double headway_s, double brt_s) {
                 Observation o{std::move(driver_id), stimulus, headway_s, brt_s};
                 o.validate();
                 return o;
             }),
             py::arg("driver_id"), py::arg("stimulus"), py::arg("headway_s"), py::arg("brt_s"))
        .def_readonly("driver_id", &Observation::driver_id)
        .def_readonly("stimulus", &Observation::stimulus)
        .def_readonly("headway_s", &Observation::headway_s)
        .def_readonly("brt_s", &Observation::brt_s)
        .def("__eq__", &Observation::operator==)
        .def("__repr__", [](const Observation& o) {
            return "Observation(" + o.driver_id + ", " + std::to_string(o.stimulus) + ", " +
                   io::format_number(o.headway_s) + ", " + io::format_number(o.brt_s) + ")";
        });

    py::class_<FitInfo>(m, "FitInfo")
        .def_readonly("converged", &FitInfo::converged)
        .def_readonly("loglik", &FitInfo::loglik)
        .def_readonly("iterations", &FitInfo::iterations)
        .def_readonly("seed", &FitInfo::seed);

    py::class_<TrainedModel>(m, "TrainedModel")
        .def_readonly("spec", &TrainedModel::spec)
        .def_readonly("stimuli", &TrainedModel::stimuli)
        .def_readonly("beta", &TrainedModel::beta)
        .def_readonly("sigma2", &TrainedModel::sigma2)
        .def_property_readonly("sigma_gamma",
                               [](const TrainedModel& t) { return t.sigma_gamma.matrix(); })
        .def_property_readonly("beta_cov", [](const TrainedModel& t) { return t.beta_cov.matrix(); })
        .def_readonly("t_star", &TrainedModel::t_star)
        .def_readonly("fit_info", &TrainedModel::fit_info)
        .def_static("from_json", &io::model_from_json)
        .def("to_json", &io::model_to_json)
        .def_static("load", [](const std::string& path) { return io::model_from_json(io::read_file(path)); })
        .def("save", [](const TrainedModel& t, const std::string& path) {
            io::atomic_write(path, io::model_to_json(t));
        });

    py::class_<TrainingSet>(m, "TrainingSet")
        .def_readonly("spec", &TrainingSet::spec)
        .def_readonly("stimuli", &TrainingSet::stimuli)
        .def_readonly("drivers", &TrainingSet::drivers)
        .def_property_readonly("num_observations", &TrainingSet::num_observations)
        .def("to_csv", &io::observations_to_csv)
        .def_static("from_csv", [](const std::string& text) {
            std::istringstream in(text);
            return io::training_set_from_rows(io::parse_observation_csv(in));
        });

    py::class_<FitOptions>(m, "FitOptions")
        .def(py::init<>())
        .def_readwrite("max_iterations", &FitOptions::max_iterations)
        .def_readwrite("tolerance", &FitOptions::tolerance)
        .def_readwrite("seed", &FitOptions::seed)
        .def_readwrite("restarts", &FitOptions::restarts)
        .def_readwrite("block_diagonal", &FitOptions::block_diagonal);

    m.def("fit", &fit, py::arg("training"), py::arg("options") = FitOptions{},
          py::call_guard<py::gil_scoped_release>());

    py::class_<SimConfig>(m, "SimConfig")
        .def_readwrite("beta_true", &SimConfig::beta_true)
        .def_readwrite("sigma2_true", &SimConfig::sigma2_true)
        .def_property(
            "sigma_gamma_true", [](const SimConfig& c) { return c.sigma_gamma_true.matrix(); },
            [](SimConfig& c, const Matrix& v) { c.sigma_gamma_true = to_sym(v); })
        .def_readwrite("num_drivers", &SimConfig::num_drivers)
        .def_readwrite("obs_per_driver", &SimConfig::obs_per_driver)
        .def_readwrite("headway_range", &SimConfig::headway_range)
        .def_readwrite("seed", &SimConfig::seed)
        .def_readonly("spec", &SimConfig::spec)
        .def_readonly("stimuli", &SimConfig::stimuli);

    py::class_<SimResult>(m, "SimResult")
        .def_readonly("training", &SimResult::training)
        .def_readonly("gamma_truth", &SimResult::gamma_truth);

    m.def("default_config", &default_config);
    m.def("generate", &generate, py::arg("config"));

    py::class_<BlupResult>(m, "BlupResult")
        .def_readonly("gamma_hat", &BlupResult::gamma_hat)
        .def_property_readonly("gamma_hat_cov",
                               [](const BlupResult& b) { return b.gamma_hat_cov.matrix(); })
        .def_property_readonly("pred_err_cov",
                               [](const BlupResult& b) { return b.pred_err_cov.matrix(); });

    m.def("compute_blup",
          [](const std::vector<Observation>& obs, const TrainedModel& model) {
              return compute_blup(obs, model);
          },
          py::arg("observations"), py::arg("model"));

    py::class_<DriverState>(m, "DriverState")
        .def(py::init<std::string, std::size_t>(), py::arg("driver_id"),
             py::arg("window") = DriverState::kDefaultWindow)
        .def_property_readonly("driver_id", &DriverState::driver_id)
        .def_property_readonly("window", &DriverState::window)
        .def_property_readonly("observations", &DriverState::observations)
        .def("__len__", &DriverState::size)
        .def("add_observation", &DriverState::add_observation)
        .def("blup", [](DriverState& s, const TrainedModel& model) { return s.blup(model); });

    py::class_<PbrtEstimate>(m, "PbrtEstimate")
        .def_readonly("mu", &PbrtEstimate::mu)
        .def_readonly("var_naive", &PbrtEstimate::var_naive)
        .def_readonly("var_conservative", &PbrtEstimate::var_conservative)
        .def_readonly("t_star", &PbrtEstimate::t_star)
        .def_readonly("stimulus", &PbrtEstimate::stimulus)
        .def("variance", &PbrtEstimate::variance, py::arg("conservative"));

    m.def("estimate_pbrt",
          [](const TrainedModel& model, const BlupResult& blup, StimulusId stimulus,
             std::optional<double> t_star) {
              return estimate_pbrt(model, blup, stimulus, t_star.value_or(model.t_star));
          },
          py::arg("model"), py::arg("blup"), py::arg("stimulus"), py::arg("t_star") = py::none());
    m.def("population_pbrt", &population_pbrt, py::arg("model"), py::arg("stimulus"),
          py::arg("t_star") = kDefaultTStar);
    m.def("normal_quantile", &normal_quantile, py::arg("q"));
    m.def("percentile", &percentile, py::arg("estimate"), py::arg("q"),
          py::arg("conservative") = false);
    m.def("density_curve",
          [](const PbrtEstimate& est, bool conservative, const std::vector<double>& grid) {
              return density_curve(est, conservative, grid);
          },
          py::arg("estimate"), py::arg("conservative"), py::arg("grid"));
}
