#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lsm/cli.hpp"
#include "lsm/config.hpp"
#include "lsm/eval.hpp"
#include "lsm/parallel.hpp"
#include "lsm/shape.hpp"
#include "lsm/volume.hpp"

namespace py = pybind11;
using namespace lsm;

namespace {

using Spacing = std::array<double, 3>;

// numpy arrays are indexed [z, y, x]; volumes store x fastest.
GridGeometry grid_of(const py::buffer_info& info, const Spacing& spacing, const Spacing& origin) {
    if (info.ndim != 3) throw InvalidArgument("expected a 3-D array indexed [z, y, x]");
    GridGeometry g;
    g.dims = {static_cast<std::size_t>(info.shape[2]), static_cast<std::size_t>(info.shape[1]),
              static_cast<std::size_t>(info.shape[0])};
    g.spacing = Vec3(spacing[0], spacing[1], spacing[2]);
    g.origin = Vec3(origin[0], origin[1], origin[2]);
    g.validate();
    return g;
}

template <class T>
Volume<T> to_volume(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, const Spacing& spacing,
                    const Spacing& origin) {
    const auto info = a.request();
    Volume<T> v(grid_of(info, spacing, origin));
    const T* p = static_cast<const T*>(info.ptr);
    std::copy(p, p + v.size(), v.data.begin());
    return v;
}

template <class T, class U = T>
py::array_t<U> to_array(const Volume<T>& v) {
    py::array_t<U> out({v.grid.dims[2], v.grid.dims[1], v.grid.dims[0]});
    U* p = out.mutable_data();
    for (std::size_t n = 0; n < v.size(); ++n) p[n] = static_cast<U>(v.data[n]);
    return out;
}

BinaryMask to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                   const Spacing& spacing) {
    return to_volume<std::uint8_t>(a, spacing, {0.0, 0.0, 0.0});
}

RunConfig config_from(const py::object& config) {
    if (config.is_none()) return RunConfig::defaults();
    if (py::isinstance<py::str>(config)) return load_run_config(config.cast<std::string>());
    const auto text = py::module_::import("json").attr("dumps")(config).cast<std::string>();
    return run_config_from_json(json::parse(text));
}

py::dict fit_volume(const py::array_t<float, py::array::c_style | py::array::forcecast>& image, const Spacing& spacing,
                    const Spacing& origin, const py::object& config) {
    RunConfig cfg = config_from(config);
    const auto img = to_volume<float>(image, spacing, origin);
    const auto shape = make_shape(cfg.shape, img.grid);
    cfg.fit.initial_shape = initial_parameters(cfg.shape, *shape, img.grid);
    FitResult result;
    {
        py::gil_scoped_release release;
        set_thread_count(cfg.threads);
        result = fit(img, *shape, cfg.fit);
    }
    const auto theta = as_span(result.shape.theta);
    std::vector<double> log_joint;
    for (const auto& row : result.trace) log_joint.push_back(row.log_joint);
    py::dict out;
    out["parameter_names"] = shape->parameter_names();
    out["theta"] = std::vector<double>(theta.begin(), theta.end());
    out["covariance"] = result.shape.covariance;
    out["posterior"] = to_array<double>(result.posterior);
    out["ssi"] = to_array<std::uint8_t>(segmented_shape(*shape, theta, img.grid));
    out["sroi"] = to_array<std::uint8_t>(segmented_region(img, *shape, theta, result.intensity, cfg.fit.l_ref_hard));
    out["log_joint"] = log_joint;
    out["converged"] = result.converged;
    out["warnings"] = result.warnings;
    out["intensity"] = py::module_::import("json").attr("loads")(intensity_to_json(result.intensity).dump());
    return out;
}

py::array_t<double> shape_field(const std::string& kind, const std::vector<double>& theta,
                                const std::array<std::size_t, 3>& shape_zyx, const Spacing& spacing,
                                const Spacing& origin, int dimension) {
    ShapeConfig sc;
    sc.kind = kind;
    sc.dimension = dimension;
    GridGeometry g;
    g.dims = {shape_zyx[2], shape_zyx[1], shape_zyx[0]};
    g.spacing = Vec3(spacing[0], spacing[1], spacing[2]);
    g.origin = Vec3(origin[0], origin[1], origin[2]);
    g.validate();
    const auto shape = make_shape(sc, g);
    FieldVolume field(g);
    field.data = shape_values(*shape, theta, g);
    return to_array<double>(field);
}

py::tuple run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bayesian logistic shape model segmentation";
    m.attr("__version__") = version_string();

    // Translators run in reverse registration order, so the base class goes first.
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

    m.def("logistic_prior", &logistic_prior, py::arg("s"), py::arg("l_ref"));
    m.def("expected_posterior", &expected_posterior, py::arg("delta"));
    m.def("t_pdf", &t_pdf, py::arg("x"), py::arg("mu"), py::arg("sigma"), py::arg("nu"));

    m.def(
        "dice",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b) {
            return dice(to_mask(a, {1.0, 1.0, 1.0}), to_mask(b, {1.0, 1.0, 1.0}));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "hausdorff",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& b, double percentile,
           const Spacing& spacing) { return hausdorff(to_mask(a, spacing), to_mask(b, spacing), percentile); },
        py::arg("a"), py::arg("b"), py::arg("percentile") = 95.0, py::arg("spacing") = Spacing{1.0, 1.0, 1.0});

    m.def("shape_field", &shape_field, py::arg("kind"), py::arg("theta"), py::arg("shape"),
          py::arg("spacing") = Spacing{1.0, 1.0, 1.0}, py::arg("origin") = Spacing{0.0, 0.0, 0.0},
          py::arg("dimension") = 2, "Shape function S(theta, x) on a grid, indexed [z, y, x].");
    m.def("fit", &fit_volume, py::arg("image"), py::arg("spacing") = Spacing{1.0, 1.0, 1.0},
          py::arg("origin") = Spacing{0.0, 0.0, 0.0}, py::arg("config") = py::none(),
          "Fit the model to an image indexed [z, y, x]. `config` is a path, a dict, or None for defaults.");
    m.def("default_config", [] {
        return py::module_::import("json").attr("loads")(run_config_to_json(RunConfig::defaults()).dump());
    });
    m.def("run_cli", &run, py::arg("args"), "Run the command-line tool in-process; returns (code, stdout, stderr).");
}
