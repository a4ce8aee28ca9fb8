// Run configuration: TOML or JSON files mapped onto the library option structs.
//
// Both formats share one schema; TOML documents are converted to JSON before
// they are read, so every key below works in either format.
//
//   seed, threads
//   [shape]      kind ("cochlea" | "circle"), dimension (circle), initial, bounds,
//                rho_base, rho_apex, theta_max, coarse_samples (cochlea)
//   [fit]        l_ref, l_ref_hard, outer_tolerance, max_outer_iterations, divergence_fraction
//   [ms]         tolerance, max_gradient_updates, max_newton_iterations, max_halvings, fd_steps
//   [mi]         nu_mode ("fixed" | "solve"), max_rounds, tolerance, sigma_floor, freeze_fraction, nu_lo, nu_hi
//   [intensity]  background, foreground: arrays of {pi, mu, sigma, nu}; nu = "inf" for Gaussians
//   [prior]      covariance (matrix) or variances (diagonal), mean
//   [posterior]  samples
//   [sweep]      grid ("lo:step:hi" or list)
//   [phantom]    see PhantomSpec; used by `synth`
//
// Unknown keys are rejected.
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "lsm/eval.hpp"
#include "lsm/inference.hpp"

namespace lsm {

using json = nlohmann::ordered_json;

struct ShapeConfig {
    std::string kind = "cochlea";
    int dimension = 2; // circle only
    std::vector<double> initial;                // empty: model default
    std::vector<std::array<double, 2>> bounds;  // empty: model default
    double rho_base = 1.0, rho_apex = 0.4;      // cochlea cross-section, mm
    double theta_max = 0.0;                     // 0: default 5 pi
    std::size_t coarse_samples = 512;
};

struct RunConfig {
    std::uint64_t seed = 0;
    unsigned threads = 0;
    ShapeConfig shape;
    FitConfig fit;
    std::size_t posterior_samples = 100;
    std::string sweep_grid = "0.05:0.05:0.25";
    std::optional<PhantomSpec> phantom;
    bool phantom_reference_grid = false; // cochlea phantom on cochlea_reference_grid()

    static RunConfig defaults();
};

// Reads TOML (.toml) or JSON (anything else that parses as JSON).
json load_document(const std::filesystem::path& path);
json toml_to_json(const std::string& toml_text, const std::string& source = "config");
std::string json_to_toml(const json& document);

RunConfig run_config_from_json(const json& document);
json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

json intensity_to_json(const IntensityParams& params);
IntensityParams intensity_from_json(const json& j);

// Builds the shape function. Circle defaults depend on the image grid:
// centers within the grid extent, radius in [min spacing, max extent].
std::unique_ptr<ShapeFunction> make_shape(const ShapeConfig& config, const GridGeometry& grid);
// config.initial, or the model default: cochlea initialization, or a circle
// centered in the grid with a quarter of the smallest in-plane extent.
std::vector<double> initial_parameters(const ShapeConfig& config, const ShapeFunction& shape,
                                       const GridGeometry& grid);

// Trace CSV: iteration, log_joint, one column per shape parameter, step_norm,
// then fg_mu_<m>, fg_sigma_<m> for every foreground component.
std::string trace_csv(const FitResult& result, const std::vector<std::string>& parameter_names);

// One row per accepted Newton step of every MS-step: cycle, update, step,
// linearized J, and the exact J before/after each gradient update.
std::string ms_report_csv(const FitResult& result);

// theta*, Sigma* and the fitted appearance as a JSON document.
json fit_to_json(const FitResult& result, const ShapeFunction& shape, const RunConfig& config);

} // namespace lsm
