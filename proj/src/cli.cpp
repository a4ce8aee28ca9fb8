#include "lsm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "lsm/cochlea.hpp"
#include "lsm/config.hpp"
#include "lsm/eval.hpp"
#include "lsm/parallel.hpp"
#include "lsm/uncertainty.hpp"
#include "lsm/volume_io.hpp"

#ifndef LSM_VERSION
#define LSM_VERSION "0.0.0"
#endif

namespace lsm {

namespace fs = std::filesystem;

namespace {

struct Globals {
    bool json = false;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

RunConfig load_or_default(const std::string& path) {
    return path.empty() ? RunConfig::defaults() : load_run_config(path);
}

void apply_globals(RunConfig& config, const Globals& g) {
    if (g.seed) {
        config.seed = *g.seed;
        config.fit.seed = *g.seed;
        if (config.phantom) config.phantom->seed = *g.seed;
    }
    set_thread_count(g.threads ? *g.threads : config.threads);
}

void report(std::ostream& out, const Globals& g, const json& summary) {
    if (g.json) {
        out << summary.dump(2) << '\n';
        return;
    }
    for (const auto& [key, value] : summary.items()) {
        out << key << ": " << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
    }
}

// "nx,ny,nz,spacing"
std::pair<std::array<std::size_t, 3>, double> parse_grid_arg(const std::string& text) {
    std::vector<double> v;
    std::stringstream in(text);
    for (std::string part; std::getline(in, part, ',');) {
        try {
            v.push_back(std::stod(part));
        } catch (const std::exception&) {
            throw InvalidArgument("--grid expects nx,ny,nz,spacing");
        }
    }
    if (v.size() != 4) throw InvalidArgument("--grid expects nx,ny,nz,spacing");
    std::array<std::size_t, 3> dims{};
    for (std::size_t i = 0; i < 3; ++i) {
        if (!(v[i] >= 1.0) || v[i] != std::floor(v[i])) throw InvalidArgument("--grid dimensions must be positive integers");
        dims[i] = static_cast<std::size_t>(v[i]);
    }
    if (!(v[3] > 0.0)) throw InvalidArgument("--grid spacing must be > 0");
    return {dims, v[3]};
}

Vec3 parse_vec3(const std::string& text, const std::string& flag) {
    std::vector<double> v;
    std::stringstream in(text);
    for (std::string part; std::getline(in, part, ',');) v.push_back(std::stod(part));
    if (v.size() != 3) throw InvalidArgument(flag + " expects x,y,z");
    return {v[0], v[1], v[2]};
}

// --------------------------------------------------------------------------

struct SynthArgs {
    std::string spec, out_dir;
};

int cmd_synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
    RunConfig config = load_run_config(a.spec);
    if (!config.phantom) throw InvalidArgument(a.spec + " has no [phantom] table");
    apply_globals(config, g);
    PhantomSpec spec = *config.phantom;
    if (spec.kind == PhantomSpec::Kind::cochlea && config.phantom_reference_grid) {
        const CochleaShape shape;
        spec.grid = cochlea_reference_grid(shape, spec.cochlea_theta, spec.grid.dims, spec.grid.spacing.x());
    }
    const auto phantom = synth_phantom(spec);
    fs::create_directories(a.out_dir);
    write_volume(phantom.image, fs::path(a.out_dir) / "image.mhd");
    write_volume(phantom.truth, fs::path(a.out_dir) / "truth.mhd");
    std::size_t fg = 0;
    for (auto v : phantom.truth.data) fg += v;
    json summary{{"image", (fs::path(a.out_dir) / "image.mhd").string()},
                 {"truth", (fs::path(a.out_dir) / "truth.mhd").string()},
                 {"voxels", phantom.truth.size()},
                 {"foreground_voxels", fg},
                 {"seed", spec.seed}};
    report(out, g, summary);
    return 0;
}

struct FitArgs {
    std::string image, shape, config, out_dir, init;
};

int cmd_fit(const FitArgs& a, const Globals& g, std::ostream& out) {
    RunConfig config = load_or_default(a.config);
    if (!a.shape.empty()) config.shape.kind = a.shape;
    apply_globals(config, g);
    const auto image = read_image(a.image);
    const auto shape = make_shape(config.shape, image.grid);
    config.fit.initial_shape = initial_parameters(config.shape, *shape, image.grid);
    const auto result = fit(image, *shape, config.fit);

    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    const auto theta = as_span(result.shape.theta);
    write_volume(volume_cast<float>(result.posterior), dir / "posterior.mhd");
    write_volume(segmented_region(image, *shape, theta, result.intensity, config.fit.l_ref_hard), dir / "sroi.mhd");
    write_volume(segmented_shape(*shape, theta, image.grid), dir / "ssi.mhd");
    json doc = fit_to_json(result, *shape, config);
    doc["image"] = fs::absolute(a.image).lexically_normal().string();
    write_text(dir / "theta.json", doc.dump(2) + "\n");
    write_text(dir / "trace.csv", trace_csv(result, shape->parameter_names()));
    write_text(dir / "ms_report.csv", ms_report_csv(result));

    json summary{{"out_dir", dir.string()},
                 {"converged", result.converged},
                 {"cycles", result.trace.size() - 1},
                 {"log_joint", result.trace.back().log_joint},
                 {"theta", doc["theta"]},
                 {"warnings", result.warnings}};
    report(out, g, summary);
    return 0;
}

struct SweepArgs {
    std::string image, shape, config, grid, out, truth;
};

int cmd_sweep(const SweepArgs& a, const Globals& g, std::ostream& out) {
    RunConfig config = load_or_default(a.config);
    if (!a.shape.empty()) config.shape.kind = a.shape;
    apply_globals(config, g);
    const auto image = read_image(a.image);
    const auto shape = make_shape(config.shape, image.grid);
    config.fit.initial_shape = initial_parameters(config.shape, *shape, image.grid);
    const auto grid = parse_grid_spec(a.grid.empty() ? config.sweep_grid : a.grid);
    std::optional<BinaryMask> truth;
    if (!a.truth.empty()) truth = read_mask(a.truth);
    const auto rows = lref_sweep(image, *shape, config.fit, grid, truth ? &*truth : nullptr);
    write_text(a.out, sweep_csv(rows, shape->parameter_names()));

    json table = json::array();
    for (const auto& r : rows) {
        json row{{"l_ref", r.l_ref}, {"ok", r.ok}, {"log_joint", r.log_joint}};
        if (truth) {
            row["dice_ssi"] = r.dice_ssi;
            row["dice_sroi"] = r.dice_sroi;
        }
        if (!r.ok) row["error"] = r.error;
        table.push_back(row);
    }
    report(out, g, json{{"out", a.out}, {"rows", table}});
    return 0;
}

struct SampleArgs {
    std::string fit_dir, out, image, samples_csv;
    std::size_t n = 100;
};

int cmd_sample(const SampleArgs& a, const Globals& g, std::ostream& out) {
    const fs::path dir(a.fit_dir);
    const json doc = load_document(dir / "theta.json");
    RunConfig config = run_config_from_json(doc.at("config"));
    apply_globals(config, g);
    const auto image = read_image(a.image.empty() ? doc.at("image").get<std::string>() : a.image);
    const auto shape = make_shape(config.shape, image.grid);

    ShapePosterior posterior;
    const auto names = doc.at("parameter_names").get<std::vector<std::string>>();
    const auto p = static_cast<Eigen::Index>(names.size());
    posterior.theta.resize(p);
    posterior.covariance.resize(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        posterior.theta[i] = doc.at("theta").at(names[static_cast<std::size_t>(i)]).get<double>();
        for (Eigen::Index k = 0; k < p; ++k) {
            posterior.covariance(i, k) = doc.at("covariance").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k));
        }
    }
    const auto intensity = intensity_from_json(doc.at("intensity"));
    const double l_ref = doc.at("l_ref").get<double>();
    const std::uint64_t seed = g.seed ? *g.seed : config.seed;

    const auto samples = sample_posterior(posterior, a.n, seed, shape->bounds());
    const auto marginal = marginal_posterior(image, *shape, samples, intensity, l_ref);
    write_volume(volume_cast<float>(marginal), a.out);
    if (!a.samples_csv.empty()) {
        std::ostringstream csv;
        for (std::size_t i = 0; i < names.size(); ++i) csv << (i ? "," : "") << names[i];
        csv << '\n';
        for (Eigen::Index s = 0; s < samples.draws.rows(); ++s) {
            for (Eigen::Index i = 0; i < p; ++i) csv << (i ? "," : "") << format_double(samples.draws(s, i));
            csv << '\n';
        }
        write_text(a.samples_csv, csv.str());
    }
    report(out, g, json{{"out", a.out}, {"samples", a.n}, {"seed", seed}, {"clipped", samples.clipped}});
    return 0;
}

struct MetricsArgs {
    std::string a, b;
};

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
    const auto ma = read_mask(a.a);
    const auto mb = read_mask(a.b);
    json j;
    j["dice"] = dice(ma, mb);
    j["hd95"] = hausdorff(ma, mb, 95.0);
    j["hd100"] = hausdorff(ma, mb, 100.0);
    out << j.dump() << '\n';
    return 0;
}

struct SdfArgs {
    std::string params, grid, out, origin;
};

int cmd_shape_sdf(const SdfArgs& a, const Globals& g, std::ostream& out) {
    const json doc = load_document(a.params);
    if (!doc.contains("theta")) throw InvalidArgument(a.params + ": missing 'theta'");
    const auto theta = doc.at("theta").get<std::vector<double>>();
    json rest = doc;
    rest.erase("theta");
    RunConfig config = run_config_from_json(rest);
    apply_globals(config, g);

    const auto [dims, spacing] = parse_grid_arg(a.grid);
    GridGeometry grid;
    grid.dims = dims;
    grid.spacing = Vec3::Constant(spacing);
    if (!a.origin.empty()) {
        grid.origin = parse_vec3(a.origin, "--origin");
    } else if (config.shape.kind == "cochlea") {
        const auto shape = make_shape(config.shape, grid);
        grid = cochlea_reference_grid(dynamic_cast<const CochleaShape&>(*shape), theta, dims, spacing);
    }
    const auto shape = make_shape(config.shape, grid);
    const auto values = shape_values(*shape, theta, grid);
    ImageVolume field(grid);
    for (std::size_t n = 0; n < values.size(); ++n) field[n] = static_cast<float>(values[n]);
    write_volume(field, a.out);
    std::size_t inside = 0;
    for (double v : values) inside += v >= 0.0;
    report(out, g, json{{"out", a.out}, {"voxels", values.size()}, {"inside_voxels", inside}});
    return 0;
}

int cmd_config_defaults(const Globals& g, std::ostream& out) {
    const json doc = run_config_to_json(RunConfig::defaults());
    if (g.json) {
        out << doc.dump(2) << '\n';
    } else {
        out << json_to_toml(doc);
    }
    return 0;
}

} // namespace

const char* version_string() { return LSM_VERSION; }

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bayesian logistic shape model segmentation", "logshape"};
    app.set_version_flag("--version", std::string("logshape ") + version_string());
    app.fallthrough();
    app.require_subcommand(1);

    Globals g;
    unsigned threads = 0;
    std::uint64_t seed = 0;
    app.add_flag("--json", g.json, "Print a machine-readable JSON summary");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads (default: all cores)");
    auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config file)");

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic phantom and its ground-truth mask");
    c_synth->add_option("--spec", synth.spec, "TOML/JSON file with a [phantom] table")->required()->check(CLI::ExistingFile);
    c_synth->add_option("--out-dir", synth.out_dir, "Output directory")->required();

    FitArgs fit_args;
    auto* c_fit = app.add_subcommand("fit", "Fit the shape and appearance model to an image");
    c_fit->add_option("--image", fit_args.image, "Input image volume (.mhd)")->required()->check(CLI::ExistingFile);
    c_fit->add_option("--shape", fit_args.shape, "Shape model")->check(CLI::IsMember({"cochlea", "circle"}));
    c_fit->add_option("--config", fit_args.config, "TOML/JSON configuration")->check(CLI::ExistingFile);
    c_fit->add_option("--out-dir", fit_args.out_dir, "Output directory")->required();

    SweepArgs sweep;
    auto* c_sweep = app.add_subcommand("sweep-lref", "Fit over a grid of reference lengths");
    c_sweep->add_option("--image", sweep.image, "Input image volume (.mhd)")->required()->check(CLI::ExistingFile);
    c_sweep->add_option("--shape", sweep.shape, "Shape model")->check(CLI::IsMember({"cochlea", "circle"}));
    c_sweep->add_option("--config", sweep.config, "TOML/JSON configuration")->check(CLI::ExistingFile);
    c_sweep->add_option("--grid", sweep.grid, "l_ref grid: lo:step:hi or a comma list");
    c_sweep->add_option("--truth", sweep.truth, "Ground-truth mask for Dice columns")->check(CLI::ExistingFile);
    c_sweep->add_option("--out", sweep.out, "Output CSV")->required();

    SampleArgs sample;
    auto* c_sample = app.add_subcommand("sample-posterior", "Monte-Carlo marginal posterior from a fit");
    c_sample->add_option("--fit", sample.fit_dir, "Directory written by `fit`")->required()->check(CLI::ExistingDirectory);
    c_sample->add_option("--n", sample.n, "Number of samples")->check(CLI::PositiveNumber);
    c_sample->add_option("--image", sample.image, "Image volume (default: the fitted one)")->check(CLI::ExistingFile);
    c_sample->add_option("--samples-csv", sample.samples_csv, "Also write the drawn parameters");
    c_sample->add_option("--out", sample.out, "Output volume (.mhd)")->required();

    MetricsArgs metrics;
    auto* c_metrics = app.add_subcommand("metrics", "Dice and Hausdorff distances between two masks");
    c_metrics->add_option("--a", metrics.a, "First mask")->required()->check(CLI::ExistingFile);
    c_metrics->add_option("--b", metrics.b, "Second mask")->required()->check(CLI::ExistingFile);

    SdfArgs sdf;
    auto* c_shape = app.add_subcommand("shape", "Shape-function utilities");
    c_shape->require_subcommand(1);
    auto* c_sdf = c_shape->add_subcommand("sdf", "Evaluate a shape function on a grid");
    c_sdf->add_option("--params", sdf.params, "TOML/JSON with theta = [...] and optional [shape]")
        ->required()
        ->check(CLI::ExistingFile);
    c_sdf->add_option("--grid", sdf.grid, "nx,ny,nz,spacing")->required();
    c_sdf->add_option("--origin", sdf.origin, "x,y,z of the first voxel (default: centered on the cochlea)");
    c_sdf->add_option("--out", sdf.out, "Output volume (.mhd)")->required();

    bool defaults = false;
    auto* c_config = app.add_subcommand("config", "Configuration helpers");
    c_config->add_flag("--defaults", defaults, "Print every default setting")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : kExitUsage;
    }
    if (threads_opt->count()) g.threads = threads;
    if (seed_opt->count()) g.seed = seed;

    try {
        if (c_synth->parsed()) return cmd_synth(synth, g, out);
        if (c_fit->parsed()) return cmd_fit(fit_args, g, out);
        if (c_sweep->parsed()) return cmd_sweep(sweep, g, out);
        if (c_sample->parsed()) return cmd_sample(sample, g, out);
        if (c_metrics->parsed()) return cmd_metrics(metrics, out);
        if (c_sdf->parsed()) return cmd_shape_sdf(sdf, g, out);
        if (c_config->parsed()) return cmd_config_defaults(g, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, out, err);
}

} // namespace lsm
