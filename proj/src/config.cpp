#include "lsm/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "lsm/cochlea.hpp"
#include "lsm/shapes.hpp"

namespace lsm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

json node_to_json(const toml::node& node) {
    if (const auto* t = node.as_table()) {
        json out = json::object();
        for (auto&& [key, value] : *t) out[std::string(key.str())] = node_to_json(value);
        return out;
    }
    if (const auto* a = node.as_array()) {
        json out = json::array();
        for (const auto& value : *a) out.push_back(node_to_json(value));
        return out;
    }
    if (const auto* v = node.as_string()) return v->get();
    if (const auto* v = node.as_integer()) return v->get();
    if (const auto* v = node.as_floating_point()) {
        const double d = v->get();
        if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
        return d;
    }
    if (const auto* v = node.as_boolean()) return v->get();
    throw InvalidArgument("config: dates and times are not supported");
}

void insert_json(toml::table& table, const std::string& key, const json& value);

toml::array json_array_to_toml(const json& value) {
    toml::array out;
    for (const auto& item : value) {
        if (item.is_object()) {
            toml::table t;
            for (const auto& [k, v] : item.items()) insert_json(t, k, v);
            out.push_back(std::move(t));
        } else if (item.is_array()) {
            out.push_back(json_array_to_toml(item));
        } else if (item.is_boolean()) {
            out.push_back(item.get<bool>());
        } else if (item.is_number_integer()) {
            out.push_back(item.get<std::int64_t>());
        } else if (item.is_number()) {
            out.push_back(item.get<double>());
        } else if (item.is_string()) {
            out.push_back(item.get<std::string>());
        }
    }
    return out;
}

void insert_json(toml::table& table, const std::string& key, const json& value) {
    if (value.is_null()) return;
    if (value.is_object()) {
        toml::table t;
        for (const auto& [k, v] : value.items()) insert_json(t, k, v);
        table.insert(key, std::move(t));
    } else if (value.is_array()) {
        table.insert(key, json_array_to_toml(value));
    } else if (value.is_boolean()) {
        table.insert(key, value.get<bool>());
    } else if (value.is_number_integer()) {
        table.insert(key, value.get<std::int64_t>());
    } else if (value.is_number()) {
        table.insert(key, value.get<double>());
    } else {
        table.insert(key, value.get<std::string>());
    }
}

// Reads keys of one JSON object and rejects any key that was not read.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw InvalidArgument("config: [" + name_ + "] must be a table");
    }

    [[nodiscard]] bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void number(const std::string& key, double& out) {
        if (!has(key)) return;
        out = to_number(j_.at(key), key);
    }

    template <class T>
    void integer(const std::string& key, T& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) throw InvalidArgument(where(key) + " must be an integer");
        const auto x = v.get<std::int64_t>();
        if constexpr (std::is_unsigned_v<T>) {
            if (x < 0) throw InvalidArgument(where(key) + " must be >= 0");
        }
        out = static_cast<T>(x);
    }

    void string(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw InvalidArgument(where(key) + " must be a string");
        out = v.get<std::string>();
    }

    void boolean(const std::string& key, bool& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw InvalidArgument(where(key) + " must be a boolean");
        out = v.get<bool>();
    }

    void numbers(const std::string& key, std::vector<double>& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_array()) throw InvalidArgument(where(key) + " must be an array");
        out.clear();
        for (const auto& x : v) out.push_back(to_number(x, key));
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) throw InvalidArgument("config: unknown key '" + key + "' in [" + name_ + "]");
        }
    }

    [[nodiscard]] std::string where(const std::string& key) const { return "config: " + name_ + "." + key; }

    double to_number(const json& v, const std::string& key) const {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "inf" || s == "+inf") return kInf;
            if (s == "-inf") return -kInf;
        }
        throw InvalidArgument(where(key) + " must be a number");
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

json number_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

std::vector<StudentTComponent> components_from_json(const json& j, const std::string& name) {
    if (!j.is_array() || j.empty()) throw InvalidArgument("config: intensity." + name + " must be a non-empty array");
    std::vector<StudentTComponent> out;
    for (const auto& item : j) {
        Section s(item, "intensity." + name);
        StudentTComponent c;
        s.number("pi", c.pi);
        s.number("mu", c.mu);
        s.number("sigma", c.sigma);
        s.number("nu", c.nu);
        s.finish();
        out.push_back(c);
    }
    return out;
}

Vec3 vec3_from(const std::vector<double>& v, const std::string& what) {
    if (v.size() != 3) throw InvalidArgument("config: " + what + " needs 3 entries");
    return {v[0], v[1], v[2]};
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

PhantomSpec phantom_from_json(const json& j, bool& reference_grid, std::uint64_t default_seed) {
    Section s(j, "phantom");
    PhantomSpec p;
    p.seed = default_seed;
    std::string kind = "ellipse";
    s.string("kind", kind);
    if (kind == "ellipse") {
        p.kind = PhantomSpec::Kind::ellipse;
    } else if (kind == "cochlea") {
        p.kind = PhantomSpec::Kind::cochlea;
    } else {
        throw InvalidArgument("config: phantom.kind must be 'ellipse' or 'cochlea'");
    }
    std::vector<double> dims{128, 128, 1}, spacing{1, 1, 1}, origin{0, 0, 0}, center{0, 0, 0}, axes{1, 1};
    s.numbers("dims", dims);
    s.numbers("spacing", spacing);
    s.numbers("origin", origin);
    s.numbers("center", center);
    s.numbers("semi_axes", axes);
    s.number("angle", p.angle);
    s.numbers("theta", p.cochlea_theta);
    s.boolean("reference_grid", reference_grid);
    s.integer("seed", p.seed);
    if (dims.size() != 3) throw InvalidArgument("config: phantom.dims needs 3 entries");
    for (std::size_t i = 0; i < 3; ++i) {
        if (!(dims[i] >= 1.0) || dims[i] != std::floor(dims[i])) {
            throw InvalidArgument("config: phantom.dims must be positive integers");
        }
        p.grid.dims[i] = static_cast<std::size_t>(dims[i]);
    }
    p.grid.spacing = vec3_from(spacing, "phantom.spacing");
    p.grid.origin = vec3_from(origin, "phantom.origin");
    p.center = vec3_from(center, "phantom.center");
    if (axes.size() != 2) throw InvalidArgument("config: phantom.semi_axes needs 2 entries");
    p.semi_axis_a = axes[0];
    p.semi_axis_b = axes[1];
    for (const auto* name : {"background", "foreground"}) {
        if (!s.has(name)) continue;
        Section c(s.raw(name), std::string("phantom.") + name);
        auto& cls = std::string(name) == "background" ? p.background : p.foreground;
        c.number("mu", cls.mu);
        c.number("sigma", cls.sigma);
        c.finish();
    }
    s.finish();
    if (p.kind == PhantomSpec::Kind::cochlea && p.cochlea_theta.empty()) p.cochlea_theta = CochleaShape::default_parameters();
    return p;
}

json phantom_to_json(const PhantomSpec& p, bool reference_grid) {
    json j;
    j["kind"] = p.kind == PhantomSpec::Kind::ellipse ? "ellipse" : "cochlea";
    j["dims"] = json::array({p.grid.dims[0], p.grid.dims[1], p.grid.dims[2]});
    j["spacing"] = vec3_json(p.grid.spacing);
    j["origin"] = vec3_json(p.grid.origin);
    if (p.kind == PhantomSpec::Kind::ellipse) {
        j["center"] = vec3_json(p.center);
        j["semi_axes"] = json::array({p.semi_axis_a, p.semi_axis_b});
        j["angle"] = p.angle;
    } else {
        j["theta"] = p.cochlea_theta;
        j["reference_grid"] = reference_grid;
    }
    j["seed"] = p.seed;
    j["background"] = {{"mu", p.background.mu}, {"sigma", p.background.sigma}};
    j["foreground"] = {{"mu", p.foreground.mu}, {"sigma", p.foreground.sigma}};
    return j;
}

} // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.fit.initial_intensity = IntensityParams::cochlea_default();
    return c;
}

json toml_to_json(const std::string& toml_text, const std::string& source) {
    try {
        const toml::table table = toml::parse(toml_text, source);
        return node_to_json(table);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw InvalidArgument(msg.str());
    }
}

std::string json_to_toml(const json& document) {
    toml::table table;
    for (const auto& [k, v] : document.items()) insert_json(table, k, v);
    std::ostringstream out;
    out << toml::toml_formatter{table}
        << '\n';
    return out.str();
}

json load_document(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    if (path.extension() == ".toml") return toml_to_json(buf.str(), path.string());
    try {
        return json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

json intensity_to_json(const IntensityParams& params) {
    json j;
    for (int k = 0; k < 2; ++k) {
        json arr = json::array();
        for (const auto& c : params.classes[static_cast<std::size_t>(k)]) {
            arr.push_back({{"pi", c.pi}, {"mu", c.mu}, {"sigma", c.sigma}, {"nu", number_json(c.nu)}});
        }
        j[k == 0 ? "background" : "foreground"] = arr;
    }
    return j;
}

IntensityParams intensity_from_json(const json& j) {
    Section s(j, "intensity");
    IntensityParams p;
    if (!s.has("background") || !s.has("foreground")) {
        throw InvalidArgument("config: [intensity] needs background and foreground");
    }
    p.classes[0] = components_from_json(s.raw("background"), "background");
    p.classes[1] = components_from_json(s.raw("foreground"), "foreground");
    s.finish();
    p.validate();
    return p;
}

RunConfig run_config_from_json(const json& document) {
    RunConfig c = RunConfig::defaults();
    Section top(document, "root");
    top.integer("seed", c.seed);
    top.integer("threads", c.threads);
    c.fit.seed = c.seed;

    if (top.has("shape")) {
        Section s(top.raw("shape"), "shape");
        s.string("kind", c.shape.kind);
        s.integer("dimension", c.shape.dimension);
        s.numbers("initial", c.shape.initial);
        if (s.has("bounds")) {
            const auto& b = s.raw("bounds");
            if (!b.is_array()) throw InvalidArgument("config: shape.bounds must be an array of [lo, hi]");
            c.shape.bounds.clear();
            for (const auto& pair : b) {
                if (!pair.is_array() || pair.size() != 2) throw InvalidArgument("config: shape.bounds entries are [lo, hi]");
                c.shape.bounds.push_back({s.to_number(pair[0], "bounds"), s.to_number(pair[1], "bounds")});
            }
        }
        s.number("rho_base", c.shape.rho_base);
        s.number("rho_apex", c.shape.rho_apex);
        s.number("theta_max", c.shape.theta_max);
        s.integer("coarse_samples", c.shape.coarse_samples);
        s.finish();
        if (c.shape.kind != "cochlea" && c.shape.kind != "circle") {
            throw InvalidArgument("config: shape.kind must be 'cochlea' or 'circle'");
        }
    }
    if (top.has("fit")) {
        Section s(top.raw("fit"), "fit");
        s.number("l_ref", c.fit.l_ref);
        s.number("l_ref_hard", c.fit.l_ref_hard);
        s.number("outer_tolerance", c.fit.outer_tolerance);
        s.integer("max_outer_iterations", c.fit.max_outer_iterations);
        s.number("divergence_fraction", c.fit.divergence_fraction);
        s.finish();
    }
    if (top.has("ms")) {
        Section s(top.raw("ms"), "ms");
        s.number("tolerance", c.fit.ms.tolerance);
        s.integer("max_gradient_updates", c.fit.ms.max_gradient_updates);
        s.integer("max_newton_iterations", c.fit.ms.max_newton_iterations);
        s.integer("max_halvings", c.fit.ms.max_halvings);
        s.numbers("fd_steps", c.fit.ms.fd_steps);
        s.finish();
    }
    if (top.has("mi")) {
        Section s(top.raw("mi"), "mi");
        std::string mode = "fixed";
        s.string("nu_mode", mode);
        if (mode == "fixed") {
            c.fit.mi.nu_mode = NuMode::fixed;
        } else if (mode == "solve") {
            c.fit.mi.nu_mode = NuMode::solve;
        } else {
            throw InvalidArgument("config: mi.nu_mode must be 'fixed' or 'solve'");
        }
        s.integer("max_rounds", c.fit.mi.max_rounds);
        s.number("tolerance", c.fit.mi.tolerance);
        s.number("sigma_floor", c.fit.mi.sigma_floor);
        s.number("freeze_fraction", c.fit.mi.freeze_fraction);
        s.number("nu_lo", c.fit.mi.nu_lo);
        s.number("nu_hi", c.fit.mi.nu_hi);
        s.finish();
    }
    if (top.has("intensity")) c.fit.initial_intensity = intensity_from_json(top.raw("intensity"));
    if (top.has("prior")) {
        Section s(top.raw("prior"), "prior");
        if (s.has("covariance")) {
            const auto& m = s.raw("covariance");
            if (!m.is_array() || m.empty()) throw InvalidArgument("config: prior.covariance must be a matrix");
            const auto n = static_cast<Eigen::Index>(m.size());
            MatrixX cov(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto& row = m[static_cast<std::size_t>(i)];
                if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
                    throw InvalidArgument("config: prior.covariance must be square");
                }
                for (Eigen::Index k = 0; k < n; ++k) cov(i, k) = s.to_number(row[static_cast<std::size_t>(k)], "covariance");
            }
            c.fit.prior.covariance = cov;
        }
        std::vector<double> variances;
        s.numbers("variances", variances);
        if (!variances.empty()) {
            if (c.fit.prior.covariance) throw InvalidArgument("config: give prior.covariance or prior.variances, not both");
            c.fit.prior.covariance = to_vector(variances).asDiagonal().toDenseMatrix();
        }
        std::vector<double> mean;
        s.numbers("mean", mean);
        if (!mean.empty()) c.fit.prior.mean = to_vector(mean);
        s.finish();
    }
    if (top.has("posterior")) {
        Section s(top.raw("posterior"), "posterior");
        s.integer("samples", c.posterior_samples);
        s.finish();
    }
    if (top.has("sweep")) {
        Section s(top.raw("sweep"), "sweep");
        if (s.has("grid")) {
            const auto& g = s.raw("grid");
            if (g.is_string()) {
                c.sweep_grid = g.get<std::string>();
            } else if (g.is_array()) {
                std::string joined;
                for (const auto& v : g) joined += (joined.empty() ? "" : ",") + format_double(s.to_number(v, "grid"));
                c.sweep_grid = joined;
            } else {
                throw InvalidArgument("config: sweep.grid must be a string or an array");
            }
        }
        s.finish();
    }
    if (top.has("phantom")) c.phantom = phantom_from_json(top.raw("phantom"), c.phantom_reference_grid, c.seed);
    top.finish();
    c.fit.validate();
    return c;
}

json run_config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    json shape;
    shape["kind"] = c.shape.kind;
    if (c.shape.kind == "circle") shape["dimension"] = c.shape.dimension;
    if (!c.shape.initial.empty()) shape["initial"] = c.shape.initial;
    if (!c.shape.bounds.empty()) shape["bounds"] = c.shape.bounds;
    if (c.shape.kind == "cochlea") {
        shape["rho_base"] = c.shape.rho_base;
        shape["rho_apex"] = c.shape.rho_apex;
        shape["theta_max"] = c.shape.theta_max > 0.0 ? c.shape.theta_max : CochleaConstants{}.theta_max;
        shape["coarse_samples"] = c.shape.coarse_samples;
    }
    j["shape"] = shape;
    j["fit"] = {{"l_ref", c.fit.l_ref},
                {"l_ref_hard", c.fit.l_ref_hard},
                {"outer_tolerance", number_json(c.fit.outer_tolerance)},
                {"max_outer_iterations", c.fit.max_outer_iterations},
                {"divergence_fraction", c.fit.divergence_fraction}};
    j["ms"] = {{"tolerance", c.fit.ms.tolerance},
               {"max_gradient_updates", c.fit.ms.max_gradient_updates},
               {"max_newton_iterations", c.fit.ms.max_newton_iterations},
               {"max_halvings", c.fit.ms.max_halvings},
               {"fd_steps", c.fit.ms.fd_steps}};
    j["mi"] = {{"nu_mode", c.fit.mi.nu_mode == NuMode::fixed ? "fixed" : "solve"},
               {"max_rounds", c.fit.mi.max_rounds},
               {"tolerance", c.fit.mi.tolerance},
               {"sigma_floor", c.fit.mi.sigma_floor},
               {"freeze_fraction", c.fit.mi.freeze_fraction},
               {"nu_lo", c.fit.mi.nu_lo},
               {"nu_hi", c.fit.mi.nu_hi}};
    j["intensity"] = intensity_to_json(c.fit.initial_intensity);
    if (!c.fit.prior.is_uniform()) {
        json prior;
        const auto& cov = *c.fit.prior.covariance;
        json rows = json::array();
        for (Eigen::Index i = 0; i < cov.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index k = 0; k < cov.cols(); ++k) row.push_back(cov(i, k));
            rows.push_back(row);
        }
        prior["covariance"] = rows;
        if (c.fit.prior.mean) {
            const auto m = as_span(*c.fit.prior.mean);
            prior["mean"] = std::vector<double>(m.begin(), m.end());
        }
        j["prior"] = prior;
    }
    j["posterior"] = {{"samples", c.posterior_samples}};
    j["sweep"] = {{"grid", c.sweep_grid}};
    if (c.phantom) j["phantom"] = phantom_to_json(*c.phantom, c.phantom_reference_grid);
    return j;
}

RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(load_document(path)); }

std::unique_ptr<ShapeFunction> make_shape(const ShapeConfig& config, const GridGeometry& grid) {
    Bounds bounds;
    for (const auto& b : config.bounds) bounds.push_back({b[0], b[1]});
    if (config.kind == "cochlea") {
        CochleaOptions opts;
        opts.cross_section.rho_base = config.rho_base;
        opts.cross_section.rho_apex = config.rho_apex;
        if (config.theta_max > 0.0) opts.constants.theta_max = config.theta_max;
        opts.coarse_samples = config.coarse_samples;
        if (!bounds.empty()) opts.bounds = bounds;
        return std::make_unique<CochleaShape>(opts);
    }
    if (config.kind == "circle") {
        if (config.dimension != 2 && config.dimension != 3) throw InvalidArgument("circle dimension must be 2 or 3");
        if (bounds.empty()) {
            grid.validate();
            double extent = 0.0;
            double min_spacing = kInf;
            for (int axis = 0; axis < config.dimension; ++axis) {
                const double lo = grid.origin[axis];
                const double hi = lo + static_cast<double>(grid.dims[static_cast<std::size_t>(axis)] - 1) * grid.spacing[axis];
                bounds.push_back({lo, hi});
                extent = std::max(extent, hi - lo);
                min_spacing = std::min(min_spacing, grid.spacing[axis]);
            }
            bounds.push_back({min_spacing, std::max(extent, 2.0 * min_spacing)});
        }
        return std::make_unique<CircleShape>(config.dimension, bounds);
    }
    throw InvalidArgument("unknown shape kind '" + config.kind + "'");
}

std::vector<double> initial_parameters(const ShapeConfig& config, const ShapeFunction& shape,
                                       const GridGeometry& grid) {
    if (!config.initial.empty()) return config.initial;
    if (config.kind == "cochlea") return CochleaShape::default_parameters();
    std::vector<double> theta;
    double extent = kInf;
    for (int axis = 0; axis < config.dimension; ++axis) {
        const double len = static_cast<double>(grid.dims[static_cast<std::size_t>(axis)] - 1) * grid.spacing[axis];
        theta.push_back(grid.origin[axis] + 0.5 * len);
        extent = std::min(extent, len);
    }
    theta.push_back(0.25 * extent);
    const VectorX clamped = clamp_to(to_vector(theta), shape.bounds());
    return {clamped.data(), clamped.data() + clamped.size()};
}

std::string trace_csv(const FitResult& result, const std::vector<std::string>& parameter_names) {
    std::ostringstream out;
    out << "iteration,log_joint";
    for (const auto& name : parameter_names) out << ',' << name;
    out << ",step_norm";
    const std::size_t m = result.trace.empty() ? 0 : result.trace.front().foreground.size();
    for (std::size_t i = 0; i < m; ++i) out << ",fg_mu_" << i << ",fg_sigma_" << i;
    out << '\n';
    for (const auto& row : result.trace) {
        out << row.iteration << ',' << format_double(row.log_joint);
        for (double v : row.theta) out << ',' << format_double(v);
        out << ',' << format_double(row.step_norm);
        for (const auto& c : row.foreground) out << ',' << format_double(c.mu) << ',' << format_double(c.sigma);
        out << '\n';
    }
    return out.str();
}

std::string ms_report_csv(const FitResult& result) {
    std::ostringstream out;
    out << "cycle,update,step,objective,exact_before,exact_after\n";
    for (std::size_t c = 0; c < result.ms_reports.size(); ++c) {
        const auto& iterations = result.ms_reports[c].iterations;
        for (std::size_t u = 0; u < iterations.size(); ++u) {
            const auto& it = iterations[u];
            for (std::size_t s = 0; s < it.objective.size(); ++s) {
                out << c + 1 << ',' << u << ',' << s << ',' << format_double(it.objective[s]) << ','
                    << format_double(it.exact_objective_before) << ',' << format_double(it.exact_objective_after)
                    << '\n';
            }
        }
    }
    return out.str();
}

json fit_to_json(const FitResult& result, const ShapeFunction& shape, const RunConfig& config) {
    const auto names = shape.parameter_names();
    json j;
    j["shape"] = shape.kind();
    json theta = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) theta[names[i]] = result.shape.theta[static_cast<Eigen::Index>(i)];
    j["theta"] = theta;
    j["parameter_names"] = names;
    const auto& cov = result.shape.covariance;
    json rows = json::array();
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < cov.cols(); ++k) row.push_back(cov(i, k));
        rows.push_back(row);
    }
    j["covariance"] = rows;
    j["intensity"] = intensity_to_json(result.intensity);
    j["l_ref"] = config.fit.l_ref;
    j["l_ref_hard"] = config.fit.l_ref_hard;
    j["converged"] = result.converged;
    j["cycles"] = result.trace.size() - 1;
    j["log_joint"] = result.trace.back().log_joint;
    j["warnings"] = result.warnings;
    RunConfig stored = config;
    stored.threads = 0; // outputs must not depend on the thread count
    j["config"] = run_config_to_json(stored);
    return j;
}

} // namespace lsm
