#include "lsm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "lsm/parallel.hpp"

namespace lsm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string voxel_name(const GridGeometry& grid, std::size_t n) {
    const auto c = grid.coords(n);
    return "(" + std::to_string(c[0]) + ", " + std::to_string(c[1]) + ", " + std::to_string(c[2]) + ")";
}

void check_l_ref(double l_ref) {
    if (!(l_ref > 0.0) || !std::isfinite(l_ref)) throw InvalidArgument("l_ref must be finite and > 0");
}

void check_sizes(const ImageVolume& image, std::size_t n) {
    if (image.size() != n) throw InvalidArgument("shape values and image differ in size");
}

// log(e^a + e^b) without overflow.
double log_add(double a, double b) {
    const double m = std::max(a, b);
    if (m == -kInf) return -kInf;
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

double relative_norm(const VectorX& step, const VectorX& theta) {
    return step.norm() / std::max(theta.norm(), 1.0);
}

// Scaled shape values v = S / l_ref and gradient d = dS/dtheta / l_ref.
struct Linearization {
    std::vector<double> v;
    MatrixX d;
};

Linearization linearize(const ShapeFunction& shape, const VectorX& theta, std::span<const Vec3> points,
                        std::span<const double> steps, double l_ref) {
    Linearization lin;
    lin.d = shape_gradient_matrix(shape, as_span(theta), points, steps, &lin.v) / l_ref;
    for (auto& x : lin.v) x /= l_ref;
    return lin;
}

// Cross-entropy of U against sigmoid(v + d' delta) over all voxels.
double linear_objective(std::span<const double> u, const Linearization& lin, const VectorX& delta) {
    const VectorX shift = lin.d.transpose() * delta;
    return parallel_block_reduce(u.size(), 0.0, [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t n = b; n < e; ++n) {
            const double v = lin.v[n] + shift[static_cast<Eigen::Index>(n)];
            s -= u[n] * log_sigmoid(v) + (1.0 - u[n]) * log_sigmoid(-v);
        }
        return s;
    });
}

// Gradient g = -d (u - mu) and data curvature d diag(mu (1 - mu)) d'.
void gradient_and_curvature(std::span<const double> u, const Linearization& lin, const VectorX& delta,
                            VectorX& g, MatrixX& h) {
    const auto p = lin.d.rows();
    const VectorX shift = lin.d.transpose() * delta;
    struct Acc {
        VectorX g;
        MatrixX h;
        Acc operator+(const Acc& o) const { return {g + o.g, h + o.h}; }
    };
    const Acc zero{VectorX::Zero(p), MatrixX::Zero(p, p)};
    const Acc total = parallel_block_reduce(u.size(), zero, [&](std::size_t b, std::size_t e) {
        const auto len = static_cast<Eigen::Index>(e - b);
        const auto first = static_cast<Eigen::Index>(b);
        VectorX resid(len), w(len);
        for (Eigen::Index i = 0; i < len; ++i) {
            const auto n = static_cast<std::size_t>(first + i);
            const double mu = sigmoid(lin.v[n] + shift[first + i]);
            resid[i] = u[n] - mu;
            w[i] = mu * (1.0 - mu);
        }
        const auto block = lin.d.middleCols(first, len);
        Acc a;
        a.g = -(block * resid);
        a.h = block * w.asDiagonal() * block.transpose();
        return a;
    });
    g = total.g;
    h = total.h;
}

// Solves h x = rhs, adding Levenberg damping when h is not positive definite.
VectorX damped_solve(const MatrixX& h, const VectorX& rhs, bool& damped) {
    Eigen::LLT<MatrixX> llt(h);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
    damped = true;
    const auto p = h.rows();
    double lambda = 1e-10 * std::max(h.diagonal().cwiseAbs().maxCoeff(), 1.0);
    for (int attempt = 0; attempt < 30; ++attempt, lambda *= 10.0) {
        llt.compute(h + lambda * MatrixX::Identity(p, p));
        if (llt.info() == Eigen::Success) return llt.solve(rhs);
    }
    throw NumericalError("curvature matrix could not be regularized");
}

struct MsOutcome {
    ShapePosterior posterior;
    std::vector<double> values; // S(theta*, x_n), unscaled
};

MsOutcome run_ms_step(const ImageVolume& image, ResponsibilityField& u, const ShapeFunction& shape,
                      std::span<const double> theta0, const ShapePrior& prior, double l_ref,
                      const IntensityParams& intensity, const MsOptions& options, MsReport* report) {
    check_l_ref(l_ref);
    shape.check_parameters(theta0);
    if (u.grid.size() != image.grid.size()) throw InvalidArgument("responsibilities and image differ in size");
    const auto& bounds = shape.bounds();
    const auto p = static_cast<Eigen::Index>(shape.parameter_count());
    const auto steps = options.fd_steps.empty() ? default_fd_steps(bounds) : options.fd_steps;
    if (steps.size() != static_cast<std::size_t>(p)) throw InvalidArgument("fd_steps has the wrong size");
    const MatrixX precision = prior.precision(static_cast<std::size_t>(p));
    const auto points = image.grid.points();

    MsReport local_report;
    MsReport& rep = report ? *report : local_report;
    rep = {};

    VectorX theta = to_vector(theta0);
    Linearization lin = linearize(shape, theta, points, steps, l_ref);
    bool stop = false;
    for (int outer = 0; outer < options.max_gradient_updates && !stop; ++outer) {
        MsIteration it;
        VectorX delta = VectorX::Zero(p);
        double j_lin = linear_objective(u.data, lin, delta);
        it.objective.push_back(j_lin);
        it.exact_objective_before = j_lin;

        for (int inner = 0; inner < options.max_newton_iterations; ++inner) {
            VectorX g;
            MatrixX h;
            gradient_and_curvature(u.data, lin, delta, g, h);
            g += precision * delta;
            h += precision;
            const VectorX newton = -damped_solve(h, g, it.damped);

            // Backtrack on the linearized objective, clipping to the bounds.
            double scale = 1.0;
            bool accepted = false;
            VectorX candidate;
            double j_candidate = 0.0;
            for (int halving = 0; halving <= options.max_halvings; ++halving, scale *= 0.5) {
                candidate = clamp_to(theta + delta + scale * newton, bounds) - theta;
                j_candidate = linear_objective(u.data, lin, candidate) + 0.5 * candidate.dot(precision * candidate);
                if (j_candidate <= j_lin) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            const VectorX change = candidate - delta;
            delta = candidate;
            j_lin = j_candidate;
            it.objective.push_back(j_lin);
            if (relative_norm(change, theta + delta) < options.tolerance) break;
        }

        // Safeguard on the exact (non-linearized) objective.
        const double j_exact_before = linear_objective(u.data, lin, VectorX::Zero(p));
        std::vector<double> trial(points.size());
        double j_exact_after = j_exact_before;
        bool improved = false;
        for (int halving = 0; halving <= options.max_halvings && delta.norm() > 0.0; ++halving) {
            const VectorX next = clamp_to(theta + delta, bounds);
            shape.evaluate_many(as_span(next), points, trial);
            for (auto& x : trial) x /= l_ref;
            const double j = ms_objective(u.data, trial) + 0.5 * delta.dot(precision * delta);
            if (j <= j_exact_before) {
                j_exact_after = j;
                improved = true;
                break;
            }
            ++it.exact_halvings;
            delta *= 0.5;
        }
        it.exact_objective_before = j_exact_before;
        if (!improved) {
            it.exact_objective_after = j_exact_before;
            it.step_norm = 0.0;
            rep.iterations.push_back(std::move(it));
            rep.converged = true;
            break;
        }
        it.exact_objective_after = j_exact_after;
        const VectorX next = clamp_to(theta + delta, bounds);
        const VectorX change = next - theta;
        it.step_norm = change.norm();
        stop = relative_norm(change, next) < options.tolerance;
        rep.converged = stop;
        theta = next;
        if (options.refresh_responsibilities) {
            std::vector<double> unscaled(trial.size());
            for (std::size_t n = 0; n < unscaled.size(); ++n) unscaled[n] = trial[n] * l_ref;
            u = e_step_from_values(image, unscaled, intensity, l_ref);
        }
        rep.iterations.push_back(std::move(it));
        lin = linearize(shape, theta, points, steps, l_ref);
    }
    if (!rep.converged) rep.warnings.push_back("MS-step reached the iteration limit before converging");

    // Laplace approximation at theta*.
    VectorX g;
    MatrixX h;
    gradient_and_curvature(u.data, lin, VectorX::Zero(p), g, h);
    h += precision;
    MsOutcome out;
    out.posterior.theta = theta;
    if (laplace_covariance(h, out.posterior.covariance) > 0.0) {
        rep.warnings.push_back("curvature not positive definite; Levenberg damping added");
    }
    out.values = std::move(lin.v);
    for (auto& x : out.values) x *= l_ref;
    return out;
}

} // namespace

MatrixX ShapePrior::precision(std::size_t dim) const {
    const auto p = static_cast<Eigen::Index>(dim);
    if (!covariance) return MatrixX::Zero(p, p);
    if (covariance->rows() != p || covariance->cols() != p) throw InvalidArgument("prior covariance has the wrong size");
    if (!covariance->isApprox(covariance->transpose(), 1e-12)) throw InvalidArgument("prior covariance is not symmetric");
    Eigen::LLT<MatrixX> llt(*covariance);
    if (llt.info() != Eigen::Success) throw InvalidArgument("prior covariance is not positive definite");
    return llt.solve(MatrixX::Identity(p, p));
}

double ShapePrior::log_density(const VectorX& theta) const {
    if (!covariance) return 0.0;
    const auto p = theta.size();
    const MatrixX prec = precision(static_cast<std::size_t>(p));
    const VectorX centered = mean ? VectorX(theta - *mean) : theta;
    Eigen::LLT<MatrixX> llt(*covariance);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * centered.dot(prec * centered) - 0.5 * log_det -
           0.5 * static_cast<double>(p) * std::log(2.0 * std::numbers::pi);
}

double laplace_covariance(const MatrixX& curvature, MatrixX& covariance) {
    const auto p = curvature.rows();
    Eigen::LLT<MatrixX> llt(curvature);
    if (llt.info() == Eigen::Success) {
        covariance = llt.solve(MatrixX::Identity(p, p));
        covariance = 0.5 * (covariance + covariance.transpose()).eval();
        return 0.0;
    }
    double lambda = 1e-10 * std::max(curvature.diagonal().cwiseAbs().maxCoeff(), 1.0);
    for (int attempt = 0; attempt < 30; ++attempt, lambda *= 10.0) {
        llt.compute(curvature + lambda * MatrixX::Identity(p, p));
        if (llt.info() == Eigen::Success) {
            covariance = llt.solve(MatrixX::Identity(p, p));
            covariance = 0.5 * (covariance + covariance.transpose()).eval();
            return lambda;
        }
    }
    throw NumericalError("curvature matrix could not be regularized");
}

ResponsibilityField e_step_from_values(const ImageVolume& image, std::span<const double> shape_values,
                                       const IntensityParams& intensity, double l_ref) {
    check_l_ref(l_ref);
    check_sizes(image, shape_values.size());
    const PreparedIntensityModel model(intensity);
    ResponsibilityField u(image.grid);
    parallel_for(image.size(), [&](std::size_t n) {
        const double l1 = model.class_log_likelihood(image[n], 1);
        const double l0 = model.class_log_likelihood(image[n], 0);
        if (l1 == -kInf && l0 == -kInf) {
            throw NumericalError("both class likelihoods vanish at voxel " + voxel_name(image.grid, n));
        }
        const double r = l1 - l0 + shape_values[n] / l_ref;
        if (std::isnan(r)) throw NumericalError("posterior is undefined at voxel " + voxel_name(image.grid, n));
        u[n] = sigmoid(r);
    });
    return u;
}

ResponsibilityField e_step(const ImageVolume& image, const ShapeFunction& shape, std::span<const double> theta,
                           const IntensityParams& intensity, double l_ref) {
    return e_step_from_values(image, shape_values(shape, theta, image.grid), intensity, l_ref);
}

double log_joint_from_values(const ImageVolume& image, std::span<const double> shape_values,
                             const IntensityParams& intensity, double l_ref) {
    check_l_ref(l_ref);
    check_sizes(image, shape_values.size());
    const PreparedIntensityModel model(intensity);
    return parallel_block_reduce(image.size(), 0.0, [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t n = b; n < e; ++n) {
            const double v = shape_values[n] / l_ref;
            s += log_add(model.class_log_likelihood(image[n], 0) + log_sigmoid(-v),
                         model.class_log_likelihood(image[n], 1) + log_sigmoid(v));
        }
        return s;
    });
}

double augmented_criterion(const ImageVolume& image, const ResponsibilityField& u, std::span<const double> shape_values,
                           const IntensityParams& intensity, double l_ref) {
    check_l_ref(l_ref);
    check_sizes(image, shape_values.size());
    check_sizes(image, u.size());
    const PreparedIntensityModel model(intensity);
    const auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    return parallel_block_reduce(image.size(), 0.0, [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t n = b; n < e; ++n) {
            const double v = shape_values[n] / l_ref;
            const double un = u[n];
            if (un > 0.0) s += un * (model.class_log_likelihood(image[n], 1) + log_sigmoid(v));
            if (un < 1.0) s += (1.0 - un) * (model.class_log_likelihood(image[n], 0) + log_sigmoid(-v));
            s -= xlogx(un) + xlogx(1.0 - un);
        }
        return s;
    });
}

double log_joint(const ImageVolume& image, const ShapeFunction& shape, std::span<const double> theta,
                 const IntensityParams& intensity, double l_ref, const ShapePrior& prior) {
    return log_joint_from_values(image, shape_values(shape, theta, image.grid), intensity, l_ref) +
           prior.log_density(to_vector(theta));
}

double ms_objective(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw InvalidArgument("ms_objective: size mismatch");
    return parallel_block_reduce(u.size(), 0.0, [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t n = b; n < e; ++n) s -= u[n] * log_sigmoid(v[n]) + (1.0 - u[n]) * log_sigmoid(-v[n]);
        return s;
    });
}

MsDerivatives ms_derivatives(const ShapeFunction& shape, std::span<const double> theta, const GridGeometry& grid,
                             std::span<const double> u, double l_ref, const ShapePrior& prior,
                             std::span<const double> fd_steps) {
    check_l_ref(l_ref);
    shape.check_parameters(theta);
    if (u.size() != grid.size()) throw InvalidArgument("responsibilities and grid differ in size");
    const auto steps = fd_steps.empty() ? default_fd_steps(shape.bounds()) : std::vector<double>(fd_steps.begin(), fd_steps.end());
    const auto points = grid.points();
    const auto lin = linearize(shape, to_vector(theta), points, steps, l_ref);
    const auto p = static_cast<Eigen::Index>(shape.parameter_count());
    MsDerivatives out;
    gradient_and_curvature(u, lin, VectorX::Zero(p), out.gradient, out.curvature);
    out.curvature += prior.precision(shape.parameter_count());
    out.objective = linear_objective(u, lin, VectorX::Zero(p));
    return out;
}

ShapePosterior ms_step(const ImageVolume& image, ResponsibilityField& u, const ShapeFunction& shape,
                       std::span<const double> theta, const ShapePrior& prior, double l_ref,
                       const IntensityParams& intensity, const MsOptions& options, MsReport* report) {
    return run_ms_step(image, u, shape, theta, prior, l_ref, intensity, options, report).posterior;
}

void FitConfig::validate() const {
    check_l_ref(l_ref);
    check_l_ref(l_ref_hard);
    if (!(outer_tolerance > 0.0)) throw InvalidArgument("outer tolerance must be > 0");
    if (!(ms.tolerance > 0.0)) throw InvalidArgument("MS tolerance must be > 0");
    if (!(mi.tolerance > 0.0)) throw InvalidArgument("MI tolerance must be > 0");
    if (max_outer_iterations < 1) throw InvalidArgument("max_outer_iterations must be >= 1");
    if (!(divergence_fraction > 0.0)) throw InvalidArgument("divergence_fraction must be > 0");
    initial_intensity.validate();
}

FitResult fit(const ImageVolume& image, const ShapeFunction& shape, const FitConfig& config) {
    config.validate();
    image.grid.validate();
    for (std::size_t n = 0; n < image.size(); ++n) {
        if (!std::isfinite(image[n])) throw InvalidArgument("image is not finite at voxel " + voxel_name(image.grid, n));
    }
    if (config.initial_shape.size() != shape.parameter_count()) {
        throw InvalidArgument("initial shape parameters have the wrong size");
    }
    shape.check_parameters(config.initial_shape);

    ShapePrior prior = config.prior;
    if (!prior.is_uniform() && !prior.mean) prior.mean = to_vector(config.initial_shape);

    FitResult result;
    VectorX theta = to_vector(config.initial_shape);
    IntensityParams intensity = config.initial_intensity;
    std::vector<double> values = shape_values(shape, as_span(theta), image.grid);
    ResponsibilityField u = e_step_from_values(image, values, intensity, config.l_ref);

    const auto joint = [&] {
        return log_joint_from_values(image, values, intensity, config.l_ref) + prior.log_density(theta);
    };
    const auto make_row = [&](int iteration, double lj, double step, double change) {
        TraceRow row;
        row.iteration = iteration;
        row.log_joint = lj;
        row.theta.assign(theta.data(), theta.data() + theta.size());
        row.step_norm = step;
        row.foreground = intensity.foreground();
        row.foreground_change = change;
        return row;
    };

    const auto warn = [&](int cycle, const std::string& w) {
        const auto text = "cycle " + std::to_string(cycle) + ": " + w;
        if (std::find(result.warnings.begin(), result.warnings.end(), text) == result.warnings.end()) {
            result.warnings.push_back(text);
        }
    };

    double lo = joint();
    double hi = lo;
    result.trace.push_back(make_row(0, lo, 0.0, 0.0));

    for (int cycle = 1; cycle <= config.max_outer_iterations; ++cycle) {
        const IntensityParams before = intensity;
        const double previous = result.trace.back().log_joint;

        MsReport ms_report;
        auto ms = run_ms_step(image, u, shape, as_span(theta), prior, config.l_ref, intensity, config.ms, &ms_report);
        const double step = (ms.posterior.theta - theta).norm();
        theta = ms.posterior.theta;
        result.shape = ms.posterior;
        values = std::move(ms.values);
        for (const auto& w : ms_report.warnings) warn(cycle, w);
        result.ms_reports.push_back(std::move(ms_report));

        u = e_step_from_values(image, values, intensity, config.l_ref);
        MiStepReport mi_report;
        intensity = mi_step(image.data, u.data, intensity, config.mi, &mi_report);
        for (const auto& w : mi_report.warnings) warn(cycle, w);
        result.mi_reports.push_back(std::move(mi_report));
        u = e_step_from_values(image, values, intensity, config.l_ref);

        const double lj = joint();
        const double change = relative_foreground_change(before, intensity);
        result.trace.push_back(make_row(cycle, lj, step, change));

        const double drop = previous - lj;
        if (hi > lo && drop > config.divergence_fraction * (hi - lo) && drop > 1e-6 * std::abs(previous)) {
            throw NumericalError("fit diverged at cycle " + std::to_string(cycle) + ": log-joint fell from " +
                                 std::to_string(previous) + " to " + std::to_string(lj));
        }
        lo = std::min(lo, lj);
        hi = std::max(hi, lj);

        if (change < config.outer_tolerance) {
            result.converged = true;
            break;
        }
    }
    if (!result.converged) result.warnings.push_back("outer loop reached the iteration limit");
    result.intensity = intensity;
    result.posterior = std::move(u);
    return result;
}

BinaryMask hard_segmentation(const FieldVolume& field, double threshold) {
    BinaryMask mask(field.grid);
    for (std::size_t n = 0; n < field.size(); ++n) mask[n] = field[n] >= threshold ? 1 : 0;
    return mask;
}

BinaryMask segmented_region(const ImageVolume& image, const ShapeFunction& shape, std::span<const double> theta,
                            const IntensityParams& intensity, double l_ref_hard) {
    return hard_segmentation(e_step(image, shape, theta, intensity, l_ref_hard), 0.5);
}

BinaryMask segmented_shape(const ShapeFunction& shape, std::span<const double> theta, const GridGeometry& grid) {
    const auto values = shape_values(shape, theta, grid);
    BinaryMask mask(grid);
    for (std::size_t n = 0; n < values.size(); ++n) mask[n] = values[n] >= 0.0 ? 1 : 0;
    return mask;
}

} // namespace lsm
