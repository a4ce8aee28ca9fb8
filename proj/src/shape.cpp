#include "lsm/shape.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "lsm/parallel.hpp"

namespace lsm {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double logistic_prior(double s, double l_ref) {
    if (!(l_ref > 0.0)) throw InvalidArgument("l_ref must be > 0");
    if (!std::isfinite(s)) throw InvalidArgument("shape value must be finite");
    return sigmoid(s / l_ref);
}

double expected_posterior(double delta) {
    if (std::abs(delta) < 1e-3) {
        const double d2 = delta * delta;
        return 0.5 + delta / 6.0 - delta * d2 / 180.0;
    }
    if (delta > 0.0) {
        const double e = std::exp(-delta);
        const double den = std::expm1(-delta);
        return (1.0 - delta * e - e) / (den * den);
    }
    // Same expression multiplied through by e^{2 delta}, so nothing overflows.
    const double e = std::exp(delta);
    const double den = std::expm1(delta);
    return (e * e - delta * e - e) / (den * den);
}

// ---------------------------------------------------------------------------

std::vector<std::string> ShapeFunction::parameter_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < parameter_count(); ++i) names.push_back("p" + std::to_string(i));
    return names;
}

void ShapeFunction::evaluate_many(std::span<const double> theta, std::span<const Vec3> points,
                                  std::span<double> out) const {
    parallel_for(points.size(), [&](std::size_t n) { out[n] = evaluate(theta, points[n]); });
}

bool ShapeFunction::parameter_gradient(std::span<const double>, const Vec3&, std::span<double>) const {
    return false;
}

void ShapeFunction::check_parameters(std::span<const double> theta) const {
    if (theta.size() != parameter_count()) {
        throw InvalidArgument(kind() + " shape expects " + std::to_string(parameter_count()) + " parameters, got " +
                              std::to_string(theta.size()));
    }
    const auto& b = bounds();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (!std::isfinite(theta[i]) || !b[i].contains(theta[i])) {
            throw InvalidArgument("parameter " + parameter_names()[i] + " = " + std::to_string(theta[i]) +
                                  " outside [" + std::to_string(b[i].lo) + ", " + std::to_string(b[i].hi) + "]");
        }
    }
}

// ---------------------------------------------------------------------------

RigidShape::RigidShape(std::size_t deformable_count, Bounds bounds)
    : bounds_(std::move(bounds)), layout_{deformable_count} {
    if (bounds_.size() != layout_.parameter_count()) throw InvalidArgument("rigid shape bounds have wrong arity");
}

Vec3 RigidShape::local_spatial_gradient(std::span<const double> deformable, const Vec3& y) const {
    constexpr double h = 1e-5;
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
        Vec3 p = y, m = y;
        p[a] += h;
        m[a] -= h;
        g[a] = (local_value(deformable, p) - local_value(deformable, m)) / (2.0 * h);
    }
    return g;
}

void RigidShape::local_values(std::span<const double> deformable, std::span<const Vec3> ys,
                              std::span<double> values) const {
    parallel_for(ys.size(), [&](std::size_t n) { values[n] = local_value(deformable, ys[n]); });
}

void RigidShape::local_values_and_gradients(std::span<const double> deformable, std::span<const Vec3> ys,
                                            std::span<double> values, std::span<Vec3> gradients) const {
    parallel_for(ys.size(), [&](std::size_t n) {
        values[n] = local_value(deformable, ys[n]);
        if (!gradients.empty()) gradients[n] = local_spatial_gradient(deformable, ys[n]);
    });
}

std::vector<Vec3> RigidShape::transform_points(std::span<const double> theta, std::span<const Vec3> points) const {
    const auto& L = layout_;
    const Vec3 r(theta[L.rotation_offset()], theta[L.rotation_offset() + 1], theta[L.rotation_offset() + 2]);
    const Vec3 t(theta[L.translation_offset()], theta[L.translation_offset() + 1], theta[L.translation_offset() + 2]);
    const Mat3 R = rotation_matrix(r);
    std::vector<Vec3> ys(points.size());
    parallel_for(points.size(), [&](std::size_t n) { ys[n] = R * points[n] + t; });
    return ys;
}

double RigidShape::evaluate(std::span<const double> theta, const Vec3& x) const {
    const auto& L = layout_;
    const Vec3 r(theta[L.rotation_offset()], theta[L.rotation_offset() + 1], theta[L.rotation_offset() + 2]);
    const Vec3 t(theta[L.translation_offset()], theta[L.translation_offset() + 1], theta[L.translation_offset() + 2]);
    return local_value(theta.first(L.deformable_count), rotation_matrix(r) * x + t);
}

void RigidShape::evaluate_many(std::span<const double> theta, std::span<const Vec3> points,
                               std::span<double> out) const {
    const auto ys = transform_points(theta, points);
    local_values(theta.first(layout_.deformable_count), ys, out);
}

// ---------------------------------------------------------------------------

Mat3 skew(const Vec3& a) {
    Mat3 s;
    s << 0.0, -a.z(), a.y(), a.z(), 0.0, -a.x(), -a.y(), a.x(), 0.0;
    return s;
}

Mat3 rotation_matrix(const Vec3& r) {
    const double angle = r.norm();
    if (angle == 0.0) return Mat3::Identity();
    return Eigen::AngleAxisd(angle, r / angle).toRotationMatrix();
}

Mat3 rotation_jacobian(const Vec3& r, const Vec3& x) {
    const double n2 = r.squaredNorm();
    if (std::sqrt(n2) < kSmallAngle) return -skew(x);
    const Mat3 R = rotation_matrix(r);
    return -R * skew(x) * (r * r.transpose() + (R.transpose() - Mat3::Identity()) * skew(r)) / n2;
}

std::vector<double> default_fd_steps(const Bounds& bounds) {
    std::vector<double> steps;
    steps.reserve(bounds.size());
    for (const auto& b : bounds) steps.push_back(1e-3 * b.width());
    return steps;
}

VectorX fd_gradient(const ShapeFunction& shape, std::span<const double> theta, const Vec3& x,
                    std::span<const double> steps) {
    const std::size_t p = shape.parameter_count();
    if (theta.size() != p || steps.size() != p) throw InvalidArgument("fd_gradient: arity mismatch");
    const auto& bounds = shape.bounds();
    VectorX grad(static_cast<Eigen::Index>(p));
    std::vector<double> probe(theta.begin(), theta.end());
    for (std::size_t i = 0; i < p; ++i) {
        if (!(steps[i] > 0.0)) throw InvalidArgument("finite-difference step must be > 0");
        const double hi = std::min(steps[i], bounds[i].hi - theta[i]);
        const double lo = std::min(steps[i], theta[i] - bounds[i].lo);
        if (!(hi + lo > 0.0)) throw InvalidArgument("finite-difference interval collapsed for parameter " +
                                                    std::to_string(i));
        probe[i] = theta[i] + hi;
        const double fp = shape.evaluate(probe, x);
        probe[i] = theta[i] - lo;
        const double fm = shape.evaluate(probe, x);
        probe[i] = theta[i];
        grad[static_cast<Eigen::Index>(i)] = (fp - fm) / (hi + lo);
    }
    return grad;
}

RigidGradient rigid_gradient(const RigidShape& shape, std::span<const double> deformable, const Vec3& r,
                             const Vec3& t, const Vec3& x) {
    const Vec3 y = rotation_matrix(r) * x + t;
    const Vec3 g = shape.local_spatial_gradient(deformable, y);
    RigidGradient out;
    out.head<3>() = rotation_jacobian(r, x).transpose() * g;
    out.tail<3>() = g;
    return out;
}

MatrixX shape_gradient_matrix(const ShapeFunction& shape, std::span<const double> theta,
                              std::span<const Vec3> points, std::span<const double> steps,
                              std::vector<double>* values) {
    const std::size_t p = shape.parameter_count();
    const std::size_t n = points.size();
    if (theta.size() != p || steps.size() != p) throw InvalidArgument("shape_gradient_matrix: arity mismatch");
    MatrixX d(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));

    {
        std::vector<double> probe(p);
        if (n > 0 && shape.parameter_gradient(theta, points[0], probe)) {
            parallel_for(n, [&](std::size_t j) {
                std::vector<double> g(p);
                shape.parameter_gradient(theta, points[j], g);
                for (std::size_t i = 0; i < p; ++i) d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[i];
            });
            if (values) {
                values->resize(n);
                shape.evaluate_many(theta, points, *values);
            }
            return d;
        }
    }

    std::vector<bool> done(p, false);
    if (const auto layout = shape.rigid_layout()) {
        const auto& rigid = dynamic_cast<const RigidShape&>(shape);
        const auto ro = layout->rotation_offset();
        const auto to = layout->translation_offset();
        const Vec3 r(theta[ro], theta[ro + 1], theta[ro + 2]);
        const auto ys = rigid.transform_points(theta, points);
        std::vector<double> local(n);
        std::vector<Vec3> grads(n);
        rigid.local_values_and_gradients(theta.first(layout->deformable_count), ys, local, grads);
        if (values) *values = std::move(local);
        parallel_for(n, [&](std::size_t j) {
            const auto col = static_cast<Eigen::Index>(j);
            const Vec3 rot = rotation_jacobian(r, points[j]).transpose() * grads[j];
            for (int a = 0; a < 3; ++a) {
                d(static_cast<Eigen::Index>(ro) + a, col) = rot[a];
                d(static_cast<Eigen::Index>(to) + a, col) = grads[j][a];
            }
        });
        for (std::size_t i = ro; i < to + 3; ++i) done[i] = true;
    } else if (values) {
        values->resize(n);
        shape.evaluate_many(theta, points, *values);
    }

    const auto& bounds = shape.bounds();
    std::vector<double> probe(theta.begin(), theta.end());
    std::vector<double> fp(n), fm(n);
    for (std::size_t i = 0; i < p; ++i) {
        if (done[i]) continue;
        if (!(steps[i] > 0.0)) throw InvalidArgument("finite-difference step must be > 0");
        const double hi = std::min(steps[i], bounds[i].hi - theta[i]);
        const double lo = std::min(steps[i], theta[i] - bounds[i].lo);
        probe[i] = theta[i] + hi;
        shape.evaluate_many(probe, points, fp);
        probe[i] = theta[i] - lo;
        shape.evaluate_many(probe, points, fm);
        probe[i] = theta[i];
        const double inv = 1.0 / (hi + lo);
        parallel_for(n, [&](std::size_t j) {
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[j] - fm[j]) * inv;
        });
    }
    return d;
}

std::vector<double> shape_values(const ShapeFunction& shape, std::span<const double> theta,
                                 const GridGeometry& grid) {
    grid.validate();
    shape.check_parameters(theta);
    const auto pts = grid.points();
    std::vector<double> values(pts.size());
    shape.evaluate_many(theta, pts, values);
    for (std::size_t n = 0; n < values.size(); ++n) {
        if (!std::isfinite(values[n])) {
            const auto c = grid.coords(n);
            throw NumericalError("shape function is not finite at voxel (" + std::to_string(c[0]) + ", " +
                                 std::to_string(c[1]) + ", " + std::to_string(c[2]) + ")");
        }
    }
    return values;
}

FieldVolume prior_field(const ShapeFunction& shape, std::span<const double> theta, const GridGeometry& grid,
                        double l_ref) {
    if (!(l_ref > 0.0)) throw InvalidArgument("l_ref must be > 0");
    auto values = shape_values(shape, theta, grid);
    FieldVolume out(grid);
    parallel_for(values.size(), [&](std::size_t n) { out[n] = sigmoid(values[n] / l_ref); });
    return out;
}

} // namespace lsm
