#include "lsm/shapes.hpp"

namespace lsm {

CircleShape::CircleShape(int dimension, Bounds bounds) : dim_(dimension), bounds_(std::move(bounds)) {
    if (dim_ != 2 && dim_ != 3) throw InvalidArgument("circle dimension must be 2 or 3");
    if (bounds_.size() != parameter_count()) throw InvalidArgument("circle bounds have wrong arity");
    if (!(bounds_.back().hi > 0.0)) throw InvalidArgument("circle radius bound must allow R > 0");
}

std::vector<std::string> CircleShape::parameter_names() const {
    std::vector<std::string> n{"cx", "cy"};
    if (dim_ == 3) n.emplace_back("cz");
    n.emplace_back("R");
    return n;
}

double CircleShape::evaluate(std::span<const double> theta, const Vec3& x) const {
    double r2 = 0.0;
    for (int a = 0; a < dim_; ++a) {
        const double d = x[a] - theta[static_cast<std::size_t>(a)];
        r2 += d * d;
    }
    const double R = theta[static_cast<std::size_t>(dim_)];
    return R * R - r2;
}

bool CircleShape::parameter_gradient(std::span<const double> theta, const Vec3& x, std::span<double> grad) const {
    for (int a = 0; a < dim_; ++a) grad[static_cast<std::size_t>(a)] = 2.0 * (x[a] - theta[static_cast<std::size_t>(a)]);
    grad[static_cast<std::size_t>(dim_)] = 2.0 * theta[static_cast<std::size_t>(dim_)];
    return true;
}

OffsetShape::OffsetShape(Vec3 normal, Interval bound) : normal_(std::move(normal)), bounds_{bound} {}

double OffsetShape::evaluate(std::span<const double> theta, const Vec3& x) const { return normal_.dot(x) + theta[0]; }

bool OffsetShape::parameter_gradient(std::span<const double>, const Vec3&, std::span<double> grad) const {
    grad[0] = 1.0;
    return true;
}

PlaneShape::PlaneShape(Vec3 normal, Bounds bounds) : RigidShape(1, std::move(bounds)), normal_(std::move(normal)) {}

double PlaneShape::local_value(std::span<const double> deformable, const Vec3& y) const {
    return normal_.dot(y) + deformable[0];
}

Vec3 PlaneShape::local_spatial_gradient(std::span<const double>, const Vec3&) const { return normal_; }

EllipsoidShape::EllipsoidShape(Bounds bounds) : RigidShape(3, std::move(bounds)) {
    for (int a = 0; a < 3; ++a) {
        if (!(bounds_[static_cast<std::size_t>(a)].lo > 0.0)) throw InvalidArgument("ellipsoid semi-axes must be > 0");
    }
}

std::vector<std::string> EllipsoidShape::parameter_names() const {
    return {"a", "b", "c", "rx", "ry", "rz", "tx", "ty", "tz"};
}

double EllipsoidShape::local_value(std::span<const double> s, const Vec3& y) const {
    const double u = y.x() / s[0], v = y.y() / s[1], w = y.z() / s[2];
    return 1.0 - u * u - v * v - w * w;
}

Vec3 EllipsoidShape::local_spatial_gradient(std::span<const double> s, const Vec3& y) const {
    return {-2.0 * y.x() / (s[0] * s[0]), -2.0 * y.y() / (s[1] * s[1]), -2.0 * y.z() / (s[2] * s[2])};
}

} // namespace lsm
