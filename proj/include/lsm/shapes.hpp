// Elementary analytic shape functions.
#pragma once

#include "lsm/shape.hpp"

namespace lsm {

// Disk (dimension 2, uses x and y only) or ball (dimension 3):
//   S = R^2 - |x - C|^2,   parameters [C..., R].
class CircleShape final : public ShapeFunction {
public:
    CircleShape(int dimension, Bounds bounds);

    [[nodiscard]] std::string kind() const override { return "circle"; }
    [[nodiscard]] std::size_t parameter_count() const override { return static_cast<std::size_t>(dim_) + 1; }
    [[nodiscard]] const Bounds& bounds() const override { return bounds_; }
    [[nodiscard]] std::vector<std::string> parameter_names() const override;
    [[nodiscard]] double evaluate(std::span<const double> theta, const Vec3& x) const override;
    bool parameter_gradient(std::span<const double> theta, const Vec3& x, std::span<double> grad) const override;

    [[nodiscard]] int dimension() const { return dim_; }

private:
    int dim_;
    Bounds bounds_;
};

// S = normal . x + offset, single parameter [offset].
class OffsetShape final : public ShapeFunction {
public:
    OffsetShape(Vec3 normal, Interval bound);

    [[nodiscard]] std::string kind() const override { return "offset"; }
    [[nodiscard]] std::size_t parameter_count() const override { return 1; }
    [[nodiscard]] const Bounds& bounds() const override { return bounds_; }
    [[nodiscard]] std::vector<std::string> parameter_names() const override { return {"offset"}; }
    [[nodiscard]] double evaluate(std::span<const double> theta, const Vec3& x) const override;
    bool parameter_gradient(std::span<const double> theta, const Vec3& x, std::span<double> grad) const override;

private:
    Vec3 normal_;
    Bounds bounds_;
};

// Rigidly moved half-space: local S = normal . y + d, parameters [d, r, t].
class PlaneShape final : public RigidShape {
public:
    PlaneShape(Vec3 normal, Bounds bounds);

    [[nodiscard]] std::string kind() const override { return "plane"; }
    [[nodiscard]] double local_value(std::span<const double> deformable, const Vec3& y) const override;
    [[nodiscard]] Vec3 local_spatial_gradient(std::span<const double> deformable, const Vec3& y) const override;

private:
    Vec3 normal_;
};

// Rigidly moved ellipsoid: local S = 1 - (y0/a)^2 - (y1/b)^2 - (y2/c)^2,
// parameters [a, b, c, r, t].
class EllipsoidShape final : public RigidShape {
public:
    explicit EllipsoidShape(Bounds bounds);

    [[nodiscard]] std::string kind() const override { return "ellipsoid"; }
    [[nodiscard]] std::vector<std::string> parameter_names() const override;
    [[nodiscard]] double local_value(std::span<const double> deformable, const Vec3& y) const override;
    [[nodiscard]] Vec3 local_spatial_gradient(std::span<const double> deformable, const Vec3& y) const override;
};

} // namespace lsm
