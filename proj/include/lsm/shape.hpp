// Shape functions, the logistic shape prior and shape-function gradients.
//
// A shape function S(theta, x) is positive inside the shape, negative
// outside and zero on its boundary. The label prior of a voxel at x is
// sigmoid(S(theta, x) / l_ref).
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsm/common.hpp"
#include "lsm/volume.hpp"

namespace lsm {

// ---------------------------------------------------------------------------
// Logistic prior

// Numerically stable logistic function; never evaluates exp of a positive argument.
double sigmoid(double x);

// log(sigmoid(x)), stable for large |x|.
double log_sigmoid(double x);

// Foreground prior probability sigmoid(s / l_ref). Throws InvalidArgument if
// s is not finite or l_ref <= 0.
double logistic_prior(double s, double l_ref);

// Expected posterior foreground probability of a voxel at normalized signed
// distance delta = d / l_ref when the appearance posterior is uniform on [0, 1]:
//   (1 - delta e^-delta - e^-delta) / (e^-delta - 1)^2
// The removable singularity at 0 is replaced by a Taylor expansion for |delta| < 1e-3.
double expected_posterior(double delta);

// ---------------------------------------------------------------------------
// Shape functions

// Position of the rigid block inside the parameter vector:
// [deformable (n), rotation vector (3), translation (3)].
struct RigidLayout {
    std::size_t deformable_count = 0;

    [[nodiscard]] std::size_t rotation_offset() const { return deformable_count; }
    [[nodiscard]] std::size_t translation_offset() const { return deformable_count + 3; }
    [[nodiscard]] std::size_t parameter_count() const { return deformable_count + 6; }
};

class ShapeFunction {
public:
    virtual ~ShapeFunction() = default;

    [[nodiscard]] virtual std::string kind() const = 0;
    [[nodiscard]] virtual std::size_t parameter_count() const = 0;
    [[nodiscard]] virtual const Bounds& bounds() const = 0;
    [[nodiscard]] virtual std::vector<std::string> parameter_names() const;

    [[nodiscard]] virtual double evaluate(std::span<const double> theta, const Vec3& x) const = 0;

    // Evaluates at many points. The default runs evaluate() block-parallel.
    virtual void evaluate_many(std::span<const double> theta, std::span<const Vec3> points,
                               std::span<double> out) const;

    [[nodiscard]] virtual std::optional<RigidLayout> rigid_layout() const { return std::nullopt; }

    // Analytic parameter gradient, if the shape has one. Returns false otherwise.
    virtual bool parameter_gradient(std::span<const double> theta, const Vec3& x, std::span<double> grad) const;

    // Throws InvalidArgument if theta has the wrong size or leaves its bounds.
    void check_parameters(std::span<const double> theta) const;
};

// A shape function composed with a rigid transform:
//   S(theta, x) = local(theta_deformable, R(r) x + t).
class RigidShape : public ShapeFunction {
public:
    RigidShape(std::size_t deformable_count, Bounds bounds);

    [[nodiscard]] std::size_t parameter_count() const override { return layout_.parameter_count(); }
    [[nodiscard]] const Bounds& bounds() const override { return bounds_; }
    [[nodiscard]] std::optional<RigidLayout> rigid_layout() const override { return layout_; }

    [[nodiscard]] virtual double local_value(std::span<const double> deformable, const Vec3& y) const = 0;

    // Spatial gradient of local_value. Default: central differences with step 1e-5 mm.
    [[nodiscard]] virtual Vec3 local_spatial_gradient(std::span<const double> deformable, const Vec3& y) const;

    // Batch versions; gradients may be empty when only values are wanted.
    virtual void local_values(std::span<const double> deformable, std::span<const Vec3> ys,
                              std::span<double> values) const;
    virtual void local_values_and_gradients(std::span<const double> deformable, std::span<const Vec3> ys,
                                            std::span<double> values, std::span<Vec3> gradients) const;

    [[nodiscard]] double evaluate(std::span<const double> theta, const Vec3& x) const final;
    void evaluate_many(std::span<const double> theta, std::span<const Vec3> points,
                       std::span<double> out) const final;

    // Points mapped into the shape frame: R(r) x + t.
    [[nodiscard]] std::vector<Vec3> transform_points(std::span<const double> theta,
                                                     std::span<const Vec3> points) const;

    [[nodiscard]] const RigidLayout& layout() const { return layout_; }

protected:
    Bounds bounds_;

private:
    RigidLayout layout_;
};

// ---------------------------------------------------------------------------
// Rotation helpers

// Antisymmetric matrix with skew(a) * b = a x b.
Mat3 skew(const Vec3& a);

// Rotation matrix of a rotation vector (axis * angle).
Mat3 rotation_matrix(const Vec3& r);

// Jacobian d(R(r) x) / dr. Below kSmallAngle the first-order series -skew(x) is used.
Mat3 rotation_jacobian(const Vec3& r, const Vec3& x);

inline constexpr double kSmallAngle = 1e-4;

// ---------------------------------------------------------------------------
// Gradients

// Default finite-difference steps: 1e-3 of each bound width.
std::vector<double> default_fd_steps(const Bounds& bounds);

// Central-difference gradient of S w.r.t. theta at x. Steps that would leave
// the bounds are shortened on that side.
VectorX fd_gradient(const ShapeFunction& shape, std::span<const double> theta, const Vec3& x,
                    std::span<const double> steps);

using RigidGradient = Eigen::Matrix<double, 6, 1>;

// Gradient of local(deformable, R(r) x + t) w.r.t. (r, t), rotation block first.
RigidGradient rigid_gradient(const RigidShape& shape, std::span<const double> deformable, const Vec3& r,
                             const Vec3& t, const Vec3& x);

// Gradient matrix (parameters x points) of S at theta. Uses the analytic
// gradient when available; otherwise rigid blocks in closed form and the rest
// by central differences with `steps`.
// When `values` is non-null it receives S(theta, x_n).
MatrixX shape_gradient_matrix(const ShapeFunction& shape, std::span<const double> theta,
                              std::span<const Vec3> points, std::span<const double> steps,
                              std::vector<double>* values = nullptr);

// Shape values S(theta, x_n) over the grid, in linear voxel order.
std::vector<double> shape_values(const ShapeFunction& shape, std::span<const double> theta,
                                 const GridGeometry& grid);

// Per-voxel logistic prior over the grid.
FieldVolume prior_field(const ShapeFunction& shape, std::span<const double> theta, const GridGeometry& grid,
                        double l_ref);

} // namespace lsm
