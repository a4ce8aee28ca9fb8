// Parametric cochlea model: a generalized cylinder swept along a spiral
// centerline given in cylindrical coordinates (r(theta), theta, z(theta)).
//
// The radial component is a quadratic for theta < theta0 and a logarithmic
// spiral a e^{-b theta} beyond; the longitudinal component is a damped
// sinusoid plus a linear rise for theta < theta1 and a quadratic that
// flattens the last half turn (dz/dtheta = 0 at theta_max). The joining
// coefficients are fixed by C1 continuity.
//
// Parameters: [a, b, alpha, phi, rx, ry, rz, tx, ty, tz].
#pragma once

#include <numbers>
#include <vector>

#include "lsm/shape.hpp"
#include "lsm/volume.hpp"

namespace lsm {

struct CochleaConstants {
    double theta0 = 5.0 * std::numbers::pi / 6.0; // rad, radial polynomial/spiral junction
    double p0 = 5.0;                              // mm, radius at theta = 0
    double beta = 0.2;                            // 1/rad, longitudinal damping
    double q1 = 0.225;                            // mm/rad, longitudinal rise
    double theta_max = 5.0 * std::numbers::pi;    // rad, 2.5 turns

    [[nodiscard]] double theta1() const { return theta_max - std::numbers::pi; }
    void validate() const;
};

struct CochleaDeformable {
    double a = 4.0;     // mm
    double b = 0.15;    // 1/rad
    double alpha = 0.6; // mm
    double phi = 0.2;   // rad
};

// Coefficients derived from C1 continuity; never set independently.
struct ContinuityConstants {
    double C1 = 0.0, C2 = 0.0; // spiral slope and value at theta0
    double p2 = 0.0, p1 = 0.0; // radial quadratic
    double a2 = 0.0, a1 = 0.0, a0 = 0.0; // longitudinal quadratic
};

ContinuityConstants continuity_constants(const CochleaDeformable& p, const CochleaConstants& c = {});

// Radial component r(theta) in mm. Throws InvalidArgument outside [0, theta_max].
double radial(double theta, double a, double b, const CochleaConstants& c = {});

// Longitudinal component z(theta) in mm. Throws InvalidArgument outside [0, theta_max].
double longitudinal(double theta, double alpha, double phi, const CochleaConstants& c = {});

// Value and first two derivatives of one centerline component.
struct Jet {
    double value = 0.0, d1 = 0.0, d2 = 0.0;
};

// Cross-section radius, tapering linearly from base to apex.
struct CrossSection {
    double rho_base = 1.0; // mm
    double rho_apex = 0.4; // mm

    [[nodiscard]] double radius(double theta, double theta_max) const {
        return rho_base + (rho_apex - rho_base) * theta / theta_max;
    }
    [[nodiscard]] double slope(double theta_max) const { return (rho_apex - rho_base) / theta_max; }
};

struct CochleaOptions {
    CochleaConstants constants;
    CrossSection cross_section;
    std::size_t coarse_samples = 512;
    double search_tolerance = 1e-6; // rad, golden-section bracket width before Newton polishing
    Bounds bounds = default_bounds();

    static Bounds default_bounds();
};

// Evaluated centerline for one deformable parameter set.
class CochleaCenterline {
public:
    CochleaCenterline(const CochleaDeformable& p, const CochleaConstants& c);

    [[nodiscard]] Jet radial_jet(double theta) const;
    [[nodiscard]] Jet longitudinal_jet(double theta) const;

    [[nodiscard]] Vec3 point(double theta) const;
    // Point, first and second derivative w.r.t. theta.
    void point_derivatives(double theta, Vec3& c, Vec3& dc, Vec3& ddc) const;

    [[nodiscard]] const CochleaDeformable& parameters() const { return p_; }
    [[nodiscard]] const CochleaConstants& constants() const { return c_; }
    [[nodiscard]] const ContinuityConstants& continuity() const { return k_; }

private:
    CochleaDeformable p_;
    CochleaConstants c_;
    ContinuityConstants k_;
};

// Points (r cos theta, r sin theta, z) at n uniform angles over [0, theta_max].
std::vector<Vec3> centerline(const CochleaDeformable& p, std::size_t n_samples, const CochleaConstants& c = {});

struct NearestCenterlinePoint {
    double theta = 0.0;
    double distance = 0.0;
};

class CochleaShape final : public RigidShape {
public:
    explicit CochleaShape(CochleaOptions options = {});

    [[nodiscard]] std::string kind() const override { return "cochlea"; }
    [[nodiscard]] std::vector<std::string> parameter_names() const override;

    [[nodiscard]] double local_value(std::span<const double> deformable, const Vec3& y) const override;
    [[nodiscard]] Vec3 local_spatial_gradient(std::span<const double> deformable, const Vec3& y) const override;
    void local_values(std::span<const double> deformable, std::span<const Vec3> ys,
                      std::span<double> values) const override;
    void local_values_and_gradients(std::span<const double> deformable, std::span<const Vec3> ys,
                                    std::span<double> values, std::span<Vec3> gradients) const override;

    // Nearest centerline point: coarse uniform scan, golden-section
    // refinement on the bracketing interval, then Newton steps on the
    // stationarity condition.
    [[nodiscard]] NearestCenterlinePoint nearest_point(std::span<const double> deformable, const Vec3& y) const;

    [[nodiscard]] const CochleaOptions& options() const { return opts_; }

    static CochleaDeformable unpack(std::span<const double> deformable);

    // Initial parameters: a = 4, b = 0.15, alpha = 0.6, phi = 0.2, zero pose.
    static std::vector<double> default_parameters();

private:
    struct Sampled;
    [[nodiscard]] Sampled sample(std::span<const double> deformable) const;
    [[nodiscard]] static NearestCenterlinePoint search(const Sampled& s, const Vec3& y, double tolerance);
    [[nodiscard]] double value_at(const Sampled& s, const Vec3& y, Vec3* gradient) const;

    CochleaOptions opts_;
};

// 60 x 50 x 50 grid at 0.2 mm centered on the centerline bounding box of the
// given parameters (zero pose).
GridGeometry cochlea_reference_grid(const CochleaShape& shape, std::span<const double> theta,
                                    std::array<std::size_t, 3> dims = {60, 50, 50}, double spacing = 0.2);

} // namespace lsm
