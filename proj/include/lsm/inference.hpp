// EM inference for the logistic shape model.
//
//   E-step:  u_n = p(Z_n = 1 | I_n, theta_S, theta_I)
//   MI-step: weighted EM on the appearance mixtures (see appearance.hpp)
//   MS-step: Gauss-Newton on the cross-entropy between U and the shape prior
//
// The MS-step minimizes
//   J(dtheta) = -sum_n [u_n log s(v_n) + (1 - u_n) log s(-v_n)] + 1/2 dtheta' P dtheta
// with v_n = S(theta + dtheta, x_n) / l_ref and P the prior precision (zero
// under the uniform prior). Inside one gradient evaluation v is linearized,
// v = V + d' dtheta, and Newton steps use the curvature
//   H = d diag(mu (1 - mu)) d' + P,   mu = s(v),
// whose inverse at convergence is the Laplace covariance of theta_S.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lsm/appearance.hpp"
#include "lsm/shape.hpp"
#include "lsm/volume.hpp"

namespace lsm {

// Per-voxel foreground posterior u_n in [0, 1].
using ResponsibilityField = FieldVolume;

// Gaussian prior on shape parameters, or uniform when no covariance is set.
struct ShapePrior {
    std::optional<MatrixX> covariance;
    std::optional<VectorX> mean; // fit() fills in the initial parameters; zero elsewhere

    static ShapePrior uniform() { return {}; }
    [[nodiscard]] bool is_uniform() const { return !covariance.has_value(); }
    // Zero matrix when uniform. Throws InvalidArgument if the covariance is not SPD.
    [[nodiscard]] MatrixX precision(std::size_t dim) const;
    [[nodiscard]] double log_density(const VectorX& theta) const;
};

struct ShapePosterior {
    VectorX theta;
    MatrixX covariance;
};

// Curvature H of J at dtheta = 0 and its inverse. Adds Levenberg damping
// lambda I when H is not positive definite; returns the lambda used.
double laplace_covariance(const MatrixX& curvature, MatrixX& covariance);

// ---------------------------------------------------------------------------
// E-step and log-joint

// Posterior from precomputed shape values S(theta_S, x_n).
ResponsibilityField e_step_from_values(const ImageVolume& image, std::span<const double> shape_values,
                                       const IntensityParams& intensity, double l_ref);

ResponsibilityField e_step(const ImageVolume& image, const ShapeFunction& shape, std::span<const double> theta,
                           const IntensityParams& intensity, double l_ref);

double log_joint_from_values(const ImageVolume& image, std::span<const double> shape_values,
                             const IntensityParams& intensity, double l_ref);

// Lower bound Q(U) + sum_n H(u_n) of the log-joint (without log p(theta_S)).
// Equals log_joint_from_values when U is the exact posterior.
double augmented_criterion(const ImageVolume& image, const ResponsibilityField& u, std::span<const double> shape_values,
                           const IntensityParams& intensity, double l_ref);

// sum_n log sum_k p(I_n | k) p(Z_n = k | theta_S) + log p(theta_S); log p(theta_I) is 0.
double log_joint(const ImageVolume& image, const ShapeFunction& shape, std::span<const double> theta,
                 const IntensityParams& intensity, double l_ref, const ShapePrior& prior = {});

// ---------------------------------------------------------------------------
// MS-step

struct MsOptions {
    double tolerance = 1e-3; // |dtheta| / |theta| for both loops
    int max_gradient_updates = 20;
    int max_newton_iterations = 30;
    int max_halvings = 12;
    std::vector<double> fd_steps; // empty: 1e-3 of each bound width
    // Recompute U by an E-step after every accepted update. Off only for
    // tests that hold U fixed.
    bool refresh_responsibilities = true;
};

struct MsIteration {
    // J at dtheta = 0 followed by J after every accepted Newton step (linearized model).
    std::vector<double> objective;
    // J with the exact shape function before and after the accepted update.
    double exact_objective_before = 0.0;
    double exact_objective_after = 0.0;
    double step_norm = 0.0;
    int exact_halvings = 0;
    bool damped = false;
};

struct MsReport {
    std::vector<MsIteration> iterations;
    std::vector<std::string> warnings;
    bool converged = false;
};

// Cross-entropy part of J for fixed U and scaled shape values v.
double ms_objective(std::span<const double> u, std::span<const double> v);

// J, its gradient g and curvature H at dtheta = 0 for shape parameters theta.
struct MsDerivatives {
    double objective = 0.0;
    VectorX gradient;
    MatrixX curvature;
};
MsDerivatives ms_derivatives(const ShapeFunction& shape, std::span<const double> theta, const GridGeometry& grid,
                             std::span<const double> u, double l_ref, const ShapePrior& prior = {},
                             std::span<const double> fd_steps = {});

// Gauss-Newton MS-step. `u` holds responsibilities from a preceding E-step and
// is refreshed by an E-step after every accepted update.
ShapePosterior ms_step(const ImageVolume& image, ResponsibilityField& u, const ShapeFunction& shape,
                       std::span<const double> theta, const ShapePrior& prior, double l_ref,
                       const IntensityParams& intensity, const MsOptions& options = {},
                       MsReport* report = nullptr);

// ---------------------------------------------------------------------------
// Outer loop

struct FitConfig {
    double l_ref = 0.1;       // mm
    double l_ref_hard = 0.25; // mm, for the final hard segmentation
    double outer_tolerance = 0.1;
    int max_outer_iterations = 20;
    double divergence_fraction = 0.1;
    MsOptions ms;
    MiOptions mi;
    std::vector<double> initial_shape;
    IntensityParams initial_intensity;
    ShapePrior prior;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TraceRow {
    int iteration = 0;
    double log_joint = 0.0;
    std::vector<double> theta;
    double step_norm = 0.0;
    std::vector<StudentTComponent> foreground;
    double foreground_change = 0.0;
};

struct FitResult {
    ShapePosterior shape;
    IntensityParams intensity;
    ResponsibilityField posterior; // at l_ref
    std::vector<TraceRow> trace;
    std::vector<MsReport> ms_reports;
    std::vector<MiStepReport> mi_reports;
    std::vector<std::string> warnings;
    bool converged = false;
};

// Alternates E-step, MS-step and MI-steps until the relative change of the
// foreground appearance parameters over a cycle drops below outer_tolerance.
// Throws NumericalError if log_joint drops by more than divergence_fraction of
// its observed range over one cycle.
FitResult fit(const ImageVolume& image, const ShapeFunction& shape, const FitConfig& config);

// Voxels with field >= threshold.
BinaryMask hard_segmentation(const FieldVolume& field, double threshold = 0.5);

// Posterior at l_ref_hard thresholded at 0.5.
BinaryMask segmented_region(const ImageVolume& image, const ShapeFunction& shape, std::span<const double> theta,
                            const IntensityParams& intensity, double l_ref_hard);

// S(theta, x) >= 0, i.e. the shape prior thresholded at 0.5.
BinaryMask segmented_shape(const ShapeFunction& shape, std::span<const double> theta, const GridGeometry& grid);

} // namespace lsm
