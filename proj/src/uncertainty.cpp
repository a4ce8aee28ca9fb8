#include "lsm/uncertainty.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "lsm/parallel.hpp"
#include "lsm/random.hpp"

namespace lsm {

namespace {

MatrixX symmetric_function(const MatrixX& m, double (*f)(double)) {
    Eigen::SelfAdjointEigenSolver<MatrixX> eig(m);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    const VectorX mapped = eig.eigenvalues().unaryExpr(f);
    return eig.eigenvectors() * mapped.asDiagonal() * eig.eigenvectors().transpose();
}

} // namespace

PosteriorSamples sample_posterior(const ShapePosterior& posterior, std::size_t n, std::uint64_t seed,
                                  const Bounds& bounds) {
    if (n < 1) throw InvalidArgument("sample count must be >= 1");
    const auto p = posterior.theta.size();
    if (posterior.covariance.rows() != p || posterior.covariance.cols() != p) {
        throw InvalidArgument("posterior covariance has the wrong size");
    }
    if (!bounds.empty() && bounds.size() != static_cast<std::size_t>(p)) {
        throw InvalidArgument("bounds have the wrong size");
    }
    Eigen::LLT<MatrixX> llt(posterior.covariance);
    if (llt.info() != Eigen::Success) throw NumericalError("posterior covariance is not positive definite");
    const MatrixX lower = llt.matrixL();

    PosteriorSamples out;
    out.seed = seed;
    out.draws.resize(static_cast<Eigen::Index>(n), p);
    NormalStream normal(seed);
    VectorX z(p);
    for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(n); ++s) {
        for (Eigen::Index i = 0; i < p; ++i) z[i] = normal.next();
        VectorX draw = posterior.theta + lower * z;
        if (!bounds.empty()) {
            const VectorX clipped = clamp_to(draw, bounds);
            if (clipped != draw) ++out.clipped;
            draw = clipped;
        }
        out.draws.row(s) = draw.transpose();
    }
    return out;
}

FieldVolume marginal_posterior(const ImageVolume& image, const ShapeFunction& shape, const PosteriorSamples& samples,
                               const IntensityParams& intensity, double l_ref) {
    const auto n = samples.draws.rows();
    if (n < 1) throw InvalidArgument("no posterior samples");
    FieldVolume sum(image.grid, 0.0);
    for (Eigen::Index s = 0; s < n; ++s) {
        const VectorX theta = samples.draws.row(s).transpose();
        const auto u = e_step(image, shape, as_span(theta), intensity, l_ref);
        parallel_for(sum.size(), [&](std::size_t v) { sum[v] += u[v]; });
    }
    const double inv = 1.0 / static_cast<double>(n);
    parallel_for(sum.size(), [&](std::size_t v) { sum[v] *= inv; });
    return sum;
}

MatrixX log_euclidean_mean(const std::vector<MatrixX>& covariances) {
    if (covariances.empty()) throw InvalidArgument("log_euclidean_mean needs at least one matrix");
    const auto p = covariances.front().rows();
    MatrixX acc = MatrixX::Zero(p, p);
    for (std::size_t i = 0; i < covariances.size(); ++i) {
        const auto& c = covariances[i];
        if (c.rows() != p || c.cols() != p) {
            throw InvalidArgument("matrix " + std::to_string(i) + " has a different size");
        }
        if (!c.isApprox(c.transpose(), 1e-10)) throw InvalidArgument("matrix " + std::to_string(i) + " is not symmetric");
        Eigen::SelfAdjointEigenSolver<MatrixX> eig(c);
        if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0) {
            throw InvalidArgument("matrix " + std::to_string(i) + " is not positive definite");
        }
        acc += symmetric_function(c, [](double x) { return std::log(x); });
    }
    acc /= static_cast<double>(covariances.size());
    acc = (0.5 * (acc + acc.transpose())).eval();
    MatrixX out = symmetric_function(acc, [](double x) { return std::exp(x); });
    return 0.5 * (out + out.transpose());
}

} // namespace lsm
