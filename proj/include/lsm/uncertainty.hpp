// Monte-Carlo uncertainty from the Laplace approximation of the shape posterior.
#pragma once

#include <cstdint>
#include <vector>

#include "lsm/inference.hpp"

namespace lsm {

struct PosteriorSamples {
    MatrixX draws; // n x |theta_S|, one draw per row
    std::uint64_t seed = 0;
    std::size_t clipped = 0; // draws with at least one entry clipped to its bound
};

// n draws from N(theta*, Sigma*) using the Cholesky factor of Sigma* and
// std::mt19937_64. Entries outside `bounds` are clipped; pass empty bounds to
// skip clipping. Throws NumericalError if Sigma* is not positive definite.
PosteriorSamples sample_posterior(const ShapePosterior& posterior, std::size_t n, std::uint64_t seed,
                                  const Bounds& bounds = {});

// Voxelwise mean of the E-step posterior over the sampled shape parameters.
FieldVolume marginal_posterior(const ImageVolume& image, const ShapeFunction& shape, const PosteriorSamples& samples,
                               const IntensityParams& intensity, double l_ref);

// exp(mean_i log(Sigma_i)) through symmetric eigendecompositions.
MatrixX log_euclidean_mean(const std::vector<MatrixX>& covariances);

} // namespace lsm
