#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lsm/parallel.hpp"
#include "lsm/shapes.hpp"
#include "lsm/uncertainty.hpp"

using namespace lsm;

namespace {

MatrixX random_spd(std::mt19937_64& rng, Eigen::Index p, double scale = 1.0) {
    std::normal_distribution<double> z(0.0, 1.0);
    MatrixX a(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) a(i, j) = z(rng);
    return scale * (a * a.transpose() + 0.5 * MatrixX::Identity(p, p));
}

ShapePosterior example_posterior() {
    ShapePosterior post;
    post.theta = VectorX(3);
    post.theta << 0.5, 0.4, 0.25;
    post.covariance = MatrixX(3, 3);
    post.covariance << 4e-4, 1e-4, 0.0, 1e-4, 2e-4, -5e-5, 0.0, -5e-5, 1e-4;
    return post;
}

GridGeometry square_grid(std::size_t n) {
    GridGeometry g;
    g.dims = {n, n, 1};
    g.spacing = Vec3(1.0 / double(n), 1.0 / double(n), 1.0);
    g.origin = Vec3(0.5 / double(n), 0.5 / double(n), 0.0);
    return g;
}

IntensityParams classes() {
    IntensityParams p;
    p.classes[0] = {{1.0, 0.0, 40.0, 5.0}};
    p.classes[1] = {{1.0, 100.0, 40.0, 5.0}};
    return p;
}

ImageVolume noisy_disk(const GridGeometry& grid, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 40.0);
    ImageVolume img(grid);
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const bool inside = (grid.point(n).head<2>() - Eigen::Vector2d(0.5, 0.4)).norm() <= 0.25;
        img[n] = float((inside ? 100.0 : 0.0) + z(rng));
    }
    return img;
}

} // namespace

TEST_SUITE("uncertainty") {

TEST_CASE("sample moments match the posterior") {
    const auto post = example_posterior();
    const auto s = sample_posterior(post, 10000, 11);
    CHECK(s.draws.rows() == 10000);
    CHECK(s.draws.cols() == 3);
    CHECK(s.clipped == 0);
    const VectorX mean = s.draws.colwise().mean().transpose();
    const MatrixX centered = s.draws.rowwise() - mean.transpose();
    const MatrixX cov = centered.transpose() * centered / double(s.draws.rows() - 1);
    CHECK((cov - post.covariance).norm() / post.covariance.norm() < 0.10);
    // Each mean coordinate within 3 standard errors.
    for (Eigen::Index i = 0; i < 3; ++i) {
        const double se = std::sqrt(post.covariance(i, i) / 10000.0);
        CHECK(std::abs(mean[i] - post.theta[i]) < 3.0 * se);
    }
}

TEST_CASE("draws are reproducible per seed") {
    const auto post = example_posterior();
    const auto a = sample_posterior(post, 50, 7);
    const auto b = sample_posterior(post, 50, 7);
    const auto c = sample_posterior(post, 50, 8);
    CHECK(a.draws == b.draws);
    CHECK(a.seed == 7);
    CHECK(a.draws != c.draws);
    // A longer run starts with the same draws.
    const auto longer = sample_posterior(post, 80, 7);
    CHECK(longer.draws.topRows(50) == a.draws);
}

TEST_CASE("tiny covariance collapses onto the mode") {
    auto post = example_posterior();
    post.covariance *= 1e-20;
    const auto s = sample_posterior(post, 100, 3);
    for (Eigen::Index r = 0; r < s.draws.rows(); ++r) {
        CHECK((s.draws.row(r).transpose() - post.theta).lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("clipping to bounds") {
    auto post = example_posterior();
    const Bounds bounds{{0.49, 0.51}, {0.0, 1.0}, {0.0, 1.0}};
    const auto s = sample_posterior(post, 2000, 5, bounds);
    std::size_t outside = 0;
    const auto raw = sample_posterior(post, 2000, 5);
    for (Eigen::Index r = 0; r < raw.draws.rows(); ++r) {
        bool out = false;
        for (Eigen::Index i = 0; i < 3; ++i) {
            const double v = raw.draws(r, i);
            out = out || v < bounds[std::size_t(i)].lo || v > bounds[std::size_t(i)].hi;
            CHECK(s.draws(r, i) == bounds[std::size_t(i)].clamp(v));
        }
        outside += out ? 1 : 0;
    }
    CHECK(s.clipped == outside);
    CHECK(outside > 0);
}

TEST_CASE("sampling input checks") {
    auto post = example_posterior();
    CHECK_THROWS_AS(sample_posterior(post, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(sample_posterior(post, 10, 1, Bounds{{0.0, 1.0}}), InvalidArgument);
    auto bad = post;
    bad.covariance(2, 2) = -1.0;
    CHECK_THROWS_AS(sample_posterior(bad, 10, 1), NumericalError);
    bad.covariance = MatrixX::Identity(2, 2);
    CHECK_THROWS_AS(sample_posterior(bad, 10, 1), InvalidArgument);
}

TEST_CASE("marginal posterior") {
    const auto grid = square_grid(24);
    const auto img = noisy_disk(grid, 9);
    const CircleShape circle(2, {{0.0, 1.0}, {0.0, 1.0}, {0.01, 1.0}});
    const auto post = example_posterior();
    const auto samples = sample_posterior(post, 16, 21);

    SUBCASE("a single draw equals its E-step") {
        PosteriorSamples one;
        one.draws = samples.draws.topRows(1);
        const VectorX theta = one.draws.row(0).transpose();
        const auto expected = e_step(img, circle, as_span(theta), classes(), 0.03);
        CHECK(marginal_posterior(img, circle, one, classes(), 0.03) == expected);
    }
    SUBCASE("bounded by the per-draw extremes and order invariant") {
        const auto m = marginal_posterior(img, circle, samples, classes(), 0.03);
        FieldVolume lo(grid, 1.0), hi(grid, 0.0);
        for (Eigen::Index r = 0; r < samples.draws.rows(); ++r) {
            const VectorX theta = samples.draws.row(r).transpose();
            const auto u = e_step(img, circle, as_span(theta), classes(), 0.03);
            for (std::size_t n = 0; n < grid.size(); ++n) {
                lo[n] = std::min(lo[n], u[n]);
                hi[n] = std::max(hi[n], u[n]);
            }
        }
        for (std::size_t n = 0; n < grid.size(); ++n) {
            CHECK(m[n] >= lo[n] - 1e-15);
            CHECK(m[n] <= hi[n] + 1e-15);
        }
        PosteriorSamples reversed = samples;
        reversed.draws = samples.draws.colwise().reverse();
        const auto r = marginal_posterior(img, circle, reversed, classes(), 0.03);
        for (std::size_t n = 0; n < grid.size(); ++n) CHECK(std::abs(r[n] - m[n]) < 1e-14);
    }
    SUBCASE("independent of the thread count") {
        set_thread_count(1);
        const auto a = marginal_posterior(img, circle, samples, classes(), 0.03);
        set_thread_count(4);
        const auto b = marginal_posterior(img, circle, samples, classes(), 0.03);
        set_thread_count(0);
        CHECK(a == b);
    }
    SUBCASE("empty samples are rejected") {
        PosteriorSamples none;
        CHECK_THROWS_AS(marginal_posterior(img, circle, none, classes(), 0.03), InvalidArgument);
    }
}

TEST_CASE("log-Euclidean mean") {
    std::mt19937_64 rng(17);
    SUBCASE("identical inputs") {
        const auto c = random_spd(rng, 4);
        CHECK((log_euclidean_mean({c, c, c}) - c).norm() < 1e-10 * c.norm());
    }
    SUBCASE("reciprocal scalings average to the identity") {
        const MatrixX i = MatrixX::Identity(3, 3);
        CHECK((log_euclidean_mean({7.0 * i, i / 7.0}) - i).norm() < 1e-12);
    }
    SUBCASE("matches matrix log and exp of a general solver") {
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<MatrixX> cs;
            for (int k = 0; k < 5; ++k) cs.push_back(random_spd(rng, 10, std::pow(10.0, trial % 3 - 1)));
            MatrixX acc = MatrixX::Zero(10, 10);
            for (const auto& c : cs) acc += MatrixX(c.log());
            const MatrixX expected = MatrixX(acc / 5.0).exp();
            CHECK((log_euclidean_mean(cs) - expected).norm() < 1e-8 * expected.norm());
        }
    }
    SUBCASE("order invariant and symmetric") {
        std::vector<MatrixX> cs;
        for (int k = 0; k < 4; ++k) cs.push_back(random_spd(rng, 3));
        const auto a = log_euclidean_mean(cs);
        std::reverse(cs.begin(), cs.end());
        const auto b = log_euclidean_mean(cs);
        CHECK((a - b).norm() < 1e-12 * a.norm());
        CHECK(a == a.transpose());
    }
    SUBCASE("bad inputs name the offending matrix") {
        const auto c = random_spd(rng, 3);
        MatrixX bad = c;
        bad(0, 0) = -10.0;
        CHECK_THROWS_AS(log_euclidean_mean({}), InvalidArgument);
        CHECK_THROWS_WITH(log_euclidean_mean({c, bad}), doctest::Contains("matrix 1"));
        CHECK_THROWS_WITH(log_euclidean_mean({c, c, MatrixX::Identity(2, 2)}), doctest::Contains("matrix 2"));
        MatrixX asym = c;
        asym(0, 1) += 1.0;
        CHECK_THROWS_WITH(log_euclidean_mean({asym}), doctest::Contains("matrix 0"));
    }
}

} // TEST_SUITE
