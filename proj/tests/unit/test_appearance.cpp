#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "lsm/appearance.hpp"
#include "oracles.hpp"

using namespace lsm;

namespace {

// Default foreground mixture evaluated at 0 HU, from an independent
// high-precision sum of the two components.
constexpr double kForegroundAtZero = 0.0013031777761779784733;

IntensityParams two_class(std::vector<StudentTComponent> bg, std::vector<StudentTComponent> fg) {
    IntensityParams p;
    p.classes[0] = std::move(bg);
    p.classes[1] = std::move(fg);
    return p;
}

double t_density(double x, const StudentTComponent& c) {
    const double z = (x - c.mu) / c.sigma;
    return std::tgamma(0.5 * (c.nu + 1.0)) / (std::tgamma(0.5 * c.nu) * std::sqrt(c.nu * std::numbers::pi) * c.sigma) *
           std::pow(1.0 + z * z / c.nu, -0.5 * (c.nu + 1.0));
}

// One weighted EM round for a single t mixture, written with plain loops.
std::vector<StudentTComponent> oracle_round(const std::vector<float>& x, const std::vector<double>& weight,
                                            std::vector<StudentTComponent> comps) {
    const std::size_t m = comps.size();
    std::vector<double> s0(m), s1(m), s2(m), s3(m);
    std::vector<std::vector<double>> tau(x.size(), std::vector<double>(m)), w = tau;
    for (std::size_t n = 0; n < x.size(); ++n) {
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) total += tau[n][j] = comps[j].pi * t_density(x[n], comps[j]);
        for (std::size_t j = 0; j < m; ++j) {
            tau[n][j] /= total;
            const double z = (x[n] - comps[j].mu) / comps[j].sigma;
            w[n][j] = (comps[j].nu + 1.0) / (comps[j].nu + z * z);
            s0[j] += weight[n] * tau[n][j];
            s1[j] += weight[n] * tau[n][j] * w[n][j];
            s2[j] += weight[n] * tau[n][j] * w[n][j] * x[n];
        }
    }
    double total = 0.0;
    for (double v : s0) total += v;
    for (std::size_t j = 0; j < m; ++j) {
        comps[j].pi = s0[j] / total;
        comps[j].mu = s2[j] / s1[j];
    }
    for (std::size_t n = 0; n < x.size(); ++n) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = x[n] - comps[j].mu;
            s3[j] += weight[n] * tau[n][j] * w[n][j] * d * d;
        }
    }
    for (std::size_t j = 0; j < m; ++j) comps[j].sigma = std::sqrt(s3[j] / s0[j]);
    return comps;
}

// One weighted Gaussian-mixture EM round.
std::vector<StudentTComponent> gaussian_round(const std::vector<float>& x, const std::vector<double>& weight,
                                              std::vector<StudentTComponent> comps) {
    const std::size_t m = comps.size();
    std::vector<double> s0(m), s1(m), s2(m);
    for (std::size_t n = 0; n < x.size(); ++n) {
        std::vector<double> r(m);
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double z = (x[n] - comps[j].mu) / comps[j].sigma;
            total += r[j] = comps[j].pi * std::exp(-0.5 * z * z) / comps[j].sigma;
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double t = weight[n] * r[j] / total;
            s0[j] += t;
            s1[j] += t * x[n];
            s2[j] += t * double(x[n]) * double(x[n]);
        }
    }
    double total = 0.0;
    for (double v : s0) total += v;
    for (std::size_t j = 0; j < m; ++j) {
        comps[j].pi = s0[j] / total;
        comps[j].mu = s1[j] / s0[j];
        comps[j].sigma = std::sqrt(s2[j] / s0[j] - comps[j].mu * comps[j].mu);
    }
    return comps;
}

void check_valid(const IntensityParams& p) {
    for (const auto& cls : p.classes) {
        double total = 0.0;
        for (const auto& c : cls) {
            total += c.pi;
            CHECK(c.sigma > 0.0);
            CHECK(c.nu > 0.0);
            CHECK(c.pi >= 0.0);
            CHECK(c.pi <= 1.0);
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

} // namespace

TEST_SUITE("appearance") {

TEST_CASE("t_pdf spot values") {
    CHECK(t_pdf(0.0, 0.0, 1.0, 1.0) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-14));
    CHECK(t_pdf(0.0, 0.0, 1.0, 4.0) == doctest::Approx(0.375).epsilon(1e-14));
    CHECK(t_pdf(3.0, 1.0, 2.0, 4.0) == doctest::Approx(0.5 * t_pdf(1.0, 0.0, 1.0, 4.0)).epsilon(1e-14));
    CHECK(t_log_pdf(1e6, 0.0, 1.0, 1.0) == doctest::Approx(std::log(t_density(1e6, {1.0, 0.0, 1.0, 1.0}))));
    CHECK_THROWS_AS(t_pdf(0.0, 0.0, 0.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(t_pdf(0.0, 0.0, 1.0, -1.0), InvalidArgument);
    CHECK_THROWS_AS(t_pdf(std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(t_pdf(0.0, std::numeric_limits<double>::infinity(), 1.0, 1.0), InvalidArgument);
}

TEST_CASE("t_pdf approaches the normal density") {
    for (int i = -50; i <= 50; ++i) {
        const double x = 0.1 * i;
        const double normal = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        CHECK(std::abs(t_pdf(x, 0.0, 1.0, 1e6) - normal) < 1e-4);
        CHECK(t_pdf(x, 0.0, 1.0, std::numeric_limits<double>::infinity()) == doctest::Approx(normal).epsilon(1e-14));
    }
}

TEST_CASE("t_pdf integrates to one") {
    for (double nu : {1.0, 4.0, 30.0}) {
        const double mu = 12.0, sigma = 3.5;
        const double half = 50.0 * sigma * nu;
        const double core = oracle::integrate_pieces([&](double x) { return t_pdf(x, mu, sigma, nu); }, mu - half,
                                                     mu + half, 2000, 1e-11);
        const boost::math::students_t dist(nu);
        const double tails = 2.0 * boost::math::cdf(boost::math::complement(dist, half / sigma));
        CHECK(std::abs(core + tails - 1.0) < 1e-6);
    }
}

TEST_CASE("class likelihood") {
    const auto p = IntensityParams::cochlea_default();
    CHECK(std::abs(class_likelihood(0.0, 1, p) - kForegroundAtZero) < 1e-15);
    CHECK_THROWS_AS(class_likelihood(0.0, 2, p), InvalidArgument);
    CHECK_THROWS_AS(class_likelihood(0.0, -1, p), InvalidArgument);

    const StudentTComponent c{1.0, 40.0, 25.0, 3.0};
    const auto single = two_class({c}, {c});
    auto half = c;
    half.pi = 0.5;
    const auto twin = two_class({half, half}, {c});
    for (double x : {-100.0, 0.0, 37.0, 400.0}) {
        CHECK(class_likelihood(x, 1, single) == doctest::Approx(t_pdf(x, 40.0, 25.0, 3.0)).epsilon(1e-14));
        CHECK(class_likelihood(x, 0, twin) == doctest::Approx(t_pdf(x, 40.0, 25.0, 3.0)).epsilon(1e-14));
    }
    CHECK(p.parameter_count() == 24);
}

TEST_CASE("parameter validation") {
    auto p = IntensityParams::cochlea_default();
    CHECK_NOTHROW(p.validate());
    p.classes[1][0].pi = 0.6;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = IntensityParams::cochlea_default();
    p.classes[0][2].sigma = 0.0;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = IntensityParams::cochlea_default();
    p.classes[1].clear();
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("mi_step recovers a two-component mixture from 10^5 draws") {
    const std::vector<StudentTComponent> truth{{0.4, 200.0, 80.0, 5.0}, {0.6, 1000.0, 120.0, 5.0}};
    const auto x = oracle::draw_t_mixture(truth, 100000, 21);
    const std::vector<double> u(x.size(), 1.0);
    auto init = two_class({{1.0, 0.0, 100.0, 5.0}}, {{0.5, 150.0, 100.0, 5.0}, {0.5, 1100.0, 100.0, 5.0}});
    MiOptions opt;
    opt.max_rounds = 500;
    opt.tolerance = 1e-9;
    MiStepReport report;
    const auto fit = mi_step(x, u, init, opt, &report);
    CHECK(report.converged);
    check_valid(fit);
    for (std::size_t m = 0; m < 2; ++m) {
        const auto& c = fit.foreground()[m];
        CHECK(std::abs(c.mu / truth[m].mu - 1.0) < 0.02);
        CHECK(std::abs(c.sigma / truth[m].sigma - 1.0) < 0.05);
        CHECK(std::abs(c.pi - truth[m].pi) < 0.01);
    }
    // No weight on the background: it is left alone.
    CHECK(fit.background() == init.background());
}

TEST_CASE("nu solve recovers the degrees of freedom") {
    const std::vector<StudentTComponent> truth{{1.0, 50.0, 20.0, 4.0}};
    const auto x = oracle::draw_t_mixture(truth, 100000, 22);
    const std::vector<double> u(x.size(), 1.0);
    auto init = two_class({{1.0, 0.0, 100.0, 5.0}}, {{1.0, 40.0, 30.0, 10.0}});
    MiOptions opt;
    opt.nu_mode = NuMode::solve;
    opt.max_rounds = 500;
    opt.tolerance = 1e-9;
    const auto fit = mi_step(x, u, init, opt);
    CHECK(std::abs(fit.foreground()[0].nu / 4.0 - 1.0) < 0.1);
    CHECK(std::abs(fit.foreground()[0].mu / 50.0 - 1.0) < 0.02);
}

TEST_CASE("zero foreground weight keeps the foreground and fits the background unweighted") {
    const auto x = oracle::draw_t_mixture({{0.5, -300.0, 50.0, 5.0}, {0.5, 400.0, 90.0, 5.0}}, 5000, 23);
    const std::vector<double> zero(x.size(), 0.0), ones(x.size(), 1.0);
    const auto init = two_class({{0.5, -200.0, 80.0, 5.0}, {0.5, 300.0, 80.0, 5.0}}, {{1.0, 0.0, 150.0, 5.0}});
    const auto next = mi_round(x, zero, init);
    CHECK(next.foreground() == init.foreground());
    const auto ref = oracle_round(x, ones, init.background());
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(next.background()[m].pi == doctest::Approx(ref[m].pi).epsilon(1e-10));
        CHECK(next.background()[m].mu == doctest::Approx(ref[m].mu).epsilon(1e-10));
        CHECK(next.background()[m].sigma == doctest::Approx(ref[m].sigma).epsilon(1e-10));
    }
}

TEST_CASE("weighted rounds match the oracle EM") {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto x = oracle::draw_t_mixture({{0.3, 0.0, 100.0, 3.0}, {0.7, 900.0, 150.0, 8.0}}, 3000, 25);
    std::vector<double> u(x.size()), fg(x.size()), bg(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        u[n] = unit(rng);
        fg[n] = u[n];
        bg[n] = 1.0 - u[n];
    }
    const auto init = two_class({{0.5, -50.0, 120.0, 4.0}, {0.5, 800.0, 120.0, 6.0}},
                                {{0.25, 100.0, 200.0, 3.0}, {0.75, 1000.0, 90.0, 10.0}});
    const auto next = mi_round(x, u, init);
    const auto ref_bg = oracle_round(x, bg, init.background());
    const auto ref_fg = oracle_round(x, fg, init.foreground());
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(next.background()[m].mu == doctest::Approx(ref_bg[m].mu).epsilon(1e-10));
        CHECK(next.background()[m].sigma == doctest::Approx(ref_bg[m].sigma).epsilon(1e-10));
        CHECK(next.foreground()[m].pi == doctest::Approx(ref_fg[m].pi).epsilon(1e-10));
        CHECK(next.foreground()[m].mu == doctest::Approx(ref_fg[m].mu).epsilon(1e-10));
        CHECK(next.foreground()[m].sigma == doctest::Approx(ref_fg[m].sigma).epsilon(1e-10));
    }
}

TEST_CASE("large nu reduces to Gaussian-mixture EM") {
    std::mt19937_64 rng(26);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto x = oracle::draw_t_mixture({{0.5, 0.0, 60.0, 1e6}, {0.5, 500.0, 90.0, 1e6}}, 4000, 27);
    std::vector<double> u(x.size());
    for (auto& v : u) v = unit(rng);
    const std::vector<StudentTComponent> start{{0.5, 50.0, 100.0, 1e8}, {0.5, 450.0, 100.0, 1e8}};
    auto params = two_class(start, start);
    auto ref = start;
    for (int round = 0; round < 5; ++round) {
        params = mi_round(x, u, params);
        ref = gaussian_round(x, u, ref);
    }
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(std::abs(params.foreground()[m].mu / ref[m].mu - 1.0) < 1e-3);
        CHECK(std::abs(params.foreground()[m].sigma / ref[m].sigma - 1.0) < 1e-3);
        CHECK(std::abs(params.foreground()[m].pi / ref[m].pi - 1.0) < 1e-3);
    }
}

TEST_CASE("every round increases the weighted log-likelihood") {
    std::mt19937_64 rng(28);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = oracle::draw_t_mixture({{0.2, -800.0, 150.0, 4.0}, {0.5, 100.0, 200.0, 6.0}, {0.3, 1500.0, 300.0, 3.0}},
                                    2000, 100 + std::uint64_t(trial));
        std::vector<double> u(x.size());
        for (auto& v : u) v = unit(rng) < 0.3 ? unit(rng) : double(unit(rng) < 0.5);
        auto params = IntensityParams::cochlea_default();
        for (auto& cls : params.classes) {
            for (auto& c : cls) {
                c.mu += 400.0 * (unit(rng) - 0.5);
                c.sigma *= 0.5 + unit(rng);
            }
        }
        MiOptions opt;
        opt.nu_mode = trial % 2 ? NuMode::solve : NuMode::fixed;
        for (int round = 0; round < 10; ++round) {
            MiRoundReport report;
            params = mi_round(x, u, params, opt, &report);
            CHECK(report.weighted_log_likelihood_after >=
                  report.weighted_log_likelihood_before - 1e-9 * std::abs(report.weighted_log_likelihood_before));
            check_valid(params);
        }
    }
}

TEST_CASE("components without weight are frozen with a warning") {
    const auto x = oracle::draw_t_mixture({{1.0, 0.0, 50.0, 5.0}}, 2000, 29);
    const std::vector<double> u(x.size(), 1.0);
    const auto init = two_class({{1.0, 0.0, 50.0, 5.0}}, {{0.5, 0.0, 60.0, 5.0}, {0.5, 1e7, 10.0, 5.0}});
    MiRoundReport report;
    const auto next = mi_round(x, u, init, {}, &report);
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("component 1") != std::string::npos);
    CHECK(next.foreground()[1].mu == 1e7);
    CHECK(next.foreground()[1].sigma == 10.0);
    check_valid(next);
}

TEST_CASE("sigma floor") {
    const std::vector<float> x(100, 42.0f);
    const std::vector<double> u(x.size(), 1.0);
    const auto init = two_class({{1.0, 0.0, 50.0, 5.0}}, {{1.0, 40.0, 10.0, 5.0}});
    const auto next = mi_round(x, u, init);
    CHECK(next.foreground()[0].sigma == 1.0);
    CHECK(next.foreground()[0].mu == doctest::Approx(42.0));
}

TEST_CASE("relative foreground change") {
    const auto a = IntensityParams::cochlea_default();
    CHECK(relative_foreground_change(a, a) == 0.0);
    auto b = a;
    b.classes[1][1].mu += 10.0;
    CHECK(relative_foreground_change(a, b) > 0.0);
    auto c = a;
    c.classes[0][0].mu += 1e4;
    CHECK(relative_foreground_change(a, c) == 0.0);
}

TEST_CASE("inputs are checked") {
    const std::vector<float> x(3, 0.0f);
    const auto p = IntensityParams::cochlea_default();
    CHECK_THROWS_AS(mi_round(x, std::vector<double>{0.5, 0.5}, p), InvalidArgument);
    CHECK_THROWS_AS(mi_round(x, std::vector<double>{0.5, 1.5, 0.0}, p), InvalidArgument);
}

} // TEST_SUITE
