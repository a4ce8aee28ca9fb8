// Student's t mixture-of-mixtures appearance model.
//
// Each class k (0 = background, 1 = foreground) has its own mixture of
// univariate Student's t components. Parameters are fitted by weighted EM on
// the Gaussian scale-mixture representation of the t distribution, the class
// weights being the foreground responsibilities u_n (class 1) and 1 - u_n
// (class 0).
#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "lsm/common.hpp"

namespace lsm {

struct StudentTComponent {
    double pi = 1.0;    // mixing weight within the class
    double mu = 0.0;    // location (HU)
    double sigma = 1.0; // scale (HU)
    double nu = 5.0;    // degrees of freedom; +inf gives the Gaussian limit

    bool operator==(const StudentTComponent&) const = default;
};

struct IntensityParams {
    std::array<std::vector<StudentTComponent>, 2> classes;

    [[nodiscard]] const std::vector<StudentTComponent>& background() const { return classes[0]; }
    [[nodiscard]] const std::vector<StudentTComponent>& foreground() const { return classes[1]; }

    // 4 (M0 + M1).
    [[nodiscard]] std::size_t parameter_count() const { return 4 * (classes[0].size() + classes[1].size()); }

    // Throws InvalidArgument unless every class is non-empty, weights sum to 1
    // (1e-12), sigma > 0 and nu > 0.
    void validate() const;

    bool operator==(const IntensityParams&) const = default;

    // Foreground {0, 500} HU and background {0, 2000, -1000, 600} HU,
    // sigma = 150 HU, nu = 5, uniform weights.
    static IntensityParams cochlea_default();
};

// Student's t density, computed through log-gamma.
double t_pdf(double x, double mu, double sigma, double nu);
double t_log_pdf(double x, double mu, double sigma, double nu);

// log p(I | k, theta_I) for class k in {0, 1}.
double class_log_likelihood(double intensity, int k, const IntensityParams& params);
// p(I | k, theta_I).
double class_likelihood(double intensity, int k, const IntensityParams& params);

// Caches per-component normalizing constants for repeated evaluation.
class PreparedIntensityModel {
public:
    explicit PreparedIntensityModel(const IntensityParams& params);

    [[nodiscard]] double class_log_likelihood(double intensity, int k) const;
    // log pi_m + log t(I | component m) for every component of class k.
    void component_log_terms(double intensity, int k, std::span<double> out) const;
    [[nodiscard]] std::size_t component_count(int k) const { return comps_[static_cast<std::size_t>(k)].size(); }

private:
    struct Component {
        double log_weight, mu, inv_sigma, nu, log_norm;
    };
    std::array<std::vector<Component>, 2> comps_;
};

enum class NuMode { fixed, solve };

struct MiOptions {
    NuMode nu_mode = NuMode::fixed;
    int max_rounds = 50;
    double tolerance = 1e-3;   // see relative_foreground_change
    double sigma_floor = 1.0;  // HU
    double freeze_fraction = 1e-8; // components with effective weight < fraction * N are frozen
    double nu_lo = 0.1, nu_hi = 200.0;
};

struct MiRoundReport {
    double weighted_log_likelihood_before = 0.0;
    double weighted_log_likelihood_after = 0.0;
    std::vector<std::string> warnings;
};

struct MiStepReport {
    std::vector<double> weighted_log_likelihood; // before the first round, then after each round
    int rounds = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

// sum_n sum_k u_n^k log p(I_n | k, theta_I).
double weighted_log_likelihood(std::span<const float> image, std::span<const double> u, const IntensityParams& params);

// One EM round for both classes with responsibilities held fixed.
IntensityParams mi_round(std::span<const float> image, std::span<const double> u, const IntensityParams& params,
                         const MiOptions& options = {}, MiRoundReport* report = nullptr);

// Rounds of mi_round until the relative change of the foreground parameters
// drops below options.tolerance or max_rounds is reached.
IntensityParams mi_step(std::span<const float> image, std::span<const double> u, const IntensityParams& params,
                        const MiOptions& options = {}, MiStepReport* report = nullptr);

// |delta| / |before| over the stacked foreground (pi, mu, sigma, nu) vector;
// infinite nu entries are left out.
double relative_foreground_change(const IntensityParams& before, const IntensityParams& after);

} // namespace lsm
