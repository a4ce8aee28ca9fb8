#include "lsm/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>

#include "lsm/parallel.hpp"

namespace lsm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
    double m = -kInf;
    for (double x : v) m = std::max(m, x);
    if (m == -kInf) return -kInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::vector<double> stacked_foreground(const IntensityParams& p) {
    std::vector<double> v;
    for (const auto& c : p.foreground()) {
        v.insert(v.end(), {c.pi, c.mu, c.sigma});
        if (std::isfinite(c.nu)) v.push_back(c.nu);
    }
    return v;
}

} // namespace

void IntensityParams::validate() const {
    for (int k = 0; k < 2; ++k) {
        const auto& comps = classes[static_cast<std::size_t>(k)];
        if (comps.empty()) throw InvalidArgument("intensity class " + std::to_string(k) + " has no components");
        double total = 0.0;
        for (const auto& c : comps) {
            if (!(c.pi >= 0.0 && c.pi <= 1.0)) throw InvalidArgument("mixing weight outside [0, 1]");
            if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) throw InvalidArgument("t component sigma must be > 0");
            if (!(c.nu > 0.0)) throw InvalidArgument("t component nu must be > 0");
            if (!std::isfinite(c.mu)) throw InvalidArgument("t component mu must be finite");
            total += c.pi;
        }
        if (std::abs(total - 1.0) > 1e-12) {
            throw InvalidArgument("mixing weights of class " + std::to_string(k) + " do not sum to 1");
        }
    }
}

IntensityParams IntensityParams::cochlea_default() {
    IntensityParams p;
    for (double mu : {0.0, 2000.0, -1000.0, 600.0}) p.classes[0].push_back({0.25, mu, 150.0, 5.0});
    for (double mu : {0.0, 500.0}) p.classes[1].push_back({0.5, mu, 150.0, 5.0});
    return p;
}

double t_log_pdf(double x, double mu, double sigma, double nu) {
    if (!std::isfinite(x) || !std::isfinite(mu) || !std::isfinite(sigma) || std::isnan(nu)) {
        throw InvalidArgument("t_pdf: non-finite input");
    }
    if (!(sigma > 0.0) || !(nu > 0.0)) throw InvalidArgument("t_pdf: sigma and nu must be > 0");
    const double z = (x - mu) / sigma;
    if (std::isinf(nu)) return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(std::numbers::pi * nu) -
           std::log(sigma) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

double t_pdf(double x, double mu, double sigma, double nu) { return std::exp(t_log_pdf(x, mu, sigma, nu)); }

PreparedIntensityModel::PreparedIntensityModel(const IntensityParams& params) {
    for (std::size_t k = 0; k < 2; ++k) {
        for (const auto& c : params.classes[k]) {
            if (!(c.sigma > 0.0) || !(c.nu > 0.0)) throw InvalidArgument("t component needs sigma > 0 and nu > 0");
            Component p{c.pi > 0.0 ? std::log(c.pi) : -kInf, c.mu, 1.0 / c.sigma, c.nu, 0.0};
            if (std::isinf(c.nu)) {
                p.log_norm = -std::log(c.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
            } else {
                p.log_norm = std::lgamma(0.5 * (c.nu + 1.0)) - std::lgamma(0.5 * c.nu) -
                             0.5 * std::log(std::numbers::pi * c.nu) - std::log(c.sigma);
            }
            comps_[k].push_back(p);
        }
    }
}

void PreparedIntensityModel::component_log_terms(double intensity, int k, std::span<double> out) const {
    const auto& comps = comps_[static_cast<std::size_t>(k)];
    for (std::size_t m = 0; m < comps.size(); ++m) {
        const auto& c = comps[m];
        const double z = (intensity - c.mu) * c.inv_sigma;
        const double kernel = std::isinf(c.nu) ? -0.5 * z * z : -0.5 * (c.nu + 1.0) * std::log1p(z * z / c.nu);
        out[m] = c.log_weight + c.log_norm + kernel;
    }
}

double PreparedIntensityModel::class_log_likelihood(double intensity, int k) const {
    const std::size_t m = comps_[static_cast<std::size_t>(k)].size();
    double buf[16];
    std::vector<double> big;
    std::span<double> t;
    if (m <= 16) {
        t = std::span<double>(buf, m);
    } else {
        big.resize(m);
        t = big;
    }
    component_log_terms(intensity, k, t);
    return log_sum_exp(t);
}

double class_log_likelihood(double intensity, int k, const IntensityParams& params) {
    if (k != 0 && k != 1) throw InvalidArgument("class index must be 0 or 1");
    if (!std::isfinite(intensity)) throw InvalidArgument("intensity must be finite");
    return PreparedIntensityModel(params).class_log_likelihood(intensity, k);
}

double class_likelihood(double intensity, int k, const IntensityParams& params) {
    return std::exp(class_log_likelihood(intensity, k, params));
}

double weighted_log_likelihood(std::span<const float> image, std::span<const double> u, const IntensityParams& params) {
    if (image.size() != u.size()) throw InvalidArgument("image and responsibilities differ in size");
    const PreparedIntensityModel model(params);
    return parallel_block_reduce(image.size(), 0.0, [&](std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t n = b; n < e; ++n) {
            if (u[n] > 0.0) s += u[n] * model.class_log_likelihood(image[n], 1);
            if (u[n] < 1.0) s += (1.0 - u[n]) * model.class_log_likelihood(image[n], 0);
        }
        return s;
    });
}

namespace {

// Per-component sums of one class; rows: component, columns:
// 0 sum c tau, 1 sum c tau w, 2 sum c tau w I, 3 sum c tau (log w - w)
using Sums = Eigen::ArrayXXd;

struct ClassResult {
    std::vector<StudentTComponent> components;
    std::vector<std::string> warnings;
};

// E-step quantities for voxel intensity x and class components.
void responsibilities(double x, int k, const PreparedIntensityModel& model, const std::vector<StudentTComponent>& comps,
                      std::span<double> tau, std::span<double> w) {
    const std::size_t m = comps.size();
    model.component_log_terms(x, k, tau);
    const double lse = log_sum_exp(tau);
    for (std::size_t j = 0; j < m; ++j) {
        const auto& c = comps[j];
        tau[j] = lse == -kInf ? 1.0 / double(m) : std::exp(tau[j] - lse);
        const double z = (x - c.mu) / c.sigma;
        w[j] = std::isinf(c.nu) ? 1.0 : (c.nu + 1.0) / (c.nu + z * z);
    }
}

double solve_nu(double nu_old, double mean_logw_minus_w, const MiOptions& opt) {
    using boost::math::digamma;
    const double shift = digamma(0.5 * (nu_old + 1.0)) - std::log(0.5 * (nu_old + 1.0));
    auto h = [&](double nu) { return -digamma(0.5 * nu) + std::log(0.5 * nu) + 1.0 + mean_logw_minus_w + shift; };
    double lo = opt.nu_lo, hi = opt.nu_hi;
    const double hlo = h(lo), hhi = h(hi);
    if (hlo <= 0.0) return lo;
    if (hhi >= 0.0) return hi;
    for (int it = 0; it < 200 && hi - lo > 1e-10 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (h(mid) > 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

ClassResult update_class(std::span<const float> image, std::span<const double> u, int k,
                         const std::vector<StudentTComponent>& comps, const MiOptions& opt) {
    const std::size_t n = image.size();
    const auto m = static_cast<Eigen::Index>(comps.size());
    auto weight = [&](std::size_t i) { return k == 1 ? u[i] : 1.0 - u[i]; };
    IntensityParams single;
    single.classes[static_cast<std::size_t>(k)] = comps;
    const PreparedIntensityModel model(single);

    const Sums first = parallel_block_reduce(n, Sums(Sums::Zero(m, 4)), [&](std::size_t b, std::size_t e) {
        Sums s = Sums::Zero(m, 4);
        std::vector<double> tau(comps.size()), w(comps.size());
        for (std::size_t i = b; i < e; ++i) {
            const double c = weight(i);
            if (c <= 0.0) continue;
            responsibilities(image[i], k, model, comps, tau, w);
            for (Eigen::Index j = 0; j < m; ++j) {
                const double ct = c * tau[static_cast<std::size_t>(j)];
                const double wj = w[static_cast<std::size_t>(j)];
                s(j, 0) += ct;
                s(j, 1) += ct * wj;
                s(j, 2) += ct * wj * image[i];
                s(j, 3) += ct * (std::log(wj) - wj);
            }
        }
        return s;
    });

    ClassResult out{comps, {}};
    const double total = first.col(0).sum();
    if (!(total > 0.0)) return out; // no weight on this class: unchanged

    std::vector<bool> frozen(comps.size(), false);
    for (Eigen::Index j = 0; j < m; ++j) {
        auto& c = out.components[static_cast<std::size_t>(j)];
        c.pi = first(j, 0) / total;
        if (first(j, 0) < opt.freeze_fraction * double(n) || !(first(j, 1) > 0.0)) {
            frozen[static_cast<std::size_t>(j)] = true;
            out.warnings.push_back("class " + std::to_string(k) + " component " + std::to_string(j) +
                                   " has negligible weight; frozen this round");
            continue;
        }
        c.mu = first(j, 2) / first(j, 1);
    }

    // Second pass for the scale around the updated locations.
    const Eigen::ArrayXd second = parallel_block_reduce(n, Eigen::ArrayXd(Eigen::ArrayXd::Zero(m)), [&](std::size_t b, std::size_t e) {
        Eigen::ArrayXd s = Eigen::ArrayXd::Zero(m);
        std::vector<double> tau(comps.size()), w(comps.size());
        for (std::size_t i = b; i < e; ++i) {
            const double c = weight(i);
            if (c <= 0.0) continue;
            responsibilities(image[i], k, model, comps, tau, w);
            for (Eigen::Index j = 0; j < m; ++j) {
                const double d = image[i] - out.components[static_cast<std::size_t>(j)].mu;
                s(j) += c * tau[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j)] * d * d;
            }
        }
        return s;
    });

    for (Eigen::Index j = 0; j < m; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        if (frozen[jj]) continue;
        auto& c = out.components[jj];
        c.sigma = std::max(opt.sigma_floor, std::sqrt(second(j) / first(j, 0)));
        if (opt.nu_mode == NuMode::solve && std::isfinite(c.nu)) {
            c.nu = solve_nu(comps[jj].nu, first(j, 3) / first(j, 0), opt);
        }
    }

    // Renormalize against rounding.
    double pi_sum = 0.0;
    for (const auto& c : out.components) pi_sum += c.pi;
    for (auto& c : out.components) c.pi /= pi_sum;
    return out;
}

} // namespace

IntensityParams mi_round(std::span<const float> image, std::span<const double> u, const IntensityParams& params,
                         const MiOptions& options, MiRoundReport* report) {
    if (image.size() != u.size()) throw InvalidArgument("image and responsibilities differ in size");
    params.validate();
    for (double v : u) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("responsibilities must lie in [0, 1]");
    }
    IntensityParams next = params;
    std::vector<std::string> warnings;
    for (int k = 0; k < 2; ++k) {
        auto r = update_class(image, u, k, params.classes[static_cast<std::size_t>(k)], options);
        next.classes[static_cast<std::size_t>(k)] = std::move(r.components);
        warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    }
    if (report) {
        report->weighted_log_likelihood_before = weighted_log_likelihood(image, u, params);
        report->weighted_log_likelihood_after = weighted_log_likelihood(image, u, next);
        report->warnings = std::move(warnings);
    }
    return next;
}

double relative_foreground_change(const IntensityParams& before, const IntensityParams& after) {
    const auto a = stacked_foreground(before);
    const auto b = stacked_foreground(after);
    if (a.size() != b.size()) return kInf;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (b[i] - a[i]) * (b[i] - a[i]);
        den += a[i] * a[i];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : kInf;
    return std::sqrt(num / den);
}

IntensityParams mi_step(std::span<const float> image, std::span<const double> u, const IntensityParams& params,
                        const MiOptions& options, MiStepReport* report) {
    IntensityParams current = params;
    MiStepReport local;
    local.weighted_log_likelihood.push_back(weighted_log_likelihood(image, u, params));
    for (int round = 0; round < options.max_rounds; ++round) {
        MiRoundReport r;
        IntensityParams next = mi_round(image, u, current, options, &r);
        local.weighted_log_likelihood.push_back(r.weighted_log_likelihood_after);
        for (auto& w : r.warnings) {
            if (std::find(local.warnings.begin(), local.warnings.end(), w) == local.warnings.end()) {
                local.warnings.push_back(std::move(w));
            }
        }
        ++local.rounds;
        const double change = relative_foreground_change(current, next);
        current = std::move(next);
        if (change < options.tolerance) {
            local.converged = true;
            break;
        }
    }
    if (report) *report = std::move(local);
    return current;
}

} // namespace lsm
