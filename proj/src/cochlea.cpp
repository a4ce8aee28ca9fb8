#include "lsm/cochlea.hpp"

#include <cmath>
#include <limits>

#include "lsm/parallel.hpp"

namespace lsm {

using std::numbers::pi;

void CochleaConstants::validate() const {
    if (!(theta0 > 0.0)) throw InvalidArgument("theta0 must be > 0");
    if (!(theta_max > theta0 + pi)) throw InvalidArgument("theta_max must exceed theta0 + pi");
}

ContinuityConstants continuity_constants(const CochleaDeformable& p, const CochleaConstants& c) {
    ContinuityConstants k;
    // Radial: quadratic through p0 meeting a e^{-b theta} with matching value and slope at theta0.
    k.C2 = p.a * std::exp(-p.b * c.theta0);
    k.C1 = -k.C2 * p.b;
    const double t0 = c.theta0;
    k.p2 = (k.C1 * t0 - k.C2 + c.p0) / (t0 * t0);
    k.p1 = (-k.C1 * t0 + 2.0 * k.C2 - 2.0 * c.p0) / t0;

    // Longitudinal: quadratic matching value and slope at theta1 with zero slope at theta_max.
    const double t1 = c.theta1();
    const double damp = p.alpha * std::exp(-c.beta * t1);
    const double u = t1 + p.phi;
    const double z1 = damp * std::cos(u) + c.q1 * t1;
    const double dz1 = damp * (-c.beta * std::cos(u) - std::sin(u)) + c.q1;
    k.a2 = dz1 / (2.0 * (t1 - c.theta_max));
    k.a1 = -2.0 * k.a2 * c.theta_max;
    k.a0 = z1 - (k.a2 * t1 + k.a1) * t1;
    return k;
}

// ---------------------------------------------------------------------------

CochleaCenterline::CochleaCenterline(const CochleaDeformable& p, const CochleaConstants& c)
    : p_(p), c_(c), k_(continuity_constants(p, c)) {}

Jet CochleaCenterline::radial_jet(double t) const {
    if (t < c_.theta0) {
        return {(k_.p2 * t + k_.p1) * t + c_.p0, 2.0 * k_.p2 * t + k_.p1, 2.0 * k_.p2};
    }
    const double v = p_.a * std::exp(-p_.b * t);
    return {v, -p_.b * v, p_.b * p_.b * v};
}

Jet CochleaCenterline::longitudinal_jet(double t) const {
    if (t < c_.theta1()) {
        const double e = p_.alpha * std::exp(-c_.beta * t);
        const double cu = std::cos(t + p_.phi);
        const double su = std::sin(t + p_.phi);
        const double b = c_.beta;
        return {e * cu + c_.q1 * t, e * (-b * cu - su) + c_.q1, e * ((b * b - 1.0) * cu + 2.0 * b * su)};
    }
    return {(k_.a2 * t + k_.a1) * t + k_.a0, 2.0 * k_.a2 * t + k_.a1, 2.0 * k_.a2};
}

Vec3 CochleaCenterline::point(double t) const {
    const double r = radial_jet(t).value;
    return {r * std::cos(t), r * std::sin(t), longitudinal_jet(t).value};
}

void CochleaCenterline::point_derivatives(double t, Vec3& c, Vec3& dc, Vec3& ddc) const {
    const Jet r = radial_jet(t);
    const Jet z = longitudinal_jet(t);
    const double ct = std::cos(t), st = std::sin(t);
    c = {r.value * ct, r.value * st, z.value};
    dc = {r.d1 * ct - r.value * st, r.d1 * st + r.value * ct, z.d1};
    ddc = {r.d2 * ct - 2.0 * r.d1 * st - r.value * ct, r.d2 * st + 2.0 * r.d1 * ct - r.value * st, z.d2};
}

namespace {
void check_angle(double theta, const CochleaConstants& c) {
    if (!(theta >= 0.0 && theta <= c.theta_max)) {
        throw InvalidArgument("polar angle " + std::to_string(theta) + " outside [0, theta_max]");
    }
}
} // namespace

double radial(double theta, double a, double b, const CochleaConstants& c) {
    check_angle(theta, c);
    return CochleaCenterline({a, b, 0.0, 0.0}, c).radial_jet(theta).value;
}

double longitudinal(double theta, double alpha, double phi, const CochleaConstants& c) {
    check_angle(theta, c);
    return CochleaCenterline({4.0, 0.15, alpha, phi}, c).longitudinal_jet(theta).value;
}

std::vector<Vec3> centerline(const CochleaDeformable& p, std::size_t n_samples, const CochleaConstants& c) {
    if (n_samples < 2) throw InvalidArgument("centerline needs at least 2 samples");
    c.validate();
    const CochleaCenterline curve(p, c);
    std::vector<Vec3> pts(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        // The last sample is pinned to theta_max exactly.
        const double t = i + 1 == n_samples ? c.theta_max : c.theta_max * double(i) / double(n_samples - 1);
        pts[i] = curve.point(t);
    }
    return pts;
}

// ---------------------------------------------------------------------------

Bounds CochleaOptions::default_bounds() {
    const double rot = pi / 4.0;
    return {{2.0, 7.0},   {0.05, 0.4},  {0.1, 2.0},   {-pi, pi},   {-rot, rot},
            {-rot, rot},  {-rot, rot},  {-3.0, 3.0},  {-3.0, 3.0}, {-3.0, 3.0}};
}

struct CochleaShape::Sampled {
    CochleaCenterline curve;
    std::vector<Vec3> points;
    double step = 0.0;
};

CochleaShape::CochleaShape(CochleaOptions options) : RigidShape(4, options.bounds), opts_(std::move(options)) {
    opts_.constants.validate();
    if (opts_.coarse_samples < 3) throw InvalidArgument("cochlea search needs at least 3 coarse samples");
    const double tm = opts_.constants.theta_max;
    if (!(opts_.cross_section.radius(0.0, tm) > 0.0 && opts_.cross_section.radius(tm, tm) > 0.0)) {
        throw InvalidArgument("cross-section radius must stay positive");
    }
    if (!(bounds_[0].lo > 0.0 && bounds_[1].lo > 0.0)) throw InvalidArgument("a and b bounds must be positive");
}

std::vector<std::string> CochleaShape::parameter_names() const {
    return {"a", "b", "alpha", "phi", "rx", "ry", "rz", "tx", "ty", "tz"};
}

CochleaDeformable CochleaShape::unpack(std::span<const double> d) {
    if (d.size() != 4) throw InvalidArgument("cochlea has 4 deformable parameters");
    return {d[0], d[1], d[2], d[3]};
}

std::vector<double> CochleaShape::default_parameters() { return {4.0, 0.15, 0.6, 0.2, 0, 0, 0, 0, 0, 0}; }

CochleaShape::Sampled CochleaShape::sample(std::span<const double> deformable) const {
    Sampled s{CochleaCenterline(unpack(deformable), opts_.constants), {}, 0.0};
    const std::size_t m = opts_.coarse_samples;
    s.step = opts_.constants.theta_max / double(m - 1);
    s.points.resize(m);
    for (std::size_t i = 0; i < m; ++i) s.points[i] = s.curve.point(i + 1 == m ? opts_.constants.theta_max : s.step * double(i));
    return s;
}

NearestCenterlinePoint CochleaShape::search(const Sampled& s, const Vec3& y, double tolerance) {
    const std::size_t m = s.points.size();
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
        const double d2 = (s.points[i] - y).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    const double tmax = s.curve.constants().theta_max;
    const double lo = best == 0 ? 0.0 : s.step * double(best - 1);
    const double hi = best + 1 >= m ? tmax : std::min(tmax, s.step * double(best + 1));
    const double best_theta = best + 1 == m ? tmax : s.step * double(best);

    auto f = [&](double t) { return (s.curve.point(t) - y).squaredNorm(); };

    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tolerance) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    double t = 0.5 * (a + b);
    // Comparisons alone cannot place theta beyond ~sqrt(eps) on the flat
    // squared distance, so polish with Newton steps on (c - y) . c' = 0.
    auto stationarity = [&](double th, double& slope) {
        Vec3 c, dc, ddc;
        s.curve.point_derivatives(th, c, dc, ddc);
        const Vec3 diff = c - y;
        slope = dc.squaredNorm() + diff.dot(ddc);
        return diff.dot(dc);
    };
    double slope = 0.0;
    double g = stationarity(t, slope);
    for (int k = 0; k < 4 && slope > 0.0 && g != 0.0; ++k) {
        const double tn = t - g / slope;
        if (!(tn >= lo && tn <= hi)) break;
        double slope_n = 0.0;
        const double gn = stationarity(tn, slope_n);
        if (!(std::abs(gn) < std::abs(g))) break;
        t = tn;
        g = gn;
        slope = slope_n;
    }
    double ft = f(t);
    // Snap to the curve ends when the minimum sits on them.
    if (a <= lo && lo == 0.0) {
        const double f0 = f(0.0);
        if (f0 <= ft) t = 0.0, ft = f0;
    }
    if (b >= hi && hi == tmax) {
        const double fe = f(tmax);
        if (fe <= ft) t = tmax, ft = fe;
    }
    if (best_d2 < ft) t = best_theta, ft = best_d2;
    if (!std::isfinite(ft)) throw NumericalError("nearest centerline point search failed");
    return {t, std::sqrt(ft)};
}

double CochleaShape::value_at(const Sampled& s, const Vec3& y, Vec3* gradient) const {
    const auto np = search(s, y, opts_.search_tolerance);
    const double tmax = opts_.constants.theta_max;
    const double rho = opts_.cross_section.radius(np.theta, tmax);
    if (gradient) {
        Vec3 c, dc, ddc;
        s.curve.point_derivatives(np.theta, c, dc, ddc);
        const Vec3 diff = y - c;
        const Vec3 n = np.distance > 0.0 ? Vec3(diff / np.distance) : Vec3::Zero();
        Vec3 dtheta = Vec3::Zero();
        if (np.theta > 0.0 && np.theta < tmax) {
            // Implicit differentiation of (y - c(theta)) . c'(theta) = 0.
            const double den = dc.squaredNorm() - diff.dot(ddc);
            if (den > 0.0) dtheta = dc / den;
        }
        *gradient = opts_.cross_section.slope(tmax) * dtheta - n;
    }
    return rho - np.distance;
}

double CochleaShape::local_value(std::span<const double> deformable, const Vec3& y) const {
    return value_at(sample(deformable), y, nullptr);
}

Vec3 CochleaShape::local_spatial_gradient(std::span<const double> deformable, const Vec3& y) const {
    Vec3 g;
    (void)value_at(sample(deformable), y, &g);
    return g;
}

void CochleaShape::local_values(std::span<const double> deformable, std::span<const Vec3> ys,
                                std::span<double> values) const {
    const Sampled s = sample(deformable);
    parallel_for(ys.size(), [&](std::size_t n) { values[n] = value_at(s, ys[n], nullptr); });
}

void CochleaShape::local_values_and_gradients(std::span<const double> deformable, std::span<const Vec3> ys,
                                              std::span<double> values, std::span<Vec3> gradients) const {
    const Sampled s = sample(deformable);
    parallel_for(ys.size(), [&](std::size_t n) {
        values[n] = value_at(s, ys[n], gradients.empty() ? nullptr : &gradients[n]);
    });
}

NearestCenterlinePoint CochleaShape::nearest_point(std::span<const double> deformable, const Vec3& y) const {
    return search(sample(deformable), y, opts_.search_tolerance);
}

GridGeometry cochlea_reference_grid(const CochleaShape& shape, std::span<const double> theta,
                                    std::array<std::size_t, 3> dims, double spacing) {
    shape.check_parameters(theta);
    const auto& L = shape.layout();
    const Vec3 r(theta[L.rotation_offset()], theta[L.rotation_offset() + 1], theta[L.rotation_offset() + 2]);
    const Vec3 t(theta[L.translation_offset()], theta[L.translation_offset() + 1], theta[L.translation_offset() + 2]);
    const Mat3 Rt = rotation_matrix(r).transpose();
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& c : centerline(CochleaShape::unpack(theta.first(4)), 1024, shape.options().constants)) {
        const Vec3 w = Rt * (c - t);
        lo = lo.cwiseMin(w);
        hi = hi.cwiseMax(w);
    }
    const Vec3 center = 0.5 * (lo + hi);
    GridGeometry g;
    g.dims = dims;
    g.spacing = Vec3::Constant(spacing);
    for (int a = 0; a < 3; ++a) g.origin[a] = center[a] - 0.5 * spacing * double(dims[static_cast<std::size_t>(a)] - 1);
    return g;
}

} // namespace lsm
