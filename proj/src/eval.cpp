#include "lsm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lsm/cochlea.hpp"
#include "lsm/random.hpp"

namespace lsm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

void check_same_grid(const BinaryMask& a, const BinaryMask& b) {
    if (!(a.grid == b.grid)) throw InvalidArgument("masks live on different grids");
}

bool isotropic(const GridGeometry& grid) {
    return grid.spacing.x() == grid.spacing.y() && grid.spacing.y() == grid.spacing.z();
}

// One pass of the lower-envelope distance transform along a line:
// out[q] = min_p w (q - p)^2 + f[p], carrying the feature of the minimizer.
void envelope_pass(std::vector<double>& f, std::vector<std::size_t>& feat, double w) {
    const std::size_t len = f.size();
    std::vector<std::size_t> v(len);
    std::vector<double> z(len + 1);
    std::size_t k = 0;
    bool any = false;
    for (std::size_t q = 0; q < len; ++q) {
        if (f[q] == kInf) continue;
        if (!any) {
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            any = true;
            continue;
        }
        const double dq = static_cast<double>(q);
        double s = 0.0;
        while (true) {
            const double dv = static_cast<double>(v[k]);
            s = ((f[q] + w * dq * dq) - (f[v[k]] + w * dv * dv)) / (2.0 * w * (dq - dv));
            if (s <= z[k]) {
                --k; // z[0] = -inf keeps k >= 0
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (!any) return;
    std::vector<double> out(len);
    std::vector<std::size_t> out_feat(len);
    k = 0;
    for (std::size_t q = 0; q < len; ++q) {
        const double dq = static_cast<double>(q);
        while (z[k + 1] < dq) ++k;
        const double d = dq - static_cast<double>(v[k]);
        out[q] = w * d * d + f[v[k]];
        out_feat[q] = feat[v[k]];
    }
    f = std::move(out);
    feat = std::move(out_feat);
}

// Nearest voxel of `sites` for every voxel of the grid.
std::vector<std::size_t> feature_transform(const GridGeometry& grid, const std::vector<std::size_t>& sites) {
    const std::size_t n = grid.size();
    std::vector<double> dist(n, kInf);
    std::vector<std::size_t> feat(n, kNone);
    for (auto s : sites) {
        dist[s] = 0.0;
        feat[s] = s;
    }
    const auto& d = grid.dims;
    const std::array<std::size_t, 3> stride{1, d[0], d[0] * d[1]};
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t len = d[static_cast<std::size_t>(axis)];
        if (len == 1) continue;
        // Isotropic grids run in voxel units, where squared distances are exact integers.
        const double w = isotropic(grid) ? 1.0 : grid.spacing[axis] * grid.spacing[axis];
        const std::size_t step = stride[static_cast<std::size_t>(axis)];
        std::vector<double> f(len);
        std::vector<std::size_t> ft(len);
        for (std::size_t start = 0; start < n; ++start) {
            // A line starts at every voxel whose coordinate along `axis` is 0.
            if ((start / step) % len != 0) continue;
            for (std::size_t q = 0; q < len; ++q) {
                f[q] = dist[start + q * step];
                ft[q] = feat[start + q * step];
            }
            envelope_pass(f, ft, w);
            for (std::size_t q = 0; q < len; ++q) {
                dist[start + q * step] = f[q];
                feat[start + q * step] = ft[q];
            }
        }
    }
    return feat;
}

} // namespace

double dice(const BinaryMask& a, const BinaryMask& b) {
    check_same_grid(a, b);
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const bool x = a[n] != 0, y = b[n] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::size_t> surface_voxels(const BinaryMask& mask) {
    const auto& d = mask.grid.dims;
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < d[2]; ++k) {
        for (std::size_t j = 0; j < d[1]; ++j) {
            for (std::size_t i = 0; i < d[0]; ++i) {
                if (!mask.at(i, j, k)) continue;
                const std::array<std::size_t, 3> c{i, j, k};
                bool boundary = false;
                for (std::size_t axis = 0; axis < 3 && !boundary; ++axis) {
                    if (d[axis] == 1) continue;
                    for (int dir : {-1, 1}) {
                        if ((dir < 0 && c[axis] == 0) || (dir > 0 && c[axis] + 1 == d[axis])) {
                            boundary = true;
                            break;
                        }
                        auto nc = c;
                        nc[axis] = dir < 0 ? nc[axis] - 1 : nc[axis] + 1;
                        if (!mask.at(nc[0], nc[1], nc[2])) {
                            boundary = true;
                            break;
                        }
                    }
                }
                if (boundary) out.push_back(mask.grid.index(i, j, k));
            }
        }
    }
    return out;
}

double voxel_distance(const GridGeometry& grid, std::size_t n, std::size_t m) {
    const auto a = grid.coords(n);
    const auto b = grid.coords(m);
    if (isotropic(grid)) {
        // Integer sum first, so equal voxel distances give equal doubles.
        std::size_t sq = 0;
        for (std::size_t axis = 0; axis < 3; ++axis) {
            const std::size_t delta = a[axis] > b[axis] ? a[axis] - b[axis] : b[axis] - a[axis];
            sq += delta * delta;
        }
        return std::sqrt(static_cast<double>(sq)) * grid.spacing.x();
    }
    double s = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
        const auto ax = static_cast<std::size_t>(axis);
        const double delta = (static_cast<double>(a[ax]) - static_cast<double>(b[ax])) * grid.spacing[axis];
        s += delta * delta;
    }
    return std::sqrt(s);
}

std::vector<double> directed_surface_distances(const BinaryMask& from, const BinaryMask& to) {
    check_same_grid(from, to);
    const auto src = surface_voxels(from);
    const auto dst = surface_voxels(to);
    if (src.empty() || dst.empty()) throw InvalidArgument("surface distance needs non-empty masks");
    const auto feat = feature_transform(to.grid, dst);
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = voxel_distance(from.grid, src[i], feat[src[i]]);
    return out;
}

double nearest_rank_percentile(std::vector<double> values, double percentile) {
    if (values.empty()) throw InvalidArgument("percentile of an empty set");
    if (!(percentile > 0.0 && percentile <= 100.0)) throw InvalidArgument("percentile must be in (0, 100]");
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(values.size()) / 100.0));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

double hausdorff(const BinaryMask& a, const BinaryMask& b, double percentile) {
    const double ab = nearest_rank_percentile(directed_surface_distances(a, b), percentile);
    const double ba = nearest_rank_percentile(directed_surface_distances(b, a), percentile);
    return 0.5 * (ab + ba);
}

void PhantomSpec::validate() const {
    grid.validate();
    if (background.sigma < 0.0 || foreground.sigma < 0.0) throw InvalidArgument("class sigma must be >= 0");
    if (kind == Kind::ellipse) {
        if (!(semi_axis_a > 0.0 && semi_axis_b > 0.0)) throw InvalidArgument("ellipse semi-axes must be > 0");
    } else if (cochlea_theta.size() != 10) {
        throw InvalidArgument("cochlea phantom needs 10 shape parameters");
    }
}

Phantom synth_phantom(const PhantomSpec& spec) {
    spec.validate();
    Phantom out{ImageVolume(spec.grid), BinaryMask(spec.grid)};
    if (spec.kind == PhantomSpec::Kind::ellipse) {
        const double c = std::cos(spec.angle), s = std::sin(spec.angle);
        for (std::size_t n = 0; n < spec.grid.size(); ++n) {
            const Vec3 p = spec.grid.point(n) - spec.center;
            const double u = (c * p.x() + s * p.y()) / spec.semi_axis_a;
            const double v = (-s * p.x() + c * p.y()) / spec.semi_axis_b;
            out.truth[n] = u * u + v * v <= 1.0 ? 1 : 0;
        }
    } else {
        const CochleaShape shape;
        const auto values = shape_values(shape, spec.cochlea_theta, spec.grid);
        for (std::size_t n = 0; n < values.size(); ++n) out.truth[n] = values[n] >= 0.0 ? 1 : 0;
    }
    NormalStream normal(spec.seed);
    for (std::size_t n = 0; n < spec.grid.size(); ++n) {
        const auto& cls = out.truth[n] ? spec.foreground : spec.background;
        out.image[n] = static_cast<float>(cls.mu + cls.sigma * normal.next());
    }
    return out;
}

std::vector<SweepRow> lref_sweep(const ImageVolume& image, const ShapeFunction& shape, const FitConfig& config,
                                 const std::vector<double>& l_ref_grid, const BinaryMask* truth) {
    if (l_ref_grid.empty()) throw InvalidArgument("l_ref grid is empty");
    if (truth && !(truth->grid == image.grid)) throw InvalidArgument("truth mask and image live on different grids");
    std::vector<SweepRow> rows;
    for (double l_ref : l_ref_grid) {
        SweepRow row;
        row.l_ref = l_ref;
        row.dice_ssi = row.dice_posterior = row.dice_sroi = std::numeric_limits<double>::quiet_NaN();
        try {
            FitConfig cfg = config;
            cfg.l_ref = l_ref;
            const auto result = fit(image, shape, cfg);
            row.log_joint = result.trace.back().log_joint;
            row.cycles = static_cast<int>(result.trace.size()) - 1;
            row.converged = result.converged;
            const auto theta = as_span(result.shape.theta);
            row.theta.assign(theta.begin(), theta.end());
            if (truth) {
                row.dice_ssi = dice(segmented_shape(shape, theta, image.grid), *truth);
                row.dice_posterior = dice(hard_segmentation(result.posterior), *truth);
                row.dice_sroi = dice(segmented_region(image, shape, theta, result.intensity, cfg.l_ref_hard), *truth);
            }
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& parameter_names) {
    std::ostringstream out;
    out << "l_ref,ok,log_joint,cycles,converged,dice_ssi,dice_posterior,dice_sroi";
    for (const auto& name : parameter_names) out << ',' << name;
    out << ",error\n";
    for (const auto& r : rows) {
        out << format_double(r.l_ref) << ',' << (r.ok ? 1 : 0) << ',' << format_double(r.log_joint) << ','
            << r.cycles << ',' << (r.converged ? 1 : 0) << ',' << format_double(r.dice_ssi) << ','
            << format_double(r.dice_posterior) << ',' << format_double(r.dice_sroi);
        for (std::size_t i = 0; i < parameter_names.size(); ++i) {
            out << ',' << (i < r.theta.size() ? format_double(r.theta[i]) : std::string());
        }
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << ',' << err << '\n';
    }
    return out.str();
}

std::vector<double> parse_grid_spec(const std::string& text) {
    const auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw InvalidArgument("bad number in grid spec: '" + s + "'");
        }
        if (used != s.size()) throw InvalidArgument("bad number in grid spec: '" + s + "'");
        return v;
    };
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream in(text);
        for (std::string part; std::getline(in, part, ':');) parts.push_back(part);
        if (parts.size() != 3) throw InvalidArgument("grid spec must be lo:step:hi");
        const double lo = number(parts[0]), step = number(parts[1]), hi = number(parts[2]);
        if (!(step > 0.0) || hi < lo) throw InvalidArgument("grid spec needs step > 0 and hi >= lo");
        const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
        for (std::size_t i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
    } else {
        std::stringstream in(text);
        for (std::string part; std::getline(in, part, ',');) out.push_back(number(part));
    }
    if (out.empty()) throw InvalidArgument("grid spec is empty");
    for (double v : out) {
        if (!(v > 0.0)) throw InvalidArgument("grid values must be > 0");
    }
    return out;
}

} // namespace lsm
