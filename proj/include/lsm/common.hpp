// Shared vocabulary types and error classes.
#pragma once

#include <charconv>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lsm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VectorX = Eigen::VectorXd;
using MatrixX = Eigen::MatrixXd;

// Base class of all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A numerical procedure failed (non-PD matrix, failed bracketing, ...).
class NumericalError : public Error {
public:
    using Error::Error;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] double width() const { return hi - lo; }
    [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
    [[nodiscard]] double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

using Bounds = std::vector<Interval>;

inline VectorX to_vector(std::span<const double> v) {
    return Eigen::Map<const VectorX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::span<const double> as_span(const VectorX& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

inline VectorX clamp_to(const VectorX& v, const Bounds& bounds) {
    VectorX out = v;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out[i] = bounds[static_cast<std::size_t>(i)].clamp(out[i]);
    }
    return out;
}

} // namespace lsm
