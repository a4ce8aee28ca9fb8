// Regular voxel grids and the volumes that live on them.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "lsm/common.hpp"

namespace lsm {

// Axis-aligned voxel grid. Voxel (i, j, k) has its center at
// origin + (i, j, k) * spacing; x varies fastest in linear order.
struct GridGeometry {
    std::array<std::size_t, 3> dims{1, 1, 1};
    Vec3 spacing = Vec3::Ones();
    Vec3 origin = Vec3::Zero();

    [[nodiscard]] std::size_t size() const { return dims[0] * dims[1] * dims[2]; }

    [[nodiscard]] std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
        return i + dims[0] * (j + dims[1] * k);
    }

    [[nodiscard]] std::array<std::size_t, 3> coords(std::size_t n) const {
        const std::size_t i = n % dims[0];
        const std::size_t rest = n / dims[0];
        return {i, rest % dims[1], rest / dims[1]};
    }

    [[nodiscard]] Vec3 point(std::size_t n) const {
        const auto c = coords(n);
        return origin + Vec3(double(c[0]) * spacing.x(), double(c[1]) * spacing.y(), double(c[2]) * spacing.z());
    }

    // Voxel center positions in linear order.
    [[nodiscard]] std::vector<Vec3> points() const;

    // Throws InvalidArgument unless all dims >= 1 and spacing > 0.
    void validate() const;

    bool operator==(const GridGeometry& o) const {
        return dims == o.dims && spacing == o.spacing && origin == o.origin;
    }
};

template <class T>
struct Volume {
    GridGeometry grid;
    std::vector<T> data;

    Volume() = default;
    explicit Volume(GridGeometry g, T fill = T{}) : grid(g), data(g.size(), fill) {}
    Volume(GridGeometry g, std::vector<T> values) : grid(g), data(std::move(values)) {
        if (data.size() != grid.size()) throw InvalidArgument("volume data size does not match grid");
    }

    [[nodiscard]] std::size_t size() const { return data.size(); }
    T& operator[](std::size_t n) { return data[n]; }
    const T& operator[](std::size_t n) const { return data[n]; }
    T& at(std::size_t i, std::size_t j, std::size_t k) { return data[grid.index(i, j, k)]; }
    const T& at(std::size_t i, std::size_t j, std::size_t k) const { return data[grid.index(i, j, k)]; }

    bool operator==(const Volume& o) const = default;
};

using ImageVolume = Volume<float>;
using FieldVolume = Volume<double>;
using BinaryMask = Volume<std::uint8_t>;

template <class To, class From>
Volume<To> volume_cast(const Volume<From>& v) {
    Volume<To> out(v.grid);
    for (std::size_t n = 0; n < v.size(); ++n) out.data[n] = static_cast<To>(v.data[n]);
    return out;
}

} // namespace lsm
