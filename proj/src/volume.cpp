#include "lsm/volume.hpp"

#include "lsm/parallel.hpp"

namespace lsm {

std::vector<Vec3> GridGeometry::points() const {
    std::vector<Vec3> out(size());
    parallel_for(out.size(), [&](std::size_t n) { out[n] = point(n); });
    return out;
}

void GridGeometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] == 0) throw InvalidArgument("grid dimension must be >= 1");
        if (!(spacing[a] > 0.0)) throw InvalidArgument("grid spacing must be > 0");
    }
}

} // namespace lsm
