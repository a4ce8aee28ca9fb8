// Segmentation metrics, synthetic phantoms and the l_ref sweep.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lsm/inference.hpp"
#include "lsm/volume.hpp"

namespace lsm {

// 2 |A & B| / (|A| + |B|); 1 when both masks are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

// Foreground voxels with at least one 6-neighbour in the background. Neighbours
// outside the grid count as background, except along axes of extent 1.
std::vector<std::size_t> surface_voxels(const BinaryMask& mask);

// Distance in mm between the centers of voxels n and m.
double voxel_distance(const GridGeometry& grid, std::size_t n, std::size_t m);

// Distance from every surface voxel of `from` to the nearest surface voxel of
// `to`, in surface order.
std::vector<double> directed_surface_distances(const BinaryMask& from, const BinaryMask& to);

// Nearest-rank percentile (0 < p <= 100) of unsorted values.
double nearest_rank_percentile(std::vector<double> values, double percentile);

// Symmetric Hausdorff distance at a percentile: the average of the two
// directed percentile distances between surfaces. Throws on empty masks.
double hausdorff(const BinaryMask& a, const BinaryMask& b, double percentile);

struct GaussianClass {
    double mu = 0.0;
    double sigma = 1.0; // 0 gives a noiseless class
};

// An elliptic cylinder along z (2-D ellipse on single-slice grids) or a
// cochlea instance, filled with Gaussian class intensities.
struct PhantomSpec {
    enum class Kind { ellipse, cochlea };
    Kind kind = Kind::ellipse;
    GridGeometry grid;
    Vec3 center = Vec3::Zero();  // ellipse
    double semi_axis_a = 1.0;    // ellipse, along the rotated x axis
    double semi_axis_b = 1.0;
    double angle = 0.0;          // rad, rotation in the xy plane
    std::vector<double> cochlea_theta; // cochlea, 10 parameters
    GaussianClass background{0.0, 1.0};
    GaussianClass foreground{1.0, 1.0};
    std::uint64_t seed = 0;

    void validate() const;
};

struct Phantom {
    ImageVolume image;
    BinaryMask truth;
};

// Voxels are drawn in linear order from one seeded normal stream.
Phantom synth_phantom(const PhantomSpec& spec);

struct SweepRow {
    double l_ref = 0.0;
    bool ok = false;
    std::string error;
    double log_joint = 0.0;
    int cycles = 0;
    bool converged = false;
    std::vector<double> theta;
    // Dice against the truth (NaN without one): SSI, posterior >= 0.5 at the
    // fitted l_ref, and SROI at l_ref_hard.
    double dice_ssi = 0.0;
    double dice_posterior = 0.0;
    double dice_sroi = 0.0;
};

// Fits once per l_ref. A failing fit marks its row and the sweep goes on.
std::vector<SweepRow> lref_sweep(const ImageVolume& image, const ShapeFunction& shape, const FitConfig& config,
                                 const std::vector<double>& l_ref_grid, const BinaryMask* truth = nullptr);

// Columns: l_ref, ok, log_joint, cycles, converged, dice_ssi, dice_posterior,
// dice_sroi, one column per shape parameter, error.
std::string sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& parameter_names);

// "lo:step:hi" (inclusive, rounded to the nearest grid count) or a comma list.
std::vector<double> parse_grid_spec(const std::string& text);

} // namespace lsm
