#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lsm/volume_io.hpp"
#include "oracles.hpp"

using namespace lsm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "lsm_volume_io_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

GridGeometry odd_grid() {
    GridGeometry g;
    g.dims = {5, 4, 3};
    g.spacing = Vec3(0.1, 0.25, 0.5);
    g.origin = Vec3(-1.5, 2.0, 0.125);
    return g;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

VolumeIoErrc error_code(const fs::path& header) {
    try {
        read_any_volume(header);
    } catch (const VolumeIoError& e) {
        return e.code();
    }
    FAIL("no VolumeIoError");
    return VolumeIoErrc::write_failed;
}

} // namespace

TEST_SUITE("volume-io") {

TEST_CASE("float and mask round trips") {
    const auto dir = scratch("round_trip");
    std::mt19937_64 rng(3);
    std::normal_distribution<float> z(0.0f, 1000.0f);
    ImageVolume img(odd_grid());
    for (auto& v : img.data) v = z(rng);
    img.data[0] = -0.0f;
    img.data[1] = 1e-38f;
    write_volume(img, dir / "img.mhd");
    CHECK(fs::exists(dir / "img.raw"));
    CHECK(fs::file_size(dir / "img.raw") == img.size() * sizeof(float));
    const auto back = read_image(dir / "img.mhd");
    CHECK(back.grid == img.grid);
    CHECK(back.data == img.data);
    CHECK(std::holds_alternative<ImageVolume>(read_any_volume(dir / "img.mhd")));

    BinaryMask mask(odd_grid());
    for (std::size_t n = 0; n < mask.size(); ++n) mask[n] = n % 3 == 0;
    write_volume(mask, dir / "mask.mhd");
    CHECK(read_mask(dir / "mask.mhd") == mask);
    const auto as_image = read_image(dir / "mask.mhd");
    for (std::size_t n = 0; n < mask.size(); ++n) CHECK(as_image[n] == float(mask[n]));

    // Rewriting gives identical bytes.
    write_volume(img, dir / "again.mhd");
    CHECK(oracle::read_bytes(dir / "img.raw") == oracle::read_bytes(dir / "again.raw"));
}

TEST_CASE("float masks are accepted only when binary") {
    const auto dir = scratch("float_mask");
    ImageVolume img(odd_grid(), 0.0f);
    img[4] = 1.0f;
    write_volume(img, dir / "ok.mhd");
    CHECK(read_mask(dir / "ok.mhd")[4] == 1);
    img[5] = 0.5f;
    write_volume(img, dir / "bad.mhd");
    CHECK_THROWS_AS(read_mask(dir / "bad.mhd"), InvalidArgument);
}

TEST_CASE("two-dimensional headers") {
    const auto dir = scratch("two_d");
    write_text(dir / "flat.mhd",
               "ObjectType = Image\nNDims = 2\nDimSize = 3 2\nElementSpacing = 0.5 0.25\nOffset = 1 2\n"
               "ElementType = MET_UCHAR\nElementByteOrderMSB = False\nElementDataFile = flat.raw\n");
    write_text(dir / "flat.raw", std::string("\x01\x00\x01\x00\x00\x01", 6));
    const auto m = read_mask(dir / "flat.mhd");
    CHECK(m.grid.dims == std::array<std::size_t, 3>{3, 2, 1});
    CHECK(m.grid.spacing.x() == 0.5);
    CHECK(m.grid.spacing.y() == 0.25);
    CHECK(m.grid.origin.y() == 2.0);
    CHECK(m.data == std::vector<std::uint8_t>{1, 0, 1, 0, 0, 1});
}

TEST_CASE("errors carry a code") {
    const auto dir = scratch("errors");
    const std::string good =
        "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\nElementSpacing = 1 1 1\nOffset = 0 0 0\n"
        "ElementType = MET_FLOAT\nElementByteOrderMSB = False\nElementDataFile = v.raw\n";
    write_text(dir / "v.mhd", good);
    write_text(dir / "v.raw", std::string(8 * sizeof(float), '\0'));
    CHECK_NOTHROW(read_image(dir / "v.mhd"));

    CHECK(error_code(dir / "absent.mhd") == VolumeIoErrc::malformed_header);

    write_text(dir / "v.raw", std::string(8 * sizeof(float) - 3, '\0'));
    CHECK(error_code(dir / "v.mhd") == VolumeIoErrc::size_mismatch);

    write_text(dir / "v.raw", std::string(9 * sizeof(float), '\0'));
    CHECK(error_code(dir / "v.mhd") == VolumeIoErrc::size_mismatch);

    fs::remove(dir / "v.raw");
    CHECK(error_code(dir / "v.mhd") == VolumeIoErrc::missing_data_file);

    write_text(dir / "v.raw", std::string(8 * sizeof(float), '\0'));
    auto edit = [&](const std::string& from, const std::string& to) {
        std::string text = good;
        text.replace(text.find(from), from.size(), to);
        write_text(dir / "e.mhd", text);
        return error_code(dir / "e.mhd");
    };
    CHECK(edit("MET_FLOAT", "MET_DOUBLE") == VolumeIoErrc::unknown_element_type);
    CHECK(edit("DimSize = 2 2 2", "DimSize = 2 2") == VolumeIoErrc::malformed_header);
    CHECK(edit("DimSize = 2 2 2", "DimSize = 2 x 2") == VolumeIoErrc::malformed_header);
    CHECK(edit("NDims = 3", "NDims = 4") == VolumeIoErrc::malformed_header);
    CHECK(edit("ElementByteOrderMSB = False", "ElementByteOrderMSB = True") == VolumeIoErrc::malformed_header);
    CHECK(edit("ElementSpacing = 1 1 1", "ElementSpacing = 1 0 1") == VolumeIoErrc::malformed_header);
    CHECK(edit("Offset = 0 0 0\n", "garbage line\n") == VolumeIoErrc::malformed_header);
    CHECK(std::string(to_string(VolumeIoErrc::size_mismatch)) == "size mismatch");
}

TEST_CASE("write failures") {
    const auto dir = scratch("write_failures");
    write_text(dir / "plain", "not a directory");
    ImageVolume img(odd_grid(), 1.0f);
    try {
        write_volume(img, dir / "plain" / "x.mhd");
        FAIL("write did not fail");
    } catch (const VolumeIoError& e) {
        CHECK(e.code() == VolumeIoErrc::write_failed);
    }
}

} // TEST_SUITE
