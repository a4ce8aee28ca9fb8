// MetaImage-compatible header + raw volume files.
//
// A volume is stored as a text header (".mhd") next to a little-endian raw
// data file. Only the subset of MetaImage keys needed here is understood:
//
//   ObjectType = Image
//   NDims = 3                  (2 is accepted on read; z becomes 1)
//   DimSize = nx ny nz
//   ElementSpacing = sx sy sz  (mm)
//   Offset = ox oy oz          (mm, center of the first voxel)
//   ElementType = MET_FLOAT | MET_UCHAR
//   ElementByteOrderMSB = False
//   ElementDataFile = <file name relative to the header>
#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "lsm/volume.hpp"

namespace lsm {

enum class VolumeIoErrc {
    malformed_header,
    unknown_element_type,
    missing_data_file,
    size_mismatch,
    write_failed,
};

const char* to_string(VolumeIoErrc code);

class VolumeIoError : public Error {
public:
    VolumeIoError(VolumeIoErrc code, const std::string& what);
    [[nodiscard]] VolumeIoErrc code() const { return code_; }

private:
    VolumeIoErrc code_;
};

enum class ElementType { float32, uint8 };

using AnyVolume = std::variant<ImageVolume, BinaryMask>;

// Reads either element type.
AnyVolume read_any_volume(const std::filesystem::path& header);

// Reads a volume and converts it to float (uint8 masks become 0/1 floats).
ImageVolume read_image(const std::filesystem::path& header);

// Reads a uint8 volume; float volumes are accepted only if every value is 0 or 1.
BinaryMask read_mask(const std::filesystem::path& header);

// Writes header + "<stem>.raw" next to it.
void write_volume(const ImageVolume& volume, const std::filesystem::path& header);
void write_volume(const BinaryMask& volume, const std::filesystem::path& header);

} // namespace lsm
