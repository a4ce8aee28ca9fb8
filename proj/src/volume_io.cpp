#include "lsm/volume_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace lsm {

static_assert(std::endian::native == std::endian::little, "raw volume I/O assumes a little-endian host");

namespace fs = std::filesystem;

const char* to_string(VolumeIoErrc code) {
    switch (code) {
    case VolumeIoErrc::malformed_header: return "malformed header";
    case VolumeIoErrc::unknown_element_type: return "unknown element type";
    case VolumeIoErrc::missing_data_file: return "missing data file";
    case VolumeIoErrc::size_mismatch: return "size mismatch";
    case VolumeIoErrc::write_failed: return "write failed";
    }
    return "unknown";
}

VolumeIoError::VolumeIoError(VolumeIoErrc code, const std::string& what)
    : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
    std::vector<T> out;
    std::istringstream in(value);
    std::string tok;
    while (in >> tok) {
        T v{};
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || p != tok.data() + tok.size()) {
            throw VolumeIoError(VolumeIoErrc::malformed_header, "bad value '" + tok + "' for " + key);
        }
        out.push_back(v);
    }
    return out;
}

struct Header {
    GridGeometry grid;
    ElementType type = ElementType::float32;
    fs::path data_file;
};

Header parse_header(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw VolumeIoError(VolumeIoErrc::malformed_header, "cannot open " + path.string());

    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw VolumeIoError(VolumeIoErrc::malformed_header, "line without '=': " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto require = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw VolumeIoError(VolumeIoErrc::malformed_header, "missing key " + key);
        return it->second;
    };

    const auto ndims = parse_list<int>("NDims", require("NDims"));
    if (ndims.size() != 1 || (ndims[0] != 2 && ndims[0] != 3)) {
        throw VolumeIoError(VolumeIoErrc::malformed_header, "NDims must be 2 or 3");
    }
    const std::size_t nd = static_cast<std::size_t>(ndims[0]);

    Header h;
    const auto dims = parse_list<std::size_t>("DimSize", require("DimSize"));
    if (dims.size() != nd) throw VolumeIoError(VolumeIoErrc::malformed_header, "DimSize arity");
    for (std::size_t a = 0; a < nd; ++a) h.grid.dims[a] = dims[a];

    if (kv.count("ElementSpacing")) {
        const auto sp = parse_list<double>("ElementSpacing", kv["ElementSpacing"]);
        if (sp.size() != nd) throw VolumeIoError(VolumeIoErrc::malformed_header, "ElementSpacing arity");
        for (std::size_t a = 0; a < nd; ++a) h.grid.spacing[static_cast<Eigen::Index>(a)] = sp[a];
    }
    if (kv.count("Offset")) {
        const auto off = parse_list<double>("Offset", kv["Offset"]);
        if (off.size() != nd) throw VolumeIoError(VolumeIoErrc::malformed_header, "Offset arity");
        for (std::size_t a = 0; a < nd; ++a) h.grid.origin[static_cast<Eigen::Index>(a)] = off[a];
    }
    try {
        h.grid.validate();
    } catch (const InvalidArgument& e) {
        throw VolumeIoError(VolumeIoErrc::malformed_header, e.what());
    }

    if (kv.count("ElementByteOrderMSB") && kv["ElementByteOrderMSB"] != "False") {
        throw VolumeIoError(VolumeIoErrc::malformed_header, "only little-endian data is supported");
    }

    const std::string& et = require("ElementType");
    if (et == "MET_FLOAT") {
        h.type = ElementType::float32;
    } else if (et == "MET_UCHAR") {
        h.type = ElementType::uint8;
    } else {
        throw VolumeIoError(VolumeIoErrc::unknown_element_type, et);
    }

    h.data_file = path.parent_path() / require("ElementDataFile");
    return h;
}

template <class T>
Volume<T> read_data(const Header& h) {
    std::ifstream in(h.data_file, std::ios::binary);
    if (!in) throw VolumeIoError(VolumeIoErrc::missing_data_file, h.data_file.string());
    const auto expected = h.grid.size() * sizeof(T);
    const auto actual = fs::file_size(h.data_file);
    if (actual != expected) {
        throw VolumeIoError(VolumeIoErrc::size_mismatch, h.data_file.string() + " has " + std::to_string(actual) +
                                                             " bytes, expected " + std::to_string(expected));
    }
    Volume<T> v(h.grid);
    in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(expected));
    if (!in) throw VolumeIoError(VolumeIoErrc::size_mismatch, "short read from " + h.data_file.string());
    return v;
}

template <class T>
void write_impl(const Volume<T>& v, const fs::path& header, const char* element_type) {
    if (v.data.size() != v.grid.size()) throw VolumeIoError(VolumeIoErrc::size_mismatch, "volume data/grid mismatch");
    fs::path raw = header;
    raw.replace_extension(".raw");
    std::error_code ec;
    if (!header.parent_path().empty()) fs::create_directories(header.parent_path(), ec);
    if (ec) throw VolumeIoError(VolumeIoErrc::write_failed, header.string() + ": " + ec.message());

    const auto& g = v.grid;
    std::ostringstream hdr;
    hdr << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "DimSize = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n'
        << "ElementSpacing = " << format_double(g.spacing.x()) << ' ' << format_double(g.spacing.y()) << ' '
        << format_double(g.spacing.z()) << '\n'
        << "Offset = " << format_double(g.origin.x()) << ' ' << format_double(g.origin.y()) << ' '
        << format_double(g.origin.z()) << '\n'
        << "ElementType = " << element_type << '\n'
        << "ElementByteOrderMSB = False\n"
        << "ElementDataFile = " << raw.filename().string() << '\n';

    std::ofstream h(header, std::ios::binary | std::ios::trunc);
    h << hdr.str();
    std::ofstream d(raw, std::ios::binary | std::ios::trunc);
    d.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(v.data.size() * sizeof(T)));
    if (!h || !d) throw VolumeIoError(VolumeIoErrc::write_failed, header.string());
}

} // namespace

AnyVolume read_any_volume(const fs::path& header) {
    const Header h = parse_header(header);
    if (h.type == ElementType::uint8) return read_data<std::uint8_t>(h);
    return read_data<float>(h);
}

ImageVolume read_image(const fs::path& header) {
    auto any = read_any_volume(header);
    if (auto* img = std::get_if<ImageVolume>(&any)) return std::move(*img);
    return volume_cast<float>(std::get<BinaryMask>(any));
}

BinaryMask read_mask(const fs::path& header) {
    auto any = read_any_volume(header);
    if (auto* m = std::get_if<BinaryMask>(&any)) return std::move(*m);
    const auto& img = std::get<ImageVolume>(any);
    BinaryMask out(img.grid);
    for (std::size_t n = 0; n < img.size(); ++n) {
        if (img[n] != 0.0f && img[n] != 1.0f) {
            throw InvalidArgument("float volume " + header.string() + " is not binary");
        }
        out[n] = img[n] != 0.0f ? 1 : 0;
    }
    return out;
}

void write_volume(const ImageVolume& volume, const fs::path& header) { write_impl(volume, header, "MET_FLOAT"); }

void write_volume(const BinaryMask& volume, const fs::path& header) { write_impl(volume, header, "MET_UCHAR"); }

} // namespace lsm
