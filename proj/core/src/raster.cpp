#include <fstream>
#include <string>

#include "thz/error.hpp"
#include "thz/features.hpp"

namespace thz {

void write_raster(const std::filesystem::path& path, const Raster& raster, Colormap colormap) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    if (colormap == Colormap::grayscale) {
        os << "P5\n" << raster.nx << " " << raster.ny << "\n65535\n";
        for (std::uint16_t v : raster.levels) {
            const char be[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
            os.write(be, 2);
        }
    } else {
        os << "P6\n" << raster.nx << " " << raster.ny << "\n255\n";
        for (std::uint16_t v : raster.levels) {
            const auto rgb = colormap_rgb(colormap, static_cast<std::uint8_t>(v >> 8));
            os.write(reinterpret_cast<const char*>(rgb.data()), 3);
        }
    }
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

void write_mask_pgm(const std::filesystem::path& path, const Raster& raster) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << "P5\n" << raster.nx << " " << raster.ny << "\n255\n";
    os.write(reinterpret_cast<const char*>(raster.mask.data()), static_cast<std::streamsize>(raster.mask.size()));
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

Raster read_pgm16(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    std::string magic;
    std::uint32_t nx = 0, ny = 0, maxval = 0;
    is >> magic >> nx >> ny >> maxval;
    require(magic == "P5" && maxval == 65535 && nx > 0 && ny > 0, ErrorKind::input,
            path.string() + ": not a 16-bit P5 image");
    is.get();  // single whitespace after the header
    Raster r{nx, ny, std::vector<std::uint16_t>(std::size_t{nx} * ny), std::vector<std::uint8_t>(std::size_t{nx} * ny, 255)};
    for (auto& v : r.levels) {
        unsigned char be[2];
        is.read(reinterpret_cast<char*>(be), 2);
        v = static_cast<std::uint16_t>((be[0] << 8) | be[1]);
    }
    require(static_cast<bool>(is), ErrorKind::input, path.string() + ": truncated pixel data");
    return r;
}

}  // namespace thz
