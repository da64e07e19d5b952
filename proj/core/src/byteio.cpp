#include "byteio.hpp"

#include <fstream>
#include <iterator>

namespace thz::detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

}  // namespace thz::detail
