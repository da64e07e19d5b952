#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "thz/error.hpp"

namespace thz::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U to_little(U v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        U out = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xff));
        return out;
    }
}

class ByteWriter {
public:
    void magic(const char (&tag)[5]) { bytes_.insert(bytes_.end(), tag, tag + 4); }
    void u32(std::uint32_t v) { put(to_little(v)); }
    void u64(std::uint64_t v) { put(to_little(v)); }
    void f64(double v) { put(to_little(std::bit_cast<std::uint64_t>(v))); }
    void f64s(std::span<const double> v) {
        for (double d : v) f64(d);
    }
    [[nodiscard]] std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    template <typename U>
    void put(U v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(U));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    void expect_magic(const char (&tag)[5]) {
        need(4);
        require(std::memcmp(bytes_.data() + pos_, tag, 4) == 0, ErrorKind::input,
                what_ + ": bad magic (expected " + std::string(tag) + ")");
        pos_ += 4;
    }
    std::uint32_t u32() { return to_little(get<std::uint32_t>()); }
    std::uint64_t u64() { return to_little(get<std::uint64_t>()); }
    double f64() { return std::bit_cast<double>(to_little(get<std::uint64_t>())); }
    void f64s(std::span<double> out) {
        for (double& d : out) d = f64();
    }
    [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    [[nodiscard]] const std::string& what() const noexcept { return what_; }

private:
    void need(std::size_t n) const {
        require(bytes_.size() - pos_ >= n, ErrorKind::input, what_ + ": truncated");
    }
    template <typename U>
    U get() {
        need(sizeof(U));
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace thz::detail
