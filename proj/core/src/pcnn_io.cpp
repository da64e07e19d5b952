#include <string>

#include "byteio.hpp"
#include "thz/error.hpp"
#include "thz/pcnn.hpp"

namespace thz::pcnn {

namespace {
constexpr std::uint32_t kModelVersion = 1;
}

std::vector<std::uint8_t> encode_model(const Model& model) {
    const ParameterLayout layout(model.arch);
    require(model.params.size() == layout.total, ErrorKind::model, "parameter vector does not match the architecture");
    const auto& a = model.arch;
    detail::ByteWriter w;
    w.magic("PCNN");
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(a.input_length));
    w.u32(static_cast<std::uint32_t>(a.channels.size()));
    for (std::size_t c : a.channels) w.u32(static_cast<std::uint32_t>(c));
    w.u32(static_cast<std::uint32_t>(a.kernel));
    w.u32(static_cast<std::uint32_t>(a.stride));
    w.u32(static_cast<std::uint32_t>(a.padding));
    w.u32(static_cast<std::uint32_t>(a.pooled_length));
    w.u32(static_cast<std::uint32_t>(a.latent_dim));
    w.f64(model.scale);

    const auto& ph = model.physics;
    w.f64(ph.geometry.thickness_mm);
    w.f64(ph.options.band.min_thz);
    w.f64(ph.options.band.max_thz);
    w.f64(ph.options.floor);
    w.u32(static_cast<std::uint32_t>(ph.reference.length));
    w.u32(static_cast<std::uint32_t>(ph.reference.bins.size()));
    w.f64(ph.reference.df);
    for (const auto& b : ph.reference.bins) {
        w.f64(b.real());
        w.f64(b.imag());
    }

    w.u32(static_cast<std::uint32_t>(layout.tensors.size()));
    for (const auto& t : layout.tensors) {
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
        w.f64s(std::span<const double>(model.params).subspan(t.offset, t.size));
    }
    return std::move(w.bytes());
}

Model decode_model(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "model");
    r.expect_magic("PCNN");
    const auto version = r.u32();
    require(version == kModelVersion, ErrorKind::input, "unsupported model format version " + std::to_string(version));
    Model m;
    auto& a = m.arch;
    a.input_length = r.u32();
    const std::uint32_t nc = r.u32();
    require(nc >= 2 && nc <= 64, ErrorKind::input, "model: implausible channel table");
    a.channels.resize(nc);
    for (auto& c : a.channels) c = r.u32();
    a.kernel = r.u32();
    a.stride = r.u32();
    a.padding = r.u32();
    a.pooled_length = r.u32();
    a.latent_dim = r.u32();
    m.scale = r.f64();

    auto& ph = m.physics;
    ph.geometry.thickness_mm = r.f64();
    ph.options.band.min_thz = r.f64();
    ph.options.band.max_thz = r.f64();
    ph.options.floor = r.f64();
    ph.reference.length = r.u32();
    const std::uint32_t nf = r.u32();
    require(nf == ph.reference.length / 2 + 1, ErrorKind::input, "model: reference spectrum size mismatch");
    ph.reference.df = r.f64();
    require(r.remaining() >= std::size_t{nf} * 16, ErrorKind::input, "model: truncated");
    ph.reference.bins.resize(nf);
    for (auto& b : ph.reference.bins) {
        const double re = r.f64();
        const double im = r.f64();
        b = {re, im};
    }

    const ParameterLayout layout(a);
    const std::uint32_t nt = r.u32();
    require(nt == layout.tensors.size(), ErrorKind::input, "model: tensor count does not match the architecture");
    m.params.resize(layout.total);
    for (const auto& t : layout.tensors) {
        const std::uint32_t rank = r.u32();
        require(rank == t.shape.size(), ErrorKind::input, "model: rank mismatch for " + t.name);
        for (std::size_t d : t.shape)
            require(r.u32() == d, ErrorKind::input, "model: shape mismatch for " + t.name);
        r.f64s(std::span<double>(m.params).subspan(t.offset, t.size));
    }
    require(r.remaining() == 0, ErrorKind::input, "model: trailing bytes");
    ph.geometry.validate();
    require(m.scale > 0.0, ErrorKind::input, "model: non-positive normalization scale");
    return m;
}

void write_model(const std::filesystem::path& path, const Model& model) {
    detail::write_file(path, encode_model(model));
}

Model read_model(const std::filesystem::path& path) { return decode_model(detail::read_file(path)); }

}  // namespace thz::pcnn
