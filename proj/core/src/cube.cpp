#include "thz/cube.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "byteio.hpp"
#include "thz/error.hpp"
#include "thz/parallel.hpp"

namespace thz {

namespace {

constexpr std::uint32_t kCubeVersion = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

}  // namespace

std::span<const double> ScanCube::pixel(std::size_t index) const {
    require(index < pixel_count(), ErrorKind::index, "pixel index out of range");
    return std::span<const double>(data).subspan(index * nt, nt);
}

std::span<double> ScanCube::pixel(std::size_t index) {
    require(index < pixel_count(), ErrorKind::index, "pixel index out of range");
    return std::span<double>(data).subspan(index * nt, nt);
}

PulseTrace ScanCube::trace(std::size_t index) const {
    const auto px = pixel(index);
    return PulseTrace(dt_ps, t0_ps, std::vector<double>(px.begin(), px.end()));
}

void ScanCube::validate() const {
    require(nx >= 1 && ny >= 1, ErrorKind::dimension, "cube needs at least one pixel");
    require(nt >= 2, ErrorKind::dimension, "cube traces need at least two samples");
    require(data.size() == pixel_count() * nt, ErrorKind::dimension, "cube data length does not equal nx*ny*nt");
    require(std::isfinite(dx_mm) && dx_mm > 0.0, ErrorKind::input, "cube scan step must be positive");
    require(std::isfinite(dt_ps) && dt_ps > 0.0, ErrorKind::input, "cube time step must be positive");
    require(std::isfinite(t0_ps), ErrorKind::input, "cube start time must be finite");
    for (double v : data) require(std::isfinite(v), ErrorKind::input, "cube contains non-finite samples");
}

ScanCube ScanCube::zeros(std::uint32_t nx, std::uint32_t ny, std::uint32_t nt, double dt_ps, double t0_ps,
                         double dx_mm) {
    ScanCube c{nx, ny, nt, dx_mm, dt_ps, t0_ps, std::vector<double>(std::size_t{nx} * ny * nt, 0.0)};
    c.validate();
    return c;
}

PulseTrace mean_trace(const ScanCube& cube) {
    cube.validate();
    std::vector<double> acc(cube.nt, 0.0);
    for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
        const auto px = cube.pixel(p);
        for (std::size_t t = 0; t < cube.nt; ++t) acc[t] += px[t];
    }
    const double inv = 1.0 / static_cast<double>(cube.pixel_count());
    for (double& v : acc) v *= inv;
    return PulseTrace(cube.dt_ps, cube.t0_ps, std::move(acc));
}

std::vector<std::uint8_t> encode_cube(const ScanCube& cube) {
    cube.validate();
    detail::ByteWriter w;
    w.magic("THZC");
    w.u32(kCubeVersion);
    w.u32(cube.nx);
    w.u32(cube.ny);
    w.u32(cube.nt);
    w.f64(cube.dx_mm);
    w.f64(cube.dt_ps);
    w.f64(cube.t0_ps);
    w.f64s(cube.data);
    return std::move(w.bytes());
}

ScanCube decode_cube(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "cube");
    r.expect_magic("THZC");
    const auto version = r.u32();
    require(version == kCubeVersion, ErrorKind::input, "unsupported cube format version " + std::to_string(version));
    ScanCube c;
    c.nx = r.u32();
    c.ny = r.u32();
    c.nt = r.u32();
    c.dx_mm = r.f64();
    c.dt_ps = r.f64();
    c.t0_ps = r.f64();
    const std::size_t count = std::size_t{c.nx} * c.ny * c.nt;
    require(r.remaining() == count * sizeof(double), ErrorKind::input,
            "cube payload size does not match its header");
    c.data.resize(count);
    r.f64s(c.data);
    c.validate();
    return c;
}

void write_cube(const std::filesystem::path& path, const ScanCube& cube) {
    detail::write_file(path, encode_cube(cube));
}

ScanCube read_cube(const std::filesystem::path& path) { return decode_cube(detail::read_file(path)); }

ScalarMap ScalarMap::filled(std::uint32_t nx, std::uint32_t ny, double value) {
    ScalarMap m;
    m.nx = nx;
    m.ny = ny;
    m.values.assign(std::size_t{nx} * ny, value);
    m.valid.assign(std::size_t{nx} * ny, true);
    return m;
}

void write_map_csv(const std::filesystem::path& path, const ScalarMap& map) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << "x,y,value\n";
    char line[96];
    for (std::size_t y = 0; y < map.ny; ++y)
        for (std::size_t x = 0; x < map.nx; ++x) {
            const std::size_t i = y * map.nx + x;
            if (map.valid[i])
                std::snprintf(line, sizeof line, "%zu,%zu,%.17g\n", x, y, map.values[i]);
            else
                std::snprintf(line, sizeof line, "%zu,%zu,nan\n", x, y);
            os << line;
        }
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

ScalarMap read_map_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "x,y,value", ErrorKind::input, path.string() + ": expected header x,y,value");

    struct Row {
        std::size_t x, y;
        double v;
        bool ok;
    };
    std::vector<Row> rows;
    std::size_t nx = 0, ny = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t x = 0, y = 0;
        char vbuf[64];
        require(std::sscanf(line.c_str(), "%zu,%zu,%63s", &x, &y, vbuf) == 3, ErrorKind::input,
                path.string() + ": malformed row");
        const double v = std::strtod(vbuf, nullptr);
        rows.push_back({x, y, v, std::isfinite(v)});
        nx = std::max(nx, x + 1);
        ny = std::max(ny, y + 1);
    }
    require(!rows.empty() && rows.size() == nx * ny, ErrorKind::input, path.string() + ": map grid is incomplete");

    ScalarMap m;
    m.nx = static_cast<std::uint32_t>(nx);
    m.ny = static_cast<std::uint32_t>(ny);
    m.values.assign(nx * ny, kNaN);
    m.valid.assign(nx * ny, false);
    for (const auto& r : rows) {
        m.values[r.y * nx + r.x] = r.v;
        m.valid[r.y * nx + r.x] = r.ok;
    }
    m.label = path.stem().string();
    return m;
}

GateRegions derive_gates(const PulseTrace& trace) {
    const auto x = trace.samples();
    const std::size_t nt = x.size();

    double peak_abs = 0.0;
    for (double v : x) peak_abs = std::max(peak_abs, std::abs(v));
    const std::size_t tail_start = nt - std::max<std::size_t>(1, nt / 4);
    double tail_sq = 0.0;
    for (std::size_t k = tail_start; k < nt; ++k) tail_sq += x[k] * x[k];
    const double tail_rms = std::sqrt(tail_sq / static_cast<double>(nt - tail_start));
    require(peak_abs > 0.0 && peak_abs > 10.0 * tail_rms, ErrorKind::gating,
            "trace has no dominant pulse (peak is not 10x the trailing-quartile RMS)");

    const auto pit = std::max_element(x.begin(), x.end());
    const auto qit = std::min_element(x.begin(), x.end());
    const auto p = static_cast<std::size_t>(pit - x.begin());
    const auto q = static_cast<std::size_t>(qit - x.begin());
    require(*pit > 0.0 && *qit < 0.0, ErrorKind::gating, "pulse lacks a positive peak and a negative trough");

    const std::size_t lo = std::min(p, q);
    const std::size_t hi = std::max(p, q);
    const bool lo_positive = x[lo] > 0.0;
    std::size_t mid = hi;
    for (std::size_t k = lo + 1; k <= hi; ++k) {
        if (x[k] == 0.0 || (x[k] > 0.0) != lo_positive) {
            mid = k;
            break;
        }
    }

    const double half_trough = 0.5 * std::abs(x[q]);
    std::size_t w = 0;
    while (hi + w < nt && std::abs(x[hi + w]) >= half_trough) ++w;
    w = std::max<std::size_t>(w, 1);

    const std::size_t tail = hi + w;
    require(lo > 0 && mid > lo && tail > mid && tail < nt, ErrorKind::gating,
            "pulse sits too close to the trace edges to form four non-empty gates");
    return GateRegions{{Interval{0, lo}, Interval{lo, mid}, Interval{mid, tail}, Interval{tail, nt}}};
}

ScalarMap gate_image(const ScanCube& cube, const Interval& region, GateStatistic statistic) {
    cube.validate();
    require(region.begin < region.end && region.end <= cube.nt, ErrorKind::dimension,
            "gate interval is outside the trace");

    ScalarMap map = ScalarMap::filled(cube.nx, cube.ny, 0.0);
    parallel_for(cube.pixel_count(), [&](std::size_t p) {
        const auto px = cube.pixel(p).subspan(region.begin, region.size());
        double value = 0.0;
        switch (statistic) {
            case GateStatistic::peak_to_peak: {
                const auto [mn, mx] = std::minmax_element(px.begin(), px.end());
                value = *mx - *mn;
                break;
            }
            case GateStatistic::mean_abs:
                for (double v : px) value += std::abs(v);
                value /= static_cast<double>(px.size());
                break;
            case GateStatistic::energy:
                for (double v : px) value += v * v;
                break;
        }
        map.values[p] = value;
    });

    static constexpr const char* names[] = {"peak_to_peak", "mean_abs", "energy"};
    map.label = std::string("gate [") + std::to_string(region.begin) + "," + std::to_string(region.end) + ") " +
                names[static_cast<int>(statistic)];
    map.units = "a.u.";
    return map;
}

ScalarMap frequency_slice(const ScanCube& cube, double f_thz, SliceKind kind, const SliceOptions& options) {
    cube.validate();
    const double nyquist = 0.5 / cube.dt_ps;
    require(std::isfinite(f_thz) && f_thz > 0.0 && f_thz <= nyquist * (1.0 + 1e-12), ErrorKind::input,
            "slice frequency must lie in (0, Nyquist]");

    ScalarMap map = ScalarMap::filled(cube.nx, cube.ny, 0.0);
    const Spectrum probe = forward_transform(cube.trace(0), options.pad_to);
    const std::size_t kf = probe.nearest_bin(f_thz);

    // unwrap range: the configured band extended to include the slice bin
    std::size_t k_lo = std::max<std::size_t>(1, probe.nearest_bin(options.unwrap_band.min_thz));
    std::size_t k_hi = probe.nearest_bin(options.unwrap_band.max_thz);
    k_lo = std::min(k_lo, kf);
    k_hi = std::max({k_hi, kf, k_lo});

    parallel_for(cube.pixel_count(), [&](std::size_t p) {
        const Spectrum s = forward_transform(cube.trace(p), options.pad_to);
        if (kind == SliceKind::amplitude) {
            map.values[p] = std::abs(s.bins[kf]);
            return;
        }
        if (std::abs(s.bins[kf]) == 0.0) {
            map.values[p] = kNaN;
            map.valid[p] = false;
            return;
        }
        std::vector<double> wrapped, freqs;
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            wrapped.push_back(-std::arg(s.bins[k]));
            freqs.push_back(s.frequency(k));
        }
        const auto phase = unwrap_phase(wrapped, PhaseAnchor::zero_dc_extrapolation, freqs);
        map.values[p] = phase[kf - k_lo];
    });

    const std::string what = kind == SliceKind::amplitude ? "amplitude" : "phase";
    map.label = what + " @ " + fmt_double(probe.frequency(kf)) + " THz (bin " + std::to_string(kf) + ", df " +
                fmt_double(probe.df * 1000.0) + " GHz)";
    map.units = kind == SliceKind::amplitude ? "a.u." : "rad";
    return map;
}

ScalarMap constants_map(const ScanCube& cube, const PulseTrace& reference, const Thickness& thickness, double f_thz,
                        ConstantKind which, const ExtractionOptions& options) {
    cube.validate();
    require(reference.size() == cube.nt && std::abs(reference.dt() - cube.dt_ps) <= 1e-12 * cube.dt_ps,
            ErrorKind::dimension, "reference trace must share dt and nt with the cube");

    std::vector<double> d(cube.pixel_count());
    if (const auto* scalar = std::get_if<double>(&thickness)) {
        std::fill(d.begin(), d.end(), *scalar);
    } else {
        const auto& per_pixel = std::get<std::vector<double>>(thickness);
        require(per_pixel.size() == d.size(), ErrorKind::dimension, "thickness map does not match the cube grid");
        d = per_pixel;
    }
    for (double v : d) SampleGeometry{v}.validate();

    const Spectrum ref = forward_transform(reference);
    const std::size_t kf = ref.nearest_bin(f_thz);
    ScalarMap map = ScalarMap::filled(cube.nx, cube.ny, 0.0);

    parallel_for(cube.pixel_count(), [&](std::size_t p) {
        map.values[p] = kNaN;
        map.valid[p] = false;
        try {
            const auto oc = extract_constants(forward_transform(cube.trace(p)), ref, SampleGeometry{d[p]}, options);
            if (oc.valid[kf]) {
                map.values[p] = which == ConstantKind::n ? oc.n[kf] : oc.alpha[kf];
                map.valid[p] = true;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::no_band) throw;
        }
    });

    map.label = std::string(which == ConstantKind::n ? "refractive index" : "absorption coefficient") + " @ " +
                fmt_double(ref.frequency(kf)) + " THz (bin " + std::to_string(kf) + ", df " +
                fmt_double(ref.df * 1000.0) + " GHz)";
    map.units = which == ConstantKind::n ? "" : "1/cm";
    return map;
}

}  // namespace thz
