#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "thz/optics.hpp"
#include "thz/signal.hpp"

namespace thz {

/// Raster scan of traces. Samples are stored y-major, then x, then t.
struct ScanCube {
    std::uint32_t nx = 0;
    std::uint32_t ny = 0;
    std::uint32_t nt = 0;
    double dx_mm = 0.5;
    double dt_ps = 0.0;
    double t0_ps = 0.0;
    std::vector<double> data;

    [[nodiscard]] std::size_t pixel_count() const noexcept { return std::size_t{nx} * ny; }
    [[nodiscard]] std::size_t pixel_index(std::size_t x, std::size_t y) const noexcept { return y * nx + x; }
    [[nodiscard]] std::span<const double> pixel(std::size_t index) const;
    [[nodiscard]] std::span<double> pixel(std::size_t index);
    [[nodiscard]] PulseTrace trace(std::size_t index) const;
    [[nodiscard]] PulseTrace trace(std::size_t x, std::size_t y) const { return trace(pixel_index(x, y)); }

    /// Throws ErrorKind::dimension / input when the invariants do not hold.
    void validate() const;

    static ScanCube zeros(std::uint32_t nx, std::uint32_t ny, std::uint32_t nt, double dt_ps, double t0_ps = 0.0,
                          double dx_mm = 0.5);

    friend bool operator==(const ScanCube&, const ScanCube&) = default;
};

/// Average of all pixel traces.
PulseTrace mean_trace(const ScanCube& cube);

// Binary cube format, little-endian:
//   "THZC" | u32 version=1 | u32 nx | u32 ny | u32 nt | f64 dx | f64 dt | f64 t0 | nx*ny*nt f64
std::vector<std::uint8_t> encode_cube(const ScanCube& cube);
ScanCube decode_cube(std::span<const std::uint8_t> bytes);
void write_cube(const std::filesystem::path& path, const ScanCube& cube);
ScanCube read_cube(const std::filesystem::path& path);

struct ScalarMap {
    std::uint32_t nx = 0;
    std::uint32_t ny = 0;
    std::vector<double> values;
    std::vector<bool> valid;
    std::string label;
    std::string units;

    static ScalarMap filled(std::uint32_t nx, std::uint32_t ny, double value);
    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] double at(std::size_t x, std::size_t y) const { return values[y * nx + x]; }
};

// ScalarMap CSV: header `x,y,value`; invalid pixels are written as nan.
void write_map_csv(const std::filesystem::path& path, const ScalarMap& map);
ScalarMap read_map_csv(const std::filesystem::path& path);

/// Half-open sample-index interval.
struct Interval {
    std::size_t begin = 0;
    std::size_t end = 0;

    [[nodiscard]] std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Time gates A1..A4 around the main pulse.
struct GateRegions {
    std::array<Interval, 4> regions;

    [[nodiscard]] const Interval& operator[](std::size_t i) const { return regions.at(i); }
    friend bool operator==(const GateRegions&, const GateRegions&) = default;
};

/// Splits the time axis at the global peak p, global trough q, the zero
/// crossing between them and the point after max(p, q) where |x| first drops
/// below half the trough magnitude:
///   A1 = [0, min) A2 = [min, mid) A3 = [mid, max + w) A4 = [max + w, nt)
/// Requires a dominant pulse (max |x| > 10x the RMS of the last quarter).
GateRegions derive_gates(const PulseTrace& trace);

enum class GateStatistic { peak_to_peak, mean_abs, energy };

ScalarMap gate_image(const ScanCube& cube, const Interval& region, GateStatistic statistic);

enum class SliceKind { amplitude, phase };

struct SliceOptions {
    FrequencyBand unwrap_band;                    // phase unwrapping / anchoring range
    std::optional<std::size_t> pad_to;
};

/// |E(f)| or the unwrapped, zero-DC-anchored phase delay at the bin nearest f.
/// Phase pixels with zero amplitude at that bin are invalid.
ScalarMap frequency_slice(const ScanCube& cube, double f_thz, SliceKind kind, const SliceOptions& options = {});

enum class ConstantKind { n, alpha };

/// Scalar thickness or a per-pixel thickness map (mm).
using Thickness = std::variant<double, std::vector<double>>;

/// Per-pixel extract_constants read at the bin nearest f. Pixels whose bin is
/// invalid, or whose extraction has no valid bin at all, are invalid.
ScalarMap constants_map(const ScanCube& cube, const PulseTrace& reference, const Thickness& thickness, double f_thz,
                        ConstantKind which, const ExtractionOptions& options = {});

}  // namespace thz
