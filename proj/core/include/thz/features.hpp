#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "thz/cube.hpp"

namespace thz {

/// Row-major matrix of m traces by nt samples.
struct TraceMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    [[nodiscard]] const double* row(std::size_t r) const { return data.data() + r * cols; }
    static TraceMatrix from_cube(const ScanCube& cube);
};

struct PcaModel {
    std::vector<double> mean;                     // length nt
    std::vector<std::vector<double>> components;  // k orthonormal rows of length nt
    std::vector<double> explained_variance;       // non-increasing, >= 0

    [[nodiscard]] std::size_t size() const noexcept { return components.size(); }
    [[nodiscard]] std::size_t dimension() const noexcept { return mean.size(); }
    /// Projection of the centered trace onto component `index`.
    [[nodiscard]] double score(std::span<const double> trace, std::size_t index) const;
};

/// Mean-centered thin SVD; components are the top-k right singular vectors,
/// variance = sigma^2 / (m - 1). Each component is flipped so its
/// largest-magnitude entry is positive.
PcaModel pca_fit(const TraceMatrix& traces, std::size_t k);

ScalarMap pca_score_map(const ScanCube& cube, const PcaModel& model, std::size_t component_index);

void write_pca_model(const std::filesystem::path& path, const PcaModel& model);
PcaModel read_pca_model(const std::filesystem::path& path);

enum class Colormap { grayscale, jet, hot };

Colormap parse_colormap(const std::string& name);
std::string_view to_string(Colormap colormap);

/// 16-bit rendering of one map: `levels` holds round(65535 (v - lo)/(hi - lo))
/// clamped to [0, 65535]; invalid pixels render as 0 and are 0 in `mask`
/// (255 where valid).
struct Raster {
    std::uint32_t nx = 0;
    std::uint32_t ny = 0;
    std::vector<std::uint16_t> levels;
    std::vector<std::uint8_t> mask;
};

struct RenderGroup {
    std::vector<Raster> images;
    double shared_min = 0.0;
    double shared_max = 0.0;
    Colormap colormap = Colormap::grayscale;
};

std::uint16_t render_level(double value, double lo, double hi);

/// Renders every map on one joint scale spanning all valid pixels of all
/// maps. Throws ErrorKind::degenerate if that scale has zero width and
/// ErrorKind::no_band if no pixel is valid.
RenderGroup render_group(const std::vector<ScalarMap>& maps, Colormap colormap = Colormap::grayscale);

/// Renders with an explicit scale.
Raster render_map(const ScalarMap& map, double lo, double hi);

/// 256-entry RGB table for colormap (grayscale maps to equal channels).
std::array<std::uint8_t, 3> colormap_rgb(Colormap colormap, std::uint8_t index);

// P5 16-bit big-endian grayscale, or P6 8-bit RGB through the colormap table.
void write_raster(const std::filesystem::path& path, const Raster& raster, Colormap colormap);
// P5 8-bit validity mask.
void write_mask_pgm(const std::filesystem::path& path, const Raster& raster);
Raster read_pgm16(const std::filesystem::path& path);

}  // namespace thz
