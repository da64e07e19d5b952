#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "thz/cube.hpp"
#include "thz/optics.hpp"

namespace thz {

enum class RegionKind : std::uint8_t { background = 0, blade = 1, vein = 2, gall = 3 };

/// Procedural specimen outline. `uniform` assigns every pixel to `blade`;
/// `leaf` is an elliptical blade with a midrib and side veins; `root` is a
/// horizontal root band with an optional central gall.
enum class Geometry { uniform, leaf, root };

inline constexpr std::uint8_t kLabelBackground = 0;
inline constexpr std::uint8_t kLabelHealthy = 1;
inline constexpr std::uint8_t kLabelInfected = 2;

struct PulseParams {
    double center_ps = 20.0;
    double width_ps = 0.25;  // Gaussian sigma; peak at center - width, trough at center + width
    double amplitude = 1.0;

    friend bool operator==(const PulseParams&, const PulseParams&) = default;
};

struct RegionSpec {
    RegionKind region = RegionKind::blade;
    MaterialModel material;
    double thickness_mm = 0.3;

    friend bool operator==(const RegionSpec&, const RegionSpec&) = default;
};

struct PhantomSpec {
    std::string name = "custom";
    std::uint32_t nx = 32;
    std::uint32_t ny = 32;
    std::uint32_t nt = 3072;
    double dt_ps = 1700.0 / 20480.0;
    double t0_ps = 0.0;
    double dx_mm = 0.5;
    PulseParams pulse;
    Geometry geometry = Geometry::leaf;
    std::uint8_t class_id = kLabelHealthy;  // label given to non-background pixels
    std::vector<RegionSpec> regions;
    double noise_std = 0.0;
    std::uint64_t seed = 0;

    /// Throws on bad sizes, missing region materials, invalid materials
    /// (ErrorKind::model) or negative noise.
    void validate() const;
    [[nodiscard]] const RegionSpec* find(RegionKind kind) const noexcept;

    friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

struct LabeledCube {
    ScanCube cube;
    std::vector<std::uint8_t> labels;        // per pixel, kLabel*
    std::vector<RegionKind> regions;         // per pixel
    std::vector<double> thickness_mm;        // per pixel
    PulseTrace reference;
    std::vector<RegionSpec> truth;
};

/// Region of every pixel for the spec's geometry (y-major order).
std::vector<RegionKind> region_layout(const PhantomSpec& spec);

/// Differentiated-Gaussian reference pulse sampled on the spec's time grid.
PulseTrace make_reference(const PhantomSpec& spec);

/// Forward-models every pixel with its region's material and thickness and
/// adds Gaussian noise drawn from a generator keyed by (seed, x, y), so the
/// result does not depend on evaluation order.
LabeledCube synthesize(const PhantomSpec& spec);

/// Built-in presets: leaf-healthy, leaf-infected, root-healthy, root-infected.
/// Material values are synthetic; only their orderings are meaningful.
std::vector<std::string> preset_names();
PhantomSpec preset(std::string_view name);

void to_json(nlohmann::json& j, const PhantomSpec& spec);
void from_json(const nlohmann::json& j, PhantomSpec& spec);
void to_json(nlohmann::json& j, const MaterialModel& material);
void from_json(const nlohmann::json& j, MaterialModel& material);
void to_json(nlohmann::json& j, const RegionSpec& region);
void from_json(const nlohmann::json& j, RegionSpec& region);

PhantomSpec read_phantom_spec(const std::filesystem::path& path);
void write_phantom_spec(const std::filesystem::path& path, const PhantomSpec& spec);

struct LabelGrid {
    std::uint32_t nx = 0;
    std::uint32_t ny = 0;
    std::vector<std::uint8_t> labels;  // y-major
};

// Labels CSV: header `x,y,label`, one row per pixel in y-major order.
void write_labels_csv(const std::filesystem::path& path, const LabelGrid& grid);
LabelGrid read_labels_csv(const std::filesystem::path& path);

// Ground truth JSON: {"regions": [RegionSpec...]} as synthesized.
void write_truth_json(const std::filesystem::path& path, const std::vector<RegionSpec>& truth);
std::string_view to_string(RegionKind kind);
std::string_view to_string(Geometry geometry);

}  // namespace thz
