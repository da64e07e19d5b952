#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace thz::cli {

/// JSON run configuration. Every key is optional; unknown keys are rejected
/// and relative paths are resolved against the config file's directory.
struct RunConfig {
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<double> band_min;
    std::optional<double> band_max;
    std::optional<double> floor;
    std::optional<double> thickness_mm;
    std::optional<std::string> phantom;  // preset name, or a resolved spec path
    std::optional<std::filesystem::path> reference;
    std::optional<std::filesystem::path> model;
    std::vector<std::filesystem::path> cubes;
    std::vector<std::filesystem::path> labels;
    std::optional<std::vector<int>> include_labels;
    nlohmann::json train = nlohmann::json::object();  // TrainConfig overrides
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace thz::cli
