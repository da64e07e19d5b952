#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "thz/cube.hpp"
#include "thz/features.hpp"

namespace thz::cli {

/// Output directory of one invocation. Files are registered as they are
/// named; finish() hashes them and writes manifest.json last, so a failed run
/// never leaves a manifest behind.
class Outputs {
public:
    Outputs(std::filesystem::path dir, std::string command);

    std::filesystem::path file(const std::string& name);
    void finish(const nlohmann::json& extra = nlohmann::json::object());
    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    std::string command_;
    std::vector<std::string> names_;
};

/// Writes map CSV, raster, validity mask and a JSON sidecar per map, all on
/// one shared scale (the explicit one when given).
void emit_maps(Outputs& out, const std::vector<ScalarMap>& maps, const std::vector<std::string>& stems,
               Colormap colormap, std::optional<std::pair<double, double>> scale, const nlohmann::json& meta);

/// File stems for a list of inputs, disambiguated with the parent directory
/// name (then an index) on collisions.
std::vector<std::string> unique_stems(const std::vector<std::filesystem::path>& inputs);

}  // namespace thz::cli
