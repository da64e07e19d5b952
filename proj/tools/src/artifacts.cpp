#include "artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "thz/digest.hpp"
#include "thz/error.hpp"

namespace thz::cli {

Outputs::Outputs(std::filesystem::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    require(!ec && std::filesystem::is_directory(dir_), ErrorKind::io,
            "cannot create output directory " + dir_.string() + (ec ? " (" + ec.message() + ")" : ""));
}

std::filesystem::path Outputs::file(const std::string& name) {
    if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
    return dir_ / name;
}

void Outputs::finish(const nlohmann::json& extra) {
    nlohmann::json files = nlohmann::json::array();
    for (const auto& name : names_) {
        const auto p = dir_ / name;
        require(std::filesystem::exists(p), ErrorKind::io, "expected output " + p.string() + " was not written");
        files.push_back({{"path", name}, {"sha256", sha256_file(p)}, {"bytes", std::filesystem::file_size(p)}});
    }
    nlohmann::json manifest{{"command", command_}, {"files", files}};
    for (const auto& [k, v] : extra.items()) manifest[k] = v;
    const auto path = dir_ / "manifest.json";
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path.string());
    os << manifest.dump(2) << "\n";
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

void emit_maps(Outputs& out, const std::vector<ScalarMap>& maps, const std::vector<std::string>& stems,
               Colormap colormap, std::optional<std::pair<double, double>> scale, const nlohmann::json& meta) {
    require(maps.size() == stems.size() && !maps.empty(), ErrorKind::usage, "nothing to render");
    RenderGroup group;
    bool degenerate = false;
    if (scale) {
        require(scale->first < scale->second, ErrorKind::degenerate, "render range must satisfy min < max");
        group.shared_min = scale->first;
        group.shared_max = scale->second;
        group.colormap = colormap;
        for (const auto& m : maps) group.images.push_back(render_map(m, scale->first, scale->second));
    } else {
        try {
            group = render_group(maps, colormap);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::degenerate) throw;
            // every valid pixel holds one value: render it mid-scale rather than refuse
            double v = 0.0;
            for (const auto& m : maps)
                for (std::size_t p = 0; p < m.size(); ++p)
                    if (m.valid[p]) v = m.values[p];
            const double half = 0.5 * std::max(1.0, std::abs(v));
            group.shared_min = v - half;
            group.shared_max = v + half;
            group.colormap = colormap;
            for (const auto& m : maps) group.images.push_back(render_map(m, group.shared_min, group.shared_max));
            degenerate = true;
        }
    }
    const bool gray = colormap == Colormap::grayscale;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto& stem = stems[i];
        write_map_csv(out.file(stem + ".csv"), maps[i]);
        const std::string raster = stem + (gray ? ".pgm" : ".ppm");
        write_raster(out.file(raster), group.images[i], colormap);
        write_mask_pgm(out.file(stem + "_mask.pgm"), group.images[i]);
        nlohmann::json side = meta;
        side["label"] = maps[i].label;
        side["units"] = maps[i].units;
        side["shared_min"] = group.shared_min;
        side["shared_max"] = group.shared_max;
        side["colormap"] = std::string(to_string(colormap));
        side["raster"] = raster;
        side["mask"] = stem + "_mask.pgm";
        side["group"] = stems;
        if (degenerate) side["degenerate_scale"] = true;
        const auto path = out.file(stem + ".json");
        std::ofstream os(path);
        require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path.string());
        os << side.dump(2) << "\n";
    }
}

std::vector<std::string> unique_stems(const std::vector<std::filesystem::path>& inputs) {
    std::vector<std::string> stems;
    for (const auto& p : inputs) stems.push_back(p.stem().string());
    auto has_dups = [](const std::vector<std::string>& v) { return std::set(v.begin(), v.end()).size() != v.size(); };
    if (has_dups(stems)) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto parent = std::filesystem::absolute(inputs[i]).parent_path().filename().string();
            stems[i] = parent.empty() ? stems[i] : parent + "_" + stems[i];
        }
    }
    if (has_dups(stems))
        for (std::size_t i = 0; i < stems.size(); ++i) stems[i] += "_" + std::to_string(i);
    return stems;
}

}  // namespace thz::cli
